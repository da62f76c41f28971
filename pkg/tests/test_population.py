import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconlab.exceptions import ParameterError
from reconlab.population import PopulationSpec, build_external, generate_block_population


def test_scenario1_layout():
    md, ext = generate_block_population(1, np.random.default_rng(0))
    assert len(md) == 10
    assert {(r.age, r.gender, r.race, r.ethnicity) for r in md} == {(44, "Male", "White", "Not_Hispanic")}
    assert ext.fields == ("age", "gender") and len(ext) == 10
    assert all(e.name and e.address for e in ext.records)


def test_scenario2_distinct_relationships():
    md, ext = generate_block_population(2, np.random.default_rng(0))
    assert len({r.relationship for r in md}) == 10
    assert ext.fields == ("age", "gender")


def test_scenario3_distinct_race_ethnicity():
    md, ext = generate_block_population(3, np.random.default_rng(0))
    assert {(r.age, r.gender) for r in md} == {(44, "Male")}
    assert len({(r.race, r.ethnicity) for r in md}) == 10
    assert ext.fields == ("race", "ethnicity")
    assert all("age" not in e.attrs and "gender" not in e.attrs for e in ext.records)


def test_invalid_scenario():
    with pytest.raises(ParameterError):
        generate_block_population(4, np.random.default_rng(0))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), scenario=st.sampled_from([None, 1, 2, 3]))
def test_deterministic_per_seed(seed, scenario):
    spec = PopulationSpec(scenario=scenario, blocks_per_tract=3, block_size=4)
    a = generate_block_population(spec, np.random.default_rng(seed))
    b = generate_block_population(spec, np.random.default_rng(seed))
    assert a[0].records == b[0].records and a[1].records == b[1].records


def test_full_homogeneity_gives_identical_blocks():
    spec = PopulationSpec(blocks_per_tract=3, block_size=6, homogeneity={"age": 1.0, "race": 1.0})
    md, _ = generate_block_population(spec, np.random.default_rng(1))
    for recs in md.by_block().values():
        assert len({(r.age, r.race) for r in recs}) == 1


def test_coverage_and_errors():
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=10, block_size=20), np.random.default_rng(2))
    ext = build_external(md, ("age",), np.random.default_rng(3), coverage=0.5)
    assert abs(len(ext) - 100) < 5 * np.sqrt(50)
    noisy = build_external(md, ("age",), np.random.default_rng(4), error_rate=1.0, error_k=2)
    true_age = {(f"Resident {r.person_id}"): r.age for r in md}
    assert all(abs(e.attrs["age"] - true_age[e.name]) <= 2 for e in noisy.records)
    assert sum(e.attrs["age"] != true_age[e.name] for e in noisy.records) > 150
