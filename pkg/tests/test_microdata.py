from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconlab.exceptions import ParameterError, SchemaError
from reconlab.microdata import (
    GENDERS,
    RACES,
    RELATIONSHIPS,
    FrequencyTable,
    Geography,
    GeographyLevel,
    MicrodataSet,
    aggregate,
    marginal,
    read_frequency_table,
    read_microdata,
    tabulate,
    write_microdata,
)
from reconlab.population import PopulationSpec, generate_block_population

from conftest import one_block, person


def test_geography_levels_are_ordered():
    assert GeographyLevel.BLOCK < GeographyLevel.TRACT < GeographyLevel.COUNTY < GeographyLevel.STATE
    assert GeographyLevel.parse("state") is GeographyLevel.STATE
    with pytest.raises(ParameterError):
        GeographyLevel.parse("nation")


def test_relationship_domain_has_17_values():
    assert len(RELATIONSHIPS) == 17 == len(set(RELATIONSHIPS))


def test_person_validation():
    with pytest.raises(ParameterError):
        person("a", "B", age=-1)
    with pytest.raises(ParameterError):
        person("a", "B", age=116)
    with pytest.raises(ParameterError):
        person("a", "B", race="Martian")


def test_duplicate_person_ids_rejected():
    geo = Geography.regular()
    b = geo.blocks[0]
    with pytest.raises(ParameterError):
        MicrodataSet((person("x", b), person("x", b)), geo)


def test_unknown_block_rejected():
    with pytest.raises(SchemaError):
        MicrodataSet((person("x", "nowhere"),), Geography.regular())


def test_regular_geography_codes():
    geo = Geography.regular(2, 1, 1, 3)
    assert len(geo.blocks) == 6
    assert geo.code("S2C1T1B3", GeographyLevel.STATE) == "S2"
    assert geo.units(GeographyLevel.STATE) == ["S1", "S2"]
    assert Geography.from_block_ids(geo.blocks).block_tract == geo.block_tract


def test_scenario1_block_single_cell():
    md = one_block([{}] * 10)
    t = tabulate(md, ("age", "gender"))
    assert t.cells == {("S1C1T1B1", (44, "Male")): 10}


def test_empty_set_gives_empty_table():
    md = MicrodataSet((), Geography.regular())
    assert tabulate(md, ("age",)).cells == {}


def test_unknown_dimension_is_schema_error():
    with pytest.raises(SchemaError):
        tabulate(one_block([{}]), ("income",))


def test_three_block_group_by_oracle():
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=3, block_size=7), np.random.default_rng(3))
    t = tabulate(md, ("gender",))
    oracle = Counter()
    for r in md.records:
        oracle[(r.block_id, (r.gender,))] += 1
    nonzero = {k: v for k, v in t.cells.items() if v}
    assert nonzero == dict(oracle)


def test_zero_cells_are_explicit():
    md = MicrodataSet(
        (person("a", "S1C1T1B1", gender="Male"), person("b", "S1C1T1B2", gender="Female")),
        Geography.regular(1, 1, 1, 2),
    )
    t = tabulate(md, ("gender",))
    assert t.cells[("S1C1T1B1", ("Female",))] == 0
    assert len(t) == 4


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    dims=st.lists(st.sampled_from(["age", "gender", "race", "ethnicity", "relationship"]), min_size=1, max_size=3, unique=True),
    level=st.sampled_from(list(GeographyLevel)),
)
def test_tabulate_totals_equal_population(seed, dims, level):
    spec = PopulationSpec(states=2, blocks_per_tract=2, block_size=5)
    md, _ = generate_block_population(spec, np.random.default_rng(seed))
    t = tabulate(md, dims, level)
    assert t.totals() == +md.population(level)


def test_marginal_and_aggregate_agree_with_direct_tabulation(rng):
    md, _ = generate_block_population(PopulationSpec(states=2, blocks_per_tract=3, block_size=6), rng)
    full = tabulate(md, ("gender", "race"), domains={"gender": GENDERS, "race": RACES})
    direct = tabulate(md, ("gender",), domains={"gender": GENDERS})
    assert marginal(full, ("gender",)).cells == direct.cells
    state = aggregate(direct, md.geography, GeographyLevel.STATE)
    assert state.cells == tabulate(md, ("gender",), GeographyLevel.STATE, domains={"gender": GENDERS}).cells


def test_microdata_csv_round_trip(tmp_path, rng):
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=2, block_size=4), rng)
    path = tmp_path / "md.csv"
    write_microdata(md, path)
    back = read_microdata(path)
    assert back.records == md.records
    with pytest.raises(SchemaError):
        read_microdata("a,b\n1,2\n")


def test_frequency_table_csv_round_trip():
    md = one_block([{"age": 30}, {"age": 44, "gender": "Female"}])
    t = tabulate(md, ("age", "gender"))
    assert read_frequency_table(t.to_csv()).cells == t.cells


def test_frequency_table_rejects_negative_counts():
    with pytest.raises(ParameterError):
        FrequencyTable("block", ("age",), {("B", (1,)): -1})
