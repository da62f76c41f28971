import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconlab.exceptions import DataError, SchemaError
from reconlab.linkage import (
    ExternalDatabase,
    GroundTruth,
    LinkStatus,
    align_records,
    confirm,
    evaluate_linkage,
    link,
    r_vs_r_prime,
    reconstruction_agreement,
)
from reconlab.microdata import GENDERS, RACES, tabulate
from reconlab.population import PopulationSpec, build_external, generate_block_population
from reconlab.reconstruction import regenerate_from_tables

from conftest import one_block

DIMS = ("age", "gender", "race", "ethnicity")


def scenario(k, seed=0):
    md, ext = generate_block_population(k, np.random.default_rng(seed))
    dims = DIMS + (("relationship",) if k == 2 else ())
    recon = regenerate_from_tables([tabulate(md, dims)]).microdata
    return md, ext, recon


def test_scenario1_all_ambiguous():
    _, ext, recon = scenario(1)
    res = link(recon, ext, ("age", "gender"))
    assert all(r.status is LinkStatus.AMBIGUOUS and len(r.matched_refs) == 10 for r in res)


def test_scenario3_all_putative_unique():
    _, ext, recon = scenario(3)
    res = link(recon, ext, ("race", "ethnicity"))
    assert all(r.status is LinkStatus.PUTATIVE_UNIQUE for r in res)


def test_empty_external_all_unmatched():
    _, _, recon = scenario(1)
    ext = ExternalDatabase(("age", "gender"), ())
    assert all(r.status is LinkStatus.UNMATCHED for r in link(recon, ext, ("age", "gender")))


@pytest.mark.parametrize("k,qis", [(1, ("age", "gender")), (2, ("age", "gender"))])
def test_homogeneous_scenarios_confirm_nothing(k, qis):
    md, ext, recon = scenario(k)
    rep = evaluate_linkage(recon, ext, GroundTruth.from_microdata(md), qis, rng=np.random.default_rng(1), trials=1000)
    assert rep.putative_match_rate == 0 and rep.confirmed_match_rate == 0
    assert abs(rep.per_record_correct_probability - 0.1) <= 0.03


def test_exact_probability_without_rng():
    md, ext, recon = scenario(1)
    rep = evaluate_linkage(recon, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    assert rep.per_record_correct_probability == pytest.approx(0.1)


def test_scenario3_confirms_everyone():
    md, ext, recon = scenario(3)
    rep = evaluate_linkage(recon, ext, GroundTruth.from_microdata(md), ("race", "ethnicity"))
    assert rep.confirmed_match_rate == 1.0 == rep.putative_match_rate
    assert all(r.confirmed for r in rep.results)


def test_agreement_on_scenarios():
    md, _, recon = scenario(1)
    assert reconstruction_agreement(recon, md, ("race", "ethnicity")) == 1.0
    md, _, recon = scenario(3)
    assert reconstruction_agreement(recon, md, ("age", "gender")) == 1.0


def brute_agreement(recon, truth, attrs):
    """Best pairing by trying every permutation within each block."""
    rb, tb = recon.by_block(), truth.by_block()
    agreed = total = 0
    for b in tb:
        rs, ts = rb[b], tb[b]
        best = max(
            sum(a == c for r, t in zip(rs, perm) for a, c in zip(r.values(attrs), t.values(attrs)))
            for perm in itertools.permutations(ts)
        )
        agreed += best
        total += len(rs) * len(attrs)
    return agreed / total


@settings(max_examples=40, deadline=None)
@given(
    genders=st.lists(st.sampled_from(GENDERS), min_size=1, max_size=6),
    data=st.data(),
)
def test_modal_fill_agreement_matches_permutation_oracle(genders, data):
    races = data.draw(st.lists(st.sampled_from(RACES[:3]), min_size=len(genders), max_size=len(genders)))
    truth = one_block([{"gender": g, "race": r} for g, r in zip(genders, races)])
    modal_g = max(set(genders), key=lambda v: (genders.count(v), v))
    modal_r = max(set(races), key=lambda v: (races.count(v), v))
    recon = one_block([{"gender": modal_g, "race": modal_r}] * len(genders))
    attrs = ("gender", "race")
    got = reconstruction_agreement(recon, truth, attrs)
    assert got == pytest.approx(brute_agreement(recon, truth, attrs))
    # every reconstructed record is identical, so agreement is the mean modal share
    share = (genders.count(modal_g) + races.count(modal_r)) / (2 * len(genders))
    assert got == pytest.approx(share)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), h=st.floats(0, 1))
def test_confirmed_never_exceeds_putative(seed, h):
    r = np.random.default_rng(seed)
    spec = PopulationSpec(blocks_per_tract=3, block_size=5, homogeneity={"age": h, "gender": h})
    md, ext = generate_block_population(spec, r)
    recon = regenerate_from_tables([tabulate(md, ("age", "gender"))]).microdata
    rep = evaluate_linkage(recon, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    assert rep.confirmed_match_rate <= rep.putative_match_rate
    for v in (rep.putative_match_rate, rep.confirmed_match_rate, rep.per_record_correct_probability):
        assert 0 <= v <= 1
    # a QI cell of size >= 2 is never PutativeUnique
    for res in rep.results:
        if res.cell_size >= 2:
            assert res.status is not LinkStatus.PUTATIVE_UNIQUE


def test_link_is_deterministic_and_estimate_seed_reproducible():
    md, ext, recon = scenario(1)
    truth = GroundTruth.from_microdata(md)
    assert link(recon, ext, ("age",)) == link(recon, ext, ("age",))
    a = evaluate_linkage(recon, ext, truth, ("age", "gender"), rng=np.random.default_rng(5))
    b = evaluate_linkage(recon, ext, truth, ("age", "gender"), rng=np.random.default_rng(5))
    assert a.per_record_correct_probability == b.per_record_correct_probability


def test_missing_registry_entry_is_data_error():
    md, ext, recon = scenario(3)
    truth = GroundTruth(md, {})
    with pytest.raises(DataError):
        evaluate_linkage(recon, ext, truth, ("race", "ethnicity"))
    with pytest.raises(DataError):
        confirm(link(recon, ext, ("race",)), ext, GroundTruth.from_microdata(md), {})


def test_qi_absent_from_external_is_schema_error():
    _, ext, recon = scenario(3)
    with pytest.raises(SchemaError):
        link(recon, ext, ("age",))


def test_r_vs_r_prime_identity_reconstruction():
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=3, block_size=6), np.random.default_rng(2))
    ext = build_external(md, ("age", "gender"), np.random.default_rng(3))
    rep = r_vs_r_prime(md, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    # with recon == truth, every uniquely linked record is confirmed directly
    direct = evaluate_linkage(md, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    assert rep.r == pytest.approx(direct.confirmed_match_rate)
    assert rep.r_prime is not None and rep.difference == pytest.approx(rep.r - rep.r_prime)
    d = rep.to_dict()
    assert {"r", "r_prime", "r_minus_r_prime", "config"} <= set(d)


def test_r_vs_r_prime_homogeneous_blocks_reports_both():
    spec = PopulationSpec(blocks_per_tract=5, block_size=8, homogeneity={a: 1.0 for a in DIMS})
    md, ext = generate_block_population(spec, np.random.default_rng(4))
    recon = regenerate_from_tables([tabulate(md, DIMS)]).microdata
    rep = r_vs_r_prime(recon, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    assert rep.r == 0 and rep.r_prime == 0 and rep.difference == 0


def test_zero_coverage_gives_zero_rates():
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=2, block_size=4), np.random.default_rng(6))
    ext = build_external(md, ("age", "gender"), np.random.default_rng(7), coverage=0.0)
    rep = r_vs_r_prime(md, ext, GroundTruth.from_microdata(md), ("age", "gender"))
    assert rep.r == 0 and rep.r_prime == 0


def test_external_csv_round_trip():
    _, ext = generate_block_population(1, np.random.default_rng(0))
    text = ext.to_csv()
    assert text.splitlines()[0] == "name,address,block_id,age,gender"
    assert ExternalDatabase.from_csv(text).records == ext.records


def test_align_records_pairs_identical_sets():
    md, _ = generate_block_population(PopulationSpec(blocks_per_tract=2, block_size=5), np.random.default_rng(9))
    pairs = align_records(md, md)
    assert all(md_rec.values(DIMS) == {r.person_id: r for r in md}[pairs[md_rec.person_id]].values(DIMS) for md_rec in md)
