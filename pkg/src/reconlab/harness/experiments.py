"""The named experiments. Each takes resolved parameters and a root seed and
returns ``(metrics, tables, extra)`` where tables are CSV payloads."""

from __future__ import annotations

import csv
import io
import itertools
import math
from typing import Any, Callable

import numpy as np

from reconlab.core import BinaryDatabase, enumerate_all_queries, sample_random_queries, true_count
from reconlab.harness.config import derive_rng
from reconlab.linkage import GroundTruth, evaluate_linkage, r_vs_r_prime, reconstruction_agreement
from reconlab.mechanisms import (
    BoundedNoiseMechanism,
    LaplaceMechanism,
    PrivacyAccountant,
    RandomizedResponse,
    ZcdpParams,
    answer_bounded_batch,
    answer_laplace,
    laplace_noise,
    laplace_tail,
    privacy_ratio,
    rho_for_epsilon,
    rr_estimate_proportion,
    rr_flip_many,
    rr_p_from_epsilon,
    split_budget,
    zcdp_to_epsilon,
)
from reconlab.exceptions import BudgetExhaustedError
from reconlab.microdata import (
    FrequencyTable,
    Geography,
    GeographyLevel,
    MicrodataSet,
    PersonRecord,
    tabulate,
)
from reconlab.population import PopulationSpec, generate_block_population
from reconlab.reconstruction import exhaustive_reconstruct, lp_reconstruct, regenerate_from_tables
from reconlab.sdc import SwapConfig, audit_recoverable, primary_suppress, secondary_suppress, swap

Result = tuple[dict[str, Any], dict[str, str], dict[str, Any]]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dn_exhaustive(p: dict, seed: int) -> Result:
    rows = []
    violations = 0
    protected_seeds = 0
    for n, B in itertools.product(p["n_values"], p["B_values"]):
        queries = list(enumerate_all_queries(n))
        mech = BoundedNoiseMechanism(B, p["noise"])
        for s in range(p["seeds"]):
            rng = derive_rng(seed, f"dn_exhaustive/n={n}/B={B}/seed={s}")
            db = BinaryDatabase.random(n, rng)
            answers = answer_bounded_batch(db, queries, mech, rng)
            res = exhaustive_reconstruct(queries, answers, n, B, truth=db)
            worst = max(res.feasible_distances)
            violations += worst > 4 * B
            protected_seeds += worst > 4 or res.feasible_count >= 4
            rows.append([n, B, s, res.feasible_count, res.distance, worst, int(worst <= 4 * B)])
    metrics = {
        "runs": len(rows),
        "containment_violations": violations,
        "runs_with_distance_gt_4_or_4plus_feasible": protected_seeds,
        "max_feasible_distance": max(r[5] for r in rows),
        "mean_feasible_count": float(np.mean([r[3] for r in rows])),
    }
    table = _csv(["n", "B", "seed", "feasible_count", "distance", "max_feasible_distance", "within_4B"], rows)
    return metrics, {"dn_exhaustive": table}, {}


def lp_sweep_rows(p: dict, seed: int) -> list[tuple[float, list[float]]]:
    out = []
    for B in p["B_values"]:
        mech = BoundedNoiseMechanism(B, p["noise"])
        fracs = []
        for s in range(p["seeds"]):
            rng = derive_rng(seed, f"dn_lp_sweep/B={B}/seed={s}")
            db = BinaryDatabase.random(p["n"], rng)
            queries = sample_random_queries(p["n"], p["m"], rng)
            answers = answer_bounded_batch(db, queries, mech, rng)
            fracs.append(lp_reconstruct(queries, answers, p["n"], B, truth=db).disagreement_fraction)
        out.append((B, fracs))
    return out


def dn_lp_sweep(p: dict, seed: int) -> Result:
    sweep = lp_sweep_rows(p, seed)
    means = [float(np.mean(f)) for _, f in sweep]
    inversions = [means[i] - means[i + 1] for i in range(len(means) - 1) if means[i + 1] < means[i]]
    metrics = {f"mean_disagreement_B={B:g}": m for (B, _), m in zip(sweep, means)}
    metrics["inversions"] = len(inversions)
    metrics["max_inversion"] = max(inversions, default=0.0)
    metrics["sqrt_n"] = math.sqrt(p["n"])
    rows = [[B, float(np.mean(f)), float(np.std(f)), len(f)] for B, f in sweep]
    per_seed = [[B, s, f] for B, fr in sweep for s, f in enumerate(fr)]
    return (
        metrics,
        {
            "dn_lp_sweep": _csv(["B", "mean_disagreement", "std_disagreement", "seeds"], rows),
            "dn_lp_sweep_per_seed": _csv(["B", "seed", "disagreement"], per_seed),
        },
        {},
    )


def dp_budget(p: dict, seed: int) -> Result:
    rng = derive_rng(seed, "dp_budget")
    m, eps = p["n_queries"], p["total_epsilon"]
    db = BinaryDatabase.random(p["n_records"], rng)
    per_query = split_budget(eps, m)
    mech = LaplaceMechanism(per_query)
    accountant = PrivacyAccountant(eps)
    queries = sample_random_queries(db.n, m + p["extra_queries"], rng)
    errors, refused = [], 0
    for k, q in enumerate(queries):
        try:
            ans = answer_laplace(db, q, mech, accountant, rng, query_id=k)
        except BudgetExhaustedError:
            refused += 1
            continue
        errors.append(ans.value - true_count(db, q))
    metrics = {
        "per_query_epsilon": per_query,
        "laplace_scale": mech.scale,
        "laplace_std": mech.std,
        "expected_std_sqrt2_m_over_eps": math.sqrt(2) * m / eps,
        "empirical_error_std": float(np.std(errors)),
        "answered": len(errors),
        "refused": refused,
        "spent": accountant.spent,
        "total_budget": eps,
        "ratio_39.907_vs_4.5": privacy_ratio(39.907, 4.5),
        "ratio_39.907_vs_14": privacy_ratio(39.907, 14),
        "ratio_39.907_vs_0": privacy_ratio(39.907, 0),
        "ratio_19.61_vs_4.5": privacy_ratio(19.61, 4.5),
    }
    return metrics, {}, {"ledger": accountant.to_records()}


def rr_equivalence(p: dict, seed: int) -> Result:
    rows = []
    for eps in p["epsilons"]:
        tails = [laplace_tail(eps, b) if eps > 0 else 0.0 for b in p["tail_bounds"]]
        rows.append([eps, rr_p_from_epsilon(eps), *tails])
    rng = derive_rng(seed, "rr_equivalence/laplace_mc")
    noise = np.abs(laplace_noise(1 / 19.61, rng, p["mc_draws"]))
    metrics: dict[str, Any] = {"rr_p_at_19.61": rr_p_from_epsilon(19.61)}
    for b in p["tail_bounds"]:
        metrics[f"laplace_tail_19.61_{b:g}"] = laplace_tail(19.61, b)
        metrics[f"laplace_tail_19.61_{b:g}_mc"] = float(np.mean(noise <= b))
    rng = derive_rng(seed, "rr_equivalence/rr")
    truth = (rng.random(p["rr_n"]) < p["rr_true_proportion"]).astype(np.int8)
    noisy = rr_flip_many(truth, RandomizedResponse(p["rr_p"]), rng)
    metrics["rr_true_proportion"] = float(truth.mean())
    metrics["rr_estimated_proportion"] = rr_estimate_proportion(noisy, p["rr_p"])
    rho = rho_for_epsilon(19.61, p["delta"])
    metrics["zcdp_rho_for_19.61"] = rho
    metrics["zcdp_roundtrip_epsilon"] = zcdp_to_epsilon(ZcdpParams(rho, p["delta"]))
    header = ["epsilon", "rr_p", *(f"laplace_tail_{b:g}" for b in p["tail_bounds"])]
    return metrics, {"rr_equivalence": _csv(header, rows)}, {}


def swap_fixture(blocks: int, block_size: int, rng: np.random.Generator, states: int = 2) -> MicrodataSet:
    """``blocks`` blocks split over ``states`` states, mixed ages on both sides of 18."""
    spec = PopulationSpec(states=states, blocks_per_tract=max(blocks // states, 1), block_size=block_size)
    return generate_block_population(spec, rng)[0]


def swap_invariants(p: dict, seed: int) -> Result:
    rows = []
    block_violations = 0
    for k in range(p["configs"]):
        rng = derive_rng(seed, f"swap_invariants/block/{k}")
        md = swap_fixture(p["blocks"], p["block_size"], rng)
        rate = float(rng.uniform(0.05, 1.0)) if k else p["swap_rate"]
        cfg = SwapConfig(rate, tuple(p["swap_attributes"]), p["independent_per_attribute"], GeographyLevel.BLOCK)
        out = swap(md, cfg, rng)
        ok = all(
            md.population(GeographyLevel.BLOCK, va) == out.microdata.population(GeographyLevel.BLOCK, va)
            for va in (False, True)
        )
        block_violations += not ok
        rows.append(["block", k, rate, out.swapped_records, out.skipped, int(ok)])
    rng = derive_rng(seed, "swap_invariants/state")
    md = swap_fixture(p["blocks"], p["block_size"], rng)
    cfg = SwapConfig(max(p["swap_rate"], 0.1), tuple(p["swap_attributes"]), p["independent_per_attribute"], GeographyLevel.STATE)
    out = swap(md, cfg, rng)
    state_ok = all(
        md.population(GeographyLevel.STATE, va) == out.microdata.population(GeographyLevel.STATE, va)
        for va in (False, True)
    )
    before, after = md.population(GeographyLevel.BLOCK, True), out.microdata.population(GeographyLevel.BLOCK, True)
    changed = sum(before[b] != after[b] for b in before)
    rows.append(["state", 0, cfg.swap_rate, out.swapped_records, out.skipped, int(state_ok)])
    metrics = {
        "block_configs": p["configs"],
        "block_invariant_violations": block_violations,
        "state_invariant_holds": int(state_ok),
        "state_level_blocks_changed": changed,
    }
    return metrics, {"swap_invariants": _csv(["invariant_level", "config", "swap_rate", "swapped", "skipped", "invariant_ok"], rows)}, {}


def random_table(rng: np.random.Generator, max_dim: int, max_count: int) -> FrequencyTable:
    r, c = rng.integers(2, max_dim + 1, size=2)
    return FrequencyTable.from_matrix(rng.integers(0, max_count + 1, size=(r, c)))


def suppression_audit(p: dict, seed: int) -> Result:
    rows = []
    recoverable_total = degenerate = 0
    for k in range(p["tables"]):
        rng = derive_rng(seed, f"suppression_audit/{k}")
        table = random_table(rng, p["max_dim"], p["max_count"])
        plan = secondary_suppress(table, primary_suppress(table, p["threshold"]))
        left = audit_recoverable(table, plan)
        recoverable_total += len(left)
        degenerate += plan.degenerate
        rows.append([k, len(table), len(plan.primary_cells), len(plan.secondary_cells), len(left), int(plan.degenerate)])
    metrics = {
        "tables": p["tables"],
        "recoverable_after_secondary": recoverable_total,
        "degenerate_tables": degenerate,
        "mean_primary": float(np.mean([r[2] for r in rows])),
        "mean_secondary": float(np.mean([r[3] for r in rows])),
    }
    return metrics, {"suppression_audit": _csv(["table", "cells", "primary", "secondary", "recoverable", "degenerate"], rows)}, {}


SCENARIOS = {
    1: (("age", "gender"), ("age", "gender", "race", "ethnicity"), ("race", "ethnicity")),
    2: (("age", "gender"), ("age", "gender", "race", "ethnicity", "relationship"), ("race", "ethnicity")),
    3: (("race", "ethnicity"), ("age", "gender", "race", "ethnicity"), ("age", "gender")),
}


def run_scenario(scenario: int, seed: int, trials: int) -> dict[str, float]:
    qis, dims, missing = SCENARIOS[scenario]
    md, ext = generate_block_population(scenario, derive_rng(seed, f"scenario/{scenario}/population"))
    recon = regenerate_from_tables([tabulate(md, dims)]).microdata
    truth = GroundTruth.from_microdata(md)
    report = evaluate_linkage(recon, ext, truth, qis, rng=derive_rng(seed, f"scenario/{scenario}/ties"), trials=trials)
    return {
        "agreement": reconstruction_agreement(recon, md, missing),
        "putative": report.putative_match_rate,
        "confirmed": report.confirmed_match_rate,
        "per_record_probability": report.per_record_correct_probability,
    }


def scenario_suite(p: dict, seed: int) -> Result:
    metrics, rows = {}, []
    for s in SCENARIOS:
        out = run_scenario(s, seed, p["trials"])
        for k, v in out.items():
            metrics[f"scenario{s}_{k}"] = v
        rows.append([s, out["agreement"], out["putative"], out["confirmed"], out["per_record_probability"]])
    header = ["scenario", "reconstruction_agreement", "putative_match_rate", "confirmed_match_rate", "per_record_probability"]
    return metrics, {"scenario_suite": _csv(header, rows)}, {}


def r_vs_r_prime_experiment(p: dict, seed: int) -> Result:
    h = p["homogeneity"]
    spec = PopulationSpec(
        blocks_per_tract=p["blocks"],
        block_size=p["block_size"],
        homogeneity={a: h for a in ("age", "gender", "race", "ethnicity", "relationship")},
        external_fields=tuple(a for a in ("age", "gender", "race", "ethnicity", "relationship") if a in p["quasi_identifiers"]),
        coverage=p["coverage"],
    )
    md, ext = generate_block_population(spec, derive_rng(seed, "r_vs_r_prime/population"))
    recon = regenerate_from_tables([tabulate(md, p["table_dims"])]).microdata
    report = r_vs_r_prime(recon, ext, GroundTruth.from_microdata(md), p["quasi_identifiers"])
    metrics = {k: v for k, v in report.to_dict().items() if k != "config"}
    metrics["residual_records"] = report.config["residual_records"]
    return metrics, {}, {"linkage_report": report.to_dict()}


def _regen_fixtures() -> list[tuple[str, list[FrequencyTable]]]:
    b = "S1C1T1B1"
    return [
        ("scenario1_block", [FrequencyTable("block", ("age", "gender", "race", "ethnicity"), {(b, (44, "Male", "White", "Not_Hispanic")): 10})]),
        ("two_singletons", [FrequencyTable("block", ("age", "gender"), {(b, (44, "Male")): 1, (b, (30, "Female")): 1})]),
        ("gender_M2_race_W1B1", [
            FrequencyTable("block", ("gender",), {(b, ("Male",)): 2}),
            FrequencyTable("block", ("race",), {(b, ("White",)): 1, (b, ("Black",)): 1}),
        ]),
        ("gender_M1F1_race_W1B1", [
            FrequencyTable("block", ("gender",), {(b, ("Male",)): 1, (b, ("Female",)): 1}),
            FrequencyTable("block", ("race",), {(b, ("White",)): 1, (b, ("Black",)): 1}),
        ]),
    ]


def roundtrips(md: MicrodataSet, table: FrequencyTable) -> bool:
    """Re-tabulation reproduces every non-zero cell and nothing else."""
    again = tabulate(md, table.dimensions, table.geo_level)
    return {k: v for k, v in again.cells.items() if v} == {k: v for k, v in table.cells.items() if v}


def regeneration_multiplicity(p: dict, seed: int) -> Result:
    rows = []
    failures = 0
    fixtures = _regen_fixtures()
    rng = derive_rng(seed, "regeneration_multiplicity")
    for k in range(p["random_instances"]):
        size = int(rng.integers(1, p["max_population"] + 1))
        geo = Geography.regular(1, 1, 1, 1)
        recs = [
            PersonRecord(f"P{i}", geo.blocks[0], 30, ("Male", "Female")[int(rng.integers(2))],
                         ("White", "Black")[int(rng.integers(2))], "Not_Hispanic", "Householder")
            for i in range(size)
        ]
        md = MicrodataSet(tuple(recs), geo)
        fixtures.append((f"random_{k}", [tabulate(md, ("gender",)), tabulate(md, ("race",))]))
    for name, tables in fixtures:
        res = regenerate_from_tables(tables)
        ok = all(roundtrips(res.microdata, t) for t in tables)
        failures += not ok
        rows.append([name, len(res.microdata), res.multiplicity, int(ok)])
    metrics = {
        "fixtures": len(rows),
        "roundtrip_failures": failures,
        "max_multiplicity": max((r[2] or 0) for r in rows),
    }
    return metrics, {"regeneration_multiplicity": _csv(["fixture", "records", "multiplicity", "roundtrip_ok"], rows)}, {}


REGISTRY: dict[str, Callable[[dict, int], Result]] = {
    "dn_exhaustive": dn_exhaustive,
    "dn_lp_sweep": dn_lp_sweep,
    "dp_budget": dp_budget,
    "rr_equivalence": rr_equivalence,
    "swap_invariants": swap_invariants,
    "suppression_audit": suppression_audit,
    "scenario_suite": scenario_suite,
    "r_vs_r_prime": r_vs_r_prime_experiment,
    "regeneration_multiplicity": regeneration_multiplicity,
}
