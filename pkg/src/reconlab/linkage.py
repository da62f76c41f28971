"""Reidentification by record linkage.

Reconstructed (unidentified) records are linked to an identified external
database on exact quasi-identifier agreement within each block. A link is
only a reidentification once it is unique and its identity is confirmed
against ground truth. Reconstruction quality, by contrast, is measured by
``reconstruction_agreement``; the two can diverge completely.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from reconlab.exceptions import ConsistencyError, DataError, ParameterError, SchemaError
from reconlab.microdata import ATTRIBUTES, MicrodataSet, PersonRecord, check_attributes

Identity = tuple[str, str]
EXTERNAL_BASE_FIELDS = ("name", "address", "block_id")


def identity_of(person: PersonRecord) -> Identity:
    """Deterministic synthetic (name, address) for a ground-truth person."""
    return (f"Resident {person.person_id}", f"{person.person_id} Main St, {person.block_id}")


@dataclass(frozen=True)
class ExternalRecord:
    name: str
    address: str
    block_id: str
    attrs: Mapping[str, object] = field(default_factory=dict)

    @property
    def identity(self) -> Identity:
        return (self.name, self.address)


@dataclass(frozen=True)
class ExternalDatabase:
    """Identified records carrying a fixed subset of the person attributes."""

    fields: tuple[str, ...]
    records: tuple[ExternalRecord, ...] = ()
    coverage: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fields", check_attributes(self.fields))
        object.__setattr__(self, "records", tuple(self.records))
        if not 0 <= self.coverage <= 1:
            raise ParameterError("coverage must lie in [0, 1]")
        ids = Counter(r.identity for r in self.records)
        if any(k > 1 for k in ids.values()):
            raise ParameterError("(name, address) must be unique per external record")
        for r in self.records:
            if set(r.attrs) != set(self.fields):
                raise SchemaError(f"external record {r.identity} carries {sorted(r.attrs)}, expected {self.fields}")

    def __len__(self):
        return len(self.records)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*EXTERNAL_BASE_FIELDS, *self.fields])
        for r in self.records:
            w.writerow([r.name, r.address, r.block_id, *(r.attrs[f] for f in self.fields)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, source: str | Path, coverage: float = 1.0) -> "ExternalDatabase":
        text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header[:3]) != EXTERNAL_BASE_FIELDS:
            raise SchemaError("external database header must start with name,address,block_id")
        attrs = tuple(header[3:])
        order = [a for a in ATTRIBUTES if a in attrs]
        if list(attrs) != order:
            raise SchemaError(f"optional columns must appear in the order {order}")
        records = []
        for row in reader:
            vals = {a: (int(v) if a == "age" else v) for a, v in zip(attrs, row[3:])}
            records.append(ExternalRecord(row[0], row[1], row[2], vals))
        return cls(attrs, tuple(records), coverage)


@dataclass(frozen=True)
class GroundTruth:
    """Confidential microdata plus the person_id -> identity registry."""

    microdata: MicrodataSet
    registry: Mapping[str, Identity]

    @classmethod
    def from_microdata(cls, md: MicrodataSet) -> "GroundTruth":
        return cls(md, {r.person_id: identity_of(r) for r in md.records})

    def identity(self, person_id: str) -> Identity:
        try:
            return self.registry[person_id]
        except KeyError:
            raise DataError(f"no registry entry for person {person_id!r}") from None


class LinkStatus(str, Enum):
    UNMATCHED = "Unmatched"
    AMBIGUOUS = "Ambiguous"
    PUTATIVE_UNIQUE = "PutativeUnique"


@dataclass(frozen=True)
class LinkResult:
    record_ref: str
    matched_refs: tuple[int, ...]
    status: LinkStatus
    cell_size: int = 1
    confirmed: bool | None = None


@dataclass(frozen=True)
class LinkageReport:
    putative_match_rate: float
    confirmed_match_rate: float
    per_record_correct_probability: float
    unique_cell_count: int
    r: float
    r_prime: float | None = None
    n_records: int = 0
    results: tuple[LinkResult, ...] = field(default=(), repr=False, compare=False)
    config: Mapping[str, object] = field(default_factory=dict, compare=False)

    @property
    def difference(self) -> float | None:
        return None if self.r_prime is None else self.r - self.r_prime

    def to_dict(self) -> dict:
        return {
            "putative_match_rate": self.putative_match_rate,
            "confirmed_match_rate": self.confirmed_match_rate,
            "per_record_correct_probability": self.per_record_correct_probability,
            "unique_cell_count": self.unique_cell_count,
            "r": self.r,
            "r_prime": self.r_prime,
            "r_minus_r_prime": self.difference,
            "n_records": self.n_records,
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_qis(quasi_identifiers: Sequence[str], ext: ExternalDatabase) -> tuple[str, ...]:
    qis = check_attributes(quasi_identifiers)
    missing = [q for q in qis if q not in ext.fields]
    if missing:
        raise SchemaError(f"quasi-identifiers {missing} are absent from the external database")
    return qis


def _ext_key(r: ExternalRecord, qis) -> tuple:
    return (r.block_id, tuple(r.attrs[q] for q in qis))


def _rec_key(r: PersonRecord, qis) -> tuple:
    return (r.block_id, r.values(qis))


def link(recon: MicrodataSet, ext: ExternalDatabase, quasi_identifiers: Sequence[str]) -> list[LinkResult]:
    """Link each reconstructed record to external records agreeing on every QI in its block.

    A link is PutativeUnique only if exactly one external record matches and
    the record's QI combination occurs once among the reconstructed records
    of its block; otherwise two reconstructed records would claim the same
    identity.
    """
    qis = _check_qis(quasi_identifiers, ext)
    index: dict[tuple, list[int]] = {}
    for i, r in enumerate(ext.records):
        index.setdefault(_ext_key(r, qis), []).append(i)
    cell = Counter(_rec_key(r, qis) for r in recon.records)
    out = []
    for r in recon.records:
        key = _rec_key(r, qis)
        matches = tuple(index.get(key, ()))
        if not matches:
            status = LinkStatus.UNMATCHED
        elif len(matches) == 1 and cell[key] == 1:
            status = LinkStatus.PUTATIVE_UNIQUE
        else:
            status = LinkStatus.AMBIGUOUS
        out.append(LinkResult(r.person_id, matches, status, cell[key]))
    return out


def align_records(
    recon: MicrodataSet, truth: MicrodataSet, attributes: Sequence[str] | None = None
) -> dict[str, str]:
    """Pair reconstructed records with true persons, block by block.

    Uses a maximum-agreement bipartite matching on ``attributes`` (all person
    attributes by default), since regenerated records carry no identity.

    Raises:
        ConsistencyError: a block holds different numbers of records.
    """
    attrs = check_attributes(attributes if attributes is not None else ATTRIBUTES)
    rb, tb = recon.by_block(), truth.by_block()
    out = {}
    for block in sorted(set(rb) | set(tb)):
        rs, ts = rb.get(block, []), tb.get(block, [])
        if len(rs) != len(ts):
            raise ConsistencyError(f"block {block}: {len(rs)} reconstructed vs {len(ts)} true records")
        if not rs:
            continue
        score = _agreement_matrix(rs, ts, attrs)
        rows, cols = linear_sum_assignment(score, maximize=True)
        out.update({rs[i].person_id: ts[j].person_id for i, j in zip(rows, cols)})
    return out


def _agreement_matrix(rs, ts, attrs) -> np.ndarray:
    rv = [r.values(attrs) for r in rs]
    tv = [t.values(attrs) for t in ts]
    return np.array([[sum(a == b for a, b in zip(x, y)) for y in tv] for x in rv], dtype=float)


def reconstruction_agreement(recon: MicrodataSet, truth: MicrodataSet, attributes: Sequence[str]) -> float:
    """Fraction of attribute values that agree under the best per-block pairing."""
    attrs = check_attributes(attributes)
    if not attrs:
        raise ParameterError("at least one attribute is required")
    rb, tb = recon.by_block(), truth.by_block()
    agreed = total = 0
    for block in sorted(set(rb) | set(tb)):
        rs, ts = rb.get(block, []), tb.get(block, [])
        if len(rs) != len(ts):
            raise ConsistencyError(f"block {block}: {len(rs)} reconstructed vs {len(ts)} true records")
        if not rs:
            continue
        score = _agreement_matrix(rs, ts, attrs)
        rows, cols = linear_sum_assignment(score, maximize=True)
        agreed += score[rows, cols].sum()
        total += len(rs) * len(attrs)
    return float(agreed / total) if total else 1.0


def confirm(
    results: Sequence[LinkResult],
    ext: ExternalDatabase,
    truth: GroundTruth,
    underlying: Mapping[str, str],
    rng: np.random.Generator | None = None,
    trials: int = 1000,
) -> LinkageReport:
    """Check putative links against true identities and summarize.

    ``underlying`` maps each reconstructed record to the true person it
    stands for (see :func:`align_records`). Ambiguous links are never
    confirmed. ``per_record_correct_probability`` is the chance that picking
    uniformly among a record's candidates names the right person; it is a
    Monte-Carlo estimate over ``trials`` draws when ``rng`` is given, else the
    exact expectation.

    Raises:
        DataError: a record has no underlying person or registry entry.
    """
    n = len(results)
    confirmed_results = []
    confirmed = putative = 0
    hits = 0.0
    for res in results:
        if res.record_ref not in underlying:
            raise DataError(f"reconstructed record {res.record_ref!r} has no underlying person")
        true_id = truth.identity(underlying[res.record_ref])
        correct = [k for k, i in enumerate(res.matched_refs) if ext.records[i].identity == true_id]
        ok = None
        if res.status is LinkStatus.PUTATIVE_UNIQUE:
            putative += 1
            ok = bool(correct)
            confirmed += ok
        confirmed_results.append(
            LinkResult(res.record_ref, res.matched_refs, res.status, res.cell_size, ok)
        )
        k = len(res.matched_refs)
        if k and correct:
            if rng is None:
                hits += len(correct) / k
            else:
                picks = rng.integers(0, k, size=trials)
                hits += float(np.isin(picks, correct).mean())
    return LinkageReport(
        putative_match_rate=putative / n if n else 0.0,
        confirmed_match_rate=confirmed / n if n else 0.0,
        per_record_correct_probability=hits / n if n else 0.0,
        unique_cell_count=sum(1 for r in results if r.cell_size == 1),
        r=confirmed / n if n else 0.0,
        n_records=n,
        results=tuple(confirmed_results),
    )


def evaluate_linkage(
    recon: MicrodataSet,
    ext: ExternalDatabase,
    truth: GroundTruth,
    quasi_identifiers: Sequence[str],
    rng: np.random.Generator | None = None,
    trials: int = 1000,
) -> LinkageReport:
    """link -> align -> confirm in one call."""
    results = link(recon, ext, quasi_identifiers)
    underlying = align_records(recon, truth.microdata)
    report = confirm(results, ext, truth, underlying, rng, trials)
    return _with_config(report, {"quasi_identifiers": list(quasi_identifiers), "trials": trials})


def _with_config(report: LinkageReport, config: dict) -> LinkageReport:
    return replace(report, config={**report.config, **config})


def _link_external(
    ext: ExternalDatabase,
    rows: Sequence[ExternalRecord],
    side: MicrodataSet,
    qis: tuple[str, ...],
) -> list[tuple[ExternalRecord, PersonRecord | None]]:
    """External -> microdata linkage; returns the unique partner or None per external record."""
    index: dict[tuple, list[PersonRecord]] = {}
    for r in side.records:
        index.setdefault(_rec_key(r, qis), []).append(r)
    ext_cell = Counter(_ext_key(r, qis) for r in ext.records)
    out = []
    for e in rows:
        key = _ext_key(e, qis)
        cands = index.get(key, [])
        out.append((e, cands[0] if len(cands) == 1 and ext_cell[key] == 1 else None))
    return out


def r_vs_r_prime(
    recon: MicrodataSet,
    ext: ExternalDatabase,
    truth: GroundTruth,
    quasi_identifiers: Sequence[str],
    underlying: Mapping[str, str] | None = None,
) -> LinkageReport:
    """Compare reidentification through reconstructed data with direct matching.

    ``r``: share of external records uniquely linked to a reconstructed record
    whose underlying person really is that identity. ``r_prime``: among the
    external records left unlinked, the share uniquely linked (same block and
    QIs) to the confidential records and confirmed by person_id. ``r`` well
    above ``r_prime`` would mean reconstruction adds reidentification power.
    """
    qis = _check_qis(quasi_identifiers, ext)
    if underlying is None:
        underlying = align_records(recon, truth.microdata)
    owner = {ident: pid for pid, ident in truth.registry.items()}

    first = _link_external(ext, ext.records, recon, qis)
    by_key: dict[tuple, list[PersonRecord]] = {}
    for rec in recon.records:
        by_key.setdefault(_rec_key(rec, qis), []).append(rec)
    chance = 0.0
    for e in ext.records:
        cands = by_key.get(_ext_key(e, qis), [])
        if cands:
            right = sum(truth.identity(underlying[c.person_id]) == e.identity for c in cands)
            chance += right / len(cands)
    linked = confirmed = 0
    residual = []
    for e, partner in first:
        if partner is None:
            residual.append(e)
            continue
        linked += 1
        if partner.person_id not in underlying:
            raise DataError(f"reconstructed record {partner.person_id!r} has no underlying person")
        confirmed += truth.identity(underlying[partner.person_id]) == e.identity

    second = _link_external(ext, residual, truth.microdata, qis)
    confirmed_prime = sum(
        1 for e, partner in second if partner is not None and owner.get(e.identity) == partner.person_id
    )
    n = len(ext)
    r = confirmed / n if n else 0.0
    r_prime = confirmed_prime / len(residual) if residual else 0.0
    cell = Counter(_rec_key(r_, qis) for r_ in recon.records)
    return LinkageReport(
        putative_match_rate=linked / n if n else 0.0,
        confirmed_match_rate=r,
        per_record_correct_probability=chance / n if n else 0.0,
        unique_cell_count=sum(1 for v in cell.values() if v == 1),
        r=r,
        r_prime=r_prime,
        n_records=n,
        config={"quasi_identifiers": list(qis), "residual_records": len(residual)},
    )
