import itertools
from collections import Counter

import numpy as np
import pytest

from reconlab.microdata import Geography, MicrodataSet, PersonRecord


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def person(pid, block, age=44, gender="Male", race="White", ethnicity="Not_Hispanic", relationship="Householder"):
    return PersonRecord(pid, block, age, gender, race, ethnicity, relationship)


def one_block(records_spec, block="S1C1T1B1"):
    """MicrodataSet with one block; ``records_spec`` is a list of attribute dicts."""
    geo = Geography.regular(1, 1, 1, 1)
    recs = [person(f"P{k}", block, **spec) for k, spec in enumerate(records_spec)]
    return MicrodataSet(tuple(recs), geo)


def brute_force_multiplicity(tables, block_sizes):
    """Enumerate labeled assignments per block, canonicalize as multisets, count."""
    dims = []
    for t in tables:
        dims.extend(d for d in t.dimensions if d not in dims)
    domains = [sorted({v[t.dimensions.index(d)] for t in tables if d in t.dimensions for _, v in t.cells}, key=str) for d in dims]
    joint = list(itertools.product(*domains))
    per_block = []
    for block, size in block_sizes.items():
        seen = set()
        for labeled in itertools.product(joint, repeat=size):
            ok = True
            for t in tables:
                pos = [dims.index(d) for d in t.dimensions]
                got = Counter((block, tuple(x[p] for p in pos)) for x in labeled)
                want = {k: v for k, v in t.cells.items() if k[0] == block and v}
                if dict(got) != want:
                    ok = False
                    break
            if ok:
                seen.add(tuple(sorted(labeled, key=str)))
        per_block.append(len(seen))
    out = 1
    for k in per_block:
        out *= k
    return out
