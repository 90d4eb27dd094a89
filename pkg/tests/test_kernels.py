import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_set
from hyperext import _backend
from hyperext.extension import Density, SpacetimeGrid, extend

BACKENDS = sorted(_backend.BACKENDS)


def test_compiled_backend_is_built():
    # the build is expected to succeed in this environment; the fallback
    # exists for platforms without a compiler
    assert "compiled" in _backend.BACKENDS


@pytest.mark.parametrize("name", BACKENDS)
def test_pairwise_sum_small_cases(name):
    k = _backend.get(name)
    assert k.pairwise_sum(np.zeros(0)) == 0.0
    assert k.pairwise_sum(np.array([2.5])) == 2.5
    # tree order: ((a + b) + (c + 0))
    a = np.array([1e16, 1.0, -1e16])
    assert k.pairwise_sum(a) == (1e16 + 1.0) + (-1e16)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(0, 300), elements=st.floats(0, 1e6)))
def test_pairwise_sum_backends_agree_and_are_accurate(a):
    sums = {name: _backend.get(name).pairwise_sum(np.ascontiguousarray(a)) for name in BACKENDS}
    assert len(set(sums.values())) == 1
    exact = math.fsum(a)
    n = max(len(a), 1)
    assert abs(sums[BACKENDS[0]] - exact) <= 4 * math.log2(n + 1) * 2.2e-16 * math.fsum(abs(a)) + 1e-300


def test_field_backends_agree(rng):
    A = random_set(rng, 5, 0.3)
    w = rng.normal(size=len(A)) + 1j * rng.normal(size=len(A))
    grid = SpacetimeGrid(4.0, 4.0, 9, 24)
    fields = {name: extend(Density(A, w), grid, backend=name).samples for name in BACKENDS}
    ref = fields["python"]
    for name, S in fields.items():
        assert np.abs(S - ref).max() <= 1e-13 * np.abs(ref).max()


def test_field_kernel_handles_empty_rows(rng):
    # a density whose bounding box has empty rows exercises the live-row path
    N = 4
    from hyperext.dyadic import CellSet

    A = CellSet(N, [[0, 0], [9, 3], [15, 15]])
    grid = SpacetimeGrid(2.0, 2.0, 4, 6)
    for name in BACKENDS:
        S = extend(Density(A), grid, backend=name).samples
        t, x1, x2 = grid.axes()
        area = 2.0 ** (-2 * N)
        u = (A.cells[:, 0] + 0.5) / 16
        v = (A.cells[:, 1] + 0.5) / 16
        ref = np.array(
            [[[area * np.exp(1j * (tt * u * v + a * u + b * v)).sum() for b in x2] for a in x1] for tt in t]
        )
        assert np.abs(S - ref).max() <= 1e-15


_SCRIPT = """
import hashlib, numpy as np
from hyperext.dyadic import CellSet
from hyperext.extension import Density, SpacetimeGrid, extend, lp_power
rng = np.random.default_rng(7)
A = CellSet.from_mask(rng.random((32, 32)) < 0.4, 5)
F = extend(Density(A), SpacetimeGrid(8.0, 8.0, 33, 64))
print(hashlib.sha256(F.samples.tobytes()).hexdigest(), repr(lp_power(F, 3.5)))
"""


def _run(env_extra):
    env = dict(os.environ, **env_extra)
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


@pytest.mark.parametrize("pure", ["", "1"])
def test_thread_count_does_not_change_results(pure):
    env = {"HYPEREXT_PURE_PYTHON": pure} if pure else {}
    results = {_run({**env, "THREADS": str(n)}) for n in (1, 2, 4)}
    assert len(results) == 1


def test_pure_python_switch():
    out = subprocess.run(
        [sys.executable, "-c", "import hyperext; print(hyperext.BACKEND)"],
        env=dict(os.environ, HYPEREXT_PURE_PYTHON="1"),
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_threads_env_parsing(monkeypatch):
    monkeypatch.setenv("THREADS", "3")
    assert _backend.threads() == 3
    monkeypatch.setenv("THREADS", "0")
    assert _backend.threads() == 1
    monkeypatch.delenv("THREADS")
    assert _backend.threads() >= 1
