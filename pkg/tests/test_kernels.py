"""The compiled and pure-Python kernels must agree."""
import numpy as np
import pytest

from conftest import _ckernels
from benchdesign import _pykernels, kernels

pytestmark = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _grid(seed=3, n=300):
    rng = np.random.default_rng(seed)
    df = rng.integers(1, 400, n).astype(float)
    ncp = rng.uniform(-12, 12, n)
    x = ncp + rng.normal(0, 3, n)
    return list(zip(x.tolist(), df.tolist(), ncp.tolist()))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_t_cdf_backends_agree():
    for x, df, _ in _grid():
        assert _ckernels.t_cdf(x, df) == pytest.approx(_pykernels.t_cdf(x, df), abs=1e-14)


def test_nct_cdf_backends_agree():
    worst = max(abs(_ckernels.nct_cdf(*a) - _pykernels.nct_cdf(*a)) for a in _grid())
    assert worst < 1e-11


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_pair_se_backends_identical(mode):
    rng = np.random.default_rng(mode)
    a = 6
    n = rng.integers(3, 90, a).astype(float)
    mean = rng.uniform(1, 20, a)
    var = rng.uniform(0, 5, a)
    if mode == 1:
        pi = np.zeros(a - 1, dtype=np.intp)
        pj = np.arange(1, a, dtype=np.intp)
    else:
        idx = [(i, j) for i in range(a) for j in range(i + 1, a)]
        pi = np.array([p[0] for p in idx], dtype=np.intp)
        pj = np.array([p[1] for p in idx], dtype=np.intp)
    out_c = np.empty(len(pi))
    out_p = np.empty(len(pi))
    _ckernels.pair_se(mode, n, mean, var, pi, pj, out_c)
    _pykernels.pair_se(mode, n, mean, var, pi, pj, out_p)
    assert np.array_equal(out_c, out_p)


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("BENCHDESIGN_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.nct_cdf is _pykernels.nct_cdf
    finally:
        monkeypatch.delenv("BENCHDESIGN_PURE_PYTHON")
        importlib.reload(kernels)
