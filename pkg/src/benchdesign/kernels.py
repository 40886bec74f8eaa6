"""Select the compiled kernels when available, else the pure-Python ones.

Set ``BENCHDESIGN_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"

if os.environ.get("BENCHDESIGN_PURE_PYTHON", "") not in ("", "0"):
    from ._pykernels import nct_cdf, pair_se, t_cdf  # noqa: F401
else:
    try:
        from ._ckernels import nct_cdf, pair_se, t_cdf  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import nct_cdf, pair_se, t_cdf  # noqa: F401

SIMPLE, PERCENT_ONE, PERCENT_ALL = 0, 1, 2
