"""Select the compiled particle kernels when built, else the NumPy fallback.

Set ``QKERNEL_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"
if os.environ.get("QKERNEL_PURE_PYTHON") != "1":
    try:
        from ._ckernels import interp_uniform, linear_bin, mckean_step  # noqa: F401
        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._pykernels import interp_uniform, linear_bin, mckean_step  # noqa: F401
