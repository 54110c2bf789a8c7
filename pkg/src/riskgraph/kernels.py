"""Select the compiled kernels when importable, else the numpy/Python ones.

Set ``RISKGRAPH_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("RISKGRAPH_PURE_PYTHON"):
    from ._pykernels import zinb_entropy, zinb_nll, zinb_nll_grad, zinb_quantile
    BACKEND = "python"
else:
    try:
        from ._ckernels import zinb_entropy, zinb_nll, zinb_nll_grad, zinb_quantile
        BACKEND = "cython"
    except ImportError:
        from ._pykernels import zinb_entropy, zinb_nll, zinb_nll_grad, zinb_quantile
        BACKEND = "python"

__all__ = ["BACKEND", "zinb_entropy", "zinb_nll", "zinb_nll_grad", "zinb_quantile"]
