"""Road-level accident risk forecasting with a zero-inflated negative binomial GNN."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
