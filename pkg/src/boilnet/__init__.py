"""Deep feedforward surrogate for wall-boiling closures, trained on averaged two-phase fields."""

from boilnet.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
