"""Balanced control between tracking performance and input saturation.

Modules: ``linalg`` (symmetric eigen-tools), ``plant``, ``filters``,
``perf`` (envelopes, error transform, switching ramps), ``invariant``
(LMI certificates and Monte Carlo checks), ``controllers``, ``sim`` and
``cli``.
"""

from .kernels import BACKEND, COMPILED_AVAILABLE

__version__ = "0.1.0"
__all__ = ["BACKEND", "COMPILED_AVAILABLE", "__version__"]
