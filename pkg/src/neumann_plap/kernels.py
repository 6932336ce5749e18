"""Backend selection for the edge-energy kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. ``NEUMANN_PLAP_PURE=1`` forces the fallback.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("NEUMANN_PLAP_PURE", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()

edge_energy = _impl.edge_energy
edge_force = _impl.edge_force
irls_weights = _impl.irls_weights
line_phi = _impl.line_phi
node_max = _impl.node_max
coordinate_descent = _impl.coordinate_descent


def backend_module(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
