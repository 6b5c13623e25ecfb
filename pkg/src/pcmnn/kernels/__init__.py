"""Hot kernels: compiled Cython core when built, numpy fallback otherwise.

Set ``PCMNN_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
module in use; ``available_backends()`` lists every importable one (the test
suite runs equivalence checks across all of them).
"""

from __future__ import annotations

import os

from . import _pykernels

_compiled = None
if os.environ.get("PCMNN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _pykernels

BACKEND: str = _impl.NAME
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
rk4_tabulated = _impl.rk4_tabulated


def available_backends() -> dict:
    out = {"python": _pykernels}
    try:
        from . import _ckernels  # type: ignore[attr-defined]

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def set_backend(name: str) -> str:
    """Switch the active kernels process-wide; returns the previous backend name."""
    global BACKEND, mlp_forward, mlp_backward, rk4_tabulated
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"backend {name!r} not available (have {', '.join(backends)})")
    prev = BACKEND
    mod = backends[name]
    BACKEND, mlp_forward, mlp_backward, rk4_tabulated = mod.NAME, mod.mlp_forward, mod.mlp_backward, mod.rk4_tabulated
    return prev
