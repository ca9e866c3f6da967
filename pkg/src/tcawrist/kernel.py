"""Backend selection for the dynamics kernel.

The compiled ``_core`` extension is used when importable; otherwise the
pure-Python twin. Set ``TCAWRIST_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("TCAWRIST_PURE_PYTHON", "") not in ("", "0"):
    from . import _core_py as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        from . import _core_py as _impl

BACKEND = _impl.BACKEND
N_PARAMS = _impl.N_PARAMS
FD_STEP = _impl.FD_STEP

state_derivative = _impl.state_derivative
mass_matrix = _impl.mass_matrix
eom_terms = _impl.eom_terms
rk4_integrate = _impl.rk4_integrate
predictor = _impl.predictor


def load_backend(name: str):
    """Return a specific backend module (``"cython"`` or ``"python"``)."""
    if name == "python":
        from . import _core_py

        return _core_py
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
