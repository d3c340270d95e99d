"""Kernel backend selection.

Two interchangeable kernel modules exist: `gdnn.kernels.jit` (numba) and
`gdnn.kernels.reference` (pure numpy). Both expose the same functions and
produce bit-identical results for the order-pinned operations (convolution,
fully connected, pooling, relu). Selection order:

1. explicit `set_backend(name)` call,
2. the GDNN_BACKEND environment variable ("numba" or "numpy"),
3. numba if importable, else numpy.
"""

import os

from .errors import ConfigError

ENV_VAR = "GDNN_BACKEND"

_active_name: str | None = None
_active_module = None


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def available_backends() -> list[str]:
    names = ["numpy"]
    if _numba_available():
        names.insert(0, "numba")
    return names


def _load(name: str):
    if name == "numpy":
        from .kernels import reference
        return reference
    if name == "numba":
        if not _numba_available():
            raise ConfigError("backend 'numba' requested but numba is not importable")
        from .kernels import jit
        return jit
    raise ConfigError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def set_backend(name: str):
    """Select the kernel backend by name. Returns the kernel module."""
    global _active_name, _active_module
    module = _load(name)
    _active_name, _active_module = name, module
    return module


def default_backend_name() -> str:
    env = os.environ.get(ENV_VAR)
    if env:
        if env not in ("numba", "numpy"):
            raise ConfigError(f"{ENV_VAR}={env!r} is not a valid backend name")
        return env
    return "numba" if _numba_available() else "numpy"


def active():
    """Return the active kernel module, initializing from the environment
    on first use."""
    if _active_module is None:
        set_backend(default_backend_name())
    return _active_module


def active_name() -> str:
    active()
    assert _active_name is not None
    return _active_name
