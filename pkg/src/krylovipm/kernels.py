"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy versions.
Set ``KRYLOVIPM_BACKEND=python`` to force the fallback (the benchmark and the
backend-equivalence tests do this through :func:`load`).
"""
import contextlib
import importlib
import os
import sys

_NAMES = ("csr_matvec", "csr_weighted_colsq", "dot", "bfgs_matvec")


def load(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "compiled":
        return importlib.import_module("krylovipm._ckernels")
    if name == "python":
        return importlib.import_module("krylovipm._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    wanted = os.environ.get("KRYLOVIPM_BACKEND", "").strip().lower()
    if wanted in ("python", "numpy", "fallback"):
        return "python", load("python")
    try:
        return "compiled", load("compiled")
    except ImportError:
        if wanted == "compiled":
            raise
        return "python", load("python")


BACKEND, _mod = _select()
csr_matvec = _mod.csr_matvec
csr_weighted_colsq = _mod.csr_weighted_colsq
dot = _mod.dot
bfgs_matvec = _mod.bfgs_matvec



@contextlib.contextmanager
def use(name):
    """Temporarily route every kernel call through backend ``name`` (not thread safe)."""
    mod = sys.modules[__name__]
    saved = {k: getattr(mod, k) for k in (*_NAMES, "BACKEND")}
    target = load(name)
    for k in _NAMES:
        setattr(mod, k, getattr(target, k))
    mod.BACKEND = name
    try:
        yield target
    finally:
        for k, v in saved.items():
            setattr(mod, k, v)


__all__ = ["BACKEND", "load", "use", *_NAMES]
