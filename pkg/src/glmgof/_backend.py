"""Kernel backend selection.

The compiled extension (``glmgof._kernels``) is used when importable; the
numpy implementation (``glmgof._purekernels``) is the fallback.  Selection
can be forced with the environment variable ``GLMGOF_BACKEND=pure`` or
``GLMGOF_BACKEND=compiled`` (the latter raises if the extension is
missing, so a build problem cannot silently degrade performance), or at
runtime with :func:`set_backend` (used by the tests and the benchmark to
compare the two implementations).
"""

from __future__ import annotations

import os

from . import _purekernels


def _load(name: str):
    if name == "pure":
        return _purekernels
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError("unknown backend %r; expected 'pure' or 'compiled'" % name)


_forced = os.environ.get("GLMGOF_BACKEND", "").strip().lower()
if _forced:
    _impl = _load(_forced)
else:
    try:
        _impl = _load("compiled")
    except ImportError:
        _impl = _purekernels


def backend_name() -> str:
    """Name of the active kernel backend, 'compiled' or 'pure'."""
    return _impl.BACKEND_NAME


def set_backend(name: str) -> str:
    """Switch the active backend; returns the previous backend's name."""
    global _impl
    prev = _impl.BACKEND_NAME
    _impl = _load(name)
    return prev


def cd_solve(Xw, r, beta, col_ss, pen, kkt_tol, max_sweeps):
    return _impl.cd_solve(Xw, r, beta, col_ss, pen, kkt_tol, max_sweeps)


def tree_fit(Xf, y, seed, mtry, min_leaf, max_depth, n_bootstrap):
    return _impl.tree_fit(Xf, y, seed, mtry, min_leaf, max_depth, n_bootstrap)


def tree_predict(Xc, feature, threshold, left, right, value):
    return _impl.tree_predict(Xc, feature, threshold, left, right, value)


def sm64_sequence(seed, count):
    return _impl.sm64_sequence(seed, count)
