"""Kernel backend selection.

Hot numeric kernels (the per-record operator sums and the boosted-tree split
search) have two implementations: numba ``@njit`` and pure numpy. The active
backend is chosen by the environment variable ``LTRC_BACKEND``:

* ``numba`` (default when numba imports cleanly): JIT-compiled kernels,
* ``numpy``: pure-numpy fallback, no compilation.

``scripts/benchmark_kernels.py`` compares the two on identical inputs.
"""

from __future__ import annotations

import os

_VALID = ("numba", "numpy")


def _detect_default() -> str:
    try:
        import numba  # noqa: F401
        return "numba"
    except Exception:
        return "numpy"


def active_backend() -> str:
    """Resolve the backend name from LTRC_BACKEND, validating the value."""
    raw = os.environ.get("LTRC_BACKEND", "").strip().lower()
    if not raw:
        return _detect_default()
    if raw not in _VALID:
        raise ValueError(f"LTRC_BACKEND={raw!r}; expected one of {_VALID}")
    if raw == "numba":
        try:
            import numba  # noqa: F401
        except Exception as exc:
            raise RuntimeError("LTRC_BACKEND=numba but numba is not importable") from exc
    return raw


def use_numba() -> bool:
    return active_backend() == "numba"
