"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback. Set ``NOONCHIP_BACKEND=python`` to force the fallback.
Both produce identical draws for identical keys.
"""

from __future__ import annotations

import os

from . import _fallback
from ._fallback import BLOCK_SIZE, count_coincidences, counter_uniforms, derive_key  # noqa: F401

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

NAME = "python" if _compiled is None or os.environ.get("NOONCHIP_BACKEND") == "python" else "cython"
_active = _fallback if NAME == "python" else _compiled


def available() -> list[str]:
    return ["python"] if _compiled is None else ["cython", "python"]


def get(name: str | None = None):
    """Kernel module by name (``cython`` or ``python``); default is the active one."""
    if name is None:
        return _active
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def pulse_patterns(key, start, count, cdf, backend=None):
    return get(backend).pulse_patterns(key, start, count, cdf)


def sparse_coincidences(
    key, n_pulses, p_rel, rel_patterns, rel_cdf, start_mask, stop_mask, max_n, backend=None
):
    return get(backend).sparse_coincidences(
        key, n_pulses, p_rel, rel_patterns, rel_cdf, start_mask, stop_mask, max_n
    )
