"""Kernel backend selection.

The compiled extension is preferred when importable and when every factor in
the packed graph has a closed-form shape; graphs carrying Python-callback
factors always run on the pure-Python twin.  Set TAMPKIT_KERNEL=py (or =c)
to force a backend.
"""

from __future__ import annotations

import os

from . import _eval_py
from .packed import PackedGraph

try:
    from . import _eval_cy

    HAVE_COMPILED = True
except ImportError:
    _eval_cy = None
    HAVE_COMPILED = False


def backend_for(packed: PackedGraph):
    forced = os.environ.get("TAMPKIT_KERNEL", "auto")
    if forced == "py":
        return _eval_py
    if forced == "c":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel requested but not built")
        if not packed.all_builtin:
            return _eval_py
        return _eval_cy
    if HAVE_COMPILED and packed.all_builtin:
        return _eval_cy
    return _eval_py


def backend_name(packed: PackedGraph) -> str:
    return "c" if backend_for(packed) is _eval_cy else "py"
