"""Kernel backend selection: compiled extension if importable, else fallback.

Set ``STRIPFLOW_KERNELS=fallback`` (or ``compiled``) to force a lane; forcing
``compiled`` raises if the extension is missing instead of degrading
silently. Both lanes expose the same six functions with identical semantics;
``tests/test_kernel_lanes.py`` checks them against each other bit-exactly.
"""

import os


def _load(name):
    if name == "fallback":
        from . import _fallback
        return _fallback
    from . import _kernels
    return _kernels


_forced = os.environ.get("STRIPFLOW_KERNELS", "").strip().lower()
if _forced not in ("", "compiled", "fallback"):
    raise RuntimeError(f"STRIPFLOW_KERNELS must be 'compiled' or 'fallback', not {_forced!r}")

if _forced == "fallback":
    _impl = _load("fallback")
    BACKEND = "fallback"
elif _forced == "compiled":
    _impl = _load("compiled")
    BACKEND = "compiled"
else:
    try:
        _impl = _load("compiled")
        BACKEND = "compiled"
    except ImportError:
        _impl = _load("fallback")
        BACKEND = "fallback"

flow_directions = _impl.flow_directions
fill_pits = _impl.fill_pits
count_dependencies = _impl.count_dependencies
accumulate_internal = _impl.accumulate_internal
external_upslope = _impl.external_upslope
finalise_internal = _impl.finalise_internal


def get_backend(name):
    """Load a specific lane by name ('compiled' or 'fallback')."""
    return _load(name)


def available_backends():
    names = ["fallback"]
    try:
        _load("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
