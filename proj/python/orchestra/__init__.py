"""Trace-driven cluster scheduling simulator with role-based multi-agent training.

The heavy lifting lives in the compiled ``_core`` extension. Installed wheels
ship it inside this package; during development the ``ORCHESTRA_CORE_DIR``
environment variable can point at a CMake build tree instead.
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:
    import os
    import sys

    _core_dir = os.environ.get("ORCHESTRA_CORE_DIR")
    if not _core_dir:
        raise
    sys.path.insert(0, _core_dir)
    try:
        from _core import *  # noqa: F401,F403
        from _core import __version__  # noqa: F401
    finally:
        sys.path.remove(_core_dir)

__all__ = [
    "OrchestraError",
    "generate_trace",
    "trace_summary",
    "train",
    "evaluate",
    "rollout_scripted",
    "ablate",
    "sweep",
    "report",
    "spearman",
    "fuse_reward",
    "normalize_rewards",
]
