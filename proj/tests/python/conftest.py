import os
import sys

# Allow running against a plain CMake build tree: ORCHESTRA_CORE_DIR points at
# the directory holding the compiled _core extension, ORCHESTRA_SOURCE_DIR at
# the repository root (for the pure-python package).
_src = os.environ.get("ORCHESTRA_SOURCE_DIR")
if _src:
    sys.path.insert(0, os.path.join(_src, "python"))
