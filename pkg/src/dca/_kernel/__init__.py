"""Hot-loop kernel selection.

The collapsed sampler's token loop is the one part of the package whose
runtime is dominated by scalar work, so it ships as a Cython extension with
a pure-Python twin.  The compiled kernel is used when importable; set
DCA_PURE_PYTHON=1 to force the fallback.  Both produce bitwise identical
chains (see tests/test_kernel.py).
"""

import os

from ._collapsed_py import resample_cycle as py_resample_cycle

if os.environ.get("DCA_PURE_PYTHON"):
    resample_cycle = py_resample_cycle
    KERNEL = "python"
else:
    try:
        from ._collapsed_c import resample_cycle

        KERNEL = "compiled"
    except ImportError:
        resample_cycle = py_resample_cycle
        KERNEL = "python"

__all__ = ["resample_cycle", "py_resample_cycle", "KERNEL"]
