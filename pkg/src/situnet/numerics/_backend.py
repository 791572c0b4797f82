"""Pick the compiled kernel module if it was built, else the numpy fallback.

Set ``SITU_KERNELS=python`` to force the fallback.
"""

import os

if os.environ.get("SITU_KERNELS", "").lower() == "python":
    from . import _kernels_py as kernels
    COMPILED = False
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
        COMPILED = True
    except ImportError:
        from . import _kernels_py as kernels
        COMPILED = False

__all__ = ["kernels", "COMPILED"]
