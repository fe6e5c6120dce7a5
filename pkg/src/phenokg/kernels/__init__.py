"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise
``_pykernels`` is loaded. Set ``PHENOKG_PURE_PYTHON=1`` to force the fallback.
``BACKEND`` names the implementation actually in use.
"""

from __future__ import annotations

import os

from . import _pykernels as python

if os.environ.get("PHENOKG_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

domination_counts = _impl.domination_counts
edit_distance = _impl.edit_distance
strongest_paths = _impl.strongest_paths

__all__ = ["BACKEND", "compiled", "python", "domination_counts", "edit_distance", "strongest_paths"]
