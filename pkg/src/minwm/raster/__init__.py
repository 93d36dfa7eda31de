"""Ray-cast rendering backends.

The compiled Cython kernel is used when available; set MINWM_PURE_PYTHON=1
to force the vectorized numpy fallback. Both backends implement the same
`render_rays` signature and agree to float32 precision.
"""

import os

from . import numpy_backend

if os.environ.get("MINWM_PURE_PYTHON"):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _kernel as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

render_rays = _impl.render_rays
