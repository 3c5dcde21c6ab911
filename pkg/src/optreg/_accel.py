"""Backend selection for the hot simulation kernels.

``OPTREG_BACKEND=numpy`` forces the pure-numpy path; anything else uses numba
when it can be imported.
"""

import os

BACKEND_ENV = "OPTREG_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(BACKEND_ENV, "numba").lower() != "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults, or an identity decorator without numba."""
    opts = dict(cache=True, nogil=True, fastmath=False)
    opts.update(kwargs)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return numba.njit(**opts)(args[0])
    return numba.njit(*args, **opts)
