"""Hot evaluation kernels with a numba backend and a pure-numpy fallback.

The backend is chosen at import time from the environment variable
``POLYSTOKES_NUMBA``: set it to ``0`` to force the numpy path, ``1`` to
require numba (ImportError if unavailable).  By default numba is used
when importable.  Both backends produce identical results; see
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os

import numpy as np

_env = os.environ.get("POLYSTOKES_NUMBA", "").strip()
if _env == "0":
    NUMBA_ENABLED = False
elif _env == "1":
    import numba  # noqa: F401  raises if unavailable

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def _monomial_values_np(xs, ys, ex, ey):
    return xs[:, None] ** ex[None, :] * ys[:, None] ** ey[None, :]


def _monomial_derivatives_np(xs, ys, ex, ey):
    npts = xs.shape[0]
    nm = ex.shape[0]
    out = np.zeros((npts, nm, 2))
    exm = np.maximum(ex - 1, 0)
    eym = np.maximum(ey - 1, 0)
    out[:, :, 0] = ex[None, :] * (xs[:, None] ** exm[None, :]) * (ys[:, None] ** ey[None, :])
    out[:, :, 1] = ey[None, :] * (xs[:, None] ** ex[None, :]) * (ys[:, None] ** eym[None, :])
    out[:, ex == 0, 0] = 0.0
    out[:, ey == 0, 1] = 0.0
    return out


def _powers_1d_np(s, degmax):
    npts = s.shape[0]
    out = np.ones((npts, degmax + 1))
    if degmax >= 1:
        out[:, 1:] = np.cumprod(np.broadcast_to(s[:, None], (npts, degmax)), axis=1)
    return out


if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def _monomial_values_nb(xs, ys, ex, ey):
        npts = xs.shape[0]
        nm = ex.shape[0]
        out = np.empty((npts, nm))
        for p in range(npts):
            x = xs[p]
            y = ys[p]
            for m in range(nm):
                out[p, m] = x ** ex[m] * y ** ey[m]
        return out

    @njit(cache=True)
    def _monomial_derivatives_nb(xs, ys, ex, ey):
        npts = xs.shape[0]
        nm = ex.shape[0]
        out = np.zeros((npts, nm, 2))
        for p in range(npts):
            x = xs[p]
            y = ys[p]
            for m in range(nm):
                a = ex[m]
                b = ey[m]
                if a > 0:
                    out[p, m, 0] = a * x ** (a - 1) * y ** b
                if b > 0:
                    out[p, m, 1] = b * x ** a * y ** (b - 1)
        return out

    @njit(cache=True)
    def _powers_1d_nb(s, degmax):
        npts = s.shape[0]
        out = np.empty((npts, degmax + 1))
        for p in range(npts):
            acc = 1.0
            for d in range(degmax + 1):
                out[p, d] = acc
                acc *= s[p]
        return out


def monomial_values(xs, ys, ex, ey):
    """Values of the monomials xs^ex[m] * ys^ey[m] at scaled points, (npts, nmono)."""
    if NUMBA_ENABLED:
        return _monomial_values_nb(xs, ys, ex, ey)
    return _monomial_values_np(xs, ys, ex, ey)


def monomial_derivatives(xs, ys, ex, ey):
    """Derivatives w.r.t. the scaled coordinates, (npts, nmono, 2)."""
    if NUMBA_ENABLED:
        return _monomial_derivatives_nb(xs, ys, ex, ey)
    return _monomial_derivatives_np(xs, ys, ex, ey)


def powers_1d(s, degmax):
    """Powers s^0 .. s^degmax of a 1d coordinate array, (npts, degmax+1)."""
    if NUMBA_ENABLED:
        return _powers_1d_nb(s, int(degmax))
    return _powers_1d_np(s, int(degmax))
