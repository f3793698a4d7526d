"""Conservative 1D remapping of cell averages through a monotone map.

The new average of a cell is the old mass inside the preimage of that cell
divided by its width.  Old mass is read off a cumulative mass function built
as a monotone piecewise-cubic Hermite interpolant of the exact cumulative
sums, so the remap is conservative by construction and cannot create
negative values (up to rounding).
"""

import numpy as np

from .errors import SupportOverflowError

ESCAPE_TOL = 1e-13


def edge_slopes(a, periodic):
    """Limited density values at both edges of every cell along the last axis.

    The fourth-order edge value ``(-a[k-2] + 7 a[k-1] + 7 a[k] - a[k+1]) / 12``
    is raised to at least the smaller of the two adjacent averages, then
    clipped separately for the two cells sharing the edge to ``[0, 3 a]``
    with ``a`` that cell's average.  The reconstructed density may jump at an
    edge; each cell's cubic cumulative interpolant stays monotone, an
    occupied cell next to an empty one keeps a positive density at their
    common edge, and smooth maxima are not flattened.

    Returns
    -------
    left, right : ndarray, shape ``a.shape``
    """
    N = a.shape[-1]
    if periodic:
        ext = np.concatenate([a[..., -2:], a, a[..., :2]], axis=-1)
    else:
        z = np.zeros(a.shape[:-1] + (2,))
        ext = np.concatenate([z, a, z], axis=-1)
    # edge k sits between ext[k+1] (= a[k-1]) and ext[k+2] (= a[k])
    am1 = ext[..., 1:N + 2]
    a0 = ext[..., 2:N + 3]
    e = (-ext[..., 0:N + 1] + 7.0 * am1 + 7.0 * a0 - ext[..., 3:N + 4]) / 12.0
    e = np.maximum(e, np.minimum(am1, a0))
    cap = 3.0 * a
    return np.clip(e[..., :-1], 0.0, cap), np.clip(e[..., 1:], 0.0, cap)


def cumulative_mass(a, h, x0, p, periodic, slopes=None):
    """Evaluate the cumulative mass function at positions ``p``.

    Parameters
    ----------
    a : ndarray, shape (..., N)
        Cell averages on cells ``[x0 + k h, x0 + (k+1) h)``.
    p : ndarray, shape (..., P)
        Query positions; leading dimensions broadcast against ``a``.
    periodic : bool
        Periodic continuation (``C(x + L) = C(x) + total``); otherwise zero
        outside the grid.

    Returns
    -------
    C : ndarray, shape of the broadcast ``(..., P)``
    total : ndarray, shape (...)
    """
    N = a.shape[-1]
    mL, mR = edge_slopes(a, periodic) if slopes is None else slopes
    cum = np.concatenate([np.zeros(a.shape[:-1] + (1,)), np.cumsum(a * h, axis=-1)], axis=-1)
    total = cum[..., -1]
    q = (np.asarray(p, dtype=float) - x0) / h
    lead = np.broadcast_shapes(a.shape[:-1], q.shape[:-1])
    if periodic:
        wraps = np.floor(q / N)
        q = q - wraps * N
    else:
        below = q < 0.0
        above = q >= N
        q = np.clip(q, 0.0, N)
    k = np.minimum(np.floor(q).astype(np.int64), N - 1)
    th = q - k
    if q.size == q.shape[-1]:
        # one set of query points shared by every row: plain column gathers
        kk = k.reshape(-1)
        ak = a[..., kk]
        mk = mL[..., kk]
        mk1 = mR[..., kk]
        ck = cum[..., kk]
        th = th.reshape(-1)
    else:
        R = int(np.prod(lead))
        P = q.shape[-1]
        kb = np.broadcast_to(k, lead + (P,)).reshape(R, P)
        rows = np.arange(R)[:, None]
        a2 = np.broadcast_to(a, lead + (N,)).reshape(R, N)
        mL2 = np.broadcast_to(mL, lead + (N,)).reshape(R, N)
        mR2 = np.broadcast_to(mR, lead + (N,)).reshape(R, N)
        c2 = np.broadcast_to(cum, lead + (N + 1,)).reshape(R, N + 1)
        ia = (kb + rows * N).ravel()
        im = (kb + rows * (N + 1)).ravel()
        shp = lead + (P,)
        ak = a2.ravel().take(ia).reshape(shp)
        mk = mL2.ravel().take(ia).reshape(shp)
        mk1 = mR2.ravel().take(ia).reshape(shp)
        ck = c2.ravel().take(im).reshape(shp)
    th2 = th * th
    th3 = th2 * th
    h01 = 3.0 * th2 - 2.0 * th3
    h10 = th3 - 2.0 * th2 + th
    h11 = th3 - th2
    C = ck + h * (ak * h01 + mk * h10 + mk1 * h11)
    if periodic:
        C = C + wraps * total[..., None]
    else:
        C = np.where(below, 0.0, np.where(above, total[..., None], C))
    return C, total


def remap(a, h, x0, pre_edges, periodic, axis_name="x"):
    """Remap cell averages onto a grid whose edges have preimages ``pre_edges``.

    Parameters
    ----------
    a : ndarray, shape (..., N)
    h, x0 : float
        Old (and new) cell width and grid origin.
    pre_edges : ndarray, shape (..., N + 1)
        Preimages of the new cell edges, increasing along the last axis.
    periodic : bool
    axis_name : str
        Used in the overflow error.

    Returns
    -------
    new : ndarray, shape (..., N)
    clipped : float
        Mass removed by clipping rounding-level negative values.

    Raises
    ------
    SupportOverflowError
        Non-periodic remap that pushes mass beyond the grid.
    """
    C, total = cumulative_mass(a, h, x0, pre_edges, periodic)
    if not periodic:
        lost_lo = C[..., 0]
        lost_hi = np.broadcast_to(total, C.shape[:-1]) - C[..., -1]
        grand = float(np.sum(total))
        lo = float(np.sum(np.abs(lost_lo)))
        hi = float(np.sum(np.abs(lost_hi)))
        limit = ESCAPE_TOL * max(grand, np.finfo(float).tiny)
        if lo > limit:
            raise SupportOverflowError(axis_name, "lower", lo, grand)
        if hi > limit:
            raise SupportOverflowError(axis_name, "upper", hi, grand)
    new = np.diff(C, axis=-1) / h
    neg = new < 0.0
    clipped = 0.0
    if np.any(neg):
        clipped = float(-new[neg].sum() * h)
        new[neg] = 0.0
    return new, clipped
