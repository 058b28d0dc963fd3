"""Serial tile kernels of the tile QR factorization.

Reflectors follow the LAPACK ``dlarfg`` convention (``beta = -sign(alpha) *
norm``, ``tau = 0`` when there is nothing to annihilate) and are grouped into
``ib``-wide panels, each carrying a forward column-wise triangular factor
``T`` so that ``H_1 ... H_kb = I - V T V^T``.  All ``T`` factors of a tile
are stored side by side in an ``(ib, nb)`` array: panel ``k`` owns columns
``k:k+kb``.

The underscore-prefixed functions work in place and skip input validation;
they are what the factorization engine calls.  The public wrappers copy their
inputs and validate them.
"""

from __future__ import annotations

import math

import numpy as np


def _panels(nb: int, ib: int, reverse: bool = False) -> list[tuple[int, int]]:
    spans = [(k, min(ib, nb - k)) for k in range(0, nb, ib)]
    return spans[::-1] if reverse else spans


def _reflector(alpha: float, x: np.ndarray) -> tuple[float, float]:
    """Generate ``H = I - tau v v^T`` with ``H [alpha; x] = [beta; 0]``.

    ``x`` is overwritten with the reflector tail (``v[0] = 1`` implicitly).
    """
    xnorm = float(np.linalg.norm(x))
    if xnorm == 0.0:
        return alpha, 0.0
    beta = -math.copysign(math.hypot(alpha, xnorm), alpha)
    tau = (beta - alpha) / beta
    x *= 1.0 / (alpha - beta)
    return beta, tau


def _larft(v: np.ndarray, taus: np.ndarray, t: np.ndarray) -> None:
    # forward, column-wise: T[:i, i] = -tau_i T[:i, :i] (V[:, :i]^T v_i)
    kb = taus.shape[0]
    t[:kb, :kb] = 0.0
    for i in range(kb):
        t[i, i] = taus[i]
        if i > 0 and taus[i] != 0.0:
            t[:i, i] = -taus[i] * (t[:i, :i] @ (v[:, :i].T @ v[:, i]))


def _unit_lower(block: np.ndarray) -> np.ndarray:
    v = np.tril(block, -1)
    kb = block.shape[1]
    v[np.arange(kb), np.arange(kb)] = 1.0
    return v


def _geqrt(a: np.ndarray, t: np.ndarray, ib: int) -> None:
    nb = a.shape[0]
    taus = np.empty(ib)
    for k, kb in _panels(nb, ib):
        end = k + kb
        for j in range(k, end):
            beta, tau = _reflector(a[j, j], a[j + 1 :, j])
            a[j, j] = beta
            taus[j - k] = tau
            if j + 1 < end and tau != 0.0:
                vt = a[j + 1 :, j]
                w = a[j, j + 1 : end] + vt @ a[j + 1 :, j + 1 : end]
                a[j, j + 1 : end] -= tau * w
                a[j + 1 :, j + 1 : end] -= tau * np.outer(vt, w)
        v = _unit_lower(a[k:, k:end])
        tk = t[:kb, k:end]
        _larft(v, taus[:kb], tk)
        if end < nb:
            c = a[k:, end:]
            w = tk.T @ (v.T @ c)
            c -= v @ w


def _tsqrt(r: np.ndarray, a: np.ndarray, t: np.ndarray, ib: int) -> None:
    # only the upper triangle of r is read or written
    nb = r.shape[0]
    taus = np.empty(ib)
    for k, kb in _panels(nb, ib):
        end = k + kb
        for j in range(k, end):
            beta, tau = _reflector(r[j, j], a[:, j])
            r[j, j] = beta
            taus[j - k] = tau
            if j + 1 < end and tau != 0.0:
                vt = a[:, j]
                w = r[j, j + 1 : end] + vt @ a[:, j + 1 : end]
                r[j, j + 1 : end] -= tau * w
                a[:, j + 1 : end] -= tau * np.outer(vt, w)
        vb = a[:, k:end]
        tk = t[:kb, k:end]
        _larft(vb, taus[:kb], tk)
        if end < nb:
            w = tk.T @ (r[k:end, end:] + vb.T @ a[:, end:])
            r[k:end, end:] -= w
            a[:, end:] -= vb @ w


def _larfb(v: np.ndarray, t: np.ndarray, c: np.ndarray, trans: bool = True) -> None:
    nb, ib = v.shape[0], t.shape[0]
    for k, kb in _panels(nb, ib, reverse=not trans):
        vk = _unit_lower(v[k:, k : k + kb])
        tk = t[:kb, k : k + kb]
        w = vk.T @ c[k:, :]
        w = (tk.T if trans else tk) @ w
        c[k:, :] -= vk @ w


def _ssrfb(
    vb: np.ndarray, t: np.ndarray, c1: np.ndarray, c2: np.ndarray, trans: bool = True
) -> None:
    nb, ib = vb.shape[0], t.shape[0]
    for k, kb in _panels(nb, ib, reverse=not trans):
        vk = vb[:, k : k + kb]
        tk = t[:kb, k : k + kb]
        w = c1[k : k + kb, :] + vk.T @ c2
        w = (tk.T if trans else tk) @ w
        c1[k : k + kb, :] -= w
        c2 -= vk @ w


def _as_tile(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, order="F", copy=True)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square tile, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"non-finite input in {name}")
    return arr


def _check_ib(nb: int, ib: int) -> None:
    if not 1 <= ib <= nb:
        raise ValueError(f"need 1 <= ib <= nb, got nb={nb}, ib={ib}")


def _check_pair(v: np.ndarray, t: np.ndarray, nb: int) -> None:
    if v.shape != (nb, nb):
        raise ValueError(f"reflector tile shape {v.shape} does not match ({nb}, {nb})")
    if t.ndim != 2 or t.shape[1] != nb or not 1 <= t.shape[0] <= nb:
        raise ValueError(f"T block shape {t.shape} does not match nb={nb}")


def geqrt(a, ib: int) -> tuple[np.ndarray, np.ndarray]:
    """QR of one tile.

    Returns the tile holding ``R`` in its upper triangle and the unit lower
    reflectors below the diagonal, and the ``(ib, nb)`` block of T factors.
    """
    vr = _as_tile(a, "a")
    nb = vr.shape[0]
    _check_ib(nb, ib)
    t = np.zeros((ib, nb), order="F")
    _geqrt(vr, t, ib)
    return vr, t


def tsqrt(r_top, a_bot, ib: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """QR of an upper-triangular tile stacked on top of a square tile.

    Returns the updated ``r_top`` (upper triangle), the square reflector block
    that replaces ``a_bot`` and the T factors.
    """
    r = _as_tile(r_top, "r_top")
    a = _as_tile(a_bot, "a_bot")
    if r.shape != a.shape:
        raise ValueError(f"tile shapes differ: {r.shape} vs {a.shape}")
    nb = r.shape[0]
    _check_ib(nb, ib)
    t = np.zeros((ib, nb), order="F")
    _tsqrt(r, a, t, ib)
    return r, a, t


def larfb(v, t, c, trans: bool = True) -> np.ndarray:
    """Apply the block reflector of a :func:`geqrt` tile to ``c``.

    ``trans=True`` computes ``Q^T c``; ``False`` computes ``Q c``.
    """
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = _as_tile(c, "c")
    _check_pair(v, t, out.shape[0])
    _larfb(v, t, out, trans)
    return out


def ssrfb(vb, t, c_top, c_bot, ib: int | None = None, trans: bool = True):
    """Apply :func:`tsqrt` reflectors to the coupled pair ``[c_top; c_bot]``."""
    vb = np.asarray(vb, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    c1 = _as_tile(c_top, "c_top")
    c2 = _as_tile(c_bot, "c_bot")
    if c1.shape != c2.shape:
        raise ValueError(f"tile shapes differ: {c1.shape} vs {c2.shape}")
    _check_pair(vb, t, c1.shape[0])
    if ib is not None and ib != t.shape[0]:
        raise ValueError(f"ib={ib} does not match T block with ib={t.shape[0]}")
    _ssrfb(vb, t, c1, c2, trans)
    return c1, c2
