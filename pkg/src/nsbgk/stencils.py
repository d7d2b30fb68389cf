"""Finite-difference stencils and Lagrange interpolation on uniform grids."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) = h^order f^(order)(x) + O(h^(len-order)).

    Solved from the Vandermonde moment conditions; exact for polynomials of
    degree < len(offsets).
    """
    o = np.asarray(offsets, dtype=float)
    n = o.size
    A = np.vander(o, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


def _shift(a, s, axis):
    # a[i + s] with periodic wrap
    return np.roll(a, -s, axis=axis)


def periodic_derivative(a, axis: int, h: float, order: int = 1, accuracy: int = 4):
    """Central periodic difference of the given derivative order."""
    half = (order + 1) // 2 + accuracy // 2 - 1
    offsets = tuple(range(-half, half + 1))
    w = fd_weights(offsets, order)
    out = np.zeros_like(a, dtype=float)
    for o, wi in zip(offsets, w):
        if wi != 0.0:
            out += wi * _shift(a, o, axis)
    return out / h ** order


def bounded_derivative(a, axis: int, h: float, order: int = 1):
    """4th-order difference on a non-periodic axis; one-sided near both ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    n = a.shape[0]
    width = order + 4  # points in a one-sided stencil of 4th-order accuracy
    half = (order + 1) // 2 + 1
    if n < width:
        raise ValueError(f"axis too short ({n}) for a 4th-order stencil of order {order}")
    out = np.empty_like(a)
    central = tuple(range(-half, half + 1))
    wc = fd_weights(central, order)
    acc = np.zeros_like(a[half:n - half])
    for o, wi in zip(central, wc):
        acc += wi * a[half + o:n - half + o]
    out[half:n - half] = acc
    for i in range(half):
        offs = tuple(range(-i, width - i))
        w = fd_weights(offs, order)
        out[i] = np.tensordot(w, a[:width], axes=(0, 0))
        j = n - 1 - i
        offs = tuple(range(-(width - 1 - i), i + 1))
        w = fd_weights(offs, order)
        out[j] = np.tensordot(w, a[n - width:], axes=(0, 0))
    return np.moveaxis(out / h ** order, 0, axis)


def central2(a, axis: int, h: float):
    """Second-order periodic first derivative."""
    return (_shift(a, 1, axis) - _shift(a, -1, axis)) / (2.0 * h)


def laplacian2(a, axes, hs):
    out = np.zeros_like(a, dtype=float)
    for ax, h in zip(axes, hs):
        out += (_shift(a, 1, ax) - 2.0 * a + _shift(a, -1, ax)) / (h * h)
    return out


def upwind2(a, vel, axis: int, h: float):
    """Second-order upwind first derivative; the side is chosen by ``vel``."""
    back = (3.0 * a - 4.0 * _shift(a, -1, axis) + _shift(a, -2, axis)) / (2.0 * h)
    fwd = (-3.0 * a + 4.0 * _shift(a, 1, axis) - _shift(a, 2, axis)) / (2.0 * h)
    return np.where(vel >= 0.0, back, fwd)


def _cubic_weights(s):
    return (
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    )


def cubic_interpolate(a: np.ndarray, coords, periodic) -> np.ndarray:
    """Tensor-product 4-point Lagrange interpolation at fractional indices.

    ``coords[i]`` holds positions along axis ``i`` in index units, all with a
    common shape.  Periodic axes wrap; on the others the data is extended by
    zero, so queries outside the grid return 0.
    """
    a = np.asarray(a, dtype=float)
    nd = a.ndim
    if len(coords) != nd:
        raise ValueError(f"need {nd} coordinate arrays, got {len(coords)}")
    idx_axes, w_axes = [], []
    strides = np.cumprod((1,) + a.shape[:0:-1])[::-1]
    for ax in range(nd):
        c = np.asarray(coords[ax], dtype=float)
        base = np.floor(c)
        s = c - base
        base = base.astype(np.int64)
        ws = _cubic_weights(s)
        n = a.shape[ax]
        idxs, wts = [], []
        for m, wm in zip(range(-1, 3), ws):
            i = base + m
            if periodic[ax]:
                i = np.mod(i, n)
                wts.append(wm)
            else:
                inside = (i >= 0) & (i < n)
                wts.append(np.where(inside, wm, 0.0))
                i = np.clip(i, 0, n - 1)
            idxs.append(i * strides[ax])
        idx_axes.append(idxs)
        w_axes.append(wts)
    flat = a.ravel()
    out = None
    for combo in itertools.product(range(4), repeat=nd):
        idx = idx_axes[0][combo[0]]
        w = w_axes[0][combo[0]]
        for ax in range(1, nd):
            idx = idx + idx_axes[ax][combo[ax]]
            w = w * w_axes[ax][combo[ax]]
        term = w * flat[idx]
        out = term if out is None else out + term
    return out


def stencil_max(a: np.ndarray, coords, periodic) -> np.ndarray:
    """Max of the 2^n nearest nodes around each query point (zero outside)."""
    a = np.asarray(a, dtype=float)
    nd = a.ndim
    strides = np.cumprod((1,) + a.shape[:0:-1])[::-1]
    per_axis = []
    for ax in range(nd):
        base = np.floor(np.asarray(coords[ax], dtype=float)).astype(np.int64)
        n = a.shape[ax]
        opts = []
        for m in (0, 1):
            i = base + m
            if periodic[ax]:
                opts.append((np.mod(i, n) * strides[ax], None))
            else:
                inside = (i >= 0) & (i < n)
                opts.append((np.clip(i, 0, n - 1) * strides[ax], inside))
        per_axis.append(opts)
    flat = a.ravel()
    out = None
    for combo in itertools.product(range(2), repeat=nd):
        idx = 0
        mask = True
        for ax in range(nd):
            i, inside = per_axis[ax][combo[ax]]
            idx = idx + i
            if inside is not None:
                mask = mask & inside
        val = np.where(mask, flat[idx], 0.0)
        out = val if out is None else np.maximum(out, val)
    return out


def interpolate_periodic_field(field: np.ndarray, X: np.ndarray, dx) -> np.ndarray:
    """Cubic periodic interpolation of a spatial field at positions ``X`` (shape (d, ...))."""
    coords = [X[i] / dx[i] for i in range(X.shape[0])]
    return cubic_interpolate(field, coords, [True] * len(coords))
