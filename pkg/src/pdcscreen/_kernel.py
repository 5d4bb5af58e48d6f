"""Batched dcor / pdcor statistics for many candidate columns at once.

Both centerings have zero row and column sums, so every inner product of
centered matrices can be written in terms of the raw distance matrices::

    V:  n^2 <A, B>        = sum(a*b) - 2/n     r_a.r_b + T_a T_b / n^2
    U:  n(n-3) <A~, B~>   = sum(a*b) - 2/(n-2) r_a.r_b + T_a T_b / ((n-1)(n-2))

with row sums ``r`` and totals ``T``.  Centered matrices are never formed,
which keeps the per-column cost at a handful of passes over n x n values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dcor import EPS_NUM, EstimatorKind, pdcor_from_r2

CHUNK = 128


@dataclass(frozen=True)
class Summary:
    """Raw distance matrices (``(n, n)`` or ``(c, n, n)``) with row sums and totals."""

    d: np.ndarray
    rows: np.ndarray
    total: np.ndarray
    self_ip: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[-1]

    @property
    def scale(self) -> np.ndarray:
        return (self.total / self.n**2) ** 2


def _ip(kind: EstimatorKind, n: int, sab, rdot, ta, tb):
    if kind is EstimatorKind.V_STATISTIC:
        return (sab - 2.0 / n * rdot + ta * tb / n**2) / n**2
    return (sab - 2.0 / (n - 2) * rdot + ta * tb / ((n - 1) * (n - 2))) / (n * (n - 3))


def summarize(d: np.ndarray, kind: EstimatorKind) -> Summary:
    n = d.shape[-1]
    rows = d.sum(axis=-1)
    total = rows.sum(axis=-1)
    if d.ndim == 2:
        sab = np.einsum("ij,ij->", d, d)
        rdot = rows @ rows
    else:
        sab = np.einsum("cij,cij->c", d, d)
        rdot = np.einsum("ci,ci->c", rows, rows)
    return Summary(d, rows, total, _ip(kind, n, sab, rdot, total, total))


def cross(a: Summary, b: Summary, kind: EstimatorKind):
    """Centered inner product between two summaries (scalar or batch, broadcast)."""
    n = a.n
    if a.d.ndim == 2 and b.d.ndim == 2:
        sab = np.einsum("ij,ij->", a.d, b.d)
        rdot = a.rows @ b.rows
    elif a.d.ndim == 3 and b.d.ndim == 3:
        sab = np.einsum("cij,cij->c", a.d, b.d)
        rdot = np.einsum("ci,ci->c", a.rows, b.rows)
    else:
        batch, single = (a, b) if a.d.ndim == 3 else (b, a)
        sab = np.einsum("cij,ij->c", batch.d, single.d)
        rdot = batch.rows @ single.rows
    return _ip(kind, n, sab, rdot, a.total, b.total)


def r2(a: Summary, b: Summary, kind: EstimatorKind):
    """Squared V-statistic dcor, or R* for the U-centered estimator."""
    ab = cross(a, b, kind)
    ok = (a.self_ip > EPS_NUM * a.scale) & (b.self_ip > EPS_NUM * b.scale)
    ok &= (a.scale > 0) & (b.scale > 0)
    den = np.sqrt(np.where(ok, a.self_ip * b.self_ip, 1.0))
    if kind is EstimatorKind.V_STATISTIC:
        val = np.clip(ab, 0.0, None) / den
        val = np.minimum(val, 1.0)
    else:
        val = np.clip(ab / den, -1.0, 1.0)
    return np.where(ok, val, 0.0)


def abs_diff_stack(cols: np.ndarray) -> np.ndarray:
    """``(c, n, n)`` distance matrices of the ``c`` columns of an ``(n, c)`` array."""
    x = np.ascontiguousarray(cols.T)
    return np.abs(x[:, :, None] - x[:, None, :])


def marginal(resp: Summary, cand: Summary, kind: EstimatorKind):
    """Marginal screening statistic: dcor (V) or R* (U)."""
    v = r2(resp, cand, kind)
    return np.sqrt(v) if kind is EstimatorKind.V_STATISTIC else v


def partial(resp: Summary, cand: Summary, cond: Summary | None, kind: EstimatorKind,
            resp_cond=None):
    """pdcor(resp, cand; cond), or the marginal statistic when ``cond`` is None."""
    if cond is None:
        return marginal(resp, cand, kind)
    r_yx = r2(resp, cand, kind)
    r_yz = r2(resp, cond, kind) if resp_cond is None else resp_cond
    r_xz = r2(cand, cond, kind)
    return pdcor_from_r2(r_yx, r_yz, r_xz)


def column_stats(
    resp: Summary,
    cols: np.ndarray,
    kind: EstimatorKind,
    base_sq: np.ndarray | None = None,
    own_lags: np.ndarray | None = None,
    own_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Screening statistics for the ``c`` columns of ``cols`` (shape ``(n, c)``).

    The conditioning vector of column ``i`` has squared distances ``base_sq``
    (shared; ``None`` = nothing) plus those of ``own_lags[:, i, :]`` (shape
    ``(n, c, q)``), each added only where ``own_mask[i, q]`` is true.  With no
    shared base and no own lags the marginal statistic is returned.
    """
    cand = summarize(abs_diff_stack(cols), kind)
    q = 0 if own_lags is None else own_lags.shape[2]
    if q == 0:
        if base_sq is None:
            return marginal(resp, cand, kind)
        cond = summarize(np.sqrt(base_sq), kind)
        return partial(resp, cand, cond, kind)
    c = cols.shape[1]
    if base_sq is None:
        sq = np.zeros((c,) + resp.d.shape)
    else:
        sq = np.repeat(base_sq[None], c, axis=0)
    for lag in range(q):
        x = np.ascontiguousarray(own_lags[:, :, lag].T)
        diff = x[:, :, None] - x[:, None, :]
        diff *= diff
        if own_mask is None:
            sq += diff
        else:
            idx = np.flatnonzero(own_mask[:, lag])
            sq[idx] += diff[idx]
    np.sqrt(sq, out=sq)
    # a conditioning vector can still be empty for columns whose own lags were all masked
    empty = np.zeros(c, dtype=bool) if base_sq is not None or own_mask is None \
        else ~own_mask.any(axis=1)
    cond = summarize(sq, kind)
    out = partial(resp, cand, cond, kind)
    if empty.any():
        out = np.where(empty, marginal(resp, cand, kind), out)
    return out


def chunked(total: int, size: int = CHUNK):
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))
