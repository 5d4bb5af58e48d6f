"""Screening procedures over a :class:`~pdcscreen.lagged.LaggedDataset`.

* SIS: absolute Pearson correlation with the response.
* DC-SIS: marginal distance correlation (V) or R* (U).
* PDC-SIS: partial distance correlation given the response lags and the
  lower-order lags of the candidate's own series.
* PDC-SIS+: as PDC-SIS, with conditioning vectors augmented level by level
  by the strong conditional signals found at lower lag levels; the strength
  threshold comes from independent AR(1) decoys.
* Group PDC-SIS / group DC-SIS for multivariate panels with grouped series.

Statistics are stored signed; ranking is by absolute value with ties
broken by ascending column (or triple) index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from . import _kernel as K
from .dcor import EstimatorKind, pdcor_from_r2, sqdist_accumulate
from .lagged import LaggedDataset

__all__ = [
    "Method",
    "ScreenConfig",
    "ScreenResult",
    "GroupPartition",
    "GroupScreenResult",
    "default_top_d",
    "rank_and_select",
    "mms",
    "sis_stats",
    "dcsis_stats",
    "pdcsis_stats",
    "decoy_threshold",
    "pdcsis_plus_stats",
    "group_pdcsis_stats",
    "group_dcsis_stats",
    "screen",
]


class Method(str, Enum):
    SIS = "sis"
    DCSIS = "dcsis"
    PDCSIS = "pdcsis"
    PDCSIS_PLUS = "pdcsis-plus"
    GROUP_PDCSIS = "group-pdcsis"
    GROUP_DCSIS = "group-dcsis"

    @classmethod
    def coerce(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("+", "plus")
        key = "".join(c for c in key if c.isalnum())
        for member in cls:
            if member.value.replace("-", "") == key:
                return member
        choices = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown method {value!r}; choose from {choices}")

    @property
    def default_estimator(self) -> EstimatorKind:
        if self in (Method.PDCSIS, Method.PDCSIS_PLUS, Method.GROUP_PDCSIS):
            return EstimatorKind.U_CENTERED
        return EstimatorKind.V_STATISTIC


def default_top_d(n: int) -> int:
    """``ceil(n / log n)``."""
    return max(1, math.ceil(n / math.log(n))) if n > 1 else 1


@dataclass(frozen=True)
class ScreenConfig:
    """Settings shared by the screening procedures.

    ``top_d=None`` selects ``ceil(n/log n)`` columns unless ``threshold`` is
    given, in which case every column with ``|stat| >= threshold`` is kept.
    ``plus_cap=None`` caps each strong-signal set at ``ceil(sqrt n)``.
    ``plus_threshold`` overrides the decoy threshold of PDC-SIS+.
    """

    method: Method | str = Method.PDCSIS
    estimator: EstimatorKind | str | None = None
    top_d: int | None = None
    threshold: float | None = None
    plus_cap: int | None = None
    plus_threshold: float | None = None
    decoy_count: int = 1000
    decoy_ar: float = 0.4
    decoy_quantile: float = 0.99
    decoy_burnin: int = 200
    condition: bool = True
    n_jobs: int | None = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method.coerce(self.method))
        est = self.method.default_estimator if self.estimator is None \
            else EstimatorKind.coerce(self.estimator)
        object.__setattr__(self, "estimator", est)
        if self.top_d is not None and self.top_d < 1:
            raise ValueError(f"top_d must be >= 1, got {self.top_d}")
        if self.plus_cap is not None and self.plus_cap < 0:
            raise ValueError(f"plus_cap must be >= 0, got {self.plus_cap}")
        if not 0.0 < self.decoy_quantile < 1.0:
            raise ValueError(f"decoy_quantile must lie in (0, 1), got {self.decoy_quantile}")
        if self.decoy_count < 1:
            raise ValueError(f"decoy_count must be >= 1, got {self.decoy_count}")


@dataclass
class ScreenResult:
    stats: np.ndarray
    ranking: np.ndarray
    selected: np.ndarray
    method: Method = Method.PDCSIS
    estimator: EstimatorKind | None = None
    strong_sets: list[np.ndarray] = field(default_factory=list)
    threshold_used: float | None = None

    def ranks(self) -> np.ndarray:
        """1-based rank of every column."""
        r = np.empty_like(self.ranking)
        r[self.ranking] = np.arange(1, self.ranking.size + 1)
        return r


def rank_and_select(stats, top_d: int | None = None, threshold: float | None = None):
    """Rank by descending ``|stat|`` (ties: ascending index) and select.

    Exactly one of ``top_d`` / ``threshold`` drives the selection; with
    neither, everything is selected.
    """
    stats = np.asarray(stats, dtype=float)
    if not np.isfinite(stats).all():
        raise ValueError("statistics must be finite")
    mag = np.abs(stats)
    ranking = np.lexsort((np.arange(stats.size), -mag))
    if threshold is not None:
        selected = ranking[mag[ranking] >= threshold]
    elif top_d is not None:
        selected = ranking[:min(int(top_d), stats.size)]
    else:
        selected = ranking.copy()
    return ranking, selected


def mms(ranking, true_set) -> int:
    """Minimum model size: the worst 1-based rank over the true set."""
    true_set = np.atleast_1d(np.asarray(true_set, dtype=int))
    if true_set.size == 0:
        raise ValueError("true set must be nonempty")
    ranking = np.asarray(ranking)
    pos = np.empty(ranking.size, dtype=int)
    pos[ranking] = np.arange(1, ranking.size + 1)
    if true_set.min() < 0 or true_set.max() >= ranking.size:
        raise ValueError(f"true set member out of range 0..{ranking.size - 1}")
    return int(pos[true_set].max())


def _finish(stats, cfg: ScreenConfig, n: int, **extra) -> ScreenResult:
    top_d = cfg.top_d
    if top_d is None and cfg.threshold is None:
        top_d = default_top_d(n)
    ranking, selected = rank_and_select(stats, top_d=top_d, threshold=cfg.threshold)
    return ScreenResult(np.asarray(stats, dtype=float), ranking, selected,
                        cfg.method, cfg.estimator, **extra)


def sis_stats(ds: LaggedDataset) -> np.ndarray:
    """``|corr(y, Z_j)|``; constant columns score 0."""
    if ds.n < 3:
        raise ValueError(f"SIS needs at least 3 observations, got {ds.n}")
    y = ds.y_resp - ds.y_resp.mean()
    Z = ds.Z - ds.Z.mean(axis=0)
    sy = np.sqrt(np.dot(y, y))
    sz = np.sqrt(np.einsum("ij,ij->j", Z, Z))
    num = np.einsum("i,ij->j", y, Z)
    # spread at rounding level counts as constant
    tiny = 1e-12 * np.sqrt(ds.n)
    ok = (sz > tiny * np.abs(ds.Z).max(axis=0, initial=0.0)) & (sz > 0) \
        & (sy > tiny * np.abs(ds.y_resp).max()) & (sy > 0)
    return np.where(ok, np.abs(num) / np.where(ok, sz * sy, 1.0), 0.0)


def _resp_summary(ds: LaggedDataset, kind: EstimatorKind) -> K.Summary:
    if kind is EstimatorKind.U_CENTERED and ds.n < 4:
        raise ValueError(f"U-centered statistics need n >= 4, got n={ds.n}")
    return K.summarize(np.abs(ds.y_resp[:, None] - ds.y_resp[None, :]), kind)


def _run_chunks(fn, total: int, n_jobs) -> np.ndarray:
    slices = list(K.chunked(total))
    if n_jobs in (None, 1) or len(slices) == 1:
        parts = [fn(s) for s in slices]
    else:
        parts = Parallel(n_jobs=n_jobs, backend="threading")(delayed(fn)(s) for s in slices)
    return np.concatenate(parts) if parts else np.empty(0)


def _level_stats(ds, l, kind, resp, base_sq, exclude=frozenset(), n_jobs=1, condition=True):
    """Statistics for all series at lag level ``l``.

    Conditioning: ``base_sq`` (shared) plus own lags ``1..l-1`` of each
    series, skipping own-lag columns listed in ``exclude`` (already in base).
    """
    m = ds.m
    cols = ds.Z[:, (l - 1) * m:l * m]
    if not condition:
        return _run_chunks(lambda s: K.column_stats(resp, cols[:, s], kind), m, n_jobs)
    q = l - 1
    own = np.stack([ds.Z[:, (ll - 1) * m:ll * m] for ll in range(1, l)], axis=2) if q \
        else None
    mask = None
    if q and exclude:
        mask = np.ones((m, q), dtype=bool)
        for ll in range(1, l):
            for k in range(m):
                if (ll - 1) * m + k in exclude:
                    mask[k, ll - 1] = False

    def fn(s):
        return K.column_stats(
            resp, cols[:, s], kind, base_sq,
            None if own is None else own[:, s, :],
            None if mask is None else mask[s],
        )

    return _run_chunks(fn, m, n_jobs)


def dcsis_stats(ds: LaggedDataset, kind: EstimatorKind | str = EstimatorKind.V_STATISTIC,
                n_jobs=1) -> np.ndarray:
    """Marginal statistic of every Z column: dcor (V) or R* (U)."""
    kind = EstimatorKind.coerce(kind)
    resp = _resp_summary(ds, kind)
    # same batching as pdcsis_stats, so the unconditioned reduction is bit-identical
    return np.concatenate([_level_stats(ds, l, kind, resp, None, n_jobs=n_jobs, condition=False)
                           for l in range(1, ds.h + 1)])


def pdcsis_stats(ds: LaggedDataset, cfg: ScreenConfig | None = None) -> ScreenResult:
    """PDC-SIS statistics for all ``p = m*h`` columns.

    With ``cfg.condition=False`` every conditioning vector is empty and the
    result is the DC-SIS statistic.
    """
    cfg = cfg or ScreenConfig(Method.PDCSIS)
    kind = cfg.estimator
    resp = _resp_summary(ds, kind)
    base = ds.response_sqdist(tuple(range(1, ds.n_resp_lags + 1)))
    stats = np.concatenate([
        _level_stats(ds, l, kind, resp, base, n_jobs=cfg.n_jobs, condition=cfg.condition)
        for l in range(1, ds.h + 1)
    ])
    return _finish(stats, cfg, ds.n)


def _ar1_decoys(count: int, n: int, coef: float, burnin: int, rng) -> np.ndarray:
    shocks = rng.standard_normal((burnin + n, count))
    path = np.empty_like(shocks)
    prev = np.zeros(count)
    for t in range(burnin + n):
        prev = coef * prev + shocks[t]
        path[t] = prev
    return path[burnin:]


def decoy_threshold(ds: LaggedDataset, cfg: ScreenConfig | None = None, rng=None) -> float:
    """Empirical null threshold from independent AR(1) decoy series.

    Returns the ``cfg.decoy_quantile`` quantile of ``|pdcor(y, decoy; Y_{t-1..t-q})|``
    with ``q = min(response lags, 3)``.
    """
    cfg = cfg or ScreenConfig(Method.PDCSIS_PLUS)
    rng = np.random.default_rng(rng)
    kind = cfg.estimator
    resp = _resp_summary(ds, kind)
    decoys = _ar1_decoys(cfg.decoy_count, ds.n, cfg.decoy_ar, cfg.decoy_burnin, rng)
    base = ds.response_sqdist(tuple(range(1, min(ds.n_resp_lags, 3) + 1)))
    stats = _run_chunks(lambda s: K.column_stats(resp, decoys[:, s], kind, base),
                        cfg.decoy_count, cfg.n_jobs)
    return float(np.quantile(np.abs(stats), cfg.decoy_quantile))


def _strong_set(stats: np.ndarray, offset: int, threshold: float, cap: int) -> np.ndarray:
    mag = np.abs(stats)
    hits = np.flatnonzero(mag >= threshold)
    if hits.size > cap:
        order = np.lexsort((hits, -mag[hits]))
        hits = np.sort(hits[order[:cap]])
    return hits + offset


def pdcsis_plus_stats(ds: LaggedDataset, cfg: ScreenConfig | None = None, rng=None) -> ScreenResult:
    """PDC-SIS+ with the decoy threshold (or ``cfg.plus_threshold``)."""
    cfg = cfg or ScreenConfig(Method.PDCSIS_PLUS)
    kind = cfg.estimator
    resp = _resp_summary(ds, kind)
    m = ds.m
    cap = math.ceil(math.sqrt(ds.n)) if cfg.plus_cap is None else cfg.plus_cap
    resp_lags = tuple(range(1, ds.n_resp_lags + 1))
    base = ds.response_sqdist(resp_lags)
    level1 = _level_stats(ds, 1, kind, resp, base, n_jobs=cfg.n_jobs)
    if cfg.plus_threshold is not None:
        thr = float(cfg.plus_threshold)
    elif cap == 0 or ds.h == 1:
        thr = math.inf  # no strong set can be used; skip the decoys
    else:
        thr = decoy_threshold(ds, cfg, rng)
    levels = [level1]
    strong: list[np.ndarray] = []
    for l in range(2, ds.h + 1):
        strong.append(_strong_set(levels[-1], (l - 2) * m, thr, cap))
        used = np.concatenate(strong)
        lvl_base = base
        for j in used:
            lvl_base = sqdist_accumulate(lvl_base, ds.Z[:, j])
        levels.append(_level_stats(ds, l, kind, resp, lvl_base,
                                   exclude=frozenset(used.tolist()), n_jobs=cfg.n_jobs))
    return _finish(np.concatenate(levels), cfg, ds.n, strong_sets=strong,
                   threshold_used=None if math.isinf(thr) else thr)


# ---------------------------------------------------------------- groups


@dataclass(frozen=True)
class GroupPartition:
    """Assignment of each of ``m`` series to one of ``e`` nonempty groups."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int).ravel()
        if a.size == 0 or a.min() < 0:
            raise ValueError("assignment must be a nonempty vector of group ids >= 0")
        used = np.unique(a)
        if used.size != a.max() + 1:
            raise ValueError(f"groups must be labelled 0..e-1 with none empty, got {used.tolist()}")
        object.__setattr__(self, "assignment", a)

    @classmethod
    def equal(cls, m: int, size: int) -> "GroupPartition":
        if m % size:
            raise ValueError(f"m={m} is not a multiple of group size {size}")
        return cls(np.arange(m) // size)

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]]) -> "GroupPartition":
        m = sum(len(g) for g in groups)
        a = np.full(m, -1)
        for gid, members in enumerate(groups):
            a[list(members)] = gid
        if (a < 0).any():
            raise ValueError("groups do not cover series 0..m-1 exactly once")
        return cls(a)

    @property
    def e(self) -> int:
        return int(self.assignment.max()) + 1

    @property
    def m(self) -> int:
        return self.assignment.size

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == g)


@dataclass
class GroupScreenResult:
    """Statistics over triples ``(target group, lag, source group)``."""

    triples: np.ndarray
    stats: np.ndarray
    ranking: np.ndarray
    selected: np.ndarray

    def triple_index(self, triples) -> np.ndarray:
        lookup = {tuple(t): i for i, t in enumerate(self.triples.tolist())}
        return np.array([lookup[tuple(int(v) for v in t)] for t in triples], dtype=int)


def group_triples(e: int, h: int) -> np.ndarray:
    """Candidate triples in lexicographic order, without ``(i, 1, i)``."""
    return np.array([(i, lag, j) for i in range(e) for lag in range(1, h + 1)
                     for j in range(e) if not (lag == 1 and j == i)], dtype=int).reshape(-1, 3)


def _block_distances(X: np.ndarray, partition: GroupPartition, start: int, n: int) -> np.ndarray:
    out = np.empty((partition.e, n, n))
    for g in range(partition.e):
        sq = None
        for k in partition.members(g):
            sq = sqdist_accumulate(sq, X[start:start + n, k])
        out[g] = np.sqrt(sq)
    return out


def _gram(a: K.Summary, b: K.Summary, kind: EstimatorKind) -> np.ndarray:
    """All pairwise centered inner products between two stacks."""
    n = a.n
    sab = a.d.reshape(a.d.shape[0], -1) @ b.d.reshape(b.d.shape[0], -1).T
    rdot = a.rows @ b.rows.T
    return K._ip(kind, n, sab, rdot, a.total[:, None], b.total[None, :])


def _gram_r2(a: K.Summary, b: K.Summary, kind: EstimatorKind) -> np.ndarray:
    ab = _gram(a, b, kind)
    oka = (a.self_ip > K.EPS_NUM * a.scale) & (a.scale > 0)
    okb = (b.self_ip > K.EPS_NUM * b.scale) & (b.scale > 0)
    ok = oka[:, None] & okb[None, :]
    den = np.sqrt(np.where(ok, a.self_ip[:, None] * b.self_ip[None, :], 1.0))
    if kind is EstimatorKind.V_STATISTIC:
        val = np.minimum(np.clip(ab, 0.0, None) / den, 1.0)
    else:
        val = np.clip(ab / den, -1.0, 1.0)
    return np.where(ok, val, 0.0)


def _group_stats(X, partition: GroupPartition, h: int, kind, conditional: bool,
                 top_d=None, threshold=None) -> GroupScreenResult:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != partition.m:
        raise ValueError(f"panel must be T x {partition.m}, got shape {X.shape}")
    if not np.isfinite(X).all():
        r, c = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite value in panel at row {r}, column {c}")
    n = X.shape[0] - h
    min_n = 4 if kind is EstimatorKind.U_CENTERED else 2
    if n < min_n:
        raise ValueError(f"panel too short: {X.shape[0]} rows leave n={n} < {min_n} for h={h}")
    e = partition.e
    resp = K.summarize(_block_distances(X, partition, h, n), kind)
    lags = [K.summarize(_block_distances(X, partition, h - lag, n), kind)
            for lag in range(1, h + 1)]
    triples = group_triples(e, h)
    r_resp_lag = [_gram_r2(resp, lg, kind) for lg in lags]  # [lag] (i, j)
    if conditional:
        own = lags[0]
        r_resp_own = np.diag(r_resp_lag[0])  # r2(G_t,i ; G_{t-1},i)
        r_lag_own = [_gram_r2(lg, own, kind) for lg in lags]  # [lag] (j, i)
    stats = np.empty(len(triples))
    for idx, (i, lag, j) in enumerate(triples):
        r_uv = r_resp_lag[lag - 1][i, j]
        if conditional:
            stats[idx] = pdcor_from_r2(r_uv, r_resp_own[i], r_lag_own[lag - 1][j, i])
        else:
            stats[idx] = np.sqrt(r_uv) if kind is EstimatorKind.V_STATISTIC else r_uv
    if top_d is None and threshold is None:
        top_d = default_top_d(n)
    ranking, selected = rank_and_select(stats, top_d=top_d, threshold=threshold)
    return GroupScreenResult(triples, stats, ranking, selected)


def group_pdcsis_stats(X, partition: GroupPartition, h: int,
                       kind: EstimatorKind | str = EstimatorKind.U_CENTERED,
                       top_d=None, threshold=None) -> GroupScreenResult:
    """``pdcor(G_{t,i}, G_{t-lag,j}; G_{t-1,i})`` for every candidate triple."""
    return _group_stats(X, partition, h, EstimatorKind.coerce(kind), True, top_d, threshold)


def group_dcsis_stats(X, partition: GroupPartition, h: int,
                      kind: EstimatorKind | str = EstimatorKind.V_STATISTIC,
                      top_d=None, threshold=None) -> GroupScreenResult:
    """Marginal block dcor for every candidate triple (``(i, 1, i)`` excluded)."""
    return _group_stats(X, partition, h, EstimatorKind.coerce(kind), False, top_d, threshold)


def screen(ds: LaggedDataset, cfg: ScreenConfig, rng=None) -> ScreenResult:
    """Dispatch to the univariate-response procedure named by ``cfg.method``."""
    method = cfg.method
    if method is Method.SIS:
        return _finish(sis_stats(ds), cfg, ds.n)
    if method is Method.DCSIS:
        return _finish(dcsis_stats(ds, cfg.estimator, cfg.n_jobs), cfg, ds.n)
    if method is Method.PDCSIS:
        return pdcsis_stats(ds, cfg)
    if method is Method.PDCSIS_PLUS:
        return pdcsis_plus_stats(ds, cfg, rng)
    raise ValueError(f"{method.value} needs a grouped multivariate panel; use group_*_stats")
