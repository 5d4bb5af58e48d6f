"""Aligned lagged designs and conditioning vectors.

Indexing conventions used throughout the package:

* series ``k`` and Z columns ``j`` are 0-based (numpy style);
* lags ``l`` are 1-based, lag 1 being the most recent observation;
* column ``j`` holds lag ``l`` of series ``k`` with ``j = (l - 1) * m + k``,
  so the design is ordered lag-block by lag-block.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .dcor import sqdist_accumulate

MIN_EFFECTIVE = 8


@dataclass(frozen=True)
class Panel:
    """A response series ``y`` and ``m`` predictor series ``X`` on a common clock."""

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = ()
    response_name: str = "y"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(
                f"X must be T x m with T = len(y) = {y.shape[0]}, got shape {X.shape}"
            )
        _check_finite(y[:, None], "y")
        _check_finite(X, "X")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError(f"{len(names)} names given for {X.shape[1]} series")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def T(self) -> int:
        return self.X.shape[0]


def _check_finite(a: np.ndarray, label: str) -> None:
    bad = ~np.isfinite(a)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(f"non-finite value in {label} at row {r}, column {c}")


def column_index(k: int, l: int, m: int) -> int:
    """Z column holding lag ``l`` (1-based) of series ``k`` (0-based)."""
    if not 0 <= k < m:
        raise ValueError(f"series index {k} out of range for m={m}")
    if l < 1:
        raise ValueError(f"lag must be >= 1, got {l}")
    return (l - 1) * m + k


def series_lag(j: int, m: int) -> tuple[int, int]:
    """Inverse of :func:`column_index`: ``(k, l)`` for column ``j``."""
    if j < 0:
        raise ValueError(f"column index must be >= 0, got {j}")
    l, k = divmod(j, m)
    return k, l + 1


@dataclass(frozen=True, eq=False)
class LaggedDataset:
    """Response at the target time plus lagged response and covariate blocks.

    ``y_lags[:, l-1]`` is the response at lag ``l`` and ``Z[:, column_index(k, l, m)]``
    is series ``k`` at lag ``l``, both relative to one step before the target
    time (``horizon`` extra steps are skipped for multi-step targets).
    """

    y_resp: np.ndarray
    y_lags: np.ndarray
    Z: np.ndarray
    m: int
    h: int
    horizon: int = 0
    names: tuple[str, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.y_resp.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def n_resp_lags(self) -> int:
        return self.y_lags.shape[1]

    def column_index(self, k: int, l: int) -> int:
        if not 1 <= l <= self.h:
            raise ValueError(f"lag {l} out of range 1..{self.h}")
        return column_index(k, l, self.m)

    def series_lag(self, j: int) -> tuple[int, int]:
        if not 0 <= j < self.p:
            raise ValueError(f"column {j} out of range for p={self.p}")
        return series_lag(j, self.m)

    def column_label(self, j: int) -> str:
        k, l = self.series_lag(j)
        name = self.names[k] if self.names else f"x{k + 1}"
        return f"{name}[t-{l}]"

    def response_sqdist(self, resp_lags: Sequence[int]) -> np.ndarray | None:
        """Squared distances of the response-lag block, computed once per dataset.

        Returns ``None`` for an empty block.  The returned array is shared; do
        not modify it in place.
        """
        key = tuple(resp_lags)
        if not key:
            return None
        with self._lock:
            cached = self._cache.get(key)
            if cached is None:
                sq = None
                for lag in key:
                    if not 1 <= lag <= self.n_resp_lags:
                        raise ValueError(
                            f"response lag {lag} out of range 1..{self.n_resp_lags}"
                        )
                    sq = sqdist_accumulate(sq, self.y_lags[:, lag - 1])
                sq.setflags(write=False)
                self._cache[key] = cached = sq
        return cached


def lag_matrix(X, h: int, horizon: int = 0) -> np.ndarray:
    """The lagged covariate block ``Z`` for a raw ``T x m`` matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = X.shape[0]
    n = T - h - horizon
    if h < 1:
        raise ValueError(f"lag depth h must be >= 1, got {h}")
    if n < 1:
        raise ValueError(f"need more than h + horizon = {h + horizon} rows, got {T}")
    return np.hstack([X[h - l:h - l + n] for l in range(1, h + 1)])


def build_lagged(
    panel: Panel,
    h: int,
    horizon: int = 0,
    n_resp_lags: int | None = None,
    min_effective: int = MIN_EFFECTIVE,
) -> LaggedDataset:
    """Align a raw panel into response, response lags and the lagged design.

    Row ``t`` targets raw time ``t + h + horizon``; the lags are taken
    relative to raw time ``t + h``.  ``n_resp_lags`` defaults to ``h`` and
    may not exceed it.
    """
    if h < 1:
        raise ValueError(f"lag depth h must be >= 1, got {h}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    n_resp_lags = h if n_resp_lags is None else int(n_resp_lags)
    if not 0 <= n_resp_lags <= h:
        raise ValueError(f"n_resp_lags must lie in 0..h={h}, got {n_resp_lags}")
    need = h + horizon + min_effective
    if panel.T < need:
        raise ValueError(
            f"series too short: need at least h + horizon + {min_effective} = {need} "
            f"observations, got {panel.T}"
        )
    n = panel.T - h - horizon
    y = panel.y
    y_resp = y[h + horizon:h + horizon + n].copy()
    y_lags = np.column_stack([y[h - l:h - l + n] for l in range(1, n_resp_lags + 1)]) \
        if n_resp_lags else np.empty((n, 0))
    Z = lag_matrix(panel.X[:panel.T - horizon], h)
    return LaggedDataset(y_resp, y_lags, Z, panel.m, h, horizon, panel.names)


@dataclass(frozen=True)
class CondSpec:
    """Columns making up a conditioning vector.

    ``resp_lags`` are 1-based response lags; ``cov_cols`` are Z columns kept
    in first-occurrence order with duplicates removed.
    """

    resp_lags: tuple[int, ...] = ()
    cov_cols: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "resp_lags", tuple(dict.fromkeys(int(v) for v in self.resp_lags)))
        object.__setattr__(self, "cov_cols", tuple(dict.fromkeys(int(v) for v in self.cov_cols)))

    @property
    def dim(self) -> int:
        return len(self.resp_lags) + len(self.cov_cols)

    @property
    def empty(self) -> bool:
        return self.dim == 0

    def extended(self, cols: Sequence[int]) -> "CondSpec":
        return CondSpec(self.resp_lags, self.cov_cols + tuple(cols))


def cond_pdcsis(k: int, l: int, h: int, m: int, n_resp_lags: int | None = None) -> CondSpec:
    """Response lags plus lags ``1..l-1`` of series ``k``."""
    if not 1 <= l <= h:
        raise ValueError(f"lag {l} out of range 1..{h}")
    if not 0 <= k < m:
        raise ValueError(f"series {k} out of range 0..{m - 1}")
    n_resp_lags = h if n_resp_lags is None else n_resp_lags
    return CondSpec(
        tuple(range(1, n_resp_lags + 1)),
        tuple(column_index(k, ll, m) for ll in range(1, l)),
    )


def cond_materialize(ds: LaggedDataset, spec: CondSpec) -> np.ndarray | None:
    """Distance matrix of the conditioning vector, or ``None`` when it is empty."""
    if spec.empty:
        return None
    for j in spec.cov_cols:
        if not 0 <= j < ds.p:
            raise ValueError(f"conditioning column {j} out of range for p={ds.p}")
    base = ds.response_sqdist(spec.resp_lags)
    sq = None if base is None else base.copy()
    for j in spec.cov_cols:
        sq = sqdist_accumulate(sq, ds.Z[:, j])
    return np.sqrt(sq)


def read_panel_csv(
    path: str | Path,
    response: str | int,
    time_index: bool | None = None,
) -> Panel:
    """Read a panel CSV: optional leading time column, one named column per series.

    ``response`` selects the response series by name or 0-based position
    among the series columns.  With ``time_index=None`` the first column is
    treated as a time index when it is non-numeric or named like one.
    """
    df = pd.read_csv(path)
    if df.shape[1] == 0:
        raise ValueError(f"{path}: no columns")
    if time_index is None:
        first = df.columns[0]
        time_index = (
            not pd.api.types.is_numeric_dtype(df[first])
            or str(first).strip().lower() in {"", "date", "time", "t", "index", "period"}
            or str(first).startswith("Unnamed")
        )
    if time_index:
        df = df.iloc[:, 1:]
    names = [str(c) for c in df.columns]
    if isinstance(response, str) and not response.lstrip("-").isdigit():
        if response not in names:
            raise KeyError(f"response {response!r} not found; available: {', '.join(names)}")
        r = names.index(response)
    else:
        r = int(response)
        if not 0 <= r < len(names):
            raise KeyError(f"response index {r} out of range; available: {', '.join(names)}")
    values = df.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValueError(
            f"{path}: missing or non-numeric value at data row {row + 1}, column {names[col]!r}"
        )
    keep = [c for c in range(len(names)) if c != r]
    return Panel(values[:, r], values[:, keep], tuple(names[c] for c in keep), names[r])
