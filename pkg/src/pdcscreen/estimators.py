"""scikit-learn style wrappers around the screening procedures.

The univariate screeners take the *raw* panel: ``fit(X, y)`` with ``X`` a
``T x m`` array (or DataFrame) of predictor series and ``y`` the response
series on the same clock.  They build the ``h``-lag design internally and
expose

* ``scores_`` - signed statistic per lagged column,
* ``ranking_`` - columns by descending ``|score|``,
* ``support_`` - boolean mask of the selected columns.

``transform(X)`` lags a raw panel the same way and keeps the selected
columns, so a screener can sit in a :class:`~sklearn.pipeline.Pipeline`
ahead of a second-stage model.  Note the lagged output has
``T - h - horizon`` rows.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .lagged import Panel, build_lagged, lag_matrix, series_lag
from .screening import (
    GroupPartition,
    Method,
    ScreenConfig,
    group_dcsis_stats,
    group_pdcsis_stats,
    screen,
)

__all__ = [
    "LagTransformer",
    "SIS",
    "DCSIS",
    "PDCSIS",
    "PDCSISPlus",
    "GroupPDCSIS",
    "GroupDCSIS",
]


def _lagged_names(names, h: int) -> np.ndarray:
    m = len(names)
    return np.array([f"{names[k]}_lag{l}" for k, l in (series_lag(j, m) for j in range(m * h))],
                    dtype=object)


class LagTransformer(TransformerMixin, BaseEstimator):
    """Stack lags ``1..h`` of every series; column ``(l-1)*m + k`` is series ``k`` at lag ``l``."""

    def __init__(self, h=3, horizon=0):
        self.h = h
        self.horizon = horizon

    def fit(self, X, y=None):
        validate_data(self, X, ensure_min_samples=self.h + self.horizon + 1)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = validate_data(self, X, reset=False, ensure_min_samples=self.h + self.horizon + 1)
        return lag_matrix(X, self.h, self.horizon)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "n_features_in_")
        names = getattr(self, "feature_names_in_", None)
        if input_features is not None:
            names = input_features
        if names is None:
            names = [f"x{k}" for k in range(self.n_features_in_)]
        return _lagged_names(list(names), self.h)


class _Screener(TransformerMixin, BaseEstimator):
    _method: Method

    def _config(self) -> ScreenConfig:
        return ScreenConfig(
            method=self._method,
            estimator=getattr(self, "estimator", None),
            top_d=self.top_d,
            threshold=self.threshold,
            n_jobs=self.n_jobs,
            **self._extra_config(),
        )

    def _extra_config(self) -> dict:
        return {}

    def _rng(self):
        return None

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        names = getattr(self, "feature_names_in_", None)
        panel = Panel(y, X, tuple(str(v) for v in names) if names is not None else ())
        self.dataset_ = build_lagged(panel, self.h, self.horizon, self.n_resp_lags)
        self.result_ = screen(self.dataset_, self._config(), self._rng())
        self.scores_ = self.result_.stats
        self.ranking_ = self.result_.ranking
        self.support_ = np.zeros(self.dataset_.p, dtype=bool)
        self.support_[self.result_.selected] = True
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "support_")
        return np.flatnonzero(self.support_) if indices else self.support_

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = validate_data(self, X, reset=False)
        return lag_matrix(X, self.h, self.horizon)[:, self.support_]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "support_")
        return _lagged_names(list(self.dataset_.names), self.h)[self.support_]


class SIS(_Screener):
    """Marginal Pearson-correlation screening of lagged covariates."""

    _method = Method.SIS

    def __init__(self, h=3, horizon=0, n_resp_lags=None, top_d=None, threshold=None, n_jobs=1):
        self.h = h
        self.horizon = horizon
        self.n_resp_lags = n_resp_lags
        self.top_d = top_d
        self.threshold = threshold
        self.n_jobs = n_jobs


class DCSIS(_Screener):
    """Marginal distance-correlation screening (``estimator='v'``) or R* (``'u'``)."""

    _method = Method.DCSIS

    def __init__(self, h=3, horizon=0, n_resp_lags=None, estimator="v", top_d=None,
                 threshold=None, n_jobs=1):
        self.h = h
        self.horizon = horizon
        self.n_resp_lags = n_resp_lags
        self.estimator = estimator
        self.top_d = top_d
        self.threshold = threshold
        self.n_jobs = n_jobs


class PDCSIS(_Screener):
    """Partial distance correlation screening.

    Lag ``l`` of series ``k`` is scored by its partial distance correlation
    with the response given the first ``n_resp_lags`` response lags and
    lags ``1..l-1`` of series ``k``.
    """

    _method = Method.PDCSIS

    def __init__(self, h=3, horizon=0, n_resp_lags=None, estimator="u", top_d=None,
                 threshold=None, n_jobs=1):
        self.h = h
        self.horizon = horizon
        self.n_resp_lags = n_resp_lags
        self.estimator = estimator
        self.top_d = top_d
        self.threshold = threshold
        self.n_jobs = n_jobs


class PDCSISPlus(_Screener):
    """PDC-SIS with strong conditional signals carried to higher lag levels.

    Parameters
    ----------
    plus_cap : int, optional
        Maximum strong signals kept per level; ``ceil(sqrt(n))`` by default.
    plus_threshold : float, optional
        Fixed strength threshold.  By default it is the ``decoy_quantile``
        quantile of ``|pdcor|`` against ``decoy_count`` independent AR(1)
        series with coefficient ``decoy_ar``.
    random_state : int or Generator, optional
        Seeds the decoy series.

    Attributes
    ----------
    strong_sets_ : list of ndarray
        Strong-signal columns found at lag levels ``1..h-1``.
    threshold_ : float or None
        The threshold actually used.
    """

    _method = Method.PDCSIS_PLUS

    def __init__(self, h=3, horizon=0, n_resp_lags=None, estimator="u", top_d=None,
                 threshold=None, plus_cap=None, plus_threshold=None, decoy_count=1000,
                 decoy_ar=0.4, decoy_quantile=0.99, random_state=None, n_jobs=1):
        self.h = h
        self.horizon = horizon
        self.n_resp_lags = n_resp_lags
        self.estimator = estimator
        self.top_d = top_d
        self.threshold = threshold
        self.plus_cap = plus_cap
        self.plus_threshold = plus_threshold
        self.decoy_count = decoy_count
        self.decoy_ar = decoy_ar
        self.decoy_quantile = decoy_quantile
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _extra_config(self):
        return dict(plus_cap=self.plus_cap, plus_threshold=self.plus_threshold,
                    decoy_count=self.decoy_count, decoy_ar=self.decoy_ar,
                    decoy_quantile=self.decoy_quantile)

    def _rng(self):
        rs = self.random_state
        return rs if isinstance(rs, np.random.Generator) else np.random.default_rng(rs)

    def fit(self, X, y):
        super().fit(X, y)
        self.strong_sets_ = self.result_.strong_sets
        self.threshold_ = self.result_.threshold_used
        return self


class _GroupScreener(BaseEstimator):
    _conditional: bool

    def _partition(self, m: int) -> GroupPartition:
        if self.groups is not None:
            g = self.groups
            if len(g) == m and np.ndim(g[0]) == 0:
                return GroupPartition(np.asarray(g))
            return GroupPartition.from_groups(g)
        return GroupPartition.equal(m, self.group_size)

    def fit(self, X, y=None):
        X = validate_data(self, X, ensure_min_samples=self.h + 4)
        self.partition_ = self._partition(X.shape[1])
        fn = group_pdcsis_stats if self._conditional else group_dcsis_stats
        res = fn(X, self.partition_, self.h, self.estimator, self.top_d, self.threshold)
        self.result_ = res
        self.triples_ = res.triples
        self.scores_ = res.stats
        self.ranking_ = res.ranking
        self.selected_ = res.triples[res.selected]
        return self


class GroupPDCSIS(_GroupScreener):
    """Group-to-lagged-group screening conditioning on the target group's first lag.

    ``groups`` is either a per-series group label vector or a list of member
    lists; otherwise consecutive blocks of ``group_size`` series are used.
    ``triples_`` rows are ``(target group, lag, source group)``.
    """

    _conditional = True

    def __init__(self, h=2, groups=None, group_size=20, estimator="u", top_d=None, threshold=None):
        self.h = h
        self.groups = groups
        self.group_size = group_size
        self.estimator = estimator
        self.top_d = top_d
        self.threshold = threshold


class GroupDCSIS(_GroupScreener):
    """Marginal block distance correlation over the same candidate triples as :class:`GroupPDCSIS`."""

    _conditional = False

    def __init__(self, h=2, groups=None, group_size=20, estimator="v", top_d=None, threshold=None):
        self.h = h
        self.groups = groups
        self.group_size = group_size
        self.estimator = estimator
        self.top_d = top_d
        self.threshold = threshold
