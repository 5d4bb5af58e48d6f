"""Distance covariance, distance correlation and partial distance correlation.

All estimators work on pairwise Euclidean distance matrices.  Two flavours
are provided:

* the V-statistic (biased plug-in) ``dcov^2 = S1 + S2 - 2 S3``, computed in
  O(n^2) through double centering;
* the U-centered, bias-corrected inner product and the squared-correlation
  analogue ``R*`` built from it.

Inputs are never standardized; rescale beforehand if that is wanted.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "EstimatorKind",
    "DcovTriple",
    "EPS_NUM",
    "EPS_DEN",
    "pairwise_distances",
    "sqdist_accumulate",
    "double_centered",
    "ucentered",
    "dcov_terms",
    "dcov2_v",
    "dcor_v",
    "u_inner",
    "rstar",
    "pdcor",
    "pdcor_from_r2",
]

EPS_NUM = 1e-12
EPS_DEN = 1e-12
# negative dcov^2 residue beyond this (relative) means the centering is broken
_HARD_NEG = 1e-8


class EstimatorKind(str, Enum):
    """Which sample estimator of distance covariance to use."""

    V_STATISTIC = "v"
    U_CENTERED = "u"

    @classmethod
    def coerce(cls, value: "EstimatorKind | str") -> "EstimatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"v": cls.V_STATISTIC, "v_statistic": cls.V_STATISTIC,
                   "u": cls.U_CENTERED, "u_centered": cls.U_CENTERED}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(
                f"unknown estimator kind {value!r}; expected 'v' or 'u'"
            ) from None


@dataclass(frozen=True)
class DcovTriple:
    """The three sample sums whose combination ``s1 + s2 - 2*s3`` is dcov^2."""

    s1: float
    s2: float
    s3: float

    @property
    def dcov2(self) -> float:
        return self.s1 + self.s2 - 2.0 * self.s3


def _as_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"sample must be a non-empty n x d array, got shape {x.shape}")
    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite value in sample row {row}: {x[row].tolist()}")
    return x


def sqdist_accumulate(base, column) -> np.ndarray:
    """Add the squared differences of ``column`` to a squared-distance matrix.

    ``base`` may be ``None`` (the zero matrix).  Returns a new array; the
    input is left untouched.  Because squared Euclidean distances are
    additive over coordinates, accumulating every column of a sample and
    taking the entrywise square root gives its distance matrix.
    """
    col = np.asarray(column, dtype=float).ravel()
    diff = col[:, None] - col[None, :]
    sq = diff * diff
    if base is None:
        return sq
    base = np.asarray(base, dtype=float)
    if base.shape != sq.shape:
        raise ValueError(
            f"column of length {col.size} does not match base of shape {base.shape}"
        )
    return base + sq


def pairwise_distances(sample) -> np.ndarray:
    """Euclidean distance matrix between the rows of an n x d sample.

    A 1-d input is treated as n observations of a scalar.
    """
    x = _as_sample(sample)
    sq = None
    for k in range(x.shape[1]):
        sq = sqdist_accumulate(sq, x[:, k])
    return np.sqrt(sq)


def _check_pair(du, dv) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(du, dtype=float)
    b = np.asarray(dv, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {a.shape}")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def double_centered(d) -> np.ndarray:
    """``A_ij = a_ij - mean_i. - mean_.j + mean_..``."""
    a = np.asarray(d, dtype=float)
    row = a.mean(axis=1)
    col = a.mean(axis=0)
    return a - row[:, None] - col[None, :] + a.mean()


def ucentered(d) -> np.ndarray:
    """U-centered distance matrix; requires n >= 4.

    Off the diagonal ``a_ij - r_i/(n-2) - c_j/(n-2) + T/((n-1)(n-2))`` with
    row sums ``r``, column sums ``c`` and grand total ``T``; the diagonal is 0.
    """
    a = np.asarray(d, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"distance matrix must be square, got shape {a.shape}")
    if n < 4:
        raise ValueError(f"U-centering needs n >= 4 observations, got n={n}")
    row = a.sum(axis=1)
    col = a.sum(axis=0)
    out = a - row[:, None] / (n - 2) - col[None, :] / (n - 2) + a.sum() / ((n - 1) * (n - 2))
    np.fill_diagonal(out, 0.0)
    return out


def dcov_terms(du, dv) -> DcovTriple:
    """The sample sums S1, S2, S3 from O(n^2) row/column aggregates."""
    a, b = _check_pair(du, dv)
    n = a.shape[0]
    s1 = float(np.sum(a * b)) / n**2
    s2 = float(a.mean() * b.mean())
    # S3 = n^-3 sum_i (sum_j a_ij)(sum_l b_il)
    s3 = float(np.dot(a.sum(axis=1), b.sum(axis=1))) / n**3
    return DcovTriple(s1, s2, s3)


def _clamp_dcov2(value: float, scale: float) -> float:
    if value < 0.0:
        if value < -_HARD_NEG * max(scale, np.finfo(float).tiny):
            raise FloatingPointError(
                f"V-statistic dcov^2 = {value:.3e} is negative beyond rounding noise"
            )
        return 0.0
    return value


def dcov2_v(du, dv) -> float:
    """Squared V-statistic distance covariance, ``n^-2 sum A_ij B_ij``."""
    a, b = _check_pair(du, dv)
    n = a.shape[0]
    value = float(np.sum(double_centered(a) * double_centered(b))) / n**2
    return _clamp_dcov2(value, float(a.mean() * b.mean()))


def _degenerate(self_term: float, d: np.ndarray) -> bool:
    scale = float(d.mean()) ** 2
    return scale == 0.0 or self_term <= EPS_NUM * scale


def _dcor2_v(a: np.ndarray, b: np.ndarray) -> float:
    vaa = dcov2_v(a, a)
    vbb = dcov2_v(b, b)
    if _degenerate(vaa, a) or _degenerate(vbb, b):
        return 0.0
    return min(dcov2_v(a, b) / np.sqrt(vaa * vbb), 1.0)


def dcor_v(du, dv) -> float:
    """V-statistic distance correlation in [0, 1]; 0 for a constant variable."""
    a, b = _check_pair(du, dv)
    return float(np.sqrt(_dcor2_v(a, b)))


def u_inner(du, dv) -> float:
    """``(n(n-3))^-1 sum_{i != j} A~_ij B~_ij`` of the U-centered matrices."""
    a, b = _check_pair(du, dv)
    n = a.shape[0]
    return float(np.sum(ucentered(a) * ucentered(b))) / (n * (n - 3))


def rstar(du, dv) -> float:
    """Bias-corrected squared distance correlation, in [-1, 1]."""
    a, b = _check_pair(du, dv)
    ua, ub = ucentered(a), ucentered(b)
    n = a.shape[0]
    norm = n * (n - 3)
    aa = float(np.sum(ua * ua)) / norm
    bb = float(np.sum(ub * ub)) / norm
    if _degenerate(aa, a) or _degenerate(bb, b):
        return 0.0
    value = float(np.sum(ua * ub)) / norm / np.sqrt(aa * bb)
    return float(np.clip(value, -1.0, 1.0))


def pdcor_from_r2(r_uv, r_uz, r_vz):
    """Partial distance correlation from three squared-correlation values.

    Works elementwise on arrays.  A denominator factor below ``EPS_DEN``
    yields 0, which also covers ``dcor(u, Z) = 1``.  Results are clipped
    to [-1, 1] against rounding overshoot.
    """
    r_uv = np.asarray(r_uv, dtype=float)
    f_u = 1.0 - np.square(r_uz)
    f_v = 1.0 - np.square(r_vz)
    ok = (f_u >= EPS_DEN) & (f_v >= EPS_DEN)
    den = np.sqrt(np.where(ok, f_u, 1.0)) * np.sqrt(np.where(ok, f_v, 1.0))
    out = np.where(ok, np.clip((r_uv - r_uz * r_vz) / den, -1.0, 1.0), 0.0)
    return out if out.ndim else float(out)


def pdcor(du, dv, dz=None, kind: EstimatorKind | str = EstimatorKind.U_CENTERED) -> float:
    """Partial distance correlation of u and v controlling for Z.

    ``dz=None`` means an empty conditioning vector, in which case the
    marginal statistic is returned: ``dcor_v`` for the V-statistic and
    ``rstar`` for the U-centered estimator.
    """
    kind = EstimatorKind.coerce(kind)
    a, b = _check_pair(du, dv)
    if kind is EstimatorKind.U_CENTERED and a.shape[0] < 4:
        raise ValueError(f"U-centered pdcor needs n >= 4, got n={a.shape[0]}")
    if dz is None:
        return dcor_v(a, b) if kind is EstimatorKind.V_STATISTIC else rstar(a, b)
    a, c = _check_pair(a, dz)
    r2 = _dcor2_v if kind is EstimatorKind.V_STATISTIC else rstar
    return pdcor_from_r2(r2(a, b), r2(a, c), r2(b, c))
