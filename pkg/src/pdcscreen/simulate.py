"""Seeded generators for the simulation designs (Models 1-6).

Every design runs ``n + 200`` steps from a zero initial state and keeps
the last ``n + h`` rows, so that building an ``h``-lag design leaves
exactly ``n`` usable observations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .lagged import Panel
from .screening import GroupPartition

BURNIN = 200


class Law(str, Enum):
    GAUSSIAN = "gaussian"
    SCALED_T = "t"


@dataclass(frozen=True)
class InnovationDist:
    """Gaussian, or Student-t with ``df`` degrees of freedom times ``sqrt(scale_factor)``.

    ``InnovationDist.t(df)`` picks ``scale_factor = (df - 2) / df`` so the
    variance matches the Gaussian case.
    """

    law: Law = Law.GAUSSIAN
    df: float | None = None
    scale_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))
        if self.law is Law.SCALED_T and (self.df is None or self.df <= 2):
            raise ValueError(f"Student-t innovations need df > 2, got {self.df}")

    @classmethod
    def t(cls, df: float, scale_factor: float | None = None) -> "InnovationDist":
        return cls(Law.SCALED_T, df, (df - 2) / df if scale_factor is None else scale_factor)

    @classmethod
    def parse(cls, name: str) -> "InnovationDist":
        name = name.lower()
        if name in ("gaussian", "normal", "n"):
            return cls()
        if name.startswith("t") and name[1:].isdigit():
            return cls.t(int(name[1:]))
        raise ValueError(f"unknown innovation law {name!r}; use gaussian, t5, t3, ...")

    @property
    def label(self) -> str:
        return "gaussian" if self.law is Law.GAUSSIAN else f"t{self.df:g}"

    def draw(self, rng: np.random.Generator, size, chol: np.ndarray | None = None) -> np.ndarray:
        """Draw ``size`` innovations; with ``chol`` the last axis is correlated.

        Multivariate t: a Gaussian vector with covariance ``chol @ chol.T``
        divided by ``sqrt(chi2_df / df)``, then scaled by ``sqrt(scale_factor)``.
        """
        z = rng.standard_normal(size)
        if chol is not None:
            z = z @ chol.T
        if self.law is Law.SCALED_T:
            lead = np.shape(z)[:-1] if chol is not None else np.shape(z)
            w = np.sqrt(rng.chisquare(self.df, size=lead) / self.df)
            z = z / (w[..., None] if chol is not None else w)
        return z * math.sqrt(self.scale_factor) if self.scale_factor != 1.0 else z


GAUSSIAN = InnovationDist()


@dataclass(frozen=True)
class CoeffMatrixRecipe:
    """``SCALED_IDENTITY``: ``c * I``.  ``POWER_DECAY``: ``rho ** (|i-j| + offset)``.

    ``sign_outside`` applies to negative ``rho`` with ``offset > 0``: the
    matrix becomes ``|rho|**offset * rho**|i-j|`` so the diagonal stays
    positive (needed when the matrix is a covariance).
    """

    kind: str
    value: float
    offset: int = 0
    sign_outside: bool = False

    @classmethod
    def scaled_identity(cls, c: float) -> "CoeffMatrixRecipe":
        return cls("scaled_identity", c)

    @classmethod
    def power_decay(cls, rho: float, offset: int = 0, sign_outside: bool = False) -> "CoeffMatrixRecipe":
        return cls("power_decay", rho, offset, sign_outside)


def build_coeff(recipe: CoeffMatrixRecipe, m: int) -> np.ndarray:
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if recipe.kind == "scaled_identity":
        return recipe.value * np.eye(m)
    if recipe.kind != "power_decay":
        raise ValueError(f"unknown recipe kind {recipe.kind!r}")
    rho = recipe.value
    if abs(rho) >= 1:
        raise ValueError(f"power decay needs |rho| < 1, got {rho}")
    lag = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    if recipe.sign_outside:
        return abs(rho) ** recipe.offset * rho ** lag
    return rho ** (lag + recipe.offset)


def spectral_radius(coeffs: Sequence[np.ndarray], iters: int = 200, tol: float = 1e-8) -> float:
    """Power-iteration estimate of the spectral radius of the VAR companion matrix."""
    m = coeffs[0].shape[0]
    k = len(coeffs)
    v = np.random.default_rng(0).standard_normal(m * k)
    v /= np.linalg.norm(v)
    logs = []
    prev = None
    for _ in range(iters):
        head = sum(A @ v[i * m:(i + 1) * m] for i, A in enumerate(coeffs))
        w = np.concatenate([head, v[:(k - 1) * m]])
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        logs.append(math.log(nrm))
        est = math.exp(np.mean(logs[len(logs) // 2:]))
        if prev is not None and abs(est - prev) < tol:
            break
        prev = est
    return est


def _check_stable(coeffs: Sequence[np.ndarray]) -> None:
    rho = spectral_radius(coeffs)
    if rho >= 1.0 + 1e-6:
        raise ValueError(f"VAR is not stable: spectral radius estimate {rho:.4f}")
    if rho > 0.999:
        warnings.warn(f"VAR spectral radius estimate {rho:.4f} is close to 1", RuntimeWarning)


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("innovation covariance is not positive definite") from None


def var_path(coeffs, sigma, dist: InnovationDist, total: int, rng) -> np.ndarray:
    """``total`` VAR steps from a zero initial state (no trimming)."""
    coeffs = [np.asarray(A, dtype=float) for A in coeffs]
    m = coeffs[0].shape[0]
    chol = _cholesky(np.asarray(sigma, dtype=float))
    _check_stable(coeffs)
    eta = dist.draw(rng, (total, m), chol)
    k = len(coeffs)
    x = np.zeros((total + k, m))
    for t in range(total):
        acc = eta[t].copy()
        for i, A in enumerate(coeffs, start=1):
            acc += A @ x[t + k - i]
        x[t + k] = acc
    return x[k:]


def gen_var(coeffs, sigma, dist: InnovationDist, n_keep: int, h: int, seed=None,
            burnin: int = BURNIN) -> np.ndarray:
    """VAR sample: ``n_keep + burnin`` steps, the first ``burnin - h`` discarded."""
    if not 0 <= h <= burnin:
        raise ValueError(f"h must lie in 0..{burnin}, got {h}")
    rng = np.random.default_rng(seed)
    path = var_path(coeffs, sigma, dist, n_keep + burnin, rng)
    return path[burnin - h:]


# ---------------------------------------------------------------- models 1-5


def ind_pos(x):
    """``x * 1{x > 0}``."""
    return x * (x > 0)


def g2_smooth(x):
    return x * math.exp(-x * x / 2.0)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a simulation design.

    ``dist`` drives the covariate innovations; ``noise`` the response noise
    (defaults to N(0, 1) or the unscaled Student-t with the same df).
    """

    model_id: int
    m: int = 500
    n: int = 200
    h: int = 3
    dist: InnovationDist = GAUSSIAN
    noise: InnovationDist | None = None
    beta: tuple[float, ...] = (1.0,) * 6
    scenario: int = 1
    sigma_sign: int = 1
    group_size: int = 20

    def __post_init__(self):
        if self.model_id not in range(1, 7):
            raise ValueError(f"unknown model id {self.model_id}; expected 1..6")
        min_m = {1: 6, 2: 2, 3: 4, 4: 3, 5: 2, 6: self.group_size}[self.model_id]
        if self.m < min_m:
            raise ValueError(f"model {self.model_id} needs m >= {min_m}, got {self.m}")
        if self.noise is None:
            noise = GAUSSIAN if self.dist.law is Law.GAUSSIAN else InnovationDist(Law.SCALED_T, self.dist.df, 1.0)
            object.__setattr__(self, "noise", noise)
        if self.model_id == 1 and len(self.beta) != 6:
            raise ValueError("model 1 needs six beta coefficients")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id, "m": self.m, "n": self.n, "h": self.h,
            "dist": self.dist.label, "noise": self.noise.label,
            "beta": list(self.beta), "scenario": self.scenario,
            "sigma_sign": self.sigma_sign, "group_size": self.group_size,
        }


def covariate_design(spec: ModelSpec) -> tuple[list[np.ndarray], np.ndarray]:
    """VAR coefficient matrices and innovation covariance for Models 1-5."""
    m = spec.m
    pd_ = CoeffMatrixRecipe.power_decay
    if spec.model_id == 1:
        return [build_coeff(CoeffMatrixRecipe.scaled_identity(0.6), m)], build_coeff(pd_(0.3), m)
    if spec.model_id in (2, 5):
        return [build_coeff(pd_(0.4, 1), m)], np.eye(m)
    if spec.model_id == 3:
        return [build_coeff(pd_(0.3, 1), m), build_coeff(pd_(0.2, 1), m)], build_coeff(pd_(-0.3), m)
    if spec.model_id == 4:
        return [build_coeff(pd_(0.4, 1), m)], build_coeff(pd_(-0.3), m)
    raise ValueError(f"model {spec.model_id} is not a univariate-response design")


# Which Z columns (as (series, lag)) each response equation uses; asserted in tests
# against the equations below.
TRUE_TERMS: dict[int, tuple[tuple[int, int], ...]] = {
    1: tuple((k, 1) for k in range(6)),
    2: ((0, 1), (0, 2), (1, 1), (1, 2)),
    3: ((0, 1), (1, 1), (2, 1), (3, 1), (0, 2), (1, 2)),
    4: ((0, 1), (1, 1), (2, 1), (0, 2), (1, 2), (2, 2)),
    5: ((0, 1), (0, 2), (1, 1), (1, 2)),
}


def true_set(model_id: int, m: int) -> np.ndarray:
    """Ground-truth active Z columns (0-based) for Models 1-5."""
    return np.array(sorted((l - 1) * m + k for k, l in TRUE_TERMS[model_id]), dtype=int)


def _response_step(model_id: int, beta) -> Callable:
    """Mean function ``f(y1, y2, y3, x1, x2, e, b)`` of one response step.

    ``y1..y3`` are response lags, ``x1``/``x2`` the covariate vectors at
    lags 1 and 2 (only the leading series are used), ``e`` the noise and
    ``b`` the four random coefficients of Model 4.
    """
    sin, pi, exp = math.sin, math.pi, math.exp
    if model_id == 1:
        return lambda y1, y2, y3, x1, x2, e, b: sum(beta[j] * x1[j] for j in range(6)) + e
    if model_id == 2:
        return lambda y1, y2, y3, x1, x2, e, b: (
            0.25 * y1 + g2_smooth(y2) + (-0.6 * y3 + 0.3 * ind_pos(y3))
            + (1.5 * x1[0] + 0.4 * ind_pos(x1[0])) - x2[0]
            + (1.2 * x1[1] + 0.4 * ind_pos(x1[1])) + x2[1] ** 2 * sin(2 * pi * x2[1]) + e)
    if model_id == 3:
        def step(y1, y2, y3, x1, x2, e, b):
            w = exp(-x1[3] ** 2 / 2.0)
            return (0.2 * y1 + 0.2 * ind_pos(y1)
                    + 0.2 * y2 + 0.1 * y2 * (y1 > 0)
                    + y3 * exp(-y1 ** 2 / 2.0)
                    + x1[0] * (1 + w) + (1 + 0.5 * w) * x2[0]
                    + x1[1] * (1 + w) + (1 + 0.5 * w) * x2[1]
                    + x1[2] * (1 + w) + g2_smooth(x1[3]) + x1[2] * x1[3] + e)
        return step
    if model_id == 4:
        def step(y1, y2, y3, x1, x2, e, b):
            return (0.25 * y1 + 0.3 * y2 + 0.3 * y3
                    + (1.5 * x1[0] + 0.4 * ind_pos(x1[0])) + 1.2 * x2[0]
                    + b[0] * x1[1] * x1[2] + b[1] * x2[1] * x2[2]
                    + b[2] * x1[2] + b[3] * x2[2]
                    + (1.5 * x1[1] + 0.4 * ind_pos(x1[1]))
                    + 1.2 * x2[1] + 0.4 * x2[1] * (x1[1] > 0) + e)
        return step
    if model_id == 5:
        return lambda y1, y2, y3, x1, x2, e, b: (
            0.25 * y1 + 0.3 * y2 + 0.3 * y3 + x1[0] - x2[0] + 0.5 * x1[1] + 0.5 * x2[1] + e)
    raise ValueError(f"unknown model id {model_id}")


def response_path(model_id: int, X: np.ndarray, noise: np.ndarray, coefs: np.ndarray | None = None,
                  beta=(1.0,) * 6, y_init=(0.0, 0.0, 0.0), x_init=None) -> np.ndarray:
    """Run the response recursion over a covariate path.

    ``X[t]`` is the covariate vector at step ``t``; ``y_init`` / ``x_init``
    hold the pre-sample values (most recent first), zero by default.
    Model 1 feeds ``noise`` through the AR(1) error ``eps_t = .6 eps_{t-1} + e_t``.
    """
    total = X.shape[0]
    lead = X[:, :6] if X.shape[1] >= 6 else X
    q = lead.shape[1]
    xp = np.zeros((total + 2, q))
    if x_init is not None:
        xp[1] = np.asarray(x_init[0])[:q]
        xp[0] = np.asarray(x_init[1])[:q]
    xp[2:] = lead
    yp = np.zeros(total + 3)
    yp[:3] = np.asarray(y_init, dtype=float)[::-1]
    step = _response_step(model_id, beta)
    if coefs is None:
        coefs = np.zeros((total, 4))
    eps = 0.0
    for t in range(total):
        e = noise[t]
        if model_id == 1:
            eps = 0.6 * eps + e
            e = eps
        yp[t + 3] = step(yp[t + 2], yp[t + 1], yp[t], xp[t + 1], xp[t], e, coefs[t])
    return yp[3:]


def gen_model(spec: ModelSpec, seed=None) -> tuple[Panel, np.ndarray]:
    """Simulate one of Models 1-5; returns the trimmed panel and its true Z columns."""
    if spec.model_id == 6:
        raise ValueError("model 6 is multivariate; use gen_model6")
    rng = np.random.default_rng(seed)
    coeffs, sigma = covariate_design(spec)
    total = spec.n + BURNIN
    X = var_path(coeffs, sigma, spec.dist, total, rng)
    noise = spec.noise.draw(rng, total)
    coefs = rng.uniform(0.5, 1.0, size=(total, 4)) if spec.model_id == 4 else None
    y = response_path(spec.model_id, X, noise, coefs, spec.beta)
    keep = slice(BURNIN - spec.h, None)
    return Panel(y[keep], X[keep]), true_set(spec.model_id, spec.m)


# ---------------------------------------------------------------- model 6


@dataclass(frozen=True)
class GroupDesign:
    coeff: np.ndarray
    sigma: np.ndarray
    partition: GroupPartition
    true_triples: np.ndarray


def model6_design(scenario: int = 1, sigma_sign: int = 1, m: int = 500,
                  group_size: int = 20) -> GroupDesign:
    """Block upper-triangular VAR(1): ``B`` on the diagonal, ``C`` two blocks right."""
    if scenario not in (1, 2):
        raise ValueError(f"scenario must be 1 or 2, got {scenario}")
    if sigma_sign not in (1, -1):
        raise ValueError(f"sigma_sign must be +1 or -1, got {sigma_sign}")
    if m % group_size:
        raise ValueError(f"m={m} must be a multiple of the group size {group_size}")
    e = m // group_size
    active = group_size if scenario == 1 else min(10, group_size)
    B = np.zeros((group_size, group_size))
    C = np.zeros((group_size, group_size))
    B[:active, :active] = build_coeff(CoeffMatrixRecipe.power_decay(0.3, 1), active)
    C[:active, :active] = build_coeff(CoeffMatrixRecipe.power_decay(0.2, 1), active)
    A = np.zeros((m, m))
    for g in range(e):
        s = slice(g * group_size, (g + 1) * group_size)
        A[s, s] = B
        if g + 2 < e:
            A[s, (g + 2) * group_size:(g + 3) * group_size] = C
    sigma = build_coeff(CoeffMatrixRecipe.power_decay(0.4 * sigma_sign, 1, sign_outside=True), m)
    # x_t in group g loads on group g+2 at lag 1
    truth = np.array([(g, 1, g + 2) for g in range(e - 2)], dtype=int).reshape(-1, 3)
    return GroupDesign(A, sigma, GroupPartition.equal(m, group_size), truth)


def gen_model6(scenario: int = 1, sigma_sign: int = 1, dist: InnovationDist = GAUSSIAN,
               seed=None, n: int = 200, h: int = 2, m: int = 500, group_size: int = 20):
    """Simulate Model 6; returns ``(X, true_triples, partition)`` with ``n + h`` rows."""
    design = model6_design(scenario, sigma_sign, m, group_size)
    X = gen_var([design.coeff], design.sigma, dist, n, h, seed)
    return X, design.true_triples, design.partition


def simulate(spec: ModelSpec, seed=None):
    """Uniform entry point: ``(panel_or_matrix, truth, partition_or_None)``."""
    if spec.model_id == 6:
        return gen_model6(spec.scenario, spec.sigma_sign, spec.dist, seed, spec.n, spec.h,
                          spec.m, spec.group_size)
    panel, truth = gen_model(spec, seed)
    return panel, truth, None
