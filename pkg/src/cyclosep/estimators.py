"""Estimators for the latent-offset mixture model.

Three estimator families operate on an observation window y:

* ``build_lmmse`` / ``lmmse_estimate``: the stationary linear filter
  built from marginal (offset-averaged) covariances.  It knows the
  interference only through its mean-square gain.
* ``oracle_estimate``: the conditional Wiener filter for a known latent
  triple (tau_s, tau_b, kappa).
* ``mmse_estimate``: the posterior-weighted mixture of conditional
  estimates over the whole latent grid, with the posterior computed by
  ``log_posterior``.

A ``FilterBank`` precomputes one Cholesky factor and log determinant per
grid triple; both the oracle and the Bayesian estimator run off it.  All
solves go through triangular factors, never explicit inverses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from .models import SourceModel, conditional_covariance, marginal_covariance

__all__ = [
    "SingularCovarianceError",
    "GridBudgetError",
    "LmmseFilter",
    "FilterBank",
    "DEFAULT_BUDGET_BYTES",
    "DEFAULT_WEIGHT_FLOOR",
    "prior_mean_square",
    "build_lmmse",
    "build_lmmse_from_marginals",
    "lmmse_estimate",
    "build_filter_bank",
    "oracle_estimate",
    "oracle_estimate_direct",
    "oracle_mse_analytic",
    "log_posterior",
    "mmse_estimate",
]

logger = logging.getLogger(__name__)

#: default cap on precomputed filter-bank matrix storage
DEFAULT_BUDGET_BYTES = 8 << 30

#: posterior weights at or below this are skipped by mmse_estimate
DEFAULT_WEIGHT_FLOOR = 1e-12


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance that must be factorized is not positive definite."""


class GridBudgetError(RuntimeError):
    """A latent grid whose precomputed filters exceed the memory budget."""


def _chol(mat: np.ndarray, label: str) -> np.ndarray:
    """Lower Cholesky factor, or a diagnostic error naming the matrix."""
    try:
        return cholesky(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(mat)[0])
        raise SingularCovarianceError(
            f"{label} is not positive definite: {exc}; "
            f"smallest eigenvalue {smallest:.6e}"
        ) from exc


def prior_mean_square(kappa_levels) -> float:
    """E[kappa^2] under a discrete (kappa, prior) tuple."""
    return float(sum(p * k * k for k, p in kappa_levels))


@dataclass(frozen=True)
class LmmseFilter:
    """Stationary linear filter W with ``estimate = W @ y``."""

    weights: np.ndarray
    sigma: float
    e_kappa_sq: float

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def build_lmmse_from_marginals(
    cs: np.ndarray,
    cb: np.ndarray,
    kappa_levels,
    sigma: float,
) -> LmmseFilter:
    """Same as ``build_lmmse`` but on precomputed marginal covariances."""
    e_kappa_sq = prior_mean_square(kappa_levels)
    n = cs.shape[0]
    m = cs + e_kappa_sq * cb + (sigma**2) * np.eye(n)
    ell = _chol(m, "marginal observation covariance")
    weights = cho_solve((ell, True), cs, check_finite=False).conj().T
    return LmmseFilter(weights=weights, sigma=float(sigma), e_kappa_sq=e_kappa_sq)


def build_lmmse(
    source: SourceModel,
    interference: SourceModel,
    kappa_levels,
    sigma: float,
    n: int,
) -> LmmseFilter:
    """W = C_s [C_s + E[kappa^2] C_b + sigma^2 I]^(-1) on marginal covariances.

    ``kappa_levels`` is a (kappa, prior) tuple as in ``MixtureConfig``;
    only E[kappa^2] enters the filter.  A known gain is the single-level
    case ``((kappa, 1.0),)``.  Raises ``SingularCovarianceError`` when the
    bracketed matrix cannot be factorized, which is the only obstacle:
    sigma = 0 is accepted as long as the covariance sum is positive
    definite.
    """
    cs = marginal_covariance(source, n)
    cb = marginal_covariance(interference, n)
    return build_lmmse_from_marginals(cs, cb, kappa_levels, sigma)


def lmmse_estimate(filt: LmmseFilter, y: np.ndarray) -> np.ndarray:
    """Apply the stationary filter; y may be (n,) or (n, count)."""
    return filt.weights @ y


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Precomputed conditional factors over the latent grid.

    Grid order is the cartesian product tau_s x tau_b x kappa with kappa
    fastest, so triples sharing a source offset are contiguous.
    ``factors[t]`` is the lower Cholesky factor of
    C_s(tau_s) + kappa^2 C_b(tau_b) + sigma^2 I and ``logdets[t]`` its
    log determinant.  ``cs_mats[tau_s]`` holds the source conditional
    covariances, shared across the grid.
    """

    n: int
    sigma: float
    period_s: int
    period_b: int
    kappas: tuple
    log_prior: np.ndarray
    grid_tau_s: np.ndarray
    grid_tau_b: np.ndarray
    grid_kappa: np.ndarray
    factors: np.ndarray
    logdets: np.ndarray
    cs_mats: np.ndarray

    @property
    def size(self) -> int:
        return self.factors.shape[0]

    def triple_index(self, tau_s: int, tau_b: int, kappa: float) -> int:
        """Flat grid index of a latent triple; ValueError if off-grid."""
        if not (0 <= tau_s < self.period_s and 0 <= tau_b < self.period_b):
            raise ValueError(
                f"offsets ({tau_s}, {tau_b}) outside grid "
                f"[0, {self.period_s}) x [0, {self.period_b})"
            )
        matches = [i for i, k in enumerate(self.kappas) if k == kappa]
        if not matches:
            raise ValueError(f"kappa {kappa!r} is not one of the grid levels {self.kappas}")
        nk = len(self.kappas)
        return (tau_s * self.period_b + tau_b) * nk + matches[0]


def build_filter_bank(
    source: SourceModel,
    interference: SourceModel,
    kappa_levels,
    sigma: float,
    n: int,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
) -> FilterBank:
    """Factorize every conditional observation covariance on the grid.

    The grid spans all source offsets, all interferer offsets, and the
    kappa levels.  Before any allocation the required matrix storage,
    (grid size + source period) * n^2 complex entries, is checked against
    ``budget_bytes``; an infeasible grid raises ``GridBudgetError``
    stating the requirement.
    """
    ps, pb = source.period, interference.period
    kappas = tuple(float(k) for k, _ in kappa_levels)
    priors = np.array([p for _, p in kappa_levels], dtype=np.float64)
    nk = len(kappas)
    size = ps * pb * nk
    required = (size + ps) * n * n * 16
    if required > budget_bytes:
        raise GridBudgetError(
            f"filter bank over {size} grid triples at window {n} needs "
            f"{required} bytes ({required / 2**30:.1f} GiB) of matrix storage, "
            f"over the budget of {budget_bytes} bytes ({budget_bytes / 2**30:.1f} GiB); "
            f"shrink the grid or window, or raise the budget"
        )

    cs_mats = np.empty((ps, n, n), dtype=np.complex128)
    for tau in range(ps):
        cs_mats[tau] = conditional_covariance(source, tau, n)

    grid_tau_s = np.repeat(np.arange(ps), pb * nk)
    grid_tau_b = np.tile(np.repeat(np.arange(pb), nk), ps)
    grid_kappa = np.tile(np.array(kappas), ps * pb)
    log_prior = (
        -np.log(ps) - np.log(pb) + np.tile(np.log(priors), ps * pb)
    )

    factors = np.empty((size, n, n), dtype=np.complex128)
    logdets = np.empty(size)
    eye = np.eye(n)
    for tau_b in range(pb):
        cb = conditional_covariance(interference, tau_b, n)
        for tau_s in range(ps):
            base = (tau_s * pb + tau_b) * nk
            for j, kappa in enumerate(kappas):
                cy = cs_mats[tau_s] + (kappa**2) * cb + (sigma**2) * eye
                ell = _chol(
                    cy,
                    f"observation covariance at (tau_s={tau_s}, tau_b={tau_b}, "
                    f"kappa={kappa:g})",
                )
                factors[base + j] = ell
                logdets[base + j] = 2.0 * np.sum(np.log(np.diag(ell).real))

    return FilterBank(
        n=n,
        sigma=float(sigma),
        period_s=ps,
        period_b=pb,
        kappas=kappas,
        log_prior=log_prior,
        grid_tau_s=grid_tau_s,
        grid_tau_b=grid_tau_b,
        grid_kappa=grid_kappa,
        factors=factors,
        logdets=logdets,
        cs_mats=cs_mats,
    )


def oracle_estimate(bank: FilterBank, y: np.ndarray, tau_s: int, tau_b: int, kappa: float) -> np.ndarray:
    """Conditional Wiener estimate C_s(tau_s) C_y^(-1) y for a known triple."""
    t = bank.triple_index(tau_s, tau_b, kappa)
    x = cho_solve((bank.factors[t], True), y, check_finite=False)
    return bank.cs_mats[tau_s] @ x


def oracle_estimate_direct(
    source: SourceModel,
    interference: SourceModel,
    sigma: float,
    y: np.ndarray,
    tau_s: np.ndarray,
    tau_b: np.ndarray,
    kappa: np.ndarray,
) -> np.ndarray:
    """Conditional Wiener estimates without a precomputed bank.

    y is (n, count) with per-column latents.  Columns sharing a triple
    are solved together against one factorization, built and released
    per group, so grids far too large to precompute stay usable as long
    as the distinct triples in the batch are few.
    """
    n, count = y.shape
    tau_s = np.asarray(tau_s)
    tau_b = np.asarray(tau_b)
    kappa = np.asarray(kappa, dtype=np.float64)
    out = np.empty_like(y)
    cs_cache: dict[int, np.ndarray] = {}
    eye = np.eye(n)
    for ts, tb in sorted({(int(a), int(b)) for a, b in zip(tau_s, tau_b)}):
        sel = (tau_s == ts) & (tau_b == tb)
        if ts not in cs_cache:
            cs_cache[ts] = conditional_covariance(source, ts, n)
        cb = conditional_covariance(interference, tb, n)
        for k in np.unique(kappa[sel]):
            cols = np.flatnonzero(sel & (kappa == k))
            cy = cs_cache[ts] + (k**2) * cb + (sigma**2) * eye
            ell = _chol(
                cy,
                f"observation covariance at (tau_s={ts}, tau_b={tb}, kappa={k:g})",
            )
            x = cho_solve((ell, True), y[:, cols], check_finite=False)
            out[:, cols] = cs_cache[ts] @ x
    return out


def oracle_mse_analytic(bank: FilterBank, tau_s: int, tau_b: int, kappa: float) -> float:
    """Expected per-sample error power of the conditional Wiener filter.

    (1/n) * [trace C_s - ||L^(-1) C_s||_F^2] with L the factor of C_y;
    the subtracted term is trace(C_s C_y^(-1) C_s).
    """
    t = bank.triple_index(tau_s, tau_b, kappa)
    cs = bank.cs_mats[tau_s]
    z = solve_triangular(bank.factors[t], cs, lower=True, check_finite=False)
    return float((np.trace(cs).real - np.sum(np.abs(z) ** 2)) / bank.n)


def log_posterior(bank: FilterBank, y: np.ndarray) -> np.ndarray:
    """Normalized log posterior over the grid given y.

    Returns (size,) for a single window or (size, count) for a batch.
    Each column is normalized with logsumexp, so entries are <= 0 and
    their exponentials sum to 1.
    """
    single = y.ndim == 1
    yy = y[:, None] if single else y
    ll = np.empty((bank.size, yy.shape[1]))
    for t in range(bank.size):
        w = solve_triangular(bank.factors[t], yy, lower=True, check_finite=False)
        quad = np.sum(np.abs(w) ** 2, axis=0)
        ll[t] = bank.log_prior[t] - quad - bank.logdets[t]
    ll -= logsumexp(ll, axis=0, keepdims=True)
    return ll[:, 0] if single else ll


def mmse_estimate(
    bank: FilterBank,
    y: np.ndarray,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
) -> np.ndarray:
    """Posterior-weighted sum of conditional estimates.

    Grid triples whose posterior weight is at or below ``weight_floor``
    are skipped; the largest skipped mass over the batch is logged at
    debug level.  With a one-triple grid this reduces exactly to
    ``oracle_estimate``.
    """
    single = y.ndim == 1
    yy = y[:, None] if single else y
    weights = np.exp(log_posterior(bank, yy))
    active = weights > weight_floor
    skipped = np.sum(weights * ~active, axis=0)
    if skipped.size and float(skipped.max()) > 0.0:
        logger.debug(
            "mmse_estimate skipped posterior mass up to %.3e below floor %.1e",
            float(skipped.max()),
            weight_floor,
        )

    nk = len(bank.kappas)
    per_s = bank.period_b * nk
    shat = np.zeros_like(yy)
    for tau_s in range(bank.period_s):
        acc = None
        for t in range(tau_s * per_s, (tau_s + 1) * per_s):
            cols = np.flatnonzero(active[t])
            if cols.size == 0:
                continue
            x = cho_solve((bank.factors[t], True), yy[:, cols], check_finite=False)
            if acc is None:
                acc = np.zeros_like(yy)
            acc[:, cols] += weights[t, cols] * x
        if acc is not None:
            shat += bank.cs_mats[tau_s] @ acc
    return shat[:, 0] if single else shat
