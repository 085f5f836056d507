"""Minimum-mean-squared-error linear estimation of site brightnesses.

The estimator solves the normal system

    (M^T Sn^-1 M + Sx^-1) (xhat - <x>) = M^T Sn^-1 (y - M <x>)

where Sx is the diagonal prior covariance of the brightnesses derived
from the occupancy probabilities, and Sn the diagonal noise covariance.
Subtracting the prior mean keeps the estimator unbiased. A dense
explicit-inverse oracle is provided for verification at small sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .geometry import MeasurementMatrix
from .simulate import Image, NoiseSpec, SceneTruth
from .sparse import CGConfig, SparseSym, solve_spd

DEFAULT_CLAMP_EPS = 1e-3
DEFAULT_DROP_TOL = 1e-3
DEFAULT_FILL_LIMIT = 1000


@dataclass(frozen=True)
class PriorModel:
    """Per-site occupancy probabilities and filled-site brightness moments.

    Probabilities are clamped below at clamp_eps so the prior covariance
    stays invertible for nominally-empty sites.
    """

    p: np.ndarray
    mu: float
    sigma: float
    clamp_eps: float = DEFAULT_CLAMP_EPS

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ParameterError(f"clamp_eps must be in (0, 0.5), got {self.clamp_eps}")
        p = np.atleast_1d(np.asarray(self.p, dtype=np.float64)).copy()
        if np.any(p < 0) or np.any(p > 1):
            raise ParameterError("occupancy probabilities must lie in [0, 1]")
        p = np.maximum(p, self.clamp_eps)
        if self.sigma == 0 and np.any(p >= 1.0):
            raise ParameterError(
                "sigma must be > 0 when any occupancy probability is 1"
            )
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n_sites, p, mu, sigma, clamp_eps=DEFAULT_CLAMP_EPS):
        return cls(p=np.full(n_sites, float(p)), mu=mu, sigma=sigma, clamp_eps=clamp_eps)

    @property
    def n_sites(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class MomentSet:
    """First and second moments feeding the normal system."""

    mean_x: np.ndarray  # photoelectrons per site
    var_x: np.ndarray  # photoelectrons^2 per site
    var_n: np.ndarray  # photoelectrons^2 per pixel

    def __post_init__(self):
        if np.any(self.var_x <= 0):
            raise ParameterError("prior brightness variance must be > 0 per site")
        if np.any(self.var_n < 0):
            raise ParameterError("noise variance must be >= 0 per pixel")


@dataclass(frozen=True)
class Estimate:
    """Brightness estimate with the stats of the solve that produced it."""

    xhat: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.xhat)):
            raise ParameterError("estimate contains non-finite entries")


def build_moments(
    M: MeasurementMatrix, prior: PriorModel, noise: NoiseSpec
) -> MomentSet:
    """Prior mean/variance per site and model noise variance per pixel.

    mean_x = p mu, var_x = p (1 - p) mu^2 + p sigma^2, and the noise
    variance combines atomic shot noise mu (M p), background shot noise,
    and squared read noise.
    """
    if prior.n_sites != M.n_sites:
        raise ParameterError(
            f"prior covers {prior.n_sites} sites, matrix expects {M.n_sites}"
        )
    p, mu, sigma = prior.p, prior.mu, prior.sigma
    mean_x = p * mu
    var_x = p * (1.0 - p) * mu**2 + p * sigma**2
    k = noise.background_for(M.n_pixels)
    var_n = mu * (M.matrix @ p) + k + noise.read_noise_sd**2
    return MomentSet(mean_x=mean_x, var_x=var_x, var_n=var_n)


def _inv_var_n(var_n: np.ndarray) -> np.ndarray:
    # Pixels with zero model variance carry no signal and no noise
    # (possible only with zero background and read noise outside every
    # PSF disk); weighting them by zero is exact.
    return np.where(var_n > 0, 1.0 / np.where(var_n > 0, var_n, 1.0), 0.0)


def assemble_system(
    M: MeasurementMatrix, moments: MomentSet, y: Image
) -> tuple[SparseSym, np.ndarray]:
    """Normal system of the estimation problem.

    The matrix has the sparsity pattern of M^T M plus the diagonal and is
    symmetric positive definite whenever var_x is positive.
    """
    if y.values.size != M.n_pixels:
        raise ParameterError(
            f"image has {y.values.size} pixels, matrix expects {M.n_pixels}"
        )
    inv_n = _inv_var_n(moments.var_n)
    weighted = M.matrix.multiply(inv_n[:, None]).tocsr()
    A = (M.matrix.T @ weighted) + sp.diags(1.0 / moments.var_x, format="csr")
    A = ((A + A.T) * 0.5).tocsr()
    rhs = M.matrix.T @ (inv_n * (y.values - M.matrix @ moments.mean_x))
    return SparseSym.from_scipy(A, validate=False), rhs


def estimate_from_moments(
    y: Image,
    M: MeasurementMatrix,
    moments: MomentSet,
    cfg: CGConfig,
    drop_tol: float = DEFAULT_DROP_TOL,
    fill_limit: int = DEFAULT_FILL_LIMIT,
) -> Estimate:
    A, rhs = assemble_system(M, moments, y)
    delta, iterations, residual = solve_spd(
        A, rhs, cfg, drop_tol=drop_tol, fill_limit=fill_limit
    )
    return Estimate(
        xhat=moments.mean_x + delta, iterations=iterations, residual=residual
    )


def wiener_estimate(
    y: Image,
    M: MeasurementMatrix,
    prior: PriorModel,
    noise: NoiseSpec,
    cfg: CGConfig,
    drop_tol: float = DEFAULT_DROP_TOL,
    fill_limit: int = DEFAULT_FILL_LIMIT,
) -> Estimate:
    """Sparse-path estimate: prior mean plus the normal-system solution."""
    moments = build_moments(M, prior, noise)
    return estimate_from_moments(
        y, M, moments, cfg, drop_tol=drop_tol, fill_limit=fill_limit
    )


DENSE_ORACLE_MAX_SITES = 2000


def dense_estimate_from_moments(
    y: Image, M: MeasurementMatrix, moments: MomentSet
) -> Estimate:
    """Dense estimate through the explicitly inverted filter matrix."""
    if M.n_sites > DENSE_ORACLE_MAX_SITES:
        raise ParameterError(
            f"dense oracle limited to {DENSE_ORACLE_MAX_SITES} sites, "
            f"got {M.n_sites}"
        )
    Md = M.matrix.toarray()
    inv_n = _inv_var_n(moments.var_n)
    A = Md.T @ (Md * inv_n[:, None]) + np.diag(1.0 / moments.var_x)
    H = np.linalg.inv(A) @ (Md.T * inv_n[None, :])
    xhat = moments.mean_x + H @ (y.values - Md @ moments.mean_x)
    return Estimate(xhat=xhat, iterations=0, residual=0.0)


def dense_oracle(
    y: Image, M: MeasurementMatrix, prior: PriorModel, noise: NoiseSpec
) -> Estimate:
    """Reference estimate via the explicit dense filter; verification only."""
    moments = build_moments(M, prior, noise)
    return dense_estimate_from_moments(y, M, moments)


def empirical_mse(estimates, truths) -> float:
    """Mean squared estimation error per site, averaged over realizations."""
    if len(estimates) == 0 or len(estimates) != len(truths):
        raise ParameterError("need equal-length, nonempty estimate/truth lists")
    total = 0.0
    for est, truth in zip(estimates, truths):
        err = est.xhat - truth.brightness
        if err.size != truth.n_sites:
            raise ParameterError("estimate/truth site counts differ")
        total += float(err @ err) / err.size
    return total / len(estimates)
