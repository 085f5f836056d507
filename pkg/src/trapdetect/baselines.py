"""Comparison estimators: deconvolution with binning, the uniform-prior
scan, and the two-pass posterior-update estimator.

The uniform-prior ("a priori") estimator scans a grid of occupancy
probabilities and keeps the estimate whose brightness histogram shows
the widest empty/filled separation. The posterior-update
("a posteriori") estimator refines it: a two-component mixture fit on
the first-pass estimates yields per-site occupancy probabilities for a
second solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, ParameterError
from .geometry import ArrayGeometry, MeasurementMatrix, PSFModel
from .simulate import Image, NoiseSpec
from .sparse import CGConfig
from .wiener import (
    DEFAULT_CLAMP_EPS,
    DEFAULT_DROP_TOL,
    DEFAULT_FILL_LIMIT,
    Estimate,
    PriorModel,
    wiener_estimate,
)

DEFAULT_P_GRID = tuple(np.round(np.arange(0.1, 0.95, 0.1), 2))
GMM_SPLIT_FRACTION = 0.4  # of mu; shared with the final mikado threshold


# ---------------------------------------------------------------------------
# Wiener deconvolution + binning
# ---------------------------------------------------------------------------


def _psf_kernel(psf: PSFModel) -> np.ndarray:
    """Unit-sum PSF stencil sampled at pixel centers, matching the
    measurement-matrix column convention for an integer-aligned site."""
    radius = int(math.floor(psf.truncation_radius_px))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    dr, dc = np.meshgrid(offsets, offsets, indexing="ij")
    d2 = dr**2 + dc**2
    kern = np.exp(-math.log(2.0) * d2 / psf.hwhm_px**2)
    kern[d2 > psf.truncation_radius_px**2] = 0.0
    return kern / kern.sum()


def default_nsr(y: Image, noise: NoiseSpec) -> float:
    """Measured inverse signal-to-noise ratio used as the regularizer."""
    power = float(y.values @ y.values)
    if power == 0.0:
        return 0.0
    return noise.read_noise_sd**2 * y.values.size / power


def deconvolve_and_bin(
    y: Image,
    psf: PSFModel,
    geom: ArrayGeometry,
    nsr: float,
    bin_radius_px: float | None = None,
) -> np.ndarray:
    """Frequency-domain deconvolution followed by binning around sites.

    The image is padded to the next power of two with edge replication
    to suppress wrap-around at the array border, filtered with
    conj(P) / (|P|^2 + nsr), and the deconvolved pixels within
    bin_radius of each site center are summed. Default bin radius is
    half the site spacing.
    """
    if nsr < 0:
        raise ParameterError(f"nsr must be >= 0, got {nsr}")
    if bin_radius_px is None:
        bin_radius_px = geom.spacing_px / 2.0
    h, w = y.height, y.width
    size = 1 << max(h, w).bit_length()
    pad_top = (size - h) // 2
    pad_left = (size - w) // 2
    padded = np.pad(
        y.as_2d(),
        ((pad_top, size - h - pad_top), (pad_left, size - w - pad_left)),
        mode="edge",
    )

    kern = _psf_kernel(psf)
    radius = kern.shape[0] // 2
    kernel_fft = np.zeros((size, size))
    for i in range(kern.shape[0]):
        for j in range(kern.shape[1]):
            kernel_fft[(i - radius) % size, (j - radius) % size] = kern[i, j]
    transfer = np.fft.fft2(kernel_fft)
    wiener = np.conj(transfer) / (np.abs(transfer) ** 2 + nsr)
    deconv = np.fft.ifft2(np.fft.fft2(padded) * wiener).real
    deconv = deconv[pad_top : pad_top + h, pad_left : pad_left + w]

    out = np.empty(geom.n_sites)
    for j in range(geom.n_sites):
        cr, cc = geom.site_centers[j]
        r0 = max(math.ceil(cr - bin_radius_px), 0)
        r1 = min(math.floor(cr + bin_radius_px), h - 1)
        c0 = max(math.ceil(cc - bin_radius_px), 0)
        c1 = min(math.floor(cc + bin_radius_px), w - 1)
        pr = np.arange(r0, r1 + 1, dtype=np.float64)
        pc = np.arange(c0, c1 + 1, dtype=np.float64)
        dr, dc = np.meshgrid(pr - cr, pc - cc, indexing="ij")
        inside = dr**2 + dc**2 <= bin_radius_px**2
        out[j] = deconv[r0 : r1 + 1, c0 : c1 + 1][inside].sum()
    return out


# ---------------------------------------------------------------------------
# Histogram separation
# ---------------------------------------------------------------------------


def otsu_separation(values: np.ndarray, bins: int = 256) -> float:
    """Maximal between-class variance of a two-way split of the histogram.

    Parameter-free bimodality score used to pick the best uniform
    occupancy probability.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return 0.0
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    total = counts.sum()
    w0 = np.cumsum(counts)[:-1]
    w1 = total - w0
    m0 = np.cumsum(counts * centers)[:-1]
    m1 = m0[-1] + counts[-1] * centers[-1] - m0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return 0.0
    mu0 = m0[valid] / w0[valid]
    mu1 = m1[valid] / w1[valid]
    between = w0[valid] * w1[valid] * (mu0 - mu1) ** 2 / total**2
    return float(between.max())


def apriori_estimate(
    y: Image,
    M: MeasurementMatrix,
    noise: NoiseSpec,
    mu: float,
    sigma: float,
    p_grid=DEFAULT_P_GRID,
    cfg: CGConfig = CGConfig(),
    drop_tol: float = DEFAULT_DROP_TOL,
    fill_limit: int = DEFAULT_FILL_LIMIT,
) -> tuple[Estimate, float]:
    """Uniform-prior estimate at the grid probability that maximizes the
    empty/filled separation of the estimate histogram."""
    p_grid = list(p_grid)
    if not p_grid:
        raise ParameterError("p_grid must be nonempty")
    if any(not 0.0 < p < 1.0 for p in p_grid):
        raise ParameterError("p_grid values must lie in (0, 1)")
    best = None
    best_sep = -np.inf
    best_p = None
    for p in p_grid:
        prior = PriorModel.uniform(M.n_sites, p, mu, sigma)
        est = wiener_estimate(
            y, M, prior, noise, cfg, drop_tol=drop_tol, fill_limit=fill_limit
        )
        sep = otsu_separation(est.xhat)
        if sep > best_sep:
            best, best_sep, best_p = est, sep, p
    return best, best_p


# ---------------------------------------------------------------------------
# Two-component mixture fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GMMFit:
    """One-dimensional two-component Gaussian mixture, empty mode first."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik: float
    n_iter: int

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ParameterError("mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ParameterError("mixture variances must be > 0")
        if self.means[0] > self.means[1]:
            raise ParameterError("mixture means must be ordered")


def _gauss_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def fit_gmm2(
    values: np.ndarray,
    init_split: float,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> GMMFit:
    """EM fit of a two-component mixture, initialized by thresholding the
    values at init_split. Raises FitError when a component collapses.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 4:
        raise ParameterError(f"need at least 4 values, got {values.size}")
    spread = float(values.max() - values.min()) ** 2
    var_floor = 1e-12 * spread
    if spread == 0.0:
        raise FitError("all values identical; mixture components collapse")

    groups = [values[values < init_split], values[values >= init_split]]
    weights = np.empty(2)
    means = np.empty(2)
    variances = np.empty(2)
    for c, g in enumerate(groups):
        weights[c] = max(g.size, 1) / values.size
        means[c] = g.mean() if g.size else init_split
        variances[c] = g.var() if g.size >= 2 else spread / 4.0
        variances[c] = max(variances[c], max(var_floor, 1e-12))
    weights /= weights.sum()

    loglik = -np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        log_resp = np.stack(
            [
                np.log(weights[c]) + _gauss_logpdf(values, means[c], variances[c])
                for c in range(2)
            ]
        )
        log_norm = np.logaddexp(log_resp[0], log_resp[1])
        new_loglik = float(log_norm.sum())
        # EM guarantees a non-decreasing likelihood; anything else is a bug
        assert new_loglik >= loglik - 1e-9 * max(abs(loglik), 1.0), (
            f"log-likelihood decreased: {loglik} -> {new_loglik}"
        )
        resp = np.exp(log_resp - log_norm)
        nk = resp.sum(axis=1)
        if np.any(nk <= 0):
            raise FitError("a mixture component lost all responsibility")
        weights = nk / values.size
        means = resp @ values / nk
        variances = (resp * (values - means[:, None]) ** 2).sum(axis=1) / nk
        if np.any(variances < var_floor):
            raise FitError("mixture component collapsed to zero variance")
        converged = new_loglik - loglik < tol * abs(new_loglik)
        loglik = new_loglik
        if converged:
            break

    order = np.argsort(means)
    return GMMFit(
        weights=weights[order],
        means=means[order],
        variances=variances[order],
        loglik=loglik,
        n_iter=n_iter,
    )


def posterior_probabilities(
    fit: GMMFit, values: np.ndarray, clamp_eps: float = DEFAULT_CLAMP_EPS
) -> np.ndarray:
    """Responsibility of the filled (high-mean) component per value,
    clamped into [clamp_eps, 1 - clamp_eps]."""
    log_resp = np.stack(
        [
            np.log(fit.weights[c])
            + _gauss_logpdf(values, fit.means[c], fit.variances[c])
            for c in range(2)
        ]
    )
    resp_filled = np.exp(log_resp[1] - np.logaddexp(log_resp[0], log_resp[1]))
    return np.clip(resp_filled, clamp_eps, 1.0 - clamp_eps)


def aposteriori_estimate(
    y: Image,
    M: MeasurementMatrix,
    noise: NoiseSpec,
    mu: float,
    sigma: float,
    cfg: CGConfig = CGConfig(),
    p_grid=DEFAULT_P_GRID,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
    drop_tol: float = DEFAULT_DROP_TOL,
    fill_limit: int = DEFAULT_FILL_LIMIT,
) -> Estimate:
    """Second-pass estimate under per-site posterior occupancies.

    The first pass is the uniform-prior scan; a two-component mixture on
    its estimates converts brightness into occupancy probability, and
    the filter runs once more with that per-site prior.
    """
    first, _ = apriori_estimate(
        y, M, noise, mu, sigma, p_grid, cfg, drop_tol=drop_tol, fill_limit=fill_limit
    )
    fit = fit_gmm2(first.xhat, init_split=GMM_SPLIT_FRACTION * mu)
    p_post = posterior_probabilities(fit, first.xhat, clamp_eps=clamp_eps)
    prior = PriorModel(p=p_post, mu=mu, sigma=sigma, clamp_eps=clamp_eps)
    return wiener_estimate(
        y, M, prior, noise, cfg, drop_tol=drop_tol, fill_limit=fill_limit
    )
