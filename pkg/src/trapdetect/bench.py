"""Detection-error-rate machinery and the benchmark studies.

Studies are reproducible bit for bit: every simulated image derives its
RNG streams from (master seed, image index), so different estimators and
grid points see identical scenes when scored at the same indices.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from .baselines import (
    aposteriori_estimate,
    apriori_estimate,
    deconvolve_and_bin,
    default_nsr,
)
from .config import ESTIMATORS, RunConfig
from .errors import ParameterError
from .geometry import build_measurement_matrix
from .mikado import mikado_estimate
from .simulate import sample_scene, simulate_image
from .wiener import PriorModel, wiener_estimate

CSV_FIELDS = [
    "estimator",
    "a_over_rpsf",
    "mu",
    "sigma",
    "p",
    "n_steps",
    "ilut_tol",
    "ilut_fill",
    "n_images",
    "seed",
    "der_mean",
    "der_sd",
    "runtime_mean_s",
    "runtime_sd_s",
]
EXTRA_CSV_FIELDS = ["n_sites", "t_final_frac"]


@dataclass(frozen=True)
class BenchRecord:
    estimator: str
    a_over_rpsf: float
    mu: float
    sigma: float
    p: float
    n_steps: int
    ilut_tol: float
    ilut_fill: int
    n_images: int
    seed: int
    der_mean: float
    der_sd: float
    runtime_mean_s: float
    runtime_sd_s: float
    n_sites: int | None = None
    t_final_frac: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.der_mean <= 1.0:
            raise ParameterError(f"DER must lie in [0, 1], got {self.der_mean}")
        if self.n_images < 1:
            raise ParameterError(f"n_images must be >= 1, got {self.n_images}")


def detection_error_rate(pred, truth) -> float:
    """False positives plus false negatives, divided by the site count."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ParameterError(
            f"prediction and truth lengths differ: {pred.shape} vs {truth.shape}"
        )
    return float(np.count_nonzero(pred != truth)) / pred.size


def optimal_threshold(xhat, truth) -> tuple[float, float]:
    """Exact DER-minimizing threshold by scanning all cuts.

    A site is predicted filled when its estimate is >= the threshold.
    Ties between equally good cuts resolve toward the lower threshold;
    the reported threshold is the midpoint of the optimal gap.
    """
    xhat = np.asarray(xhat, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if xhat.size == 0 or xhat.size != truth.size:
        raise ParameterError("need equal-length, nonempty inputs")
    order = np.argsort(xhat, kind="stable")
    x_sorted = xhat[order]
    t_sorted = truth[order]
    n = xhat.size

    # errors(j) for the cut predicting sites with sort position >= j filled:
    # false negatives below the cut plus false positives at or above it.
    fn = np.concatenate([[0], np.cumsum(t_sorted)])
    fp_total = np.count_nonzero(~t_sorted)
    fp = fp_total - np.concatenate([[0], np.cumsum(~t_sorted)])
    errors = fn + fp

    # only cuts between distinct values are realizable
    realizable = np.ones(n + 1, dtype=bool)
    realizable[1:n] = x_sorted[1:] > x_sorted[:-1]
    errors_masked = np.where(realizable, errors, n + 1)
    j = int(np.argmin(errors_masked))  # argmin takes the first, lowest cut

    if j == 0:
        threshold = float(x_sorted[0])
    elif j == n:
        threshold = float(x_sorted[-1]) + 1.0
    else:
        threshold = float(0.5 * (x_sorted[j - 1] + x_sorted[j]))
    return threshold, float(errors[j]) / n


def log_linear_crossing(mu_values, der_values, target: float) -> float | None:
    """Interpolated mu where the DER curve crosses the target, linear in
    (log mu, log DER). DERs of zero are floored just below the smallest
    positive resolution of the data. None when there is no crossing."""
    mu_values = np.asarray(mu_values, dtype=np.float64)
    der_values = np.asarray(der_values, dtype=np.float64)
    positive = der_values[der_values > 0]
    floor = min(positive.min() if positive.size else target, target) / 10.0
    der = np.maximum(der_values, floor)
    for i in range(len(mu_values) - 1):
        d0, d1 = der[i], der[i + 1]
        if (d0 - target) == 0.0 or (d0 > target) == (d1 > target):
            if d0 == target:
                return float(mu_values[i])
            continue
        f = (math.log(target) - math.log(d0)) / (math.log(d1) - math.log(d0))
        return float(
            math.exp(
                math.log(mu_values[i])
                + f * (math.log(mu_values[i + 1]) - math.log(mu_values[i]))
            )
        )
    return None


# ---------------------------------------------------------------------------
# Estimator dispatch
# ---------------------------------------------------------------------------


def _scene_seed(seed: int, index: int):
    return [int(seed), int(index), 0]


def _noise_seed(seed: int, index: int):
    return [int(seed), int(index), 1]


def _simulate(cfg: RunConfig, M, index: int, seed: int):
    scene = sample_scene(M.n_sites, cfg.p, cfg.mu, cfg.sigma, _scene_seed(seed, index))
    y = simulate_image(M, scene, cfg.noise(), _noise_seed(seed, index))
    return scene, y


def run_estimator(
    estimator: str, y, M, geom, psf, cfg: RunConfig, n_steps: int | None = None
) -> np.ndarray:
    """Apply one estimator to an image; returns per-site brightness.

    The mikado estimator runs in optimized mode so the caller can score
    it with the DER-minimizing threshold like the other estimators.
    """
    if estimator == "deconv":
        nsr = cfg.nsr if cfg.nsr is not None else default_nsr(y, cfg.noise())
        return deconvolve_and_bin(y, psf, geom, nsr, cfg.bin_radius_px)
    if estimator == "apriori":
        est, _ = apriori_estimate(
            y,
            M,
            cfg.noise(),
            cfg.mu,
            cfg.sigma,
            cfg.p_grid,
            cfg.cg(),
            drop_tol=cfg.ilut_drop_tol,
            fill_limit=cfg.ilut_fill_limit,
        )
        return est.xhat
    if estimator == "aposteriori":
        est = aposteriori_estimate(
            y,
            M,
            cfg.noise(),
            cfg.mu,
            cfg.sigma,
            cfg.cg(),
            p_grid=cfg.p_grid,
            drop_tol=cfg.ilut_drop_tol,
            fill_limit=cfg.ilut_fill_limit,
        )
        return est.xhat
    if estimator == "mikado":
        result = mikado_estimate(
            y,
            M,
            cfg.noise(),
            cfg.mu,
            cfg.sigma,
            cfg.schedule(n_steps),
            cfg.cg(),
            final_threshold_mode="optimized",
            drop_tol=cfg.ilut_drop_tol,
            fill_limit=cfg.ilut_fill_limit,
            keep_trace=False,
        )
        return result.estimate.xhat
    raise ParameterError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def _single_prior_estimate(y, M, cfg: RunConfig) -> np.ndarray:
    """One generalized-filter solve at the configured occupancy; the
    runtime baseline for the uniform-prior estimator (the probability
    scan is a per-setup calibration, not per-image work)."""
    prior = PriorModel.uniform(M.n_sites, cfg.p, cfg.mu, cfg.sigma)
    est = wiener_estimate(
        y,
        M,
        prior,
        cfg.noise(),
        cfg.cg(),
        drop_tol=cfg.ilut_drop_tol,
        fill_limit=cfg.ilut_fill_limit,
    )
    return est.xhat


def _mean_sd(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, sd


def _record(cfg: RunConfig, estimator, n_images, seed, ders, times, **extra):
    der_mean, der_sd = _mean_sd(ders)
    rt_mean, rt_sd = _mean_sd(times)
    return BenchRecord(
        estimator=estimator,
        a_over_rpsf=cfg.a_over_rpsf,
        mu=cfg.mu,
        sigma=cfg.sigma,
        p=cfg.p,
        n_steps=extra.pop("n_steps", cfg.n_steps),
        ilut_tol=cfg.ilut_drop_tol,
        ilut_fill=cfg.ilut_fill_limit,
        n_images=n_images,
        seed=seed,
        der_mean=der_mean,
        der_sd=der_sd,
        runtime_mean_s=rt_mean,
        runtime_sd_s=rt_sd,
        **extra,
    )


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


def run_der_study(
    estimator: str, cfg: RunConfig, n_images: int, seed: int
) -> BenchRecord:
    """Detection error rate over independently simulated images, scored
    at the DER-minimizing threshold per image."""
    if estimator not in ESTIMATORS:
        raise ParameterError(f"unknown estimator {estimator!r}")
    geom = cfg.geometry()
    psf = cfg.psf()
    M = build_measurement_matrix(geom, psf)
    ders = []
    times = []
    for i in range(n_images):
        scene, y = _simulate(cfg, M, i, seed)
        t0 = time.perf_counter()
        xhat = run_estimator(estimator, y, M, geom, psf, cfg)
        times.append(time.perf_counter() - t0)
        _, der = optimal_threshold(xhat, scene.occupied)
        ders.append(der)
    return _record(cfg, estimator, n_images, seed, ders, times)


def der_locus(
    estimator: str,
    target_der: float,
    a_grid,
    mu_grid,
    cfg: RunConfig,
    n_images: int,
    seed: int,
) -> list[tuple[float, float]]:
    """Contour of (a / r_psf, mu) points where the DER crosses the target.

    Grid points with no crossing are omitted.
    """
    a_grid = list(a_grid)
    mu_grid = list(mu_grid)
    if sorted(a_grid) != a_grid or sorted(mu_grid) != mu_grid:
        raise ParameterError("grids must be sorted ascending")
    points = []
    for a in a_grid:
        ders = []
        for mu in mu_grid:
            c = dataclasses.replace(cfg, a_over_rpsf=a, mu=mu, sigma=mu / 10.0)
            ders.append(run_der_study(estimator, c, n_images, seed).der_mean)
        crossing = log_linear_crossing(mu_grid, ders, target_der)
        if crossing is not None:
            points.append((float(a), crossing))
    return points


def run_runtime_study(
    estimator: str,
    site_counts,
    cfg: RunConfig,
    n_images: int = 10,
    n_reps: int = 10,
    seed: int = 0,
) -> list[BenchRecord]:
    """Wall-clock estimator runtime against array size.

    Simulation and I/O are excluded; system assembly, factorization and
    all solves are included. Runs single-threaded, one warmup call per
    size before measuring. Site counts must be ascending perfect squares
    (square arrays).
    """
    counts = [int(c) for c in site_counts]
    if counts != sorted(counts):
        raise ParameterError("site_counts must be ascending")
    records = []
    for count in counts:
        side = math.isqrt(count)
        if side * side != count:
            raise ParameterError(
                f"site count {count} is not a perfect square"
            )
        c = dataclasses.replace(cfg, rows=side, cols=side)
        geom = c.geometry()
        psf = c.psf()
        M = build_measurement_matrix(geom, psf)

        def run_once(y):
            if estimator == "apriori":
                return _single_prior_estimate(y, M, c)
            return run_estimator(estimator, y, M, geom, psf, c)

        scene0, y0 = _simulate(c, M, 0, seed)
        run_once(y0)  # warmup: JIT compilation and caches
        times = []
        ders = []
        for i in range(n_images):
            scene, y = _simulate(c, M, i, seed)
            xhat = None
            for _ in range(n_reps):
                t0 = time.perf_counter()
                xhat = run_once(y)
                times.append(time.perf_counter() - t0)
            _, der = optimal_threshold(xhat, scene.occupied)
            ders.append(der)
        records.append(
            _record(c, estimator, n_images, seed, ders, times, n_sites=count)
        )
    return records


def run_tuning_study(
    n_steps_grid,
    t_final_grid,
    cfg: RunConfig,
    n_images: int,
    seed: int,
) -> list[BenchRecord]:
    """Schedule sensitivity: DER against the number of steps (scored at
    the DER-minimizing threshold) and against the final threshold
    position (scored by the schedule labeling itself, which is how the
    detector runs without ground truth). t_final_grid values are
    fractions of mu.
    """
    n_steps_grid = list(n_steps_grid)
    t_final_grid = list(t_final_grid)
    if not n_steps_grid or not t_final_grid:
        raise ParameterError("grids must be nonempty")
    geom = cfg.geometry()
    psf = cfg.psf()
    M = build_measurement_matrix(geom, psf)
    images = [_simulate(cfg, M, i, seed) for i in range(n_images)]

    records = []
    for n_steps in n_steps_grid:
        ders = []
        times = []
        for scene, y in images:
            t0 = time.perf_counter()
            xhat = run_estimator("mikado", y, M, geom, psf, cfg, n_steps=n_steps)
            times.append(time.perf_counter() - t0)
            _, der = optimal_threshold(xhat, scene.occupied)
            ders.append(der)
        records.append(
            _record(
                cfg,
                "mikado",
                n_images,
                seed,
                ders,
                times,
                n_steps=n_steps,
                t_final_frac=cfg.t_final_frac,
            )
        )

    for t_frac in t_final_grid:
        c = dataclasses.replace(cfg, t_final_frac=float(t_frac))
        ders = []
        times = []
        for scene, y in images:
            t0 = time.perf_counter()
            result = mikado_estimate(
                y,
                M,
                c.noise(),
                c.mu,
                c.sigma,
                c.schedule(),
                c.cg(),
                final_threshold_mode="schedule",
                drop_tol=c.ilut_drop_tol,
                fill_limit=c.ilut_fill_limit,
                keep_trace=False,
            )
            times.append(time.perf_counter() - t0)
            ders.append(detection_error_rate(result.occupancy, scene.occupied))
        records.append(
            _record(
                c,
                "mikado",
                n_images,
                seed,
                ders,
                times,
                t_final_frac=float(t_frac),
            )
        )
    return records


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_records_csv(records, path) -> None:
    """One record per row under the fixed header; the optional n_sites
    and t_final_frac columns are appended only when a record sets them."""
    records = list(records)
    extras = [
        f
        for f in EXTRA_CSV_FIELDS
        if any(getattr(r, f) is not None for r in records)
    ]
    fields = CSV_FIELDS + extras
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for r in records:
            row = []
            for f in fields:
                v = getattr(r, f)
                row.append("" if v is None else repr(v) if isinstance(v, float) else v)
            writer.writerow(row)


def read_records_csv(path) -> list[dict]:
    with open(path, "r", newline="") as fh:
        return list(csv.DictReader(fh))
