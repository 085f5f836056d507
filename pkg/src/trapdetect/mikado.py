"""Iterated estimate-and-classify detection with converging thresholds.

Each step updates the prior from the current labels, re-estimates the
brightnesses of the remaining sites, and classifies them against a pair
of thresholds that move toward each other. Sites classified empty are
removed from the linear system entirely; sites classified filled stay in
it with their occupancy pinned near one, which strips their coupling to
the still-undecided neighbors. The coinciding thresholds of the last
step force every site to a decision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ParameterError
from .geometry import MeasurementMatrix
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


class SiteLabel(IntEnum):
    EMPTY = 0
    FILLED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class ThresholdSchedule:
    """Linear threshold progression from (t_low_1, t_high_1) down to the
    coinciding final threshold."""

    t_low_1: float
    t_high_1: float
    t_final: float
    n_steps: int

    def __post_init__(self):
        if not self.t_low_1 < self.t_final < self.t_high_1:
            raise ParameterError(
                "thresholds must satisfy t_low_1 < t_final < t_high_1, got "
                f"({self.t_low_1}, {self.t_final}, {self.t_high_1})"
            )
        if self.n_steps < 2:
            raise ParameterError(f"n_steps must be >= 2, got {self.n_steps}")

    @classmethod
    def default(cls, mu: float, n_steps: int = 10) -> "ThresholdSchedule":
        """Standard schedule: start fully open at (0, mu), finish at 0.4 mu."""
        return cls(t_low_1=0.0, t_high_1=mu, t_final=0.4 * mu, n_steps=n_steps)


@dataclass(frozen=True)
class MikadoState:
    """Snapshot of one step, for traces and diagnostics."""

    step: int
    t_low: float
    t_high: float
    labels: np.ndarray  # SiteLabel value per site
    active_sites: np.ndarray  # indices estimated at this step
    estimate: np.ndarray  # full-length estimate, zero at eliminated sites


@dataclass(frozen=True)
class MikadoResult:
    estimate: Estimate
    occupancy: np.ndarray | None  # None when the final labeling is external
    labels: np.ndarray
    trace: list[MikadoState]


def thresholds_at(schedule: ThresholdSchedule, n: int) -> tuple[float, float]:
    """Threshold pair at step n (1-based); step N returns the coinciding
    final threshold exactly."""
    if not 1 <= n <= schedule.n_steps:
        raise ParameterError(
            f"step index {n} outside 1..{schedule.n_steps}"
        )
    if n == schedule.n_steps:
        return schedule.t_final, schedule.t_final
    f = (n - 1) / (schedule.n_steps - 1)
    return (
        schedule.t_low_1 + f * (schedule.t_final - schedule.t_low_1),
        schedule.t_high_1 + f * (schedule.t_final - schedule.t_high_1),
    )


def classify(
    xhat: np.ndarray, t_low: float, t_high: float, labels: np.ndarray
) -> np.ndarray:
    """Classify still-unknown sites against the threshold pair.

    Sites already labeled empty or filled are frozen and pass through.
    When the thresholds coincide, an estimate exactly on the threshold
    resolves to filled, so nothing can stay unknown at the final step.
    """
    if t_low > t_high:
        raise ParameterError(f"t_low {t_low} exceeds t_high {t_high}")
    out = labels.copy()
    open_ = labels == SiteLabel.UNKNOWN
    filled = xhat > t_high
    if t_low == t_high:
        filled |= xhat == t_high
    out[open_ & (xhat < t_low)] = SiteLabel.EMPTY
    out[open_ & filled] = SiteLabel.FILLED
    return out


def reduce_and_reprior(
    M: MeasurementMatrix,
    labels: np.ndarray,
    mu: float,
    sigma: float,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> tuple[MeasurementMatrix, PriorModel, np.ndarray]:
    """Drop eliminated sites from the forward map and re-derive the prior.

    Filled sites get occupancy 1 - clamp_eps (pinned near the expected
    brightness); unknown sites get 0.5 (maximal freedom). Returns the
    reduced matrix, the prior over active sites, and their indices.
    """
    active = np.flatnonzero(labels != SiteLabel.EMPTY)
    if active.size == 0:
        raise ParameterError("no active sites left; detection is complete")
    M_active = M.select_sites(active) if active.size < M.n_sites else M
    p = np.where(
        labels[active] == SiteLabel.FILLED, 1.0 - clamp_eps, 0.5
    )
    prior = PriorModel(p=p, mu=mu, sigma=sigma, clamp_eps=clamp_eps)
    return M_active, prior, active


FINAL_THRESHOLD_MODES = ("schedule", "optimized")


def mikado_estimate(
    y: Image,
    M: MeasurementMatrix,
    noise: NoiseSpec,
    mu: float,
    sigma: float,
    schedule: ThresholdSchedule,
    cfg: CGConfig,
    final_threshold_mode: str = "schedule",
    clamp_eps: float = DEFAULT_CLAMP_EPS,
    drop_tol: float = DEFAULT_DROP_TOL,
    fill_limit: int = DEFAULT_FILL_LIMIT,
    keep_trace: bool = True,
) -> MikadoResult:
    """Run the full estimate-classify sequence.

    In "schedule" mode the final coinciding threshold labels every
    remaining site and the returned occupancy is complete. In
    "optimized" mode the last step still estimates but leaves the final
    labeling to the caller (benchmarks threshold the returned estimate
    against ground truth); occupancy is then None. Eliminated sites
    carry a zero estimate in the returned full-length vector.
    """
    if final_threshold_mode not in FINAL_THRESHOLD_MODES:
        raise ParameterError(
            f"final_threshold_mode must be one of {FINAL_THRESHOLD_MODES}, "
            f"got {final_threshold_mode!r}"
        )
    n_sites = M.n_sites
    labels = np.full(n_sites, SiteLabel.UNKNOWN, dtype=np.int8)
    est_full = np.zeros(n_sites)
    trace: list[MikadoState] = []
    iterations = 0
    residual = 0.0
    early_exit = False

    for step in range(1, schedule.n_steps + 1):
        if not (labels != SiteLabel.EMPTY).any():
            early_exit = True
            break
        M_a, prior, active = reduce_and_reprior(
            M, labels, mu, sigma, clamp_eps=clamp_eps
        )
        est = wiener_estimate(
            y, M_a, prior, noise, cfg, drop_tol=drop_tol, fill_limit=fill_limit
        )
        iterations += est.iterations
        residual = est.residual
        est_full = np.zeros(n_sites)
        est_full[active] = est.xhat
        t_low, t_high = thresholds_at(schedule, step)
        is_last = step == schedule.n_steps
        if not (is_last and final_threshold_mode == "optimized"):
            labels = classify(est_full, t_low, t_high, labels)
        if keep_trace:
            trace.append(
                MikadoState(
                    step=step,
                    t_low=t_low,
                    t_high=t_high,
                    labels=labels.copy(),
                    active_sites=active,
                    estimate=est_full.copy(),
                )
            )

    if final_threshold_mode == "schedule" or early_exit:
        occupancy = labels == SiteLabel.FILLED
    else:
        occupancy = None
    return MikadoResult(
        estimate=Estimate(xhat=est_full, iterations=iterations, residual=residual),
        occupancy=occupancy,
        labels=labels,
        trace=trace,
    )


TRACE_FIELDS = ["step", "t_low", "t_high", "site_index", "label", "xhat"]


def write_trace_csv(trace, path) -> None:
    """One row per (step, site): labels and estimates alongside the
    thresholds that produced them."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for state in trace:
            for site in range(state.labels.size):
                writer.writerow(
                    [
                        state.step,
                        repr(state.t_low),
                        repr(state.t_high),
                        site,
                        SiteLabel(state.labels[site]).name.lower(),
                        repr(float(state.estimate[site])),
                    ]
                )
