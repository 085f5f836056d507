"""Ground-truth scenes and noisy synthetic images of the trap array.

Images follow the linear forward model: expected pixel values are the
measurement matrix applied to the site brightnesses, plus a background.
The corruption step emits background-subtracted images, so every
estimator downstream consumes data whose expectation is signal only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import MeasurementMatrix

SHOT_MODES = ("poisson", "gaussian")


@dataclass(frozen=True)
class NoiseSpec:
    """Pixel noise model: background level, camera read noise, and the
    law used for the shot-noise contribution."""

    background: float | np.ndarray = 0.0
    read_noise_sd: float = 1.0
    shot_mode: str = "gaussian"

    def __post_init__(self):
        if np.any(np.asarray(self.background) < 0):
            raise ParameterError("background must be >= 0")
        if self.read_noise_sd < 0:
            raise ParameterError("read_noise_sd must be >= 0")
        if self.shot_mode not in SHOT_MODES:
            raise ParameterError(
                f"shot_mode must be one of {SHOT_MODES}, got {self.shot_mode!r}"
            )

    def background_for(self, n_pixels: int) -> np.ndarray:
        k = np.asarray(self.background, dtype=np.float64)
        if k.ndim == 0:
            return np.full(n_pixels, float(k))
        if k.shape != (n_pixels,):
            raise ParameterError(
                f"per-pixel background has length {k.shape}, expected {n_pixels}"
            )
        return k


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth for one simulated realization."""

    occupied: np.ndarray  # bool per site
    brightness: np.ndarray  # photoelectrons per site, 0 where empty
    seed: object = None

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool)
        b = np.asarray(self.brightness, dtype=np.float64)
        if occ.shape != b.shape:
            raise ParameterError("occupied and brightness must have equal length")
        if np.any(b[~occ] != 0.0):
            raise ParameterError("empty sites must have zero brightness")
        if np.any(b[occ] <= 0.0):
            raise ParameterError("occupied sites must have positive brightness")
        occ.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "brightness", b)

    @property
    def n_sites(self) -> int:
        return self.occupied.size


@dataclass(frozen=True)
class Image:
    """Flat, row-major pixel vector with its frame dimensions."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size != self.height * self.width:
            raise ParameterError(
                f"values must be a flat vector of length {self.height * self.width}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_2d(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width)


def sample_scene(n_sites: int, p, mu: float, sigma: float, seed) -> SceneTruth:
    """Draw occupancies and brightnesses for one realization.

    Occupancy is Bernoulli per site; the brightness of occupied sites is
    normal with mean mu and sd sigma, truncated to positive values by
    resampling (no point mass at zero).
    """
    p_arr = np.broadcast_to(np.asarray(p, dtype=np.float64), (n_sites,))
    if np.any(p_arr < 0) or np.any(p_arr > 1):
        raise ParameterError("occupancy probabilities must lie in [0, 1]")
    if not mu > 0:
        raise ParameterError("mu must be > 0")
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")

    rng = np.random.default_rng(seed)
    occupied = rng.random(n_sites) < p_arr
    brightness = np.zeros(n_sites)
    n_occ = int(occupied.sum())
    if n_occ:
        draws = rng.normal(mu, sigma, size=n_occ)
        while True:
            bad = draws <= 0
            if not bad.any():
                break
            draws[bad] = rng.normal(mu, sigma, size=int(bad.sum()))
        brightness[occupied] = draws
    return SceneTruth(occupied=occupied, brightness=brightness, seed=seed)


def render_clean(M: MeasurementMatrix, scene: SceneTruth, noise: NoiseSpec) -> Image:
    """Noise-free expected image: forward map of the brightnesses plus
    the background."""
    if scene.n_sites != M.n_sites:
        raise ParameterError(
            f"scene has {scene.n_sites} sites, matrix expects {M.n_sites}"
        )
    k = noise.background_for(M.n_pixels)
    values = M.matrix @ scene.brightness + k
    return Image(height=M.image_height, width=M.image_width, values=values)


def corrupt(image: Image, noise: NoiseSpec, seed) -> Image:
    """Apply shot noise and read noise, then subtract the background.

    The input is the clean image including background (the shot-noise
    rate). The output has expectation equal to the background-free
    signal in both modes, with per-pixel variance rate + read_noise_sd^2.
    """
    rng = np.random.default_rng(seed)
    rate = image.values
    k = noise.background_for(rate.size)
    r = noise.read_noise_sd
    if noise.shot_mode == "poisson":
        if np.any(rate < 0):
            raise ParameterError("poisson shot noise requires a nonnegative image")
        out = rng.poisson(rate).astype(np.float64) - k
        if r > 0:
            out += rng.normal(0.0, r, size=rate.size)
    else:
        sd = np.sqrt(np.maximum(rate + r * r, 0.0))
        out = rate - k + rng.normal(0.0, 1.0, size=rate.size) * sd
    return Image(height=image.height, width=image.width, values=out)


def simulate_image(
    M: MeasurementMatrix,
    scene: SceneTruth,
    noise: NoiseSpec,
    seed,
) -> Image:
    """Render the clean image for a scene and corrupt it in one step."""
    return corrupt(render_clean(M, scene, noise), noise, seed)
