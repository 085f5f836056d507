"""Run configuration: one validated bundle for every tunable.

Configs are JSON objects with a flat key set. Unknown keys are rejected
and every constraint violation names the offending key. Threshold
positions are stored as fractions of the mean brightness so a config
stays meaningful when mu changes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import ArrayGeometry, PSFModel, build_geometry
from .mikado import ThresholdSchedule
from .simulate import SHOT_MODES, NoiseSpec
from .sparse import CGConfig

ESTIMATORS = ("deconv", "apriori", "aposteriori", "mikado")

_DEFAULT_P_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class RunConfig:
    rows: int
    cols: int
    mu: float
    sigma: float
    p: float = 0.6
    a_over_rpsf: float = 1.25
    hwhm_px: float = 2.0
    margin_px: float = 10.0
    trunc_factor: float = 4.0
    background: float = 0.0
    read_noise_sd: float = 1.0
    shot_mode: str = "gaussian"
    estimator: str = "mikado"
    n_steps: int = 10
    t_low_frac: float = 0.0
    t_high_frac: float = 1.0
    t_final_frac: float = 0.4
    ilut_drop_tol: float = 1e-3
    ilut_fill_limit: int = 1000
    cg_rel_tol: float = 1e-2
    cg_max_iter: int = 500
    p_grid: tuple = _DEFAULT_P_GRID
    nsr: float | None = None
    bin_radius_px: float | None = None
    seed: int = 0

    @property
    def spacing_px(self) -> float:
        return self.a_over_rpsf * self.hwhm_px

    def geometry(self) -> ArrayGeometry:
        return build_geometry(self.rows, self.cols, self.spacing_px, self.margin_px)

    def psf(self) -> PSFModel:
        return PSFModel(
            hwhm_px=self.hwhm_px,
            truncation_radius_px=self.trunc_factor * self.hwhm_px,
        )

    def noise(self) -> NoiseSpec:
        return NoiseSpec(
            background=self.background,
            read_noise_sd=self.read_noise_sd,
            shot_mode=self.shot_mode,
        )

    def schedule(self, n_steps: int | None = None) -> ThresholdSchedule:
        return ThresholdSchedule(
            t_low_1=self.t_low_frac * self.mu,
            t_high_1=self.t_high_frac * self.mu,
            t_final=self.t_final_frac * self.mu,
            n_steps=self.n_steps if n_steps is None else n_steps,
        )

    def cg(self) -> CGConfig:
        return CGConfig(rel_tol=self.cg_rel_tol, max_iter=self.cg_max_iter)


_INT_KEYS = {"rows", "cols", "n_steps", "ilut_fill_limit", "cg_max_iter", "seed"}
_FLOAT_KEYS = {
    "mu",
    "sigma",
    "p",
    "a_over_rpsf",
    "hwhm_px",
    "margin_px",
    "trunc_factor",
    "background",
    "read_noise_sd",
    "t_low_frac",
    "t_high_frac",
    "t_final_frac",
    "ilut_drop_tol",
    "cg_rel_tol",
}
_OPTIONAL_FLOAT_KEYS = {"nsr", "bin_radius_px"}
_STR_KEYS = {"shot_mode", "estimator"}
_REQUIRED_KEYS = ("rows", "cols", "mu")
_ALL_KEYS = (
    _INT_KEYS | _FLOAT_KEYS | _OPTIONAL_FLOAT_KEYS | _STR_KEYS | {"p_grid"}
)


def _coerce_int(key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", key=key)
    return value


def _coerce_float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=key)
    return float(value)


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a JSON config, applying defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    for key in raw:
        if key not in _ALL_KEYS:
            raise ConfigError("unknown key", key=key)
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError("required key missing", key=key)

    kwargs = {}
    for key, value in raw.items():
        if key in _INT_KEYS:
            kwargs[key] = _coerce_int(key, value)
        elif key in _FLOAT_KEYS:
            kwargs[key] = _coerce_float(key, value)
        elif key in _OPTIONAL_FLOAT_KEYS:
            kwargs[key] = None if value is None else _coerce_float(key, value)
        elif key in _STR_KEYS:
            if not isinstance(value, str):
                raise ConfigError(f"expected a string, got {value!r}", key=key)
            kwargs[key] = value
        elif key == "p_grid":
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a nonempty list", key=key)
            kwargs[key] = tuple(_coerce_float(key, v) for v in value)

    if "sigma" not in kwargs:
        kwargs["sigma"] = kwargs["mu"] / 10.0

    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    def positive(key):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"must be > 0, got {getattr(cfg, key)}", key=key)

    def nonnegative(key):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"must be >= 0, got {getattr(cfg, key)}", key=key)

    for key in ("rows", "cols", "mu", "a_over_rpsf", "hwhm_px", "margin_px"):
        positive(key)
    for key in ("sigma", "background", "read_noise_sd", "ilut_drop_tol"):
        nonnegative(key)
    if cfg.trunc_factor < 3.0:
        raise ConfigError(
            f"must be >= 3 half widths, got {cfg.trunc_factor}", key="trunc_factor"
        )
    if not 0.0 <= cfg.p <= 1.0:
        raise ConfigError(f"must lie in [0, 1], got {cfg.p}", key="p")
    if cfg.shot_mode not in SHOT_MODES:
        raise ConfigError(
            f"must be one of {SHOT_MODES}, got {cfg.shot_mode!r}", key="shot_mode"
        )
    if cfg.estimator not in ESTIMATORS:
        raise ConfigError(
            f"must be one of {ESTIMATORS}, got {cfg.estimator!r}", key="estimator"
        )
    if cfg.n_steps < 2:
        raise ConfigError(f"must be >= 2, got {cfg.n_steps}", key="n_steps")
    if not cfg.t_low_frac < cfg.t_final_frac < cfg.t_high_frac:
        raise ConfigError(
            "threshold fractions must satisfy t_low_frac < t_final_frac "
            f"< t_high_frac, got ({cfg.t_low_frac}, {cfg.t_final_frac}, "
            f"{cfg.t_high_frac})",
            key="t_final_frac",
        )
    if cfg.ilut_fill_limit < 1:
        raise ConfigError(
            f"must be >= 1, got {cfg.ilut_fill_limit}", key="ilut_fill_limit"
        )
    if not 0.0 < cfg.cg_rel_tol < 1.0:
        raise ConfigError(
            f"must be in (0, 1), got {cfg.cg_rel_tol}", key="cg_rel_tol"
        )
    if cfg.cg_max_iter < 1:
        raise ConfigError(f"must be >= 1, got {cfg.cg_max_iter}", key="cg_max_iter")
    for v in cfg.p_grid:
        if not 0.0 < v < 1.0:
            raise ConfigError(f"values must lie in (0, 1), got {v}", key="p_grid")
    if cfg.nsr is not None and cfg.nsr < 0:
        raise ConfigError(f"must be >= 0, got {cfg.nsr}", key="nsr")
    if cfg.bin_radius_px is not None and not cfg.bin_radius_px > 0:
        raise ConfigError(f"must be > 0, got {cfg.bin_radius_px}", key="bin_radius_px")


def serialize_config(cfg: RunConfig) -> str:
    """Emit a config as JSON; parse(serialize(cfg)) reproduces cfg."""
    d = dataclasses.asdict(cfg)
    d["p_grid"] = list(cfg.p_grid)
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
