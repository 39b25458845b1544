"""Plain key=value run configuration with override and echo support.

A run is described by a flat dictionary of dotted keys.  Files hold one
``key = value`` pair per line ('#' comments allowed); command-line overrides
replace individual keys.  The fully resolved dictionary (defaults merged
with file and overrides, computed values substituted) is echoed back to
``resolved.cfg`` in the output directory so a run can be reproduced from its
artifacts alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grid import Grid, ScalarField, eigenfunction, stable_dt
from .noise import NoiseModel, build_noise
from .solver import SolverParams


class ConfigError(ValueError):
    """Bad key, bad value, or an unusable combination."""


EXPERIMENTS = ("simulate", "verify", "extinction", "denoise", "appendix")

DEFAULTS: dict[str, str] = {
    "experiment": "simulate",
    "grid.lengths": "1.0,1.0",
    "grid.counts": "33,33",
    "noise.K": "0",
    "noise.amplitude": "0.0",
    "noise.decay": "auto",
    "solver.lambda": "0.1",
    "solver.dt": "guard",
    "solver.T": "0.05",
    "solver.scheme": "explicit",
    "solver.theta": "1.0",
    "solver.record_stride": "auto",
    "mc.n_paths": "100",
    "mc.threads": "1",
    "seed": "12345",
    "output_dir": "out",
    "initial.kind": "eigenmode",  # eigenmode | ball | image | zeros
    "initial.mode": "1,1",
    "initial.amplitude": "1.0",
    "initial.ball_radius": "0.2",
    "initial.ball_height": "1.0",
    "initial.image": "",
    "extinction.threshold": "auto",
    "extinction.checkpoints": "10",
    "appendix.trials": "100",
    "denoise.bits": "8",
}


def parse_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = text.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def resolve(file_values: dict[str, str] | None = None, overrides: dict[str, str] | None = None) -> dict[str, str]:
    """Merge defaults <- file <- overrides, rejecting unknown keys."""
    merged = dict(DEFAULTS)
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key '{key}'")
            merged[key] = value
    return merged


def emit(values: dict[str, str], stream) -> None:
    for key in sorted(values):
        stream.write(f"{key} = {values[key]}\n")


def _get_float(values: dict[str, str], key: str) -> float:
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got '{values[key]}'") from exc


def _get_int(values: dict[str, str], key: str) -> int:
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got '{values[key]}'") from exc


def _get_tuple(values: dict[str, str], key: str, cast) -> tuple:
    try:
        return tuple(cast(part.strip()) for part in values[key].split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: bad list '{values[key]}'") from exc


@dataclass
class RunConfig:
    """Typed view of a resolved configuration, with builders for the domain objects."""

    values: dict[str, str]

    def __post_init__(self):
        if self.values["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def seed(self) -> int:
        return _get_int(self.values, "seed")

    @property
    def output_dir(self) -> str:
        return self.values["output_dir"]

    @property
    def n_paths(self) -> int:
        return _get_int(self.values, "mc.n_paths")

    @property
    def n_threads(self) -> int:
        return _get_int(self.values, "mc.threads")

    def grid(self) -> Grid:
        lengths = _get_tuple(self.values, "grid.lengths", float)
        counts = _get_tuple(self.values, "grid.counts", int)
        try:
            return Grid(lengths, counts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def noise(self, grid: Grid) -> NoiseModel:
        decay_raw = self.values["noise.decay"]
        decay = None if decay_raw == "auto" else float(decay_raw)
        try:
            return build_noise(grid, _get_int(self.values, "noise.K"), _get_float(self.values, "noise.amplitude"), decay)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def solver_params(self, grid: Grid) -> SolverParams:
        lam = _get_float(self.values, "solver.lambda")
        dt_raw = self.values["solver.dt"]
        if dt_raw == "guard":
            if not 0.0 < lam <= 1.0:
                raise ConfigError("solver.lambda must lie in (0, 1]")
            dt = stable_dt(grid, lam)
            self.values["solver.dt"] = repr(dt)  # echo the resolved value
        else:
            dt = _get_float(self.values, "solver.dt")
        stride_raw = self.values["solver.record_stride"]
        stride = None if stride_raw == "auto" else int(stride_raw)
        try:
            params = SolverParams(
                lam=lam,
                dt=dt,
                t_final=_get_float(self.values, "solver.T"),
                scheme=self.values["solver.scheme"],
                theta=_get_float(self.values, "solver.theta"),
                record_stride=stride,
            )
            params.check_grid(grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return params

    def initial_state(self, grid: Grid) -> ScalarField:
        kind = self.values["initial.kind"]
        if kind == "zeros":
            return ScalarField.zeros(grid)
        if kind == "eigenmode":
            mode = _get_tuple(self.values, "initial.mode", int)
            if len(mode) != grid.dim:
                raise ConfigError(f"initial.mode needs {grid.dim} components")
            amp = _get_float(self.values, "initial.amplitude")
            e, _ = eigenfunction(grid, mode)
            return ScalarField(grid, amp * e.values)
        if kind == "ball":
            radius = _get_float(self.values, "initial.ball_radius")
            height = _get_float(self.values, "initial.ball_height")
            if radius <= 0:
                raise ConfigError("initial.ball_radius must be positive")
            coords = grid.coordinates()
            center = tuple(L / 2 for L in grid.lengths)
            r_sq = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
            return ScalarField(grid, height * (r_sq <= radius**2).astype(float))
        if kind == "image":
            raise ConfigError("initial.kind=image is only valid for the denoise experiment")
        raise ConfigError(f"unknown initial.kind '{kind}'")

    @property
    def extinction_threshold(self) -> float | None:
        raw = self.values["extinction.threshold"]
        return None if raw == "auto" else float(raw)

    @property
    def extinction_checkpoints(self) -> int:
        return _get_int(self.values, "extinction.checkpoints")

    @property
    def appendix_trials(self) -> int:
        return _get_int(self.values, "appendix.trials")

    @property
    def denoise_bits(self) -> int:
        bits = _get_int(self.values, "denoise.bits")
        if bits not in (8, 16):
            raise ConfigError("denoise.bits must be 8 or 16")
        return bits

    @property
    def image_path(self) -> str:
        return self.values["initial.image"]
