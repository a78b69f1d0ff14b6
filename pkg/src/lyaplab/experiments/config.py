"""Experiment configuration: one flat mapping of documented keys.

Unknown keys are errors. The config hash covers every key that can change a
computed number, so ``threads`` and ``out`` are excluded from it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..boundedness import DEFAULT_DELTA, DEFAULT_K
from ..errors import ConfigError, DomainError
from ..measures import GridSpec
from ..systems import GeneratorSet, frame_from_spec, generator_from_spec
from ..zoo import get_system

ANALYSES = ("exponents", "measure", "boundedness", "metric", "perturbation")
UNHASHED = ("threads", "out")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    # system: a zoo name, or explicit generators
    system: str | None = None
    generators: list | None = None
    weights: list | None = None
    frame: dict | None = None
    ergodicity: str = "unknown"
    analyses: list = field(default_factory=lambda: ["exponents"])
    seed: int = 0
    # exponents
    n: int = 100_000
    n_samples: int = 8
    qr_stride: int = 16
    burn_in: int | None = None
    x0: str | list = "uniform"
    # measure
    x_cells: int | list = 1
    theta_bins: int = 64
    n_iter: int = 10_000
    n_particles: int = 16
    window_bins: int = 3
    # boundedness and metric search
    K_list: list = field(default_factory=lambda: list(DEFAULT_K))
    N: int = 100_000
    delta: float = DEFAULT_DELTA
    bound_samples: int = 8
    metric_orbit_len: int = 1000
    metric_sweeps: int = 500
    metric_tol: float = 1e-10
    # perturbation sweep
    shear_axis: str = "both"
    shear_center: float = 0.5
    shear_radius: float = 0.25
    strengths: list = field(default_factory=list)
    perturb_seeds: int | list = 20
    perturb_n: int = 100_000
    perturb_samples: int = 8
    # run control
    strict: bool = False
    threads: int = 1
    out: str = "out"

    def hashed_dict(self) -> dict:
        d = asdict(self)
        for k in UNHASHED:
            d.pop(k)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def build_system(self) -> GeneratorSet:
        try:
            if self.system is not None:
                gs = get_system(self.system)
                if self.weights is not None or self.frame is not None:
                    gs = GeneratorSet(gs.generators, self.weights or gs.weights,
                                      frame_from_spec(self.frame), gs.name, gs.ergodicity)
                return gs
            gens = [generator_from_spec(g, f"generators[{i}]") for i, g in enumerate(self.generators)]
            return GeneratorSet(gens, self.weights, frame_from_spec(self.frame), self.name, self.ergodicity)
        except DomainError as exc:
            raise ConfigError("system" if self.system is not None else "generators", str(exc)) from exc

    def grid(self) -> GridSpec:
        if isinstance(self.x_cells, int):
            return GridSpec(self.x_cells, 1, self.theta_bins)
        return GridSpec(int(self.x_cells[0]), int(self.x_cells[1]), self.theta_bins)

    def seed_list(self) -> list[int]:
        if isinstance(self.perturb_seeds, int):
            return list(range(self.perturb_seeds))
        return [int(s) for s in self.perturb_seeds]


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_POSITIVE = ("n", "n_samples", "qr_stride", "theta_bins", "n_iter", "n_particles", "window_bins", "N",
             "bound_samples", "metric_orbit_len", "perturb_n", "perturb_samples", "threads")


def _check_int(key, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for k in d:
        if k not in _FIELDS:
            raise ConfigError(k, "unknown key")
    cfg = ExperimentConfig(**d)
    if (cfg.system is None) == (cfg.generators is None):
        raise ConfigError("system", "give exactly one of 'system' or 'generators'")
    if cfg.generators is not None and (not isinstance(cfg.generators, list) or not cfg.generators):
        raise ConfigError("generators", "expected a nonempty list")
    if not isinstance(cfg.analyses, list) or any(a not in ANALYSES for a in cfg.analyses):
        raise ConfigError("analyses", f"entries must be among {ANALYSES}")
    for k in _POSITIVE:
        _check_int(k, getattr(cfg, k))
    _check_int("seed", cfg.seed, 0)
    _check_int("metric_sweeps", cfg.metric_sweeps, 0)
    if cfg.burn_in is not None:
        _check_int("burn_in", cfg.burn_in, 0)
    if isinstance(cfg.x0, str):
        if cfg.x0 != "uniform":
            raise ConfigError("x0", "expected 'uniform' or [x, y]")
    elif not (isinstance(cfg.x0, list) and len(cfg.x0) == 2):
        raise ConfigError("x0", "expected 'uniform' or [x, y]")
    if isinstance(cfg.x_cells, list):
        if len(cfg.x_cells) != 2:
            raise ConfigError("x_cells", "expected an integer or [nx, ny]")
        for v in cfg.x_cells:
            _check_int("x_cells", v)
    else:
        _check_int("x_cells", cfg.x_cells)
    if not isinstance(cfg.K_list, list) or not cfg.K_list or any(
            not isinstance(k, (int, float)) or k <= 0 for k in cfg.K_list):
        raise ConfigError("K_list", "expected a nonempty list of positive numbers")
    if not 0 < cfg.delta <= 1:
        raise ConfigError("delta", "must lie in (0, 1]")
    if cfg.shear_axis not in ("both", "horizontal", "vertical"):
        raise ConfigError("shear_axis", "expected 'both', 'horizontal' or 'vertical'")
    if not isinstance(cfg.strengths, list) or any(
            not isinstance(s, (int, float)) or s != s or abs(s) == float("inf") for s in cfg.strengths):
        raise ConfigError("strengths", "expected a finite list of numbers")
    if isinstance(cfg.perturb_seeds, int):
        _check_int("perturb_seeds", cfg.perturb_seeds)
    elif not isinstance(cfg.perturb_seeds, list) or not cfg.perturb_seeds:
        raise ConfigError("perturb_seeds", "expected a count or a nonempty list")
    if not isinstance(cfg.strict, bool):
        raise ConfigError("strict", "expected true or false")
    cfg.build_system()  # validates the system block
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc}") from exc
    if p.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return config_from_dict(data)
