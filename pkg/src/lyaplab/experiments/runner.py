"""Run configured analyses, write CSV and JSON outputs, and the perturbation sweep."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from .._parallel import map_ordered
from ..boundedness import essential_boundedness_test, invariant_metric_search
from ..errors import BaseNotDegenerate, DomainError
from ..lyapunov import extremal_exponents
from ..measures import GridSpec, atom_structure, cesaro_stationary, defect_report, product_measure_deviation
from ..systems import BumpProfile, Composite, ConstantMatrix, GeneratorSet, Shear, shear_pair
from .config import ExperimentConfig

SCHEMA_VERSION = 1
SIGNIFICANCE_FLOOR = 1e-12  # round-off level of accumulated log norms per step
log = logging.getLogger("lyaplab")


def csv_header(cfg_hash: str) -> str:
    return f"lyaplab v{__version__}, config_hash={cfg_hash}"


# perturbation sweep ----------------------------------------------------------

@dataclass(frozen=True)
class ShearParams:
    axis: str = "both"  # both = vertical then horizontal
    center: float = 0.5
    radius: float = 0.25


def perturb(base: GeneratorSet, shear: ShearParams, s: float) -> GeneratorSet:
    """Replace the last generator f_k by f_k o h_s.

    For torus maps h_s is the shear (pair) of strength s; for constant
    matrices it is diag(e^s, e^-s).
    """
    f = base.generators[-1]
    if isinstance(f, ConstantMatrix):
        g = ConstantMatrix(f.M @ np.diag([math.exp(s), math.exp(-s)]))
    elif shear.axis == "both":
        g = Composite((shear_pair(shear.center, shear.radius, s), f))
    else:
        g = Composite((Shear(shear.axis, BumpProfile(shear.center, shear.radius, s)), f))
    return base.with_generator(base.k - 1, g)


@dataclass(frozen=True)
class SweepRow:
    strength: float
    lambda_plus: float
    lambda_plus_stderr: float
    fraction_significant: float
    per_seed: tuple[tuple[float, float], ...]  # (lambda_plus, stderr) per seed
    invariance_defect: float
    defect_slack: float

    def as_dict(self) -> dict:
        return {"strength": self.strength, "lambda_plus": self.lambda_plus,
                "lambda_plus_stderr": self.lambda_plus_stderr,
                "fraction_significant": self.fraction_significant,
                "per_seed": [list(p) for p in self.per_seed],
                "invariance_defect": self.invariance_defect, "defect_slack": self.defect_slack}


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    monotone_evidence: bool
    base_lambda: float | None
    base_stderr: float | None

    def as_dict(self) -> dict:
        return {"rows": [r.as_dict() for r in self.rows], "monotone_evidence": self.monotone_evidence,
                "base_lambda": self.base_lambda, "base_stderr": self.base_stderr}


def _seed_runs(systems: list[GeneratorSet], seeds: list[int], n: int, n_samples: int, threads: int):
    jobs = [(i, s) for i in range(len(systems)) for s in seeds]
    res = map_ordered(lambda j: extremal_exponents(systems[j[0]], n, n_samples, j[1]), jobs, threads)
    return [res[i * len(seeds):(i + 1) * len(seeds)] for i in range(len(systems))]


def _summarize(ests) -> tuple[float, float, float, tuple]:
    lp = np.array([e.lambda_plus for e in ests])
    se = np.array([e.stderr_plus for e in ests])
    mean = float(lp.mean())
    stderr = float(lp.std(ddof=1) / math.sqrt(len(lp))) if len(lp) > 1 else float(se[0])
    frac = float(np.mean(lp > 3 * se + SIGNIFICANCE_FLOOR)) if len(lp) else 0.0
    return mean, stderr, frac, tuple(zip(lp.tolist(), se.tolist()))


def break_invariance_experiment(base: GeneratorSet, shear_params: ShearParams, strengths, seeds,
                                n: int = 100_000, n_samples: int = 8, grid: GridSpec | None = None,
                                n_iter: int = 20_000, n_particles: int = 8, threads: int = 1,
                                base_tol: float = 1e-3) -> SweepTable:
    """lambda_+ and the Cesaro-measure invariance defect along a strength sweep.

    A pre-run at strength 0 must give lambda_+ within 3 stderr (+ base_tol) of 0,
    otherwise BaseNotDegenerate is raised.
    """
    strengths = sorted(float(s) for s in strengths)
    seeds = list(seeds)
    if not strengths:
        return SweepTable((), True, None, None)
    if not seeds:
        raise DomainError("need at least one seed")
    if grid is None:
        grid = GridSpec(1, 1, 32) if base.trivial_base else GridSpec(4, 4, 32)
    systems = [perturb(base, shear_params, s) for s in strengths]
    need_pre = 0.0 not in strengths
    runs = _seed_runs(([perturb(base, shear_params, 0.0)] if need_pre else []) + systems,
                      seeds, n, n_samples, threads)
    pre_runs = runs[0] if need_pre else runs[strengths.index(0.0)]
    runs = runs[1:] if need_pre else runs
    b_mean, b_err, _, _ = _summarize(pre_runs)
    if abs(b_mean) > 3 * b_err + base_tol:
        raise BaseNotDegenerate(f"lambda_+ = {b_mean:.3g} +- {b_err:.2g} at strength 0")
    rows = []
    for s, gs, ests in zip(strengths, systems, runs):
        mean, err, frac, per = _summarize(ests)
        m = cesaro_stationary(gs, grid, n_iter, n_particles, seeds[0], threads=threads)
        d = max(defect_report(m, gs).invariance_defect)
        rows.append(SweepRow(s, mean, err, frac, per, d, 2.0 / grid.theta_bins))
    fr = [r.fraction_significant for r in rows]
    mono = all(b >= a for a, b in zip(fr, fr[1:]))
    return SweepTable(tuple(rows), mono, b_mean, b_err)


# config-driven runs --------------------------------------------------------------

@dataclass
class ExperimentReport:
    data: dict
    exit_code: int
    files: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_csv(path: Path, header: str, columns: list[str], rows: list[list]) -> None:
    lines = [f"# {header}", ",".join(columns)]
    lines += [",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the analyses listed in ``cfg.analyses`` and write outputs to ``cfg.out``.

    Exit code 2 when ``cfg.strict`` and any verdict is inconclusive, else 0.
    """
    gs = cfg.build_system()
    h = cfg.config_hash()
    header = csv_header(h)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    x0 = cfg.x0 if isinstance(cfg.x0, str) else tuple(float(v) for v in cfg.x0)
    results: dict = {}
    clock: dict = {}
    files: dict = {}
    inconclusive: list[str] = []

    def timed(name, fn):
        t = time.perf_counter()
        log.info("running %s", name)
        r = fn()
        clock[name] = time.perf_counter() - t
        return r

    if "exponents" in cfg.analyses:
        est = timed("exponents", lambda: extremal_exponents(gs, cfg.n, cfg.n_samples, cfg.seed, x0,
                                                             cfg.qr_stride, cfg.burn_in, cfg.threads))
        results["exponents"] = est.as_dict()
        p = out / "exponents.csv"
        _write_csv(p, header, ["quantity", "estimate", "stderr", "n", "n_samples", "burn_in"],
                   [["lambda_plus", est.lambda_plus, est.stderr_plus, est.n, est.n_samples, est.burn_in],
                    ["lambda_minus", est.lambda_minus, est.stderr_minus, est.n, est.n_samples, est.burn_in]])
        files["exponents"] = str(p)

    if "measure" in cfg.analyses:
        grid = cfg.grid()

        def meas():
            m = cesaro_stationary(gs, grid, cfg.n_iter, cfg.n_particles, cfg.seed, threads=cfg.threads)
            return m, defect_report(m, gs), atom_structure(m, cfg.window_bins), product_measure_deviation(m)

        m, dr, atoms, pdev = timed("measure", meas)
        results["measure"] = {"defects": dr.as_dict(), "defect_slack": 2.0 / grid.theta_bins,
                              "atoms": {"classification": atoms.classification,
                                        "min_per_cell_max_mass": atoms.min_max_mass,
                                        "empty_fraction": atoms.empty_fraction,
                                        "thresholds": atoms.thresholds},
                              "product_measure_deviation": pdev,
                              "half_split_tv": m.metadata["half_split_tv"]}
        p = out / "measure.csv"
        m.to_csv(p, (header,))
        files["measure"] = str(p)

    if "boundedness" in cfg.analyses:
        v = timed("boundedness", lambda: essential_boundedness_test(
            gs, cfg.K_list, cfg.N, cfg.bound_samples, cfg.delta, cfg.seed, x0, cfg.threads))
        results["boundedness"] = v.as_dict()
        if v.verdict == "inconclusive":
            inconclusive.append("boundedness")

    if "metric" in cfg.analyses:
        r = timed("metric", lambda: invariant_metric_search(gs, cfg.metric_orbit_len, cfg.metric_sweeps,
                                                            cfg.metric_tol, seed=cfg.seed))
        results["metric"] = r.as_dict()

    if "perturbation" in cfg.analyses:
        seeds = [cfg.seed + s for s in cfg.seed_list()]
        table = timed("perturbation", lambda: break_invariance_experiment(
            gs, ShearParams(cfg.shear_axis, cfg.shear_center, cfg.shear_radius), cfg.strengths, seeds,
            cfg.perturb_n, cfg.perturb_samples, threads=cfg.threads))
        results["perturbation"] = table.as_dict()
        p = out / "sweep.csv"
        _write_csv(p, header, ["strength", "lambda_plus", "lambda_plus_stderr", "fraction_significant",
                               "n_seeds", "invariance_defect", "defect_slack"],
                   [[r.strength, r.lambda_plus, r.lambda_plus_stderr, r.fraction_significant,
                     len(seeds), r.invariance_defect, r.defect_slack] for r in table.rows])
        files["sweep"] = str(p)

    code = 2 if (cfg.strict and inconclusive) else 0
    data = {"schema_version": SCHEMA_VERSION, "lyaplab_version": __version__, "config_hash": h,
            "seed": cfg.seed, "config": cfg.hashed_dict(), "system": gs.to_spec(), "results": results,
            "inconclusive": inconclusive, "exit_code": code, "wall_clock_s": clock}
    rep = ExperimentReport(data, code, files)
    p = out / "report.json"
    p.write_text(rep.to_json() + "\n")
    files["report"] = str(p)
    return rep
