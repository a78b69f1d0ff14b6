"""Gridded measures on (phase cell x projective bin): Cesaro estimation of
stationary measures, stationarity and invariance defects, atom detection,
product-measure deviation and the two-matrix common-invariant-measure test.

Bins are centred: bin ``k`` covers ``[(k - 1/2) pi / nb, (k + 1/2) pi / nb)``
mod pi, so both coordinate axes sit at bin centres.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from ._parallel import map_ordered
from .errors import DomainError, IncompatibleGridError
from .linalg import ALGEBRAIC_TOL, as_matrix, is_unimodular, proj_act, proj_dist, wrap_angle
from .systems import GeneratorSet, WordSampler

PURPOSE_THETA = 2


@dataclass(frozen=True)
class GridSpec:
    """``nx * ny`` phase cells (cell = ix * ny + iy) times ``theta_bins`` bins."""

    nx: int = 1
    ny: int = 1
    theta_bins: int = 64

    def __post_init__(self):
        if min(self.nx, self.ny, self.theta_bins) < 1:
            raise DomainError(f"grid sizes must be positive, got {self}")

    @property
    def x_cells(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return self.x_cells, self.theta_bins

    def bin_centres(self) -> np.ndarray:
        return np.arange(self.theta_bins) * (math.pi / self.theta_bins)

    def as_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "theta_bins": self.theta_bins}


def tv(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance of two histograms with equal mass."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass(eq=False)
class GriddedMeasure:
    grid: GridSpec
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.grid.shape:
            raise IncompatibleGridError(f"weights have shape {w.shape}, grid expects {self.grid.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {w.sum()!r}, expected 1")
        self.weights = w

    @classmethod
    def from_counts(cls, grid: GridSpec, counts, metadata: dict | None = None) -> "GriddedMeasure":
        c = np.asarray(counts, dtype=float)
        return cls(grid, c / c.sum(), dict(metadata or {}))

    @classmethod
    def from_conditionals(cls, grid: GridSpec, cond, cell_mass=None,
                          metadata: dict | None = None) -> "GriddedMeasure":
        """Build from per-cell conditionals (rows) and cell masses (uniform by default)."""
        c = np.broadcast_to(np.asarray(cond, dtype=float), grid.shape)
        c = c / c.sum(axis=1, keepdims=True)
        mass = (np.full(grid.x_cells, 1.0 / grid.x_cells) if cell_mass is None
                else np.asarray(cell_mass, dtype=float) / np.sum(cell_mass))
        return cls(grid, c * mass[:, None], dict(metadata or {}))

    @classmethod
    def uniform(cls, grid: GridSpec) -> "GriddedMeasure":
        return cls(grid, np.full(grid.shape, 1.0 / (grid.x_cells * grid.theta_bins)), {"kind": "uniform"})

    @classmethod
    def point_mass(cls, grid: GridSpec, theta: float) -> "GriddedMeasure":
        """Lebesgue on cells times an atom at the bin containing ``theta``."""
        row = np.zeros(grid.theta_bins)
        row[K.bin_index(float(theta), grid.theta_bins)] = 1.0
        return cls.from_conditionals(grid, row, metadata={"kind": "point_mass", "theta": float(theta)})

    def cell_mass(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def theta_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def conditionals(self) -> tuple[np.ndarray, np.ndarray]:
        """(rows normalized to 1, mask of nonempty cells)."""
        mass = self.cell_mass()
        ok = mass > 0
        cond = np.zeros_like(self.weights)
        cond[ok] = self.weights[ok] / mass[ok, None]
        return cond, ok

    def marginal_deviation(self) -> float:
        """TV of the phase marginal from the uniform discretization of Lebesgue."""
        return tv(self.cell_mass(), np.full(self.grid.x_cells, 1.0 / self.grid.x_cells))

    def to_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        """Write header comments then ``cell,bin,weight`` rows for nonzero weights.

        Floats are written with ``repr`` so reading back is bit-exact.
        """
        lines = [f"# {h}" for h in header_lines]
        lines.append("# grid: " + json.dumps(self.grid.as_dict(), sort_keys=True))
        lines.append("# metadata: " + json.dumps(self.metadata, sort_keys=True, default=_jsonable))
        lines.append("cell,bin,weight")
        cells, bins = np.nonzero(self.weights)
        vals = self.weights[cells, bins].tolist()
        lines.extend(f"{c},{b},{v!r}" for c, b, v in zip(cells.tolist(), bins.tolist(), vals))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GriddedMeasure":
        grid = meta = None
        rows = []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# grid: "):
                grid = GridSpec(**json.loads(line[len("# grid: "):]))
            elif line.startswith("# metadata: "):
                meta = json.loads(line[len("# metadata: "):])
            elif line.startswith("#") or line == "cell,bin,weight" or not line:
                continue
            else:
                c, b, w = line.split(",")
                rows.append((int(c), int(b), float(w)))
        if grid is None:
            raise DomainError(f"{path}: missing '# grid:' header")
        w = np.zeros(grid.shape)
        for c, b, v in rows:
            w[c, b] = v
        return cls(grid, w, meta or {})


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def check_grid(grid: GridSpec, gs: GeneratorSet) -> None:
    if gs.trivial_base and grid.x_cells != 1:
        raise IncompatibleGridError(
            f"constant-matrix systems live on one phase cell, grid has {grid.x_cells}")


# Cesaro averages -----------------------------------------------------------

def cesaro_stationary(gs: GeneratorSet, grid: GridSpec, n_iter: int, n_particles: int, seed: int,
                      theta0: str | float = "uniform", threads: int = 1) -> GriddedMeasure:
    """Time-averaged occupation histogram of the projective skew product.

    Particle ``p`` uses substream ``(seed, p)``: its word, a uniform base point
    (torus systems) and, for ``theta0='uniform'``, a uniform starting angle.
    Counts are summed as integers, so the result does not depend on ``threads``.
    """
    if n_iter < 1 or n_particles < 1:
        raise DomainError("n_iter and n_particles must be >= 1")
    check_grid(grid, gs)
    lowered = gs.lowered
    nx, ny, nb = grid.nx, grid.ny, grid.theta_bins

    def run(rng_: range) -> np.ndarray:
        counts = np.zeros(grid.shape, dtype=np.int64)
        for p in rng_:
            s = WordSampler(seed, gs.weights, p)
            x, y = (0.0, 0.0) if gs.trivial_base else s.points(1)[0]
            t = (s.rng(PURPOSE_THETA).random() * math.pi if theta0 == "uniform"
                 else float(wrap_angle(float(theta0))))
            K.cesaro_particle(*lowered, s.word(n_iter), float(x), float(y), t, nx, ny, nb, counts)
        return counts

    half = n_particles // 2
    chunks = _split(0, half, threads) + _split(half, n_particles, threads)
    parts = map_ordered(run, chunks, threads)
    n_first = len(_split(0, half, threads))
    first = sum(parts[:n_first], np.zeros(grid.shape, dtype=np.int64))
    second = sum(parts[n_first:], np.zeros(grid.shape, dtype=np.int64))
    total = first + second
    spread = (tv(first / first.sum(), second / second.sum())
              if first.sum() > 0 and second.sum() > 0 else None)
    meta = {"kind": "cesaro", "n_iter": n_iter, "n_particles": n_particles, "seed": seed,
            "theta0": theta0, "half_split_tv": spread}
    return GriddedMeasure.from_counts(grid, total, meta)


def _split(lo: int, hi: int, parts: int) -> list[range]:
    if hi <= lo:
        return []
    parts = max(1, min(parts, hi - lo))
    edges = np.linspace(lo, hi, parts + 1).round().astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# defects -------------------------------------------------------------------

def push(m: GriddedMeasure, gs: GeneratorSet, i: int, sub: int = 4) -> np.ndarray:
    """Weights of the push-forward of ``m`` under the skew map of generator ``i``."""
    check_grid(m.grid, gs)
    out = np.zeros(m.grid.shape)
    K.push_measure(*gs.lowered, int(i), m.weights, m.grid.nx, m.grid.ny,
                   1 if gs.trivial_base else int(sub), out)
    return out


def invariance_defect(m: GriddedMeasure, gs: GeneratorSet, sub: int = 4) -> list[float]:
    return [tv(push(m, gs, i, sub), m.weights) for i in range(gs.k)]


def stationarity_defect(m: GriddedMeasure, gs: GeneratorSet, sub: int = 4) -> float:
    avg = sum(p * push(m, gs, i, sub) for i, p in enumerate(gs.weights))
    return tv(avg, m.weights)


@dataclass(frozen=True)
class DefectReport:
    stationarity_defect: float
    invariance_defect: tuple[float, ...]
    grid: GridSpec

    def as_dict(self) -> dict:
        return {"stationarity_defect": self.stationarity_defect,
                "invariance_defect": list(self.invariance_defect), "grid": self.grid.as_dict()}


def defect_report(m: GriddedMeasure, gs: GeneratorSet, sub: int = 4) -> DefectReport:
    pushes = [push(m, gs, i, sub) for i in range(gs.k)]
    avg = sum(p * q for p, q in zip(gs.weights, pushes))
    return DefectReport(tv(avg, m.weights), tuple(tv(q, m.weights) for q in pushes), m.grid)


# atoms and product structure ------------------------------------------------

@dataclass(frozen=True)
class AtomReport:
    classification: str  # single_atom_family | two_atom_family | diffuse
    per_cell_max_mass: np.ndarray
    per_cell_pair_mass: np.ndarray
    atom_locations: np.ndarray  # (cells, 2) window-centre angles, nan where absent
    empty_fraction: float
    thresholds: dict

    @property
    def min_max_mass(self) -> float:
        v = self.per_cell_max_mass[~np.isnan(self.per_cell_max_mass)]
        return float(v.min()) if len(v) else float("nan")


def _window_centre(c: np.ndarray, start: np.ndarray, w: int) -> np.ndarray:
    """Mass-weighted centre (in bins) of the window starting at ``start`` in each row."""
    off = np.arange(w)
    idx = (start[:, None] + off) % c.shape[1]
    mass = np.take_along_axis(c, idx, axis=1)
    tot = mass.sum(axis=1)
    mid = np.where(tot > 0, (mass * off).sum(axis=1) / np.where(tot > 0, tot, 1.0), (w - 1) / 2)
    return start + mid


def atom_structure(m: GriddedMeasure, window_bins: int = 3, single: float = 0.9, pair: float = 0.9,
                   min_atom: float = 0.1, cell_fraction: float = 0.95) -> AtomReport:
    """Detect atom families in the per-cell conditionals.

    A cell counts for the single family when one window holds >= ``single``,
    for the two-atom family when two disjoint windows, each >= ``min_atom``,
    hold >= ``pair`` together. A family is reported when at least
    ``cell_fraction`` of the nonempty cells qualify. Empty cells are skipped.
    """
    nb = m.grid.theta_bins
    if not 1 <= window_bins <= nb:
        raise DomainError(f"window_bins must lie in [1, {nb}]")
    cond, ok = m.conditionals()
    c = np.ascontiguousarray(cond[ok])
    n = len(c)
    best, pm = np.zeros(n), np.zeros(n)
    loc, loc2 = np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)
    K.window_scan(c, int(window_bins), float(min_atom), best, loc, pm, loc2)
    atoms = np.full((m.grid.x_cells, 2), np.nan)
    atoms[ok, 0] = wrap_angle(_window_centre(c, loc, window_bins) * math.pi / nb)
    atoms[ok, 1] = np.where(pm > 0, wrap_angle(_window_centre(c, loc2, window_bins) * math.pi / nb), np.nan)
    full_best = np.full(m.grid.x_cells, np.nan)
    full_pair = np.full(m.grid.x_cells, np.nan)
    full_best[ok], full_pair[ok] = best, pm
    if n and np.mean(best >= single) >= cell_fraction:
        cls = "single_atom_family"
    elif n and np.mean(pm >= pair) >= cell_fraction:
        cls = "two_atom_family"
    else:
        cls = "diffuse"
    th = {"window_bins": window_bins, "single": single, "pair": pair, "min_atom": min_atom,
          "cell_fraction": cell_fraction}
    return AtomReport(cls, full_best, full_pair, atoms, 1.0 - n / m.grid.x_cells, th)


def product_measure_deviation(m: GriddedMeasure) -> float:
    """Largest TV distance between a cell conditional and the theta marginal."""
    cond, ok = m.conditionals()
    if ok.sum() <= 1:
        return 0.0
    bar = m.theta_marginal()
    return float(np.max(0.5 * np.abs(cond[ok] - bar).sum(axis=1)))


# common invariant measures of two matrices ------------------------------------

@dataclass(frozen=True)
class PairVerdict:
    verdict: str  # exists | none | inconclusive
    witness: dict | None = None
    witness_defect: float = float("nan")
    reason: str = ""


def _det2(M) -> float:
    return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])


def _ptype(M: np.ndarray, boundary_tol: float) -> str:
    """identity | elliptic | parabolic | hyperbolic | involution | boundary (projective type)."""
    tr = float(M[0, 0] + M[1, 1])
    if _det2(M) > 0:
        if np.max(np.abs(M - np.eye(2))) <= ALGEBRAIC_TOL or np.max(np.abs(M + np.eye(2))) <= ALGEBRAIC_TOL:
            return "identity"
        g = abs(tr) - 2.0
        if abs(g) <= ALGEBRAIC_TOL:
            return "parabolic"
        if abs(g) < boundary_tol:
            return "boundary"
        return "elliptic" if g < 0 else "hyperbolic"
    return "involution" if abs(tr) <= ALGEBRAIC_TOL else "hyperbolic"


def _fixed_directions(M: np.ndarray) -> list[float]:
    """Eigen-directions of a non-elliptic 2x2 matrix, as angles."""
    a, b, c, d = M.ravel()
    tr, det = a + d, _det2(M)
    disc = max(tr * tr / 4 - det, 0.0)
    out: list[float] = []
    for lam in (tr / 2 + math.sqrt(disc), tr / 2 - math.sqrt(disc)):
        # pick the better-conditioned of the two null-vector formulas
        v1, v2 = np.array([b, lam - a]), np.array([lam - d, c])
        v = v1 if np.hypot(*v1) >= np.hypot(*v2) else v2
        if np.hypot(*v) == 0:
            continue
        t = wrap_angle(math.atan2(v[1], v[0]))
        if all(proj_dist(t, s) > 1e-9 for s in out):
            out.append(t)
    return out


def _invariant_forms(mats: list[np.ndarray]) -> np.ndarray:
    """Basis (rows: q11, q12, q22) of symmetric Q with M^T Q M = Q for all M."""
    rows = []
    for M in mats:
        a, b, c, d = M.ravel()
        # entries of M^T Q M - Q, linear in (q11, q12, q22)
        rows.append([a * a - 1, 2 * a * c, c * c])
        rows.append([a * b, a * d + b * c - 1, c * d])
        rows.append([b * b, 2 * b * d, d * d - 1])
    A = np.array(rows)
    _, s, vt = np.linalg.svd(A)
    scale = max(1.0, float(np.abs(A).max()))
    s = np.concatenate([s, np.zeros(3 - len(s))])
    return vt[s <= 1e-9 * scale]


def _positive_form(basis: np.ndarray) -> np.ndarray | None:
    if len(basis) == 0:
        return None
    rng = np.random.default_rng(0)
    coeffs = np.vstack([np.eye(len(basis)), -np.eye(len(basis)), rng.normal(size=(2048, len(basis)))])
    for cvec in coeffs:
        q = cvec @ basis
        Q = np.array([[q[0], q[1]], [q[1], q[2]]])
        ev = np.linalg.eigvalsh(Q)
        if ev[0] > 1e-9 * abs(ev[1]):
            return Q / math.sqrt(np.linalg.det(Q))
    return None


def _sqrtm_spd(Q: np.ndarray) -> np.ndarray:
    ev, U = np.linalg.eigh(Q)
    return (U * np.sqrt(ev)) @ U.T


def conformal_bin_masses(Q: np.ndarray, nb: int, M: np.ndarray | None = None) -> np.ndarray:
    """Bin masses of the conformal measure of Q (or of its push-forward by M).

    The measure is the image of the uniform measure under Q^{-1/2}; an arc has
    mass |angle swept by Q^{1/2} M^{-1} e^{it}| / pi.
    """
    P = _sqrtm_spd(Q)
    if M is not None:
        P = P @ np.linalg.inv(M)
    edges = (np.arange(nb + 1) - 0.5) * (math.pi / nb)
    fine = np.linspace(edges[0], edges[-1], 64 * nb + 1)
    v = P @ np.vstack([np.cos(fine), np.sin(fine)])
    phi = np.unwrap(np.arctan2(v[1], v[0]))
    return np.abs(np.diff(phi[::64])) / math.pi


def _atoms_defect(S: list[float], mats: list[np.ndarray], ang_tol: float) -> float:
    """0 if every matrix maps the atom set S into itself, else 1 (exact TV of the uniform atom measure)."""
    for M in mats:
        for s in S:
            if min(proj_dist(proj_act(M, s), t) for t in S) > ang_tol:
                return 1.0
    return 0.0


def common_invariant_measure_pair(A, B, tol: float = 0.05, boundary_tol: float = 1e-6,
                                  max_word: int = 4, theta_bins: int = 64) -> PairVerdict:
    """Decide whether two unimodular 2x2 matrices share an invariant probability measure on P(R^2).

    First look for a common invariant positive-definite form (then the
    conformal measure of that form is a witness). Otherwise find the most
    hyperbolic word of length <= ``max_word``; every common invariant measure
    lives on its fixed directions, so a witness exists iff some nonempty set of
    those directions is mapped to itself by both matrices.
    """
    A, B = as_matrix(A), as_matrix(B)
    for name, M in (("A", A), ("B", B)):
        if M.shape != (2, 2):
            raise DomainError(f"{name} must be 2x2")
        if not is_unimodular(M):
            raise DomainError(f"{name} is not unimodular-normalized (|det| = {abs(_det2(M))!r})")
    mats = [A, B]
    types = [_ptype(M, boundary_tol) for M in mats]
    if "boundary" in types:
        return PairVerdict("inconclusive", reason=f"trace within {boundary_tol} of the parabolic boundary")

    Q = _positive_form(_invariant_forms(mats))
    if Q is not None:
        base = conformal_bin_masses(Q, theta_bins)
        d = max(tv(base, conformal_bin_masses(Q, theta_bins, M)) for M in mats)
        w = {"kind": "conformal", "Q": Q.tolist()}
        if d >= tol:
            return PairVerdict("inconclusive", w, d, "conformal witness fails verification")
        return PairVerdict("exists", w, d, "common invariant conformal structure")

    best, best_score = None, -1.0
    for n in range(1, max_word + 1):
        for word in itertools.product((0, 1), repeat=n):
            W = np.eye(2)
            for s in word:
                W = mats[s] @ W
            t = _ptype(W, boundary_tol)
            if t not in ("hyperbolic", "parabolic"):
                continue
            tr = float(W[0, 0] + W[1, 1])
            score = tr * tr + 2.0 if _det2(W) < 0 else abs(tr)
            if score > best_score:
                best, best_score = W, score
    if best is None:
        return PairVerdict("inconclusive", reason=f"no non-elliptic word of length <= {max_word}")
    F = _fixed_directions(best)
    for r in range(1, len(F) + 1):
        for S in itertools.combinations(F, r):
            if _atoms_defect(list(S), mats, 1e-7) == 0.0:
                w = {"kind": "atoms", "angles": [float(s) for s in S], "weights": [1.0 / r] * r}
                return PairVerdict("exists", w, 0.0, "shared set of fixed directions")
    return PairVerdict("none", reason="no common invariant form and no invariant atom set")


@dataclass(frozen=True)
class OracleResult:
    decision: str  # exists | none | unconfident
    defect: float
    cesaro_defect: float


def cesaro_pair_oracle(A, B, tol: float = 0.05, n_steps: int = 1_000_000, theta_bins: int = 64,
                       seed: int = 0) -> OracleResult:
    """Brute-force check of a common invariant measure for two matrices.

    Candidates are the Cesaro histogram of the random walk from a uniform
    start and atom sets built from numerically computed eigenvectors. The
    defect of a candidate is its largest TV distance to its images under A
    and B. Confident when the best defect is below tol / 10 or above 10 tol,
    except that a histogram concentrated in two windows of three bins is
    never taken as evidence of existence.
    """
    A, B = as_matrix(A), as_matrix(B)
    rng = np.random.default_rng(seed)
    word = (rng.random(n_steps) < 0.5).astype(np.uint8)
    mats = np.ascontiguousarray(np.stack([A.ravel(), B.ravel()]))
    h, ha, hb = (np.zeros(theta_bins, dtype=np.int64) for _ in range(3))
    K.pair_cesaro_hist(mats, word, rng.random() * math.pi, theta_bins, h, ha, hb)
    ces = max(tv(h / n_steps, ha / n_steps), tv(h / n_steps, hb / n_steps))
    dirs: list[float] = []
    for M in (A, B):
        ev, vec = np.linalg.eig(M)
        for j in range(2):
            if abs(ev[j].imag) < 1e-12:
                v = vec[:, j].real
                dirs.append(wrap_angle(math.atan2(v[1], v[0])))
    atoms = 1.0
    for r in (1, 2):
        for S in itertools.combinations(dirs, r):
            atoms = min(atoms, _atoms_defect(list(S), [A, B], 1e-6))
    if atoms < tol / 10:
        return OracleResult("exists", float(atoms), float(ces))
    best = min(atoms, ces)
    # a histogram that is atomic at grid scale cannot tell shared directions
    # from nearly shared ones, so it is not allowed to certify existence
    c = np.ascontiguousarray((h / n_steps)[None, :])
    one, pair = np.zeros(1), np.zeros(1)
    K.window_scan(c, 3, 0.0, one, np.zeros(1, dtype=np.int64), pair, np.zeros(1, dtype=np.int64))
    atomic = max(one[0], pair[0]) >= 1.0 - tol
    if best < tol / 10 and not atomic:
        dec = "exists"
    elif best > 10 * tol:
        dec = "none"
    else:
        dec = "unconfident"
    return OracleResult(dec, float(best), float(ces))
