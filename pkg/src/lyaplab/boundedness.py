"""Essential boundedness: lower densities of bounded-norm times, the
bounded / unbounded classifier, and the search for an invariant conformal
structure (a field of positive-definite forms preserved by the cocycle)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._parallel import map_ordered
from .errors import DomainError
from .lyapunov import sample_x0
from .systems import GeneratorSet, WordSampler

DEFAULT_K = tuple(float(2 ** j) for j in range(1, 11))
DEFAULT_DELTA = 0.1


def _geometric_grid(lo: int, hi: int, n_points: int) -> np.ndarray:
    g = np.unique(np.round(np.geomspace(max(lo, 1), hi, n_points)).astype(np.int64))
    return np.union1d(g, [max(lo, 1), hi])


def _density(cum: np.ndarray, h: int, n_points: int = 32) -> float:
    """min over m in a geometric grid on [ceil(h/2), h] of cum[m] / m."""
    m = _geometric_grid(-(-h // 2), h, n_points)
    return float(np.min(cum[m] / m))


def lower_density_estimate(flags, n_points: int = 32) -> float:
    """Finite-horizon proxy for the lower asymptotic density of ``{j : flags[j]}``.

    The fraction of true flags among the first m entries, minimized over a
    geometric grid of m in [ceil(N/2), N].
    """
    f = np.asarray(flags, dtype=bool)
    if f.ndim != 1 or len(f) < 1:
        raise DomainError("flags must be a nonempty 1-d sequence")
    cum = np.concatenate([[0], np.cumsum(f)])
    return _density(cum, len(f), n_points)


@dataclass(frozen=True)
class DensityStats:
    """counts[s, i, c] = #{j < checkpoints[c] : |A^j| <= thresholds[i]} for sample s."""

    thresholds: tuple[float, ...]
    checkpoints: np.ndarray
    counts: np.ndarray
    N: int
    n_samples: int
    densities: np.ndarray  # (samples, thresholds, horizons)
    horizons: tuple[int, ...]


@dataclass(frozen=True)
class BoundednessVerdict:
    verdict: str  # bounded | unbounded | inconclusive
    K: float | None
    density: float | None
    delta: float
    N: int
    horizons: tuple[int, ...]
    mean_density: dict
    bounded_fraction: dict
    stats: DensityStats = field(repr=False)

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "K": self.K, "density": self.density, "delta": self.delta,
                "N": self.N, "horizons": list(self.horizons),
                "mean_density": {repr(k): v for k, v in self.mean_density.items()},
                "bounded_fraction": {repr(k): v for k, v in self.bounded_fraction.items()}}


def norm_logs(gs: GeneratorSet, word: np.ndarray, x0) -> np.ndarray:
    """log |A^j(x0)| for j = 0..len(word)."""
    out = np.empty(len(word) + 1)
    K.lognorm_trajectory(*gs.lowered, np.ascontiguousarray(word, dtype=np.uint8),
                         float(x0[0]), float(x0[1]), out)
    return out


def essential_boundedness_test(gs: GeneratorSet, K_list=DEFAULT_K, N: int = 100_000, n_samples: int = 8,
                               delta: float = DEFAULT_DELTA, seed: int = 0, x0_mode="uniform",
                               threads: int = 1) -> BoundednessVerdict:
    """Classify the cocycle as essentially bounded, unbounded or inconclusive.

    bounded: the smallest K whose density estimate at horizon N is >= delta on
    at least a delta-fraction of samples. unbounded: for every K the mean
    density is non-increasing over horizons N/4, N/2, N, strictly decreasing
    somewhere (or identically zero), and below delta at N.
    """
    Ks = tuple(sorted(float(k) for k in K_list))
    if not Ks:
        raise DomainError("K_list must be nonempty")
    if min(Ks) <= 0:
        raise DomainError("thresholds must be positive")
    if N < 4:
        raise DomainError("N must be >= 4")
    horizons = (N // 4, N // 2, N)
    ckpt = np.unique(np.concatenate([_geometric_grid(1, N, 64)] +
                                    [_geometric_grid(-(-h // 2), h, 32) for h in horizons]))
    logK = np.log(np.array(Ks)) + 1e-12

    def one(s: int):
        sampler = WordSampler(seed, gs.weights, s)
        x0 = sample_x0(gs, sampler, x0_mode)
        ln = norm_logs(gs, sampler.word(N), x0)[:N]
        flags = ln[None, :] <= logK[:, None]
        cum = np.concatenate([np.zeros((len(Ks), 1), dtype=np.int64), np.cumsum(flags, axis=1)], axis=1)
        dens = np.array([[_density(c, h) for h in horizons] for c in cum])
        return cum[:, ckpt], dens

    res = map_ordered(one, range(n_samples), threads)
    counts = np.stack([r[0] for r in res])
    dens = np.stack([r[1] for r in res])
    stats = DensityStats(Ks, ckpt, counts, N, n_samples, dens, horizons)
    mean = dens.mean(axis=0)
    frac = (dens[:, :, -1] >= delta).mean(axis=0)
    mean_d = {k: mean[i].tolist() for i, k in enumerate(Ks)}
    frac_d = {k: float(frac[i]) for i, k in enumerate(Ks)}
    base = dict(delta=delta, N=N, horizons=horizons, mean_density=mean_d, bounded_fraction=frac_d, stats=stats)
    for i, k in enumerate(Ks):
        if frac[i] >= delta:
            return BoundednessVerdict("bounded", k, float(mean[i, -1]), **base)
    decays = all(
        (np.all(np.diff(mean[i]) <= 0) and (mean[i, 0] > mean[i, -1] or mean[i, 0] == 0.0))
        and mean[i, -1] < delta
        for i in range(len(Ks)))
    return BoundednessVerdict("unbounded" if decays else "inconclusive", None, None, **base)


# invariant conformal structures --------------------------------------------

def _eig_apply(M: np.ndarray, fn) -> np.ndarray:
    ev, U = np.linalg.eigh(M)
    return (U * fn(ev)[..., None, :]) @ np.swapaxes(U, -1, -2)


def spd_sqrt(M):
    return _eig_apply(M, np.sqrt)


def spd_log(M):
    return _eig_apply(M, np.log)


def spd_exp(M):
    return _eig_apply(M, np.exp)


def _det_normalize(Q: np.ndarray) -> np.ndarray:
    det = Q[..., 0, 0] * Q[..., 1, 1] - Q[..., 0, 1] * Q[..., 1, 0]
    return Q / np.sqrt(det)[..., None, None]


@dataclass(frozen=True)
class MetricResult:
    found: bool
    residual: float
    Q: np.ndarray  # (cells, 2, 2), det 1
    grid: tuple[int, int]
    trace: tuple[float, ...]
    reason: str = ""

    def conjugator(self) -> np.ndarray:
        """P = Q^{1/2}; B = P(f x) J P(x)^{-1} is orthogonal up to the residual."""
        return spd_sqrt(self.Q)

    def as_dict(self) -> dict:
        return {"found": self.found, "residual": self.residual, "sweeps": len(self.trace) - 1,
                "grid": list(self.grid), "reason": self.reason}


def _orbit_pairs(gs: GeneratorSet, orbit_len: int, nx: int, ny: int, seed: int):
    """(J, source cell, target cell, weight) for every orbit point and generator."""
    if gs.trivial_base:
        J = np.array([K.cocycle(*gs.lowered, i, 0.0, 0.0)[2:] for i in range(gs.k)]).reshape(-1, 2, 2)
        zero = np.zeros(gs.k, dtype=np.int64)
        return J, zero, zero, np.asarray(gs.weights)
    sampler = WordSampler(seed, gs.weights, 0)
    x, y = sampler.points(1)[0]
    xs = np.zeros((orbit_len + 1, 2))
    js = np.zeros((orbit_len, 4))
    K.record_orbit(*gs.lowered, sampler.word(orbit_len), float(x), float(y), xs, js)
    J, src, dst, w = [], [], [], []
    for px, py in xs[:-1]:
        c = K.cell_index(px, py, nx, ny)
        for i in range(gs.k):
            x2, y2, a, b, cc, d = K.cocycle(*gs.lowered, i, float(px), float(py))
            J.append((a, b, cc, d))
            src.append(c)
            dst.append(K.cell_index(x2, y2, nx, ny))
            w.append(gs.weights[i])
    return (np.array(J).reshape(-1, 2, 2), np.array(src, dtype=np.int64),
            np.array(dst, dtype=np.int64), np.array(w))


def invariant_metric_search(gs: GeneratorSet, orbit_len: int = 1000, sweeps: int = 500, tol: float = 1e-10,
                            cells: tuple[int, int] | None = None, seed: int = 0) -> MetricResult:
    """Fixed-point search for Q(x) with J_i(x)^T Q(f_i x) J_i(x) = Q(x).

    Q is piecewise constant on an nx x ny cell grid (one cell for constant
    matrices). Each sweep replaces Q(c) by a half step, in the affine-invariant
    geometry based at Q(c), towards the log-mean of J^T Q(c') J over the orbit
    pairs starting in c, then normalizes det Q = 1. The residual is
    max |Q(c)^{-1/2} J^T Q(c') J Q(c)^{-1/2} - I|_F, i.e. the distance of the
    conjugated cocycle from O(2).
    """
    if orbit_len < 1 or sweeps < 0:
        raise DomainError("orbit_len must be >= 1 and sweeps >= 0")
    nx, ny = (1, 1) if gs.trivial_base else (cells or (8, 8))
    J, src, dst, w = _orbit_pairs(gs, orbit_len, nx, ny, seed)
    ncell = nx * ny
    Q = np.tile(np.eye(2), (ncell, 1, 1))
    visited = np.bincount(src, minlength=ncell) > 0
    wsum = np.bincount(src, weights=w, minlength=ncell)
    Jt = np.swapaxes(J, -1, -2)

    def defect(Q):
        S = spd_sqrt(Q)
        Si = np.linalg.inv(S)
        M = Si[src] @ (Jt @ Q[dst] @ J) @ Si[src]
        M = 0.5 * (M + np.swapaxes(M, -1, -2))
        res = float(np.max(np.linalg.norm(M - np.eye(2), axis=(1, 2))))
        return res, S, Si, M

    res, S, Si, M = defect(Q)
    trace = [res]
    ups = 0
    reason = ""
    for _ in range(sweeps):
        if res < tol:
            break
        L = spd_log(M) * w[:, None, None]
        acc = np.zeros((ncell, 2, 2))
        np.add.at(acc, src, L)
        acc[visited] /= wsum[visited, None, None]
        step = spd_exp(0.5 * acc)
        Qn = S @ step @ S
        Qn = _det_normalize(0.5 * (Qn + np.swapaxes(Qn, -1, -2)))
        Qn[~visited] = np.eye(2)
        if not np.all(np.isfinite(Qn)):
            reason = "non-finite iterate"
            break
        Q = Qn
        new, S, Si, M = defect(Q)
        ups = ups + 1 if new > res else 0
        res = new
        trace.append(res)
        if ups >= 3:
            reason = "residual increased for 3 consecutive sweeps"
            break
    found = res < tol
    if not found and not reason:
        reason = "sweeps exhausted"
    return MetricResult(found, res, Q, (nx, ny), tuple(trace), "" if found else reason)
