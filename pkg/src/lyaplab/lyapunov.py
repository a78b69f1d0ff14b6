"""Extremal Lyapunov exponents by QR-renormalized iteration, Oseledets
directions, and the block-form reduction of hyperbolic 2x2 cocycles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from ._parallel import map_ordered
from .errors import DomainError, RenormalizationTooSparse
from .systems import GeneratorSet, Point, WordSampler

DEFAULT_STRIDE = 16
GAP_THRESHOLD = 5.0
DEFAULT_THETA = 0.7853981633974483 * 1.3819660112501051  # generic starting line


@dataclass(frozen=True)
class TrajectoryState:
    """Factored cocycle ``A^n(x0) = Q diag(e^log_r) (unit upper-triangular)``.

    ``offdiag_ratio`` is r12 / r11 of the accumulated triangular factor and is
    only meaningful for short trajectories.
    """

    x: Point
    Q: np.ndarray
    log_r: tuple[float, float]
    n: int
    offdiag_ratio: float = 0.0

    def R(self) -> np.ndarray:
        r11, r22 = math.exp(self.log_r[0]), math.exp(self.log_r[1])
        return np.array([[r11, self.offdiag_ratio * r11], [0.0, r22]])

    def product(self) -> np.ndarray:
        """Reconstructed A^n (for short runs; Q_0 is the identity)."""
        return self.Q @ self.R()


def _run(gs: GeneratorSet, word: np.ndarray, x0: Point, stride: int, burn: int = 0) -> TrajectoryState:
    if stride < 1:
        raise DomainError("qr_stride must be >= 1")
    out = np.zeros(10)
    status = K.qr_trajectory(*gs.lowered, np.ascontiguousarray(word, dtype=np.uint8),
                             float(x0[0]), float(x0[1]), int(stride), int(burn), out)
    if status:
        raise RenormalizationTooSparse(
            f"cocycle product exceeded {K.OVERFLOW:g} within qr_stride={stride} steps")
    Q = np.array(out[2:6]).reshape(2, 2)
    return TrajectoryState((float(out[0]), float(out[1])), Q, (float(out[6]), float(out[7])),
                           int(out[9]), float(out[8]))


def iterate_qr(gs: GeneratorSet, sampler: WordSampler | None, x0: Point, n: int,
               qr_stride: int = DEFAULT_STRIDE, *, word: Sequence[int] | None = None) -> TrajectoryState:
    """Iterate n steps of the cocycle from x0 along a sampled word (or an explicit one)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if word is None:
        if sampler is None:
            raise DomainError("need a sampler or an explicit word")
        word = sampler.word(n)
    w = np.asarray(word, dtype=np.uint8)[:n]
    if len(w) < n:
        raise DomainError(f"word has {len(w)} symbols, need {n}")
    return _run(gs, w, x0, qr_stride)


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_plus: float
    lambda_minus: float
    stderr_plus: float
    stderr_minus: float
    n: int
    n_samples: int
    burn_in: int
    samples_plus: tuple[float, ...] = field(default=(), repr=False)
    samples_minus: tuple[float, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {"lambda_plus": self.lambda_plus, "stderr_plus": self.stderr_plus,
                "lambda_minus": self.lambda_minus, "stderr_minus": self.stderr_minus,
                "n": self.n, "n_samples": self.n_samples, "burn_in": self.burn_in}


def default_burn_in(n: int) -> int:
    return max(1000, n // 100)


def _stderr(v: np.ndarray) -> float:
    return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def sample_x0(gs: GeneratorSet, sampler: WordSampler, x0_mode) -> Point:
    if isinstance(x0_mode, str):
        if x0_mode != "uniform":
            raise DomainError(f"x0_mode is 'uniform' or a point, got {x0_mode!r}")
        if gs.trivial_base:
            return (0.0, 0.0)
        p = sampler.points(1)[0]
        return (float(p[0]), float(p[1]))
    return (float(x0_mode[0]), float(x0_mode[1]))


def extremal_exponents(gs: GeneratorSet, n: int, n_samples: int, seed: int, x0_mode="uniform",
                       qr_stride: int = DEFAULT_STRIDE, burn_in: int | None = None,
                       threads: int = 1) -> LyapunovEstimate:
    """Mean of log_r / n over independent words, after a burn-in.

    Sample ``s`` uses substream ``(seed, s)``; burn-in defaults to max(1000, n / 100).
    """
    if n < 1 or n_samples < 1:
        raise DomainError("n and n_samples must be >= 1")
    burn = default_burn_in(n) if burn_in is None else int(burn_in)

    def one(s: int) -> tuple[float, float]:
        sampler = WordSampler(seed, gs.weights, s)
        x0 = sample_x0(gs, sampler, x0_mode)
        st = _run(gs, sampler.word(burn + n), x0, qr_stride, burn)
        return st.log_r[0] / n, st.log_r[1] / n

    res = np.array(map_ordered(one, range(n_samples), threads))
    lp, lm = res[:, 0], res[:, 1]
    return LyapunovEstimate(float(lp.mean()), float(lm.mean()), _stderr(lp), _stderr(lm),
                            n, n_samples, burn, tuple(lp.tolist()), tuple(lm.tolist()))


@dataclass(frozen=True)
class OseledetsDirections:
    resolved: bool
    E_plus: float | None
    E_minus: float | None
    gap: float
    x_n: Point


def _gap(gs, word, x0, stride=DEFAULT_STRIDE) -> float:
    if len(word) == 0:
        return 0.0
    st = _run(gs, word, x0, stride)
    return float(st.log_r[0] - st.log_r[1])


def _orbit(gs: GeneratorSet, word: np.ndarray, x0: Point) -> tuple[np.ndarray, np.ndarray]:
    xs = np.zeros((len(word) + 1, 2))
    js = np.zeros((len(word), 4))
    K.record_orbit(*gs.lowered, word, float(x0[0]), float(x0[1]), xs, js)
    return xs, js


def oseledets_directions(gs: GeneratorSet, word: Sequence[int], x0: Point, n: int,
                         theta0: float = DEFAULT_THETA) -> OseledetsDirections:
    """Expanding and contracted directions at x_n.

    ``E_plus`` is the forward image of ``theta0`` under the first n symbols.
    If ``word`` extends past n, ``E_minus`` is pulled back from the end of the
    word with inverse matrices (the direction the future contracts); otherwise
    it is the forward image under the inverse-transpose cocycle, which is the
    orthogonal complement of ``E_plus``. The gap is log(s_max / s_min) over the
    shorter of the two horizons; below 5 nats the result is unresolved.
    """
    w = np.ascontiguousarray(word, dtype=np.uint8)
    if n < 1 or len(w) < n:
        raise DomainError(f"need 1 <= n <= len(word), got n={n}, len={len(w)}")
    xs, js = _orbit(gs, w, x0)
    fwd = np.zeros(n + 1)
    K.push_forward_angles(js[:n], theta0, fwd)
    x_n = (float(xs[n, 0]), float(xs[n, 1]))
    gap = _gap(gs, w[:n], x0)
    if len(w) > n:
        back = np.zeros(len(w) - n + 1)
        K.pull_back_angles(js[n:], theta0, back)
        e_minus = float(back[0])
        gap = min(gap, _gap(gs, w[n:], x_n))
    else:
        e_minus = float(K.wrap_pi(fwd[n] + math.pi / 2))
    if gap < GAP_THRESHOLD:
        return OseledetsDirections(False, None, None, gap, x_n)
    return OseledetsDirections(True, float(fwd[n]), e_minus, gap, x_n)


@dataclass(frozen=True)
class BlockReduction:
    structure: str  # diagonal_or_antidiagonal | upper_triangular | not_applicable
    max_offblock_residual: float
    gap: float
    n_refine: int
    n_test: int


def _unit(t: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def block_reduction(gs: GeneratorSet, n_refine: int, n_test: int, seed: int = 0,
                    x0: Point | None = None, structure_tol: float = 1e-3) -> BlockReduction:
    """Conjugate the cocycle by P = [U, V] (U in E+, V in E-) along a sampled orbit.

    The orbit has n_refine symbols of past, n_test tested steps and n_refine
    symbols of future. At each tested point U is estimated from the preceding
    n_refine steps and V from the following n_refine steps, so the residual
    shrinks as the windows grow. Reported residual is the largest off-diagonal entry of
    B = P(x_{j+1})^-1 J_j P(x_j) relative to |B| (antidiagonal when the
    directions swap); if that exceeds ``structure_tol`` the upper-triangular
    residual (lower-left entry only) is tried.
    """
    if n_refine < 1 or n_test < 1:
        raise DomainError("n_refine and n_test must be >= 1")
    sampler = WordSampler(seed, gs.weights, 0)
    if x0 is None:
        x0 = sample_x0(gs, sampler, "uniform")
    total = 2 * n_refine + n_test
    w = sampler.word(total)
    xs, js = _orbit(gs, w, x0)
    lo, hi = n_refine, n_refine + n_test
    x_hi = (xs[hi, 0], xs[hi, 1])
    gap = min(_gap(gs, w[:lo], x0), _gap(gs, w[hi:], x_hi))
    if gap < GAP_THRESHOLD:
        return BlockReduction("not_applicable", float("nan"), gap, n_refine, n_test)
    tu = np.zeros(n_test + 1)
    tv = np.zeros(n_test + 1)
    K.window_directions(js, lo, hi, n_refine, DEFAULT_THETA, tu, tv)
    U = _unit(tu)
    V = _unit(tv)
    P = np.stack([U, V], axis=-1)  # P[j] columns U_j, V_j
    J = js[lo:hi].reshape(-1, 2, 2)
    B = np.linalg.solve(P[1:], J @ P[:-1])
    nb = np.sqrt(np.sum(B * B, axis=(1, 2)))
    off = np.maximum(np.abs(B[:, 0, 1]), np.abs(B[:, 1, 0])) / nb
    dia = np.maximum(np.abs(B[:, 0, 0]), np.abs(B[:, 1, 1])) / nb
    r_diag = float(np.max(np.minimum(off, dia)))
    if r_diag <= structure_tol:
        return BlockReduction("diagonal_or_antidiagonal", r_diag, gap, n_refine, n_test)
    # only U invariant: complete with an orthogonal V
    V2 = _unit(tu + math.pi / 2)
    P2 = np.stack([U, V2], axis=-1)
    B2 = np.linalg.solve(P2[1:], J @ P2[:-1])
    r_up = float(np.max(np.abs(B2[:, 1, 0]) / np.sqrt(np.sum(B2 * B2, axis=(1, 2)))))
    if r_up < r_diag:
        return BlockReduction("upper_triangular", r_up, gap, n_refine, n_test)
    return BlockReduction("diagonal_or_antidiagonal", r_diag, gap, n_refine, n_test)
