"""Random systems (f_1, ..., f_k; p): generators, frames and the i.i.d. word sampler.

A generator is either a constant matrix (trivial base) or a map of the torus
[0, 1)^2 with its exact Jacobian. Every generator lowers to a short program of
primitives that the compiled kernels interpret; the Python-side evaluation
calls the same primitives, so there is one copy of each formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import DomainError
from .linalg import as_matrix

WEIGHT_TOL = 1e-12
Point = tuple[float, float]


def _freeze(M) -> np.ndarray:
    A = np.array(as_matrix(M), dtype=float)
    if A.shape != (2, 2):
        raise DomainError(f"generators are 2x2, got shape {A.shape}")
    A.setflags(write=False)
    return A


def _params(*vals) -> np.ndarray:
    p = np.zeros(K.N_PARAMS)
    p[: len(vals)] = vals
    return p


class Generator:
    """Base class. Subclasses implement :meth:`program`."""

    trivial_base = False

    def program(self) -> list[tuple[int, np.ndarray]]:
        raise NotImplementedError

    def evaluate(self, x: Point = (0.0, 0.0)) -> tuple[Point, np.ndarray]:
        """Image of ``x`` and the Jacobian ``Df(x)``."""
        gs = GeneratorSet([self])
        c, p, s = gs.program
        x2, y2, a, b, cc, d = K.gen_step(c, p, s, 0, float(x[0]), float(x[1]))
        return (x2, y2), np.array([[a, b], [cc, d]])

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConstantMatrix(Generator):
    M: np.ndarray
    trivial_base = True

    def __post_init__(self):
        object.__setattr__(self, "M", _freeze(self.M))
        if self.M[0, 0] * self.M[1, 1] - self.M[0, 1] * self.M[1, 0] == 0:
            raise DomainError("constant generator must be invertible")

    def program(self):
        return [(K.OP_MATRIX, _params(*self.M.ravel()))]

    def to_spec(self):
        return {"type": "matrix", "M": self.M.tolist()}


class TorusMap(Generator):
    pass


@dataclass(frozen=True)
class Translation(TorusMap):
    v: tuple[float, float]

    def program(self):
        return [(K.OP_TRANSLATE, _params(*self.v))]

    def to_spec(self):
        return {"type": "translation", "v": list(self.v)}


@dataclass(frozen=True, eq=False)
class LinearToralMap(TorusMap):
    """x -> M x mod 1. With integer M of determinant +-1 this is an automorphism."""

    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", _freeze(self.M))

    def program(self):
        return [(K.OP_LINEAR, _params(*self.M.ravel()))]

    def to_spec(self):
        return {"type": "linear", "M": self.M.tolist()}


def cat_map() -> LinearToralMap:
    return LinearToralMap(np.array([[2.0, 1.0], [1.0, 1.0]]))


@dataclass(frozen=True)
class StandardMap(TorusMap):
    """(x, y) -> (x + y', y') with y' = y + K/(2 pi) sin(2 pi x), both mod 1."""

    K: float

    def program(self):
        return [(K.OP_STANDARD, _params(self.K))]

    def to_spec(self):
        return {"type": "standard_map", "K": self.K}


@dataclass(frozen=True)
class BumpProfile:
    """g(y) = strength * (y - center) * chi((y - center) / radius), chi(u) = (1 - u^2)^3."""

    center: float
    radius: float
    strength: float

    def __post_init__(self):
        if not 0.0 <= self.center < 1.0:
            raise DomainError(f"bump center must lie in [0, 1), got {self.center}")
        if not self.radius > 0.0:
            raise DomainError(f"bump radius must be positive, got {self.radius}")
        if self.radius > 0.5:
            raise DomainError(f"bump radius {self.radius} wraps around the circle (max 0.5)")
        if not math.isfinite(self.strength):
            raise DomainError("bump strength must be finite")

    def g(self, y: float) -> float:
        return K.bump_g(float(y), self.center, self.radius, self.strength)[0]

    def dg(self, y: float) -> float:
        return K.bump_g(float(y), self.center, self.radius, self.strength)[1]


@dataclass(frozen=True)
class Shear(TorusMap):
    """Strip-localized shear. Horizontal: (x, y) -> (x + g(y), y); vertical: (x, y) -> (x, y + g(x))."""

    axis: str
    profile: BumpProfile

    def __post_init__(self):
        if self.axis not in ("horizontal", "vertical"):
            raise DomainError(f"shear axis must be 'horizontal' or 'vertical', got {self.axis!r}")

    def program(self):
        code = K.OP_SHEAR_H if self.axis == "horizontal" else K.OP_SHEAR_V
        pr = self.profile
        return [(code, _params(pr.center, pr.radius, pr.strength))]

    def to_spec(self):
        pr = self.profile
        return {"type": "shear", "axis": self.axis, "center": pr.center,
                "radius": pr.radius, "strength": pr.strength}


@dataclass(frozen=True)
class Composite(TorusMap):
    """Apply ``parts`` left to right: ``parts[0]`` acts first."""

    parts: tuple[TorusMap, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise DomainError("composite needs at least one part")
        for p in self.parts:
            if not isinstance(p, TorusMap):
                raise DomainError("composite parts must be torus maps")

    def program(self):
        return [op for p in self.parts for op in p.program()]

    def to_spec(self):
        return {"type": "composite", "compose": [p.to_spec() for p in self.parts]}


def make_shear(axis: str, profile: BumpProfile) -> Shear:
    """Area-preserving shear fixing the line through ``profile.center``.

    Its derivative on that line is [[1, s], [0, 1]] (horizontal) or
    [[1, 0], [s, 1]] (vertical) with ``s = profile.strength``.
    """
    return Shear(axis, profile)


def shear_pair(center: float, radius: float, strength: float) -> Composite:
    """Vertical then horizontal shear with a common fixed point (center, center).

    Derivative there is [[1 + s^2, s], [s, 1]].
    """
    pr = BumpProfile(center, radius, strength)
    return Composite((Shear("vertical", pr), Shear("horizontal", pr)))


@dataclass(frozen=True, eq=False)
class FrameField:
    """x -> P(x). ``kind`` is 'identity', 'constant' (matrix C) or 'rotation'.

    The rotation field is P(x) = R(2 pi (a x_1 + b x_2) + phase) and is orthonormal.
    """

    kind: str = "identity"
    C: np.ndarray | None = None
    a: float = 0.0
    b: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "constant", "rotation"):
            raise DomainError(f"unknown frame kind {self.kind!r}")
        if self.kind == "constant":
            if self.C is None:
                raise DomainError("constant frame needs a matrix C")
            C = _freeze(self.C)
            if C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0] == 0:
                raise DomainError("frame matrix must be invertible")
            object.__setattr__(self, "C", C)

    @property
    def orthonormal(self) -> bool:
        if self.kind == "constant":
            return bool(np.allclose(self.C.T @ self.C, np.eye(2), atol=1e-12))
        return True

    def lowered(self) -> tuple[int, np.ndarray]:
        if self.kind == "identity":
            return K.FRAME_IDENTITY, _params()
        if self.kind == "constant":
            return K.FRAME_CONSTANT, _params(*self.C.ravel())
        return K.FRAME_ROTATION, _params(self.a, self.b, self.phase)

    def at(self, x: Point) -> np.ndarray:
        kind, fp = self.lowered()
        return np.array(K.frame_matrix(kind, fp, float(x[0]), float(x[1]))).reshape(2, 2)

    def to_spec(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "constant":
            return {"kind": "constant", "C": self.C.tolist()}
        return {"kind": "rotation", "a": self.a, "b": self.b, "phase": self.phase}


identity_frame = FrameField()


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """The random system: generators, Bernoulli weights and a frame field."""

    generators: Sequence[Generator]
    weights: Sequence[float] | None = None
    frame: FrameField = field(default_factory=FrameField)
    name: str = ""
    ergodicity: str = "unknown"

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise DomainError("a generator set needs at least one generator")
        if len(gens) > 255:
            raise DomainError("at most 255 generators are supported")
        object.__setattr__(self, "generators", gens)
        w = (np.full(len(gens), 1.0 / len(gens)) if self.weights is None
             else np.asarray(self.weights, dtype=float))
        if w.shape != (len(gens),):
            raise DomainError(f"expected {len(gens)} weights, got {w.shape}")
        if np.any(~(w > 0)):
            raise DomainError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        if self.ergodicity not in ("asserted", "unknown"):
            raise DomainError("ergodicity flag is 'asserted' or 'unknown'")

    @property
    def k(self) -> int:
        return len(self.generators)

    @property
    def trivial_base(self) -> bool:
        return all(g.trivial_base for g in self.generators)

    @cached_property
    def program(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        codes, params, starts = [], [], [0]
        for g in self.generators:
            for c, p in g.program():
                codes.append(c)
                params.append(p)
            starts.append(len(codes))
        return (np.array(codes, dtype=np.int64), np.array(params, dtype=float).reshape(-1, K.N_PARAMS),
                np.array(starts, dtype=np.int64))

    @cached_property
    def lowered(self) -> tuple:
        """Arguments shared by every kernel call: (codes, params, starts, frame_kind, frame_params)."""
        fk, fp = self.frame.lowered()
        return (*self.program, fk, fp)

    def with_generator(self, index: int, g: Generator) -> "GeneratorSet":
        gens = list(self.generators)
        gens[index] = g
        return GeneratorSet(gens, self.weights, self.frame, self.name, self.ergodicity)

    def with_frame(self, frame: FrameField) -> "GeneratorSet":
        return GeneratorSet(self.generators, self.weights, frame, self.name, self.ergodicity)

    def to_spec(self) -> dict:
        return {"generators": [g.to_spec() for g in self.generators],
                "weights": list(self.weights), "frame": self.frame.to_spec()}


@dataclass(frozen=True)
class WordSampler:
    """Deterministic i.i.d. symbols per (seed, stream_index) substream."""

    seed: int
    weights: tuple[float, ...]
    stream_index: int = 0

    def rng(self, purpose: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, purpose))
        return np.random.Generator(np.random.PCG64(ss))

    def word(self, n: int) -> np.ndarray:
        return sample_word(self, n)

    def points(self, m: int) -> np.ndarray:
        """``m`` uniform points of the torus from a stream separate from the word."""
        return self.rng(1).random((m, 2))


def sample_word(sampler: WordSampler, n: int) -> np.ndarray:
    """n symbols in {0, ..., k-1}, i.i.d. with the sampler's weights."""
    if n < 0:
        raise DomainError("word length must be nonnegative")
    w = np.asarray(sampler.weights, dtype=float)
    if len(w) == 1:
        return np.zeros(n, dtype=np.uint8)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    u = sampler.rng(0).random(n)
    sym = np.searchsorted(cum, u, side="right")
    return np.minimum(sym, len(w) - 1).astype(np.uint8)


def cocycle_step(gs: GeneratorSet, symbol: int, x: Point = (0.0, 0.0)) -> tuple[Point, np.ndarray]:
    """(f_symbol(x), J) with J = P(f(x)) Df(x) P(x)^-1."""
    if not 0 <= symbol < gs.k:
        raise DomainError(f"symbol {symbol} out of range for {gs.k} generators")
    x2, y2, a, b, c, d = K.cocycle(*gs.lowered, int(symbol), float(x[0]), float(x[1]))
    return (x2, y2), np.array([[a, b], [c, d]])


@dataclass(frozen=True)
class ConservativityReport:
    max_det_deviation: float
    worst_point: Point
    passed: bool


def verify_conservative(g: Generator, n_samples: int = 4096, tol: float = 1e-10) -> ConservativityReport:
    """Largest | |det Df(x)| - 1 | over a Halton point set."""
    from scipy.stats import qmc

    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    pts = qmc.Halton(d=2, scramble=False).random(n_samples)
    c, p, s = GeneratorSet([g]).program
    worst, worst_pt = -1.0, (0.0, 0.0)
    for x, y in pts:
        _, _, a, b, cc, d = K.gen_step(c, p, s, 0, float(x), float(y))
        dev = abs(abs(a * d - b * cc) - 1.0)
        if dev > worst:
            worst, worst_pt = dev, (float(x), float(y))
    return ConservativityReport(worst, worst_pt, worst <= tol)


def generator_from_spec(spec: dict, where: str = "generator") -> Generator:
    """Build a generator from a config mapping (keys: type, K, v, M, angle, axis,
    center, radius, strength, compose)."""
    from .errors import ConfigError
    from .linalg import rotation

    allowed = {
        "matrix": {"M"}, "rotation": {"angle"}, "translation": {"v"}, "cat_map": set(),
        "linear": {"M"}, "standard_map": {"K"}, "shear": {"axis", "center", "radius", "strength"},
        "composite": {"compose"},
    }
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(where, "generator entries need a 'type'")
    kind = spec["type"]
    if kind not in allowed:
        raise ConfigError(f"{where}.type", f"unknown generator type {kind!r}")
    extra = set(spec) - allowed[kind] - {"type"}
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}", f"unknown key for type {kind!r}")
    missing = allowed[kind] - set(spec)
    if missing:
        raise ConfigError(f"{where}.{sorted(missing)[0]}", "missing")
    try:
        if kind == "matrix":
            return ConstantMatrix(np.array(spec["M"], dtype=float))
        if kind == "rotation":
            return ConstantMatrix(rotation(float(spec["angle"])))
        if kind == "translation":
            v = [float(t) for t in spec["v"]]
            if len(v) != 2:
                raise DomainError("translation vector has two entries")
            return Translation((v[0], v[1]))
        if kind == "cat_map":
            return cat_map()
        if kind == "linear":
            return LinearToralMap(np.array(spec["M"], dtype=float))
        if kind == "standard_map":
            return StandardMap(float(spec["K"]))
        if kind == "shear":
            return make_shear(spec["axis"], BumpProfile(float(spec["center"]), float(spec["radius"]),
                                                        float(spec["strength"])))
        parts = [generator_from_spec(s, f"{where}.compose[{i}]") for i, s in enumerate(spec["compose"])]
        return Composite(tuple(parts))
    except (DomainError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where, str(exc)) from exc


def frame_from_spec(spec: dict | None) -> FrameField:
    from .errors import ConfigError

    if spec is None:
        return identity_frame
    if not isinstance(spec, dict):
        raise ConfigError("frame", "expected a mapping")
    allowed = {"kind", "C", "a", "b", "phase"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"frame.{sorted(extra)[0]}", "unknown key")
    try:
        C = spec.get("C")
        return FrameField(spec.get("kind", "identity"), None if C is None else np.array(C, dtype=float),
                          float(spec.get("a", 0.0)), float(spec.get("b", 0.0)), float(spec.get("phase", 0.0)))
    except DomainError as exc:
        raise ConfigError("frame", str(exc)) from exc
