"""Shipped test systems with the facts known about them in closed form."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import rotation
from .systems import (Composite, ConstantMatrix, GeneratorSet, StandardMap, Translation, cat_map,
                      shear_pair)

PLANTED_P = np.array([[2.0, 1.0], [0.0, 1.0]])
IRRATIONAL_V1 = (math.sqrt(2) - 1, math.sqrt(3) - 1)
IRRATIONAL_V2 = (math.sqrt(5) - 2, math.pi - 3)


@dataclass(frozen=True)
class ZooEntry:
    name: str
    system: GeneratorSet
    description: str
    lambda_plus: float | None  # closed form when known
    boundedness_N: int = 100_000  # horizon at which the dichotomy is resolved


def planted(P, angles) -> GeneratorSet:
    """Rotations conjugated by a fixed matrix: P R(alpha_i) P^-1."""
    P = np.asarray(P, dtype=float)
    Pi = np.linalg.inv(P)
    return GeneratorSet([ConstantMatrix(P @ rotation(a) @ Pi) for a in angles], name="planted_conjugate")


def irrational_translations() -> GeneratorSet:
    return GeneratorSet([Translation(IRRATIONAL_V1), Translation(IRRATIONAL_V2)],
                        name="translations", ergodicity="asserted")


def perturbed_translations(strength: float = 0.5, center: float = 0.5, radius: float = 0.25) -> GeneratorSet:
    """Second translation preceded by a vertical-then-horizontal shear pair."""
    t1, t2 = irrational_translations().generators
    return GeneratorSet([t1, Composite((shear_pair(center, radius, strength), t2))],
                        name="perturbed_translations", ergodicity="asserted")


def _entries() -> list[ZooEntry]:
    R4 = rotation(math.pi / 4)
    return [
        ZooEntry("rotations", GeneratorSet([ConstantMatrix(rotation(1.0)), ConstantMatrix(rotation(math.sqrt(2)))],
                                           name="rotations"),
                 "two irrational rotations", 0.0),
        ZooEntry("translations", irrational_translations(), "two irrational torus translations", 0.0),
        ZooEntry("cat_map", GeneratorSet([cat_map()], name="cat_map", ergodicity="asserted"),
                 "the automorphism [[2,1],[1,1]]", math.log((3 + math.sqrt(5)) / 2)),
        ZooEntry("diag_flip", GeneratorSet([ConstantMatrix(np.diag([2.0, 0.5])), ConstantMatrix(rotation(math.pi / 2))],
                                           name="diag_flip"),
                 "diag(2,1/2) and a quarter turn: products are diagonal up to the flip, "
                 "exponent 0 but norms unbounded", 0.0, 1_000_000),
        ZooEntry("furstenberg", GeneratorSet([ConstantMatrix(np.diag([2.0, 0.5])), ConstantMatrix(R4)],
                                             name="furstenberg"),
                 "diag(2,1/2) and an eighth turn: strongly irreducible, positive exponent", None),
        ZooEntry("planted_conjugate", planted(PLANTED_P, (1.0, 2.0)),
                 "rotations conjugated by [[2,1],[0,1]]", 0.0),
        ZooEntry("parabolic", GeneratorSet([ConstantMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))], name="parabolic"),
                 "a single Jordan block, linear norm growth", 0.0),
        ZooEntry("standard_translation", GeneratorSet([StandardMap(1.2), Translation(IRRATIONAL_V1)],
                                                      name="standard_translation"),
                 "standard map K=1.2 mixed with a translation", None),
        ZooEntry("perturbed_translations", perturbed_translations(), "translations with a shear pair on f_2", None),
        ZooEntry("cat_shear", GeneratorSet([cat_map(), shear_pair(0.5, 0.25, 0.5)], name="cat_shear",
                                           ergodicity="asserted"),
                 "cat map mixed with a localized shear pair", None),
    ]


def zoo() -> dict[str, ZooEntry]:
    return {e.name: e for e in _entries()}


def get_system(name: str) -> GeneratorSet:
    z = zoo()
    if name not in z:
        raise DomainError(f"unknown system {name!r}; known: {', '.join(z)}")
    return z[name].system
