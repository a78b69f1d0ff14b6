"""Acceptance suite: one criterion marker per headline requirement.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from lyaplab.boundedness import DEFAULT_K, essential_boundedness_test, invariant_metric_search
from lyaplab.experiments.cli import main
from lyaplab.experiments.runner import ShearParams, break_invariance_experiment
from lyaplab.linalg import (check_contraction_lemma, min_expansion_direction, normalize_unimodular, proj_dist,
                            rotation)
from lyaplab.lyapunov import block_reduction, extremal_exponents
from lyaplab.measures import (GridSpec, atom_structure, cesaro_pair_oracle, cesaro_stationary,
                              common_invariant_measure_pair)
from lyaplab.systems import ConstantMatrix, GeneratorSet, verify_conservative
from lyaplab.zoo import irrational_translations, zoo

criterion = pytest.mark.criterion
LOG2 = math.log(2.0)
DIAG = GeneratorSet([ConstantMatrix(np.diag([2.0, 0.5]))], name="diag")


def _warm(gs):
    # compile the kernels outside any timed region
    extremal_exponents(gs, 10, 1, 0, burn_in=0)


@criterion(1, "closed-form exponents")
def test_c1_diag_closed_form_and_runtime():
    _warm(DIAG)
    t = time.perf_counter()
    e = extremal_exponents(DIAG, 10 ** 5, 1, 0)
    dt = time.perf_counter() - t
    assert abs(e.lambda_plus - LOG2) < 1e-3 and abs(e.lambda_minus + LOG2) < 1e-3
    assert dt < 1.0


@criterion(1, "closed-form exponents")
def test_c1_cat_map():
    e = extremal_exponents(zoo()["cat_map"].system, 10 ** 5, 1, 0)
    assert abs(e.lambda_plus - math.log((3 + math.sqrt(5)) / 2)) < 1e-3


def _conservative(entry):
    gs = entry.system
    if gs.trivial_base:
        return all(abs(abs(np.linalg.det(g.M)) - 1) < 1e-12 for g in gs.generators)
    return all(verify_conservative(g).passed for g in gs.generators) and gs.frame.orthonormal


@criterion(2, "zero-sum conservation")
@pytest.mark.parametrize("name", sorted(zoo()))
def test_c2_zero_sum(name):
    entry = zoo()[name]
    assert _conservative(entry)
    e = extremal_exponents(entry.system, 10 ** 5, 32, 0)
    assert abs(e.lambda_plus + e.lambda_minus) < 5e-3


ISOMETRIC = {
    "rotations": zoo()["rotations"].system,
    "translations": zoo()["translations"].system,
    "rotation_triple": GeneratorSet([ConstantMatrix(rotation(a)) for a in (0.3, 2.2, -1.1)], (0.5, 0.25, 0.25)),
}


@criterion(3, "isometric degeneracy")
@pytest.mark.parametrize("name", sorted(ISOMETRIC))
def test_c3_isometric(name):
    gs = ISOMETRIC[name]
    e = extremal_exponents(gs, 10 ** 5, 8, 0)
    assert abs(e.lambda_plus) < 1e-3
    v = essential_boundedness_test(gs, DEFAULT_K, 10 ** 5, 8)
    assert v.verdict == "bounded" and v.density == 1.0
    r = invariant_metric_search(gs)
    assert r.found and r.residual < 1e-12


def _contraction_instances(rng, n):
    for _ in range(n):
        t = rng.uniform(1.0, 1e3)
        A = rotation(rng.uniform(0, math.pi)) @ np.diag([t, 1 / t]) @ rotation(rng.uniform(0, math.pi))
        A = normalize_unimodular(A)  # removes rounding in det
        eps = rng.uniform(1e-2, 1.0)
        th0 = min_expansion_direction(A).theta0
        ths = []
        while len(ths) < 2:
            th = rng.uniform(0, math.pi)
            if proj_dist(th, th0) >= eps:
                ths.append(th)
        yield A, eps, ths[0], ths[1]


@criterion(4, "contraction lemma")
def test_c4_contraction_lemma():
    rng = np.random.default_rng(20240601)
    inst = list(_contraction_instances(rng, 10 ** 4))
    check_contraction_lemma(*inst[0])
    t = time.perf_counter()
    held = [check_contraction_lemma(*x).holds for x in inst]
    dt = time.perf_counter() - t
    assert len(held) == 10 ** 4 and all(held)
    assert dt < 5.0


@criterion(5, "atom mass floor")
@pytest.mark.parametrize("name,grid", [("diag_flip", GridSpec(1, 1, 256)), ("cat_map", GridSpec(32, 1, 256))])
def test_c5_atom_mass_floor(name, grid):
    m = cesaro_stationary(zoo()[name].system, grid, 10 ** 5, 8, 0)
    a = atom_structure(m, 3)
    assert a.empty_fraction == 0.0
    assert a.min_max_mass >= 0.45
    assert a.classification != "diffuse"


@criterion(6, "block reduction")
@pytest.mark.parametrize("name", ["cat_map", "cat_shear", "standard_translation", "furstenberg"])
def test_c6_hyperbolic(name):
    r = block_reduction(zoo()[name].system, 10 ** 4, 1000)
    assert r.structure != "not_applicable"
    assert r.max_offblock_residual < 1e-3


@criterion(6, "block reduction")
@pytest.mark.parametrize("name", ["rotations", "translations"])
def test_c6_rotations_not_applicable(name):
    assert block_reduction(ISOMETRIC[name], 10 ** 4, 1000).structure == "not_applicable"


@criterion(7, "perturbed translations: sign change of the top exponent")
def test_c7_flagship_sweep():
    _warm(irrational_translations())
    t = time.perf_counter()
    table = break_invariance_experiment(irrational_translations(), ShearParams("both", 0.5, 0.25),
                                        [0.0, 0.25, 0.5], list(range(20)), n=10 ** 5, n_samples=8)
    dt = time.perf_counter() - t
    r0 = table.rows[0]
    r5 = table.rows[-1]
    assert r0.strength == 0.0 and r5.strength == 0.5
    assert r0.lambda_plus_stderr < 1e-4
    assert abs(r0.lambda_plus) <= 3 * r0.lambda_plus_stderr
    assert r5.fraction_significant >= 0.9
    assert table.monotone_evidence
    assert dt < 300


def _sl(rng, sign=1):
    A = rng.normal(size=(2, 2))
    if np.linalg.det(A) * sign < 0:
        A[:, 0] *= -1
    return A / math.sqrt(abs(np.linalg.det(A)))


def _unimodular(A):
    return A / math.sqrt(abs(np.linalg.det(A)))


def _pair_families(rng):
    """100 pairs: 20 from each structured family."""
    out = []
    for i in range(100):
        S = rng.normal(size=(2, 2))
        Si = np.linalg.inv(S)
        k = i % 5
        if k == 0:  # generic
            A, B = _sl(rng), _sl(rng)
        elif k == 1:  # shared eigenvector
            a, c = rng.uniform(0.3, 3, 2) * rng.choice([-1, 1], 2)
            A = S @ np.array([[a, rng.normal()], [0, 1 / a]]) @ Si
            B = S @ np.array([[c, rng.normal()], [0, 1 / c]]) @ Si
        elif k == 2:  # common conformal structure
            A = S @ rotation(rng.uniform(0, math.pi)) @ Si
            B = S @ rotation(rng.uniform(0, math.pi)) @ Si
        elif k == 3:  # orientation reversing, generic
            A, B = _sl(rng, -1), _sl(rng, int(rng.choice([-1, 1])))
        else:  # orientation reversing with shared axes
            a, c = rng.uniform(0.3, 3, 2)
            A = S @ np.diag([a, -1 / a]) @ Si
            B = S @ np.diag([c, 1 / c]) @ Si
        out.append((f"family{k}", _unimodular(A), _unimodular(B)))
    return out


CANONICAL = [
    ("shared_axes", np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])),
    ("rotations", rotation(1.0), rotation(math.sqrt(2))),
    ("transverse", np.diag([2.0, 0.5]), rotation(math.pi / 4) @ np.diag([2.0, 0.5]) @ rotation(-math.pi / 4)),
]


@criterion(8, "common invariant measure decision")
def test_c8_pair_decision_vs_oracle():
    pairs = _pair_families(np.random.default_rng(7)) + CANONICAL
    contradictions, confident = [], 0
    for label, A, B in pairs:
        v = common_invariant_measure_pair(A, B)
        o = cesaro_pair_oracle(A, B)
        if o.decision == "unconfident":
            continue
        confident += 1
        if v.verdict != o.decision:
            contradictions.append((label, v.verdict, o.decision, o.defect))
    canon = {label: common_invariant_measure_pair(A, B).verdict for label, A, B in CANONICAL}
    assert canon == {"shared_axes": "exists", "rotations": "exists", "transverse": "none"}
    assert not contradictions, contradictions
    assert confident >= 50


@criterion(9, "boundedness, invariant metric and zero exponent agree")
@pytest.mark.parametrize("name", sorted(zoo()))
def test_c9_equivalence_chain(name):
    entry = zoo()[name]
    gs = entry.system
    v = essential_boundedness_test(gs, DEFAULT_K, entry.boundedness_N, 8)
    r = invariant_metric_search(gs)
    e = extremal_exponents(gs, 10 ** 5, 8, 0)
    zero = abs(e.lambda_plus) < 1e-3
    if v.verdict == "bounded":
        assert r.found
    if r.found:
        assert zero
    if v.verdict == "unbounded":
        assert not r.found
    assert v.verdict != "inconclusive"


@criterion(9, "boundedness, invariant metric and zero exponent agree")
def test_c9_zoo_size():
    assert len(zoo()) >= 6


CONFIG = """\
name: determinism
system: cat_shear
analyses: [exponents, measure, boundedness, metric, perturbation]
seed: 3
n: 5000
n_samples: 4
x_cells: [4, 4]
theta_bins: 32
n_iter: 3000
n_particles: 6
K_list: [2.0, 16.0]
N: 4000
bound_samples: 4
metric_orbit_len: 300
metric_sweeps: 20
strengths: [0.0, 0.5]
perturb_seeds: 3
perturb_n: 3000
perturb_samples: 2
"""


@criterion(10, "determinism across reruns and thread counts")
def test_c10_byte_identical_csv(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    # the shear sweep needs a degenerate base
    cfg.write_text(CONFIG.replace("system: cat_shear", "system: translations"))
    runs = {}
    for label, threads in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / label
        assert main(["run", "--config", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        runs[label] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    assert set(runs["a"]) == {"exponents.csv", "measure.csv", "sweep.csv"}
    assert runs["a"] == runs["b"] == runs["c"]
    cfg2 = tmp_path / "cfg2.yaml"
    cfg2.write_text(CONFIG.replace("analyses: [exponents, measure, boundedness, metric, perturbation]",
                                   "analyses: [exponents, measure]"))
    for label, threads in (("d", 1), ("e", 4)):
        assert main(["run", "--config", str(cfg2), "--out", str(tmp_path / label), "--threads", str(threads)]) == 0
    for f in ("exponents.csv", "measure.csv"):
        assert (tmp_path / "d" / f).read_bytes() == (tmp_path / "e" / f).read_bytes()
