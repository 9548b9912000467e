import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import Polynomial

from dqm import unified as U
from dqm.errors import ConstraintError, CoordinateDegeneracyError, ParameterError

from conftest import STANDARD, meixner, qracah, racah

COORDS = [("i", {}), ("ii", {}), ("iii", {"gamma": 0.7}), ("iv", {"gamma": 0.5}),
          ("v", {"gamma": 0.9}), ("vi", {"gamma": 0.4}), ("vii", {"gamma": 0.6}),
          ("viii", {"gamma": 1.1}), ("i'", {}), ("ii'", {"d": 2.5}), ("iii'", {"q": 0.6}),
          ("iv'", {"q": 0.8}), ("v'", {"d": 0.3, "q": 0.7}), ("ii'", {"d": 1.5, "eps_prime": -1})]


@pytest.mark.parametrize("cid, kw", COORDS, ids=[c + str(sorted(k.items())) for c, k in COORDS])
def test_coordinate_identities(cid, kw):
    coord = U.coordinate(cid, **kw)
    rng = np.random.default_rng(5)
    x = rng.uniform(-1.5, 1.5, 200)
    z = x + 1j * rng.uniform(-0.5, 0.5, 200)
    for pts in (x, z):
        scale = max(1.0, np.max(np.abs(coord.eta(pts))) ** 2)
        assert coord.addition_residual(pts) <= 1e-11 * scale
        assert coord.multiplication_residual(pts) <= 1e-11 * scale


def test_coordinate_errors():
    with pytest.raises(ParameterError):
        U.coordinate("ix")
    with pytest.raises(ParameterError):
        U.coordinate("v'", d=0.3)
    with pytest.raises(ParameterError):
        U.coordinate("ii'")
    with pytest.raises(ParameterError):
        U.coordinate("iii", gamma=0.0)


def test_spec_validation():
    with pytest.raises(ParameterError):
        U.PotentialSpec(2, {(0, 2): 1.0})
    with pytest.raises(ParameterError):
        U.PotentialSpec(3, {(2, 0): 1.0})
    with pytest.raises(ParameterError):
        U.PotentialSpec(0, {})
    U.PotentialSpec(3, {(2, 1): 1.0})


def test_meixner_potentials_from_fit():
    coord, spec = U.fit_family_spec(meixner())
    x = np.arange(30)
    Vp, Vm = U.build_potentials(coord, spec, x)
    assert np.allclose(Vp, x + 2, rtol=1e-12)
    assert np.allclose(Vm, 2 * x, atol=1e-11)


@pytest.mark.parametrize("make, tol", [(meixner, 1e-12), (racah, 1e-11), (qracah, 1e-11)])
def test_family_reproduction(make, tol):
    assert U.potential_reproduction_residual(make()) <= tol


def test_constant_spec_potentials():
    coord = U.coordinate("ii'", d=2.5)
    # a v00-only spec has no degree-L term, so isolate v00 through linearity in v
    with_v00 = U.PotentialSpec(2, {(0, 0): 1.7, (2, 0): 0.8})
    without = U.PotentialSpec(2, {(2, 0): 0.8})
    x = np.linspace(0.3, 4.0, 9)
    Vp1, Vm1 = U.build_potentials(coord, with_v00, x)
    Vp0, Vm0 = U.build_potentials(coord, without, x)
    Vp, Vm = Vp1 - Vp0, Vm1 - Vm0
    e, up, dn = coord.eta(x), coord.up(x), coord.down(x)
    assert np.allclose(Vp, 1.7 / ((up - e) * (up - dn)), rtol=1e-12)
    assert np.allclose(Vm, 1.7 / ((dn - e) * (dn - up)), rtol=1e-12)


def test_degenerate_coordinate_point():
    # ii' with d = 2 collapses eta(x+1) onto eta(x-1) at x = -1
    coord = U.coordinate("ii'", d=2.0)
    spec = U.PotentialSpec(2, {(2, 0): 1.0})
    with pytest.raises(CoordinateDegeneracyError):
        U.build_potentials(coord, spec, np.array([-1.0]))


def test_reduce_spec_matches_direct_evaluation():
    coord = U.coordinate("v'", d=0.3, q=0.7)
    raw = {(1, 2): 0.4, (0, 3): -0.2, (2, 1): 1.1, (0, 0): 0.5}
    spec = U.reduce_spec(coord, 3, raw)
    assert all(l in (0, 1) for _, l in spec.v)
    x = np.linspace(0.5, 2.0, 7)
    e = coord.eta(x)
    for s in (coord.up(x), coord.down(x)):
        direct = sum(c * e ** k * s ** l for (k, l), c in raw.items())
        reduced = sum(c * e ** k * s ** l for (k, l), c in spec.v.items())
        assert np.allclose(direct, reduced, rtol=1e-12)


def test_triangularity_meixner_fit():
    coord, spec = U.fit_family_spec(meixner())
    rep = U.triangularity_check(coord, spec, 4)
    assert rep.bound_ok
    assert rep.degrees[3] <= 3
    assert rep.energies[3] == pytest.approx(3.0, rel=1e-9)
    assert abs(rep.energies[0]) < 1e-9


def test_triangularity_l3():
    coord = U.coordinate("i'")
    spec = U.PotentialSpec(3, {(3, 0): 0.3, (2, 1): 0.5, (0, 0): 1.0})
    rep = U.triangularity_check(coord, spec, 3)
    assert rep.degrees[3] <= 4
    assert rep.bound_ok


@pytest.mark.parametrize("make", [meixner, racah, qracah])
def test_triangularity_energies(make):
    fam = make()
    coord, spec = U.fit_family_spec(fam)
    rep = U.triangularity_check(coord, spec, 5)
    assert rep.bound_ok
    E = [float(fam.energy(n)) for n in range(1, 6)]
    assert np.allclose(rep.energies[1:], E, rtol=1e-8)


def test_bochner_meixner():
    assert U.bochner_recover(meixner())[2] <= 1e-11


def test_bochner_racah():
    assert U.bochner_recover(racah())[2] <= 1e-10


@pytest.mark.parametrize("fid", ["MP", "W", "AW"])
def test_bochner_idqm(fid):
    assert U.bochner_recover(STANDARD[fid]())[2] <= 1e-9


def test_bochner_negative_control():
    dev = U.bochner_recover(meixner(), recurrence_from=meixner(3.0, 0.4))[2]
    assert dev > 1e-2


def test_bochner_needs_dqm():
    with pytest.raises(ParameterError):
        U.bochner_recover(STANDARD["H"]())


def _exact_htilde_lattice(spec, n):
    """H~ x^n on the i' lattice (eta = x, shift 1) as an exact Polynomial in x."""
    X = Polynomial([0.0, 1.0])
    up, dn = X + 1, X - 1
    Vt = lambda s: sum((c * X ** k * s ** l for (k, l), c in spec.v.items()), Polynomial([0.0]))
    # V+ = Vt(up) / ((up - x)(up - dn)) = Vt(up) / 2, V- = Vt(dn) / 2
    f = X ** n
    return -(Vt(up) / 2 * (up ** n - f) + Vt(dn) / 2 * (dn ** n - f))


def test_qes_l3_m0():
    coord = U.coordinate("i'")
    spec = U.PotentialSpec(3, {(3, 0): 0.4, (2, 1): -0.7, (1, 0): 0.2})
    res = U.qes_compensation(coord, spec, 0)
    assert abs(res.e0) < 1e-9
    assert res.invariance_residual <= 1e-9


@given(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4), st.floats(0.3, 2.0))
def test_qes_l3_m3_random(coeffs, lead):
    coord = U.coordinate("i'")
    spec = U.PotentialSpec(3, {(3, 0): lead, (2, 1): coeffs[0], (1, 1): coeffs[1],
                               (2, 0): coeffs[2], (0, 0): coeffs[3]})
    res = U.qes_compensation(coord, spec, 3)
    assert res.invariance_residual <= 1e-9
    # independent oracle: the degree-4 coefficient of the exact image of x^3
    exact = _exact_htilde_lattice(spec, 3)
    assert res.e0 == pytest.approx(exact.coef[4], rel=1e-8, abs=1e-9)


def test_qes_l4_requires_constraint():
    coord = U.coordinate("i'")
    spec = U.PotentialSpec(4, {(4, 0): 0.5, (3, 1): 0.9, (2, 0): 1.0, (0, 0): 0.3})
    with pytest.raises(ConstraintError):
        U.qes_compensation(coord, spec, 2)
    fixed = U.qes_constrained_spec(coord, spec, 2)
    res = U.qes_compensation(coord, fixed, 2)
    assert res.constraint_residual <= 1e-9
    assert res.invariance_residual <= 1e-9
    # the compensated image of x^2 must stay of degree <= 2
    exact = _exact_htilde_lattice(fixed, 2) - res.e0 * Polynomial([0, 0, 0, 0, 1]) \
        - res.e1 * Polynomial([0, 0, 0, 1])
    assert np.max(np.abs(exact.coef[3:])) <= 1e-8


def test_qes_q_coordinate():
    coord = U.coordinate("iv'", q=0.7)
    spec = U.PotentialSpec(3, {(3, 0): 0.2, (2, 1): 0.5, (0, 0): 1.0})
    res = U.qes_compensation(coord, spec, 5)
    assert res.invariance_residual <= 1e-9


def test_qes_bad_arguments():
    coord = U.coordinate("i'")
    with pytest.raises(ParameterError):
        U.qes_compensation(coord, U.PotentialSpec(2, {(2, 0): 1.0}), 1)
    with pytest.raises(ParameterError):
        U.qes_compensation(coord, U.PotentialSpec(3, {(3, 0): 1.0}), -1)


@given(st.floats(0.1, 10.0))
def test_scaling_covariance(s):
    coord = U.coordinate("v'", d=0.3, q=0.7)
    spec = U.PotentialSpec(3, {(3, 0): 0.2, (2, 1): 0.5, (0, 0): 1.0})
    x = np.linspace(0.5, 2.0, 6)
    Vp, Vm = U.build_potentials(coord, spec, x)
    Sp, Sm = U.build_potentials(coord, spec.scaled(s), x)
    assert np.allclose(Sp, s * Vp, rtol=1e-12)
    assert np.allclose(Sm, s * Vm, rtol=1e-12)
    e0 = U.qes_compensation(coord, spec, 2).e0
    assert U.qes_compensation(coord, spec.scaled(s), 2).e0 == pytest.approx(s * e0, rel=1e-8)
