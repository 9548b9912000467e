import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqm import exceptional as X
from dqm.errors import ParameterError
from dqm.lattice import build_hamiltonian
from dqm.polynomials import eta_polynomial

from conftest import STANDARD

# non-degenerate parameter sets with zero-free deforming polynomials
GOOD = {
    "XR": dict(params={"b": 20.3, "c": 1.5, "d": 3.0}, N=10),
    "XqR": dict(params={"b": 0.02, "c": 0.8, "d": 0.3}, q=0.9, N=10),
    "XM": dict(params={"beta": 2.0, "c": 0.5}),
    "XL1": dict(params={"g": 1.0}),
    "XL2": dict(params={"g": 3.0}),
    "XJ1": dict(params={"g": 2.3, "h": 3.4}),
    "XJ2": dict(params={"g": 3.4, "h": 2.3}),
    "XMP": dict(params={"a": 1.3}),
    "XW": dict(params={"a1": 0.6, "a2": 0.8, "a3": 1.5, "a4": 1.7}),
    "XAW": dict(params={"a1": 0.6, "a2": 0.7, "a3": 0.3, "a4": 0.2}, q=0.7),
}
CASES = [(k, ell) for k in sorted(GOOD) for ell in ((2,) if k == "XMP" else (1, 2))]


def deformed(kind, ell):
    return X.make_deformed(kind, ell=ell, **GOOD[kind])


@pytest.mark.parametrize("kind, ell", CASES)
def test_xi_identities(kind, ell):
    r1, r2, r3 = X.xi_identities_check(deformed(kind, ell))
    assert max(r1, r2, r3) <= 1e-9


@pytest.mark.parametrize("kind, ell", CASES)
def test_intertwiners(kind, ell):
    rep = X.intertwiner_check(deformed(kind, ell))
    assert rep.energy <= 1e-12
    assert rep.max() <= 1e-9


@pytest.mark.parametrize("kind, ell", CASES)
def test_degree_and_zeros(kind, ell):
    fam = deformed(kind, ell)
    for n in range(4):
        assert X.exceptional_degree(fam, n) == ell + n
        assert X.zero_count(fam, n) == n


@pytest.mark.parametrize("kind, ell", CASES)
def test_deforming_polynomial_zero_free(kind, ell):
    assert X.positivity_scan(deformed(kind, ell)).ok


@pytest.mark.parametrize("kind, ell", CASES)
def test_deformed_shape_invariance(kind, ell):
    r1, r2 = X.deformed_shape_invariance(deformed(kind, ell))
    assert max(r1, r2) <= 1e-10


@pytest.mark.parametrize("kind, ell", CASES)
def test_deformed_difference_equation(kind, ell):
    assert X.deformed_difference_residual(deformed(kind, ell), 4) <= 1e-9


@pytest.mark.parametrize("kind, ell", [c for c in CASES if c[0] not in ("XW", "XAW")])
def test_orthogonality(kind, ell):
    tol = {"rdQM": 1e-9, "oQM": 1e-7, "idQM": 1e-6}
    fam = deformed(kind, ell)
    assert X.exceptional_orthogonality(fam) <= tol[fam.category]


def test_laguerre_second_kind_quadrature():
    assert X.exceptional_orthogonality(X.make_deformed("XL2", {"g": 3.0}, ell=2), 4) <= 1e-7


def test_orthogonality_not_for_wilson():
    with pytest.raises(ParameterError):
        X.exceptional_orthogonality(deformed("XW", 1))


def test_laguerre_deforming_value():
    fam = X.make_deformed("XL1", {"g": 1.0}, ell=1)
    # L_1^(g + l - 3/2)(-1) = 1 + (g + l - 1/2)
    assert X.eval_deforming(fam, 1.0) == pytest.approx(2.5, rel=1e-14)


def test_meixner_normalization():
    fam = X.make_deformed("XM", {"beta": 2.0, "c": 0.5}, ell=1)
    assert X.eval_deforming(fam, 0.0) == pytest.approx(1.0)
    assert X.eval_exceptional(fam, 0, 0.0) == pytest.approx(1.0, rel=1e-12)


def test_racah_degree_and_sign_changes():
    # d - a - b + c - 1 = -3.8 keeps xi_2 of full degree
    fam = X.make_deformed("XR", {"b": 15.3, "c": 1.5, "d": 3.0}, ell=2, N=8)
    assert X.exceptional_degree(fam, 3) == 5
    assert X.zero_count(fam, 3) == 3
    z = X.zeros(fam, 3)
    assert len(z) == 3 and np.all((z > 0) & (z < fam.x_max))


def test_qracah_deformed_spectrum():
    h = X.build_deformed_hamiltonian(deformed("XqR", 1))
    assert h.checked_levels == 10
    assert h.spectrum_residual <= 1e-9
    assert h.eigenvector_residual <= 1e-9
    assert h.boundary_residual <= 1e-12


def test_truncated_meixner_deformed_spectrum():
    h = X.build_deformed_hamiltonian(deformed("XM", 2))
    assert h.checked_levels >= 2
    assert h.spectrum_residual <= 1e-8
    assert h.eigenvalues[:2] == pytest.approx([0.0, 1.0], abs=1e-8)


def test_racah_deformed_spectrum():
    h = X.build_deformed_hamiltonian(deformed("XR", 2))
    assert h.spectrum_residual <= 1e-9
    assert h.eigenvector_residual <= 1e-9


@pytest.mark.parametrize("kind", ["XL1", "XJ2", "XW"])
def test_continuous_deformed_report(kind):
    rep = X.build_deformed_hamiltonian(deformed(kind, 1))
    assert rep.positivity.ok
    assert rep.equation_residual <= 1e-9


def test_ell_zero_reduces_to_base():
    fam = X.make_deformed("XR", {"b": 20.3, "c": 1.5, "d": 3.0}, ell=0, N=10)
    x = fam.lattice().astype(float)
    assert np.allclose(fam.xi(x), 1.0)
    for n in range(5):
        assert np.allclose(fam.exceptional(n, x), fam.base.poly(n, x), rtol=1e-12, atol=1e-14)
    assert X.xi_identities_check(fam) == (0.0, 0.0, 0.0)
    h = X.build_deformed_hamiltonian(fam)
    assert np.allclose(h.matrix.dense(), build_hamiltonian(fam.base).dense(), atol=1e-12)


def test_ell_zero_oqm():
    fam = X.make_deformed("XJ1", {"g": 2.3, "h": 3.4}, ell=0)
    for n in range(4):
        ref = eta_polynomial(fam.base, n)
        assert np.allclose(fam.exceptional_poly(n).coef, ref.coef, rtol=1e-12, atol=1e-14)


def test_jacobi_mirror():
    for ell in (1, 2):
        for n in range(4):
            assert X.mirror_check_xj(3.4, 2.3, ell, n) <= 1e-11


def test_no_three_term_recurrence():
    witnesses = [
        X.make_deformed("XW", {"a1": 0.3, "a2": 0.5, "a3": 2.5, "a4": 3.0}, ell=1),
        X.make_deformed("XAW", {"a1": 0.8, "a2": 0.9, "a3": 0.1, "a4": -0.2}, ell=1, q=0.5),
        deformed("XM", 1), deformed("XR", 1), deformed("XL1", 1), deformed("XJ1", 2),
    ]
    for fam in witnesses:
        assert X.recurrence_witness(fam) > 1e-4


def test_base_family_recurrence_has_no_residual():
    fam = X.make_deformed("XM", {"beta": 2.0, "c": 0.5}, ell=0)
    assert X.recurrence_witness(fam) < 1e-10


def test_construction_errors():
    with pytest.raises(ParameterError):
        X.make_deformed("XQ", {"g": 1.0})
    with pytest.raises(ParameterError):
        X.make_deformed("XMP", {"a": 1.3}, ell=1)
    with pytest.raises(ParameterError):
        X.make_deformed("XR", {"b": 20.3, "c": 1.5, "d": 3.0}, ell=11, N=10)
    with pytest.raises(ParameterError):
        X.make_deformed("XW", {"a1": 2.0, "a2": 0.8, "a3": 1.5, "a4": 1.7}, ell=1)
    with pytest.raises(ParameterError):
        X.DeformedFamily(STANDARD["L"](), "XJ1", 1)


def test_exceptional_table():
    text = X.exceptional_table(deformed("XR", 1), 2)
    lines = text.strip().splitlines()
    assert lines[0] == "x,eta,P_1_0,P_1_1,P_1_2"
    assert len(lines) == 1 + 10


@given(st.floats(1.2, 4.0), st.integers(1, 3))
def test_laguerre_identities_property(g, ell):
    fam = X.make_deformed("XL2", {"g": g}, ell=ell)
    assert max(X.xi_identities_check(fam)) <= 1e-9
    assert X.intertwiner_check(fam).max() <= 1e-9


@given(st.floats(1.2, 2.5), st.floats(0.25, 0.45))
def test_meixner_deformed_isospectral_property(beta, c):
    fam = X.make_deformed("XM", {"beta": beta, "c": c}, ell=1)
    h = X.build_deformed_hamiltonian(fam)
    assert h.spectrum_residual <= 1e-8
