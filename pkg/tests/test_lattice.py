import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqm import lattice as L
from dqm.errors import ParameterError
from dqm.families import draw_family, groundstate_weight

from conftest import STANDARD, meixner, qracah, racah


def test_meixner_matrix_entries():
    mat = L.build_hamiltonian(meixner())
    x = np.arange(6)
    # B = x + 2, D = 2x at beta = 2, c = 1/2
    assert np.allclose(mat.diagonal[:6], 3 * x + 2)
    assert np.allclose(mat.off_diagonal[:5], -np.sqrt((x[:5] + 2) * 2 * (x[:5] + 1)))


def test_two_site_racah():
    fam = racah(N=1, b=3.5, c=1.5, d=2.0)
    dec = L.eigendecompose(L.build_hamiltonian(fam))
    assert dec.eigenvalues == pytest.approx([0.0, float(fam.energy(1))], abs=1e-12)


def test_dense_matches_bands():
    mat = L.build_hamiltonian(racah(N=4))
    H = mat.dense()
    assert np.allclose(H, H.T)
    assert np.allclose(np.diag(H), mat.diagonal)
    assert mat.dimension == 5


def test_ground_state_annihilated():
    for fam in (racah(), qracah()):
        H = L.build_hamiltonian(fam).dense()
        phi0 = np.sqrt(groundstate_weight(fam, fam.lattice()))
        assert np.max(np.abs(H @ phi0)) <= 1e-12 * np.max(np.abs(H))


def test_non_rdqm_rejected():
    with pytest.raises(ParameterError):
        L.build_hamiltonian(STANDARD["H"]())


@pytest.mark.parametrize("fam", [racah(), qracah(), racah(N=20, b=30.5)], ids=["R", "qR", "R20"])
def test_finite_spectrum(fam):
    res, _, _ = L.spectrum_residual(fam)
    assert res <= 1e-10
    assert L.eigenvector_residual(fam) <= 1e-9


def test_truncated_meixner_low_levels():
    fam = meixner()
    k = L.tail_levels(fam)
    assert k >= 3
    res, vals, E = L.spectrum_residual(fam, k)
    assert res <= 1e-8
    assert L.eigenvector_residual(fam, k) <= 1e-4


def test_tail_levels_finite():
    assert L.tail_levels(racah(N=6)) == 7


def test_dual_polynomial_boundary_values():
    fam = racah()
    assert L.dual_polynomial(fam, 0, 3.7) == 1.0
    for x in range(fam.N + 1):
        assert L.dual_polynomial(fam, x, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert L.dual_polynomial(meixner(), 1, 1.0) == pytest.approx(0.5)


def test_dual_polynomial_range():
    with pytest.raises(IndexError):
        L.dual_polynomial(racah(N=4), 5, 1.0)


def test_duality():
    assert L.duality_residual(racah()) <= 1e-10
    assert L.duality_residual(qracah()) <= 1e-9
    assert L.duality_residual(meixner(), 8, 8) <= 1e-10


@pytest.mark.parametrize("fam", [racah(), qracah()], ids=["R", "qR"])
def test_completeness_finite(fam):
    assert L.completeness_residual(fam) <= 1e-9


def test_completeness_meixner_block():
    assert L.completeness_residual(meixner(), x_top=10) <= 1e-9


@pytest.mark.parametrize("fam", [racah(), qracah()], ids=["R", "qR"])
def test_orthogonality_finite(fam):
    assert L.orthogonality_residual(fam) <= 1e-10


def test_orthogonality_meixner_low():
    assert L.orthogonality_residual(meixner(), 3) <= 1e-9


def test_orthogonality_meixner_past_truncation():
    # the truncated-lattice sum loses the tail for n > 3; the closed-form weight does not
    fam = meixner()
    x = np.arange(201)
    P = np.array([fam.poly(n, x) for n in range(9)])
    d = np.sqrt([fam.norm(n) for n in range(9)])
    G = (P * fam.weight(x)) @ P.T * np.outer(d, d)
    assert np.max(np.abs(G - np.eye(9))) <= 1e-12


@pytest.mark.parametrize("fam", [racah(N=5), qracah(N=5)], ids=["R", "qR"])
def test_characteristic_equation(fam):
    assert L.characteristic_equation_residual(fam) <= 1e-9


def test_characteristic_equation_needs_finite_lattice():
    with pytest.raises(ParameterError):
        L.characteristic_equation_residual(meixner())


def test_characteristic_equation_fails_off_spectrum():
    # energies not in the spectrum leave the boundary condition unsatisfied
    fam = racah(N=5)
    E = np.array([0.5, 7.3])
    Q = L.dual_polynomials(fam, E, 5)
    DN = float(fam.D(5))
    assert np.max(np.abs(E * Q[5] - DN * (Q[5] - Q[4]))) > 1e-3


@pytest.mark.parametrize("fam", [meixner(), racah(), qracah()], ids=["M", "R", "qR"])
def test_lower_triangularity(fam):
    above, diag = L.lower_triangularity(fam, 4)
    assert above <= 1e-9
    assert diag <= 1e-9


@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
def test_racah_spectrum_property(N, seed):
    fam = draw_family("R", np.random.default_rng(seed), N=N)
    res, _, _ = L.spectrum_residual(fam)
    assert res <= 1e-10


@given(st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_qracah_duality_property(N, seed):
    fam = draw_family("qR", np.random.default_rng(seed), N=N)
    assert L.duality_residual(fam) <= 1e-9


@pytest.mark.parametrize("fam", [meixner(), racah()], ids=["M", "R"])
def test_ground_weight_sum(fam):
    assert L.orthogonality_residual(fam, 0) <= 1e-12
