import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqm import operators as O
from dqm.errors import ParameterError
from dqm.families import draw_family

from conftest import STANDARD, meixner, qracah, racah

RDQM = {"M": meixner, "R": racah, "qR": qracah}


@pytest.fixture(params=sorted(RDQM))
def fam(request):
    return RDQM[request.param]()


def test_hamiltonian_factorizes(fam):
    ops = O.build_operators(fam)
    assert np.allclose(ops.H, ops.A_dagger @ ops.A)
    assert np.allclose(ops.H, ops.H.T)
    # tridiagonal
    assert np.all(np.triu(ops.H, 2) == 0)


def test_ground_state_and_constant(fam):
    ops = O.build_operators(fam)
    assert O.ground_annihilation_residual(fam, ops) <= 1e-12
    assert O.htilde_constant_residual(fam, ops) <= 1e-12


@pytest.mark.parametrize("name, tol", [("M", 1e-12), ("R", 1e-10), ("qR", 1e-10)])
def test_closure(name, tol):
    assert O.closure_residual(RDQM[name]()) <= tol


def test_dual_closure(fam):
    assert O.dual_closure_residual(fam) <= 1e-10


def test_closure_detects_wrong_family():
    # operators from one parameter set against closure data of another
    ops = O.build_operators(racah())
    assert O.closure_residual(racah(b=14.5), ops) > 1e-6


def test_shape_invariance(fam):
    r1, r2 = O.shape_invariance_residual(fam)
    assert r1 <= 1e-11
    assert r2 <= 1e-11


def test_shape_invariance_rdqm_only():
    with pytest.raises(ParameterError):
        O.shape_invariance_residual(STANDARD["J"]())


def test_perfect_square(fam):
    assert O.perfect_square_residual(fam) <= 1e-10


def test_ladder_identities(fam):
    rep = O.ladder_checks(fam)
    for name in ("hermiticity", "commutator", "raising", "lowering", "product",
                 "off_diagonal", "eta_tridiagonal"):
        assert getattr(rep, name) <= 1e-9, name
    assert rep.levels >= 5


def test_meixner_ladder_explicit():
    # A_n = -(n + 2), C_n = -2n at beta = 2, c = 1/2: a+ phi_0 = -2 phi_1
    fam = meixner()
    ops = O.build_operators(fam)
    lad = O.ladder_operators(fam, ops)
    Phi = O.eigenvector_matrix(fam, 2)
    s = ops.interior
    img = lad.a_plus @ Phi[:, 0]
    assert np.allclose(img[s][:40], -2.0 * Phi[s, 1][:40], atol=1e-10)


def test_heisenberg_identity_time():
    fam = racah()
    assert O.heisenberg_check(fam, [0.0]) <= 1e-12


@pytest.mark.parametrize("name", ["R", "qR"])
def test_heisenberg_finite(name):
    assert O.heisenberg_check(RDQM[name](), [0.1, 0.5, 1.0]) <= 1e-8


def test_heisenberg_small_qracah():
    assert O.heisenberg_check(qracah(N=6), [0.1, 1.0]) <= 1e-8


def test_heisenberg_truncated_meixner_block():
    fam = meixner()
    assert O.reliable_modes(fam) >= 3
    assert O.heisenberg_check(fam, [0.1, 0.5]) <= 1e-8


def test_askey_wilson_algebra(fam):
    r1, r2 = O.askey_wilson_algebra_residual(fam)
    assert r1 <= 1e-9
    assert r2 <= 1e-9


def test_matrix_function_reproduces_matrix():
    fam = racah(N=5)
    ops = O.build_operators(fam)
    from dqm.lattice import build_hamiltonian, eigendecompose
    dec = eigendecompose(build_hamiltonian(fam))
    assert np.allclose(O.matrix_function(dec, lambda v: v), ops.H, atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1))
def test_closure_random_racah(seed):
    fam = draw_family("R", np.random.default_rng(seed), N=8)
    assert O.closure_residual(fam) <= 1e-10
    assert O.dual_closure_residual(fam) <= 1e-10


@given(st.integers(0, 2 ** 32 - 1))
def test_heisenberg_random_qracah(seed):
    fam = draw_family("qR", np.random.default_rng(seed), N=6)
    assert O.heisenberg_check(fam, [0.3, 1.0]) <= 1e-8


def test_heisenberg_meixner_half():
    assert O.heisenberg_check(meixner(), [0.5]) <= 1e-9
