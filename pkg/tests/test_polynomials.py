from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqm import polynomials as P
from dqm.errors import ParameterError
from dqm.families import make_family

from conftest import STANDARD, meixner, qracah, racah

# Values frozen from exact rational sums (R, M), 40-digit mpmath sums (qR, J, AW)
# and the textbook three-term recurrences (H, L, MP, W).
ORACLES = [
    (lambda: racah(), 2, 3, float(Fraction(41, 225))),
    (lambda: racah(), 5, 4, float(Fraction(29887, 121365))),
    (lambda: racah(), 8, 8, float(Fraction(323, 1496835))),
    (lambda: qracah(), 3, 2, -0.14137072959763954442),
    (lambda: qracah(), 5, 3, -0.081471594793771669279),
    (lambda: qracah(), 10, 7, -1.2890195240183817674),
    (lambda: meixner(), 1, 1, 0.5),
    (lambda: meixner(), 3, 2, -1.0),
    (lambda: meixner(), 4, 7, 1.0),
    (STANDARD["H"], 5, 0.7, 34.49824),
    (STANDARD["L"], 4, 0.9, -0.47972066625),
    (STANDARD["J"], 3, 0.4, 0.34135760383556053951),
    (STANDARD["AW"], 3, 1.1, 0.13696102598624282747),
]


@pytest.mark.parametrize("make, n, x, expected", ORACLES)
def test_series_matches_frozen_values(make, n, x, expected):
    val = complex(P.eval_polynomial(make(), n, x))
    assert val.real == pytest.approx(expected, rel=1e-10, abs=1e-12)
    assert abs(val.imag) < 1e-12


def test_meixner_pollaczek_values():
    fam = STANDARD["MP"]()
    expected = [1.0, 1.2, -0.58, -1.672, 0.1654, 1.912336]
    got = [complex(P.eval_polynomial(fam, n, 0.6)).real for n in range(6)]
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_wilson_value():
    val = complex(P.eval_polynomial(STANDARD["W"](), 3, 0.9)).real
    assert val == pytest.approx(-1452.0627, rel=1e-7)


def test_hermite_p2():
    assert P.eval_polynomial(STANDARD["H"](), 2, 1.0) == pytest.approx(2.0)


def test_index_out_of_range():
    with pytest.raises(IndexError):
        P.eval_polynomial(racah(N=4), 5, 1)
    with pytest.raises(IndexError):
        P.eval_polynomial(meixner(), -1, 1)


def test_eta_polynomial_oqm_only():
    with pytest.raises(ParameterError):
        P.eta_polynomial(meixner(), 2)


@pytest.mark.parametrize("fid", ["H", "L", "J"])
def test_eta_polynomial_matches_series(fid):
    fam = STANDARD[fid]()
    x = P._default_points(fam)
    for n in range(8):
        p = P.eta_polynomial(fam, n)
        ref = fam.poly(n, x)
        assert np.max(np.abs(p(fam.eta(x)) - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("fam", [meixner(), racah(), qracah()], ids=["M", "R", "qR"])
def test_value_at_origin_is_one(fam):
    for n in range(fam.N + 1 if fam.N else 10):
        assert P.eval_polynomial(fam, n, 0) == pytest.approx(1.0, abs=1e-12)


def test_meixner_recurrence_coefficients():
    rc = P.recurrence_coeffs_rdqm(meixner(), 6)
    assert rc.A[0] == pytest.approx(-2.0, rel=1e-12)
    for n in range(1, 7):
        assert rc.C[n] == pytest.approx(-2.0 * n, rel=1e-12)
        assert rc.A[n] == pytest.approx(-(n + 2.0), rel=1e-12)


@pytest.mark.parametrize("fam", [meixner(), racah(), qracah()], ids=["M", "R", "qR"])
def test_abrel(fam):
    assert P.abrel_residual(fam) < 1e-10


def test_closure_coefficients_match_sampled_fit():
    fam = racah()
    rc = P.recurrence_coeffs_rdqm(fam, 7)
    for n in range(7):
        A, B, C, resid = P.recurrence_from_samples(fam, n)
        assert resid < 1e-10
        assert A == pytest.approx(rc.A[n], rel=1e-9)
        assert B == pytest.approx(rc.B[n], rel=1e-9, abs=1e-12)
        if n:
            assert C == pytest.approx(rc.C[n], rel=1e-9)


def test_hermite_sampled_recurrence():
    A, B, C, _ = P.recurrence_from_samples(STANDARD["H"](), 0)
    assert A == pytest.approx(0.5, rel=1e-12)
    assert abs(B) < 1e-12


def test_symmetric_jacobi_has_zero_diagonal():
    fam = make_family("J", {"g": 2.5, "h": 2.5})
    for n in range(5):
        _, B, _, _ = P.recurrence_from_samples(fam, n)
        assert abs(B) < 1e-10


def test_recurrence_evaluation_matches_series():
    fam = qracah()
    rc = P.recurrence_coeffs_rdqm(fam, 6)
    val = P.eval_via_recurrence(rc, 5, fam.eta(3))
    assert val == pytest.approx(float(fam.poly(5, 3)), rel=1e-10)


def test_rodrigues_trivial_and_first_rung():
    fam = meixner()
    x = np.arange(10)
    assert np.allclose(P.rodrigues_ladder(fam, 0, x), 1.0)
    assert np.allclose(P.rodrigues_ladder(fam, 1, x), 1 - x / 2, atol=1e-13)


@pytest.mark.parametrize("fid", sorted(STANDARD))
def test_forward_shift(fid):
    fam = STANDARD[fid]()
    for n in range(1, 7):
        assert P.forward_check(fam, n) <= 1e-10


@pytest.mark.parametrize("fid", sorted(STANDARD))
def test_factorization(fid):
    assert P.factorization_check(STANDARD[fid](), 6) <= 1e-9


def test_difference_equation_racah():
    fam = racah()
    for n in range(9):
        assert P.difference_equation_residual(fam, n) <= 1e-10


@pytest.mark.parametrize("fid", ["L", "J", "MP", "W", "AW", "M", "qR"])
def test_difference_equation(fid):
    fam = STANDARD[fid]()
    for n in range(7):
        assert P.difference_equation_residual(fam, n) <= 1e-9


@pytest.mark.parametrize("fid", ["H", "L", "J", "MP", "W", "AW", "M", "R"])
def test_triple_agreement(fid):
    fam = STANDARD[fid]()
    top = min(12, P.n_max(fam))
    # on the infinite M lattice the ladder's differences cancel badly beyond x ~ 20 at n > 10
    x = fam.lattice()[:20] if fid == "M" else None
    for n in range(top + 1):
        assert P.triple_agreement(fam, n, x) <= 1e-9, n


def test_triple_agreement_qracah_low_degrees():
    fam = qracah()
    for n in range(7):
        assert P.triple_agreement(fam, n) <= 1e-9


def test_rodrigues_vs_series_qracah_full_lattice():
    fam = qracah()
    x = fam.lattice()
    for n in range(11):
        ref = fam.poly(n, x)
        lad = P.rodrigues_ladder(fam, n, x)
        assert np.max(np.abs(lad - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("fid", ["H", "L", "J", "M", "R", "qR"])
def test_degree(fid):
    fam = STANDARD[fid]()
    for n in range(1, 6):
        lead, nxt = P.degree_check(fam, n)
        assert abs(lead) > 1e-12
        assert nxt < 1e-7


def test_tabulate_format():
    text = P.tabulate(racah(N=4), 2)
    lines = text.strip().splitlines()
    assert lines[0] == "x,eta,P_0,P_1,P_2"
    assert len(lines) == 6
    row = lines[3].split(",")
    assert float(row[0]) == 2.0
    assert float(row[3]) == pytest.approx(float(racah(N=4).poly(1, 2)), rel=1e-16)


def test_tabulate_needs_points_off_lattice():
    with pytest.raises(ValueError):
        P.tabulate(STANDARD["H"](), 3)


@given(st.floats(0.6, 3.0), st.floats(0.3, 0.45), st.integers(1, 8))
def test_meixner_difference_equation_property(beta, c, n):
    fam = meixner(beta, c)
    assert P.difference_equation_residual(fam, n) <= 1e-9


@given(st.floats(-2.0, 2.0), st.integers(0, 8))
def test_hermite_parity(x, n):
    fam = STANDARD["H"]()
    assert fam.poly(n, -x) == pytest.approx((-1) ** n * fam.poly(n, x), rel=1e-12, abs=1e-9)
