import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqm.errors import DomainError, ParameterError
from dqm.families import (CONSTRAINTS, FAMILIES, alpha_consistency, draw_family,
                          energy_from_shape_invariance, groundstate_weight, load_config,
                          make_family, norm_constant)

from conftest import STANDARD, meixner, qracah, racah


def test_nine_families():
    assert sorted(FAMILIES) == sorted(["H", "L", "J", "MP", "W", "AW", "M", "R", "qR"])
    assert set(CONSTRAINTS) == set(FAMILIES)


def test_meixner_descriptor():
    fam = meixner()
    x = np.arange(6)
    np.testing.assert_allclose(fam.B(x), x + 2.0)
    np.testing.assert_allclose(fam.D(x), 2.0 * x)
    np.testing.assert_allclose(fam.energy(np.arange(5)), np.arange(5.0))


def test_hermite_descriptor():
    fam = make_family("H")
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(fam.U(x), x ** 2 - 1, atol=1e-14)
    np.testing.assert_allclose(fam.eta(x), x)
    assert fam.energy(3) == 6


@pytest.mark.parametrize("fid, params, kw", [
    ("L", {"g": -1.0}, {}),
    ("J", {"g": 1.0, "h": 0.0}, {}),
    ("MP", {"a": 0.0}, {}),
    ("W", {"a1": -0.1, "a2": 1, "a3": 1, "a4": 1}, {}),
    ("W", {"a1": 1 + 1j, "a2": 1, "a3": 1, "a4": 1}, {}),
    ("AW", {"a1": 1.2, "a2": 0.1, "a3": 0.1, "a4": 0.1}, {"q": 0.5}),
    ("M", {"beta": 2.0, "c": 1.0}, {}),
    ("R", {"a": -6, "b": 2.0, "c": 0.5, "d": 3.0}, {"N": 6}),
    ("R", {"a": -6, "b": 12.0, "c": 4.5, "d": 3.0}, {"N": 6}),
    ("qR", {"a": 0.9 ** -10, "b": 0.2, "c": 0.8, "d": 0.3}, {"q": 0.9, "N": 10}),
    ("qR", {"a": 0.9 ** -10, "b": 0.02, "c": 0.2, "d": 0.3}, {"q": 0.9, "N": 10}),
])
def test_invalid_parameters_rejected(fid, params, kw):
    with pytest.raises(ParameterError):
        make_family(fid, params, **kw)


def test_missing_and_unknown_parameters():
    with pytest.raises(ParameterError):
        make_family("J", {"g": 1.0})
    with pytest.raises(ParameterError):
        make_family("L", {"g": 1.0, "h": 2.0})
    with pytest.raises(ParameterError):
        make_family("AW", {"a1": 0.1, "a2": 0.1, "a3": 0.1, "a4": 0.1})


def test_conjugate_pair_accepted():
    fam = make_family("W", {"a1": 0.7 + 0.3j, "a2": 0.7 - 0.3j, "a3": 1.2, "a4": 0.9})
    assert fam.energy(2) > fam.energy(1) > 0


def test_meixner_weight_values():
    fam = meixner()
    np.testing.assert_allclose(groundstate_weight(fam, [0, 1, 2]), [1.0, 1.0, 0.75], rtol=1e-15)
    with pytest.raises(DomainError):
        groundstate_weight(fam, 2.5)


def test_product_weight_matches_closed_form(rdqm_family):
    x = np.arange(min(rdqm_family.x_max, 30) + 1)
    np.testing.assert_allclose(groundstate_weight(rdqm_family, x), rdqm_family.weight(x), rtol=1e-12)


def test_norm_values():
    assert norm_constant(make_family("H"), 0) == pytest.approx(np.sqrt(np.pi), rel=1e-15)
    assert norm_constant(make_family("H"), 3) == pytest.approx(48 * np.sqrt(np.pi), rel=1e-15)
    assert norm_constant(meixner(), 0) == pytest.approx(0.25, rel=1e-15)


def test_meixner_norm_beyond_factorial_range():
    fam = meixner(1.5, 0.4)
    ratio = fam.norm(200) / fam.norm(199)
    assert ratio == pytest.approx(0.4 * (1.5 + 199) / 200, rel=1e-12)


def test_alpha_consistency_examples():
    rep = alpha_consistency(make_family("H"), 10)
    assert rep.max_residual == 0
    assert all(ap == 2 and am == -2 for _, ap, am, _ in rep.rows)
    assert alpha_consistency(meixner(), 10).max_residual <= 1e-12
    assert alpha_consistency(qracah(), 10).max_residual <= 1e-10


def test_energy_from_shape_invariance(any_family):
    n = np.arange(1, 21) if any_family.N is None else np.arange(1, any_family.N + 1)
    for k in n:
        E = float(np.real(any_family.energy(k)))
        assert float(np.real(energy_from_shape_invariance(any_family, k))) == pytest.approx(E, rel=1e-12)


def test_energies_start_at_zero_and_increase(any_family):
    top = 12 if any_family.N is None else any_family.N
    E = np.real(np.asarray(any_family.energy(np.arange(top + 1)), dtype=complex))
    assert E[0] == 0
    assert np.all(np.diff(E) > 0)


def test_rdqm_boundary_and_positivity(rdqm_family):
    x = rdqm_family.lattice()
    assert rdqm_family.D(0) == 0
    if rdqm_family.N is not None:
        assert abs(rdqm_family.B(rdqm_family.N)) <= 1e-12
    assert np.all(rdqm_family.B(x[:-1]) > 0)
    assert np.all(rdqm_family.D(x[1:]) > 0)


def test_eta_increasing_from_zero(any_family):
    if any_family.category == "rdQM":
        x = np.arange(min(any_family.x_max, 40) + 1)
    else:
        lo, hi = any_family.domain
        x = np.linspace(max(lo, -3), min(hi, 3), 50)[1:-1]
    eta = np.real(np.asarray(any_family.eta(x), dtype=complex))
    if any_family.category != "oQM" or any_family.id == "H":
        assert np.all(np.diff(eta) > 0) or np.all(np.diff(eta) < 0)
    if any_family.category == "rdQM":
        assert eta[0] == 0


def test_eta_depends_on_shifted_parameters():
    fam = racah()
    x = np.arange(5)
    assert not np.allclose(fam.eta(x), fam.shifted().eta(x))


def test_shift_moves_only_named_parameters():
    fam = meixner(2.0, 0.5)
    up = fam.shifted()
    assert up.beta == 3.0 and up.c == 0.5


def test_load_config(tmp_path):
    path = tmp_path / "fam.cfg"
    path.write_text("# a Racah system\nfamily = R\nN = 6\nparam.a = -6\nparam.b = 12\n"
                    "param.c = 1.5\nparam.d = 3\n", encoding="utf-8")
    fam = load_config(path)
    assert fam.id == "R" and fam.N == 6 and fam.b == 12


def test_load_config_complex_and_errors(tmp_path):
    path = tmp_path / "w.cfg"
    path.write_text("family = W\nparam.a1 = 0.7+0.3j\nparam.a2 = 0.7-0.3j\nparam.a3 = 1\nparam.a4 = 2\n")
    assert load_config(path).a1 == 0.7 + 0.3j
    bad = tmp_path / "bad.cfg"
    bad.write_text("family = L\ncolour = red\n")
    with pytest.raises(ParameterError):
        load_config(bad)
    missing = tmp_path / "missing.cfg"
    missing.write_text("param.g = 1\n")
    with pytest.raises(ParameterError):
        load_config(missing)


@pytest.mark.parametrize("fid", sorted(STANDARD))
def test_draws_are_valid_and_reproducible(fid):
    a = draw_family(fid, np.random.default_rng(3))
    b = draw_family(fid, np.random.default_rng(3))
    assert a.describe() == b.describe()


@given(st.integers(0, 10_000))
def test_drawn_racah_spectra_increase(seed):
    fam = draw_family("R", np.random.default_rng(seed))
    E = fam.energy(np.arange(fam.N + 1))
    assert np.all(np.diff(E) > 0)
    x = fam.lattice()
    assert np.all(fam.B(x[:-1]) > 0) and np.all(fam.D(x[1:]) > 0)


@given(st.integers(0, 10_000))
def test_drawn_qracah_weights_positive(seed):
    fam = draw_family("qR", np.random.default_rng(seed))
    assert np.all(groundstate_weight(fam, fam.lattice()) > 0)
