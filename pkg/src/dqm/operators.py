"""Matrix realizations of H, eta, A, A^dagger and a^(+-) on the rdQM lattice."""
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, ParameterError
from .families import groundstate_weight
from .lattice import JacobiMatrix, build_hamiltonian, eigendecompose, lattice_BD
from .polynomials import recurrence_coeffs_rdqm


@dataclass(frozen=True)
class OperatorBundle:
    H: np.ndarray
    H_tilde: np.ndarray
    A: np.ndarray
    A_dagger: np.ndarray
    eta: np.ndarray
    # rows/columns unaffected by truncation of an infinite lattice
    interior: slice


def _interior(fam, dim, band=2):
    return slice(0, dim) if fam.N is not None else slice(0, dim - band)


def build_operators(fam):
    """H = A^T A with (A f)(x) = sqrt(B(x)) f(x) - sqrt(D(x+1)) f(x+1)."""
    x, B, D = lattice_BD(fam)
    build_hamiltonian(fam)  # hermiticity check
    dim = len(x)
    A = np.diag(np.sqrt(B)) - np.diag(np.sqrt(D[1:]), 1)
    H = A.T @ A
    phi0 = np.sqrt(groundstate_weight(fam, x))
    Ht = H * phi0[None, :] / phi0[:, None]
    eta = np.diag(np.asarray(fam.eta(x), dtype=float))
    return OperatorBundle(H, Ht, A, A.T.copy(), eta, _interior(fam, dim))


def matrix_function(dec, f):
    """U f(Lambda) U^T from a spectral decomposition."""
    U = dec.eigenvectors
    return (U * f(dec.eigenvalues)) @ U.T


def _comm(X, Y):
    return X @ Y - Y @ X


def _rel(M, ops, scale):
    s = ops.interior
    return float(np.max(np.abs(M[s, s])) / scale)


def closure_residual(fam, ops=None):
    """||[H,[H,eta]] - eta R0(H) - [H,eta] R1(H) - R_-1(H)||_max / ||H||^2."""
    ops = ops or build_operators(fam)
    H, eta = ops.H, ops.eta
    cl = fam.closure
    dec = eigendecompose(_symmetric(H))
    R0 = matrix_function(dec, cl.R0)
    R1 = matrix_function(dec, cl.R1)
    Rm1 = matrix_function(dec, cl.Rm1)
    C = _comm(H, eta)
    M = _comm(H, C) - eta @ R0 - C @ R1 - Rm1
    return _rel(M, ops, _norm_sq(H, eta))


def _norm_sq(H, eta):
    return max(np.max(np.abs(H)) ** 2 * max(np.max(np.abs(eta)), 1.0), 1e-300)


def _symmetric(H):
    return JacobiMatrix(np.diag(H).copy(), np.diag(H, 1).copy())


def dual_closure_terms(fam, x=None):
    """R_1^dual, R_0^dual, R_-1^dual at lattice points (shifts by +-1, epsilon = -1)."""
    x = fam.lattice() if x is None else np.asarray(x)
    e = np.asarray(fam.eta(x), dtype=float)
    up = np.asarray(fam.eta(x + 1), dtype=float) - e
    dn = np.asarray(fam.eta(x - 1), dtype=float) - e
    R1 = up + dn
    R0 = -up * dn
    _, B, D = lattice_BD(fam)
    Rm1 = -(B + D) * R0
    return R1, R0, Rm1


def dual_closure_residual(fam, ops=None):
    """||[eta,[eta,H]] - H R0d(eta) - [eta,H] R1d(eta) - R_-1d(eta)||_max / scale."""
    ops = ops or build_operators(fam)
    H, eta = ops.H, ops.eta
    R1, R0, Rm1 = dual_closure_terms(fam)
    C = _comm(eta, H)
    M = _comm(eta, C) - H * R0[None, :] - C * R1[None, :] - np.diag(Rm1)
    return _rel(M, ops, _norm_sq(eta, H))


def shape_invariance_residual(fam):
    """Relative residuals of the two rdQM shape-invariance conditions over the lattice."""
    if fam.category != "rdQM":
        raise ParameterError("shape invariance check is for rdQM families")
    nxt = fam.shifted()
    k = fam.kappa
    x = np.arange(fam.x_max)
    B, D = fam.B, fam.D
    lhs1 = B(x + 1) * D(x + 1)
    rhs1 = k ** 2 * nxt.B(x) * nxt.D(x + 1)
    lhs2 = B(x) + D(x + 1)
    rhs2 = k * (nxt.B(x) + nxt.D(x)) + float(fam.energy(1))
    r1 = np.max(np.abs(lhs1 - rhs1)) / max(np.max(np.abs(lhs1)), 1e-300)
    r2 = np.max(np.abs(lhs2 - rhs2)) / max(np.max(np.abs(lhs2)), 1e-300)
    return float(r1), float(r2)


def perfect_square_residual(fam, n_count=None):
    """max_n of |alpha_+(E(n)) - (E(n+1)-E(n))| and |alpha_-(E(n)) - (E(n-1)-E(n))|, relative."""
    if n_count is None:
        n_count = fam.N + 1 if fam.N is not None else 20
    n = np.arange(n_count, dtype=float)
    E = np.asarray(fam.energy(n), dtype=float)
    cl = fam.closure
    disc = cl.R1(E) ** 2 + 4 * cl.R0(E)
    if np.any(disc < -1e-12 * np.maximum(1.0, E ** 2)):
        raise DegeneracyError("R1^2 + 4 R0 < 0 on the spectrum")
    ap, am = cl.alpha(E)
    up = np.asarray(fam.energy(n + 1), dtype=float) - E
    dn = np.asarray(fam.energy(n - 1), dtype=float) - E
    scale = np.maximum(np.abs(up), 1.0)
    return float(max(np.max(np.abs(ap - up) / scale), np.max(np.abs(am - dn) / scale)))


@dataclass(frozen=True)
class Ladder:
    a_plus: np.ndarray
    a_minus: np.ndarray
    decomposition: object
    shift: np.ndarray  # R_-1(H) R_0(H)^-1


def ladder_operators(fam, ops=None):
    """a^(+-) = +-(alpha_+ - alpha_-)^-1 ([H,eta] + alpha_+-(H)(eta + R_-1 R_0^-1)) via the spectrum of H."""
    ops = ops or build_operators(fam)
    dec = eigendecompose(_symmetric(ops.H))
    cl = fam.closure
    lam = dec.eigenvalues
    r0 = cl.R0(lam)
    if np.any(np.abs(r0) <= 1e-14 * np.maximum(1.0, np.abs(lam))):
        raise DegeneracyError("R_0(E) vanishes on the spectrum")
    ap, am = cl.alpha(lam)
    if np.any(np.abs(ap - am) <= 1e-14 * np.maximum(1.0, np.abs(ap))):
        raise DegeneracyError("alpha_+ = alpha_- on the spectrum")
    U = dec.eigenvectors
    inv_gap = (U / (ap - am)) @ U.T
    Ap = (U * ap) @ U.T
    Am = (U * am) @ U.T
    shift = (U * (cl.Rm1(lam) / r0)) @ U.T
    C = _comm(ops.H, ops.eta)
    a_plus = inv_gap @ (C + Ap @ (ops.eta + shift))
    a_minus = -inv_gap @ (C + Am @ (ops.eta + shift))
    return Ladder(a_plus, a_minus, dec, shift)


def reliable_modes(fam, dec=None, tol=1e-9):
    """Number of lowest eigenvalues matching E(n); all of them on a finite lattice."""
    if fam.N is not None:
        return fam.N + 1
    dec = dec or eigendecompose(build_hamiltonian(fam))
    E = np.asarray(fam.energy(np.arange(len(dec.eigenvalues))), dtype=float)
    scale = max(abs(float(fam.energy(1))), 1.0)
    ok = np.abs(dec.eigenvalues - E) <= tol * np.maximum(np.abs(E), scale)
    bad = np.flatnonzero(~ok)
    return int(bad[0]) if bad.size else len(E)


@dataclass(frozen=True)
class LadderReport:
    hermiticity: float
    commutator: float
    raising: float
    lowering: float
    product: float
    off_diagonal: float
    eta_tridiagonal: float
    levels: int


def eigenvector_matrix(fam, n_top):
    """Columns phi_n(x) = phi0(x) P_n(eta(x)) for n <= n_top on the lattice."""
    x = fam.lattice()
    phi0 = np.sqrt(groundstate_weight(fam, x))
    return np.stack([phi0 * fam.poly(n, x) for n in range(n_top + 1)], axis=1)


def ladder_checks(fam, ops=None, n_top=None):
    """Residuals of the ladder identities, applied to the exact vectors phi_n.

    a^(+) phi_n = A_n phi_{n+1}, a^(-) phi_n = C_n phi_{n-1},
    a^(-) a^(+) phi_n = A_n C_{n+1} phi_n and eta phi_n = A_n phi_{n+1} + B_n phi_n + C_n phi_{n-1}.
    On a truncated lattice only the interior rows are compared.
    """
    ops = ops or build_operators(fam)
    lad = ladder_operators(fam, ops)
    dec = lad.decomposition
    cl = fam.closure
    U, lam = dec.eigenvectors, dec.eigenvalues
    s = ops.interior
    scale = max(np.max(np.abs(lad.a_plus[s, s])), 1e-300)
    herm = np.max(np.abs((lad.a_plus - lad.a_minus.T)[s, s])) / scale
    ap, am = cl.alpha(lam)
    comm = 0.0
    for a, al in ((lad.a_plus, ap), (lad.a_minus, am)):
        M = _comm(ops.H, a) - a @ ((U * al) @ U.T)
        comm = max(comm, np.max(np.abs(M[s, s])) / (scale * max(np.max(np.abs(ops.H)), 1.0)))

    if n_top is None:
        n_top = fam.N if fam.N is not None else 8
    rc = recurrence_coeffs_rdqm(fam, n_top + 1)
    A, Bc, C = rc.A, rc.B, rc.C
    top = n_top if fam.N is None else min(n_top, fam.N)
    Phi = eigenvector_matrix(fam, top)
    pad = np.zeros((Phi.shape[0], 1))
    nxt = np.hstack([Phi[:, 1:], pad])
    prv = np.hstack([pad, Phi[:, :-1]])
    k = np.arange(top + 1)
    Ak = A[k] if fam.N is None else np.where(k < fam.N, A[np.minimum(k, len(A) - 1)], 0.0)
    Ck = C[k]
    ref = lambda M: max(np.max(np.abs(M[s])), 1e-300)
    ap_img = lad.a_plus @ Phi
    am_img = lad.a_minus @ Phi
    # phi_{top+1} is not in the block; its raising image is checked only on a finite lattice (A_N = 0)
    cols = k if fam.N is not None else k[:-1]
    raising = np.max(np.abs((ap_img - nxt * Ak)[s][:, cols])) / ref(ap_img[:, cols])
    lowering = np.max(np.abs((am_img - prv * Ck)[s])) / ref(am_img)
    prod_img = lad.a_minus @ ap_img
    kk = cols
    target = Ak[kk] * C[kk + 1] if fam.N is None else np.append(A[kk[:-1]] * C[kk[:-1] + 1], 0.0)
    prod = np.max(np.abs((prod_img[:, kk] - Phi[:, kk] * target)[s])) / ref(prod_img[:, kk])
    # off-diagonal part: component of a^(-)a^(+) phi_n orthogonal to phi_n
    off = 0.0
    for j in kk:
        v = prod_img[s, j]
        p = Phi[s, j]
        resid = v - p * (v @ p) / (p @ p)
        off = max(off, np.max(np.abs(resid)) / max(np.max(np.abs(v)), np.max(np.abs(p)), 1e-300))
    eta_img = ops.eta @ Phi
    expect = nxt * Ak + Phi * Bc[k] + prv * Ck
    eta_err = np.max(np.abs((eta_img - expect)[s][:, cols])) / ref(eta_img)
    return LadderReport(float(herm), float(comm), float(raising), float(lowering),
                        float(prod), float(off), float(eta_err), int(top + 1))


def ground_annihilation_residual(fam, ops=None):
    """max |A phi0| / max phi0 over rows not touched by truncation."""
    ops = ops or build_operators(fam)
    phi0 = np.sqrt(groundstate_weight(fam, fam.lattice()))
    r = ops.A @ phi0
    if fam.N is None:
        r = r[:-1]
    return float(np.max(np.abs(r)) / np.max(phi0))


def htilde_constant_residual(fam, ops=None):
    """max |H~ 1| relative to ||H||, interior rows on a truncated lattice."""
    ops = ops or build_operators(fam)
    r = ops.H_tilde @ np.ones(len(ops.H))
    if fam.N is None:
        r = r[:-1]
    return float(np.max(np.abs(r)) / np.max(np.abs(ops.H)))


def heisenberg_check(fam, t_samples, ops=None, block=None):
    """max_t ||e^{itH} eta e^{-itH} - closed form||_max / ||eta||_max, also against the a^(+-) form.

    On a truncated lattice the comparison is limited to the upper-left block
    spanned by the reliable modes, since e^{itH} of the truncated matrix only
    approximates the infinite system there and only for small t.
    """
    ops = ops or build_operators(fam)
    lad = ladder_operators(fam, ops)
    dec = lad.decomposition
    U, lam = dec.eigenvectors, dec.eigenvalues
    cl = fam.closure
    ap, am = cl.alpha(lam)
    C = _comm(ops.H, ops.eta)
    dim = len(lam)
    if block is None:
        block = dim if fam.N is not None else reliable_modes(fam, dec)
    s = slice(0, block)
    scale = max(np.max(np.abs(ops.eta[s, s])), 1e-300)
    fn = lambda vals: (U * vals) @ U.T.astype(complex)
    worst = 0.0
    for t in t_samples:
        ev = fn(np.exp(1j * lam * t))
        lhs = ev @ ops.eta @ ev.conj().T
        ep, em = np.exp(1j * ap * t), np.exp(1j * am * t)
        rhs = (C @ fn((ep - em) / (ap - am)) - lad.shift
               + (ops.eta + lad.shift) @ fn((-am * ep + ap * em) / (ap - am)))
        alt = lad.a_plus @ fn(ep) + lad.a_minus @ fn(em) - lad.shift
        worst = max(worst, np.max(np.abs((lhs - rhs)[s, s])) / scale,
                    np.max(np.abs((lhs - alt)[s, s])) / scale)
    return float(worst)


def askey_wilson_algebra_residual(fam, ops=None):
    """Residuals of the two cubic relations obtained by expanding the closure and dual closure."""
    ops = ops or build_operators(fam)
    H, eta = ops.H, ops.eta
    cl = fam.closure
    r1 = _coeffs(cl.r1_coeffs, 2)
    r0 = _coeffs(cl.r0_coeffs, 3)
    rm1 = _coeffs(cl.rm1_coeffs, 3)
    I = np.eye(len(H))
    lhs = (H @ H @ eta - (2 + r1[1]) * H @ eta @ H + eta @ H @ H
           - r1[0] * (H @ eta + eta @ H) - r0[0] * eta)
    rhs = rm1[2] * H @ H + rm1[1] * H + rm1[0] * I
    res1 = _rel(lhs - rhs, ops, _norm_sq(H, eta))
    # eta(-1) eta(1) and epsilon v00 = B(0) eta(1) eta(-1) on the lattice
    em1, e1 = float(fam.eta(-1)), float(fam.eta(1))
    eps_v00 = float(fam.B(0)) * e1 * em1
    lhs2 = (eta @ eta @ H - (2 + r1[1]) * eta @ H @ eta + H @ eta @ eta
            - rm1[2] * (eta @ H + H @ eta) + em1 * e1 * H)
    rhs2 = r1[0] * eta @ eta + rm1[1] * eta + eps_v00 * I
    res2 = _rel(lhs2 - rhs2, ops, _norm_sq(eta, H))
    return res1, res2


def _coeffs(highest_first, size):
    """Lowest-power-first coefficient list padded to size."""
    c = list(highest_first)[::-1]
    return np.array(c + [0.0] * (size - len(c)), dtype=float)
