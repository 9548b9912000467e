"""rdQM as finite linear algebra: Jacobi matrices, spectra, duality."""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegeneracyError, HermiticityError, ParameterError, SolverError
from .families import groundstate_weight

MAX_DIMENSION = 10_000


def _require_rdqm(fam):
    if fam.category != "rdQM":
        raise ParameterError(f"{fam.id} is not an rdQM family")


@dataclass(frozen=True)
class JacobiMatrix:
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    @property
    def dimension(self):
        return len(self.diagonal)

    def dense(self):
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    # column n is the n-th normalized eigenvector, x=0 entry positive
    eigenvectors: np.ndarray
    residual: float
    orthonormality: float


def lattice_BD(fam):
    """B(x), D(x) on the lattice with D(0) = 0 and, for finite N, B(N) = 0 set exactly."""
    _require_rdqm(fam)
    x = fam.lattice()
    B = np.array(fam.B(x), dtype=float)
    D = np.array(fam.D(x), dtype=float)
    D[0] = 0.0
    if fam.N is not None:
        B[-1] = 0.0
    return x, B, D


def build_hamiltonian(fam):
    """H_{x,y} = (B+D) on the diagonal, -sqrt(B(x) D(x+1)) off it."""
    x, B, D = lattice_BD(fam)
    prod = B[:-1] * D[1:]
    if np.any(prod < 0):
        bad = int(np.flatnonzero(prod < 0)[0])
        raise HermiticityError(f"B(x)D(x+1) < 0 at x={bad}")
    return JacobiMatrix(B + D, -np.sqrt(prod))


def eigendecompose(mat, tol=1e-10):
    """All eigenpairs of a Jacobi matrix, ascending, eigenvector signs fixed by entry 0."""
    if mat.dimension > MAX_DIMENSION:
        raise ParameterError(f"dimension {mat.dimension} exceeds {MAX_DIMENSION}")
    try:
        if mat.dimension == 1:
            vals, vecs = np.array(mat.diagonal, dtype=float), np.ones((1, 1))
        else:
            vals, vecs = linalg.eigh_tridiagonal(mat.diagonal, mat.off_diagonal)
    except linalg.LinAlgError as exc:
        raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
    signs = np.where(vecs[0] < 0, -1.0, 1.0)
    vecs = vecs * signs
    H = mat.dense()
    norm = max(np.max(np.abs(H)), 1e-300)
    res = np.max(np.linalg.norm(H @ vecs - vecs * vals, axis=0)) / norm
    ortho = np.max(np.abs(vecs.T @ vecs - np.eye(len(vals))))
    if res > tol or ortho > tol:
        raise SolverError(f"eigenpairs not accurate: residual {res:.2e}, orthonormality {ortho:.2e}")
    gaps = np.diff(vals)
    if np.any(gaps <= 1e-12 * max(1.0, np.max(np.abs(vals)))):
        raise DegeneracyError("spectrum is not simple")
    return SpectralDecomposition(vals, vecs, float(res), float(ortho))


def spectrum_residual(fam, n_count=None):
    """Max relative deviation of the solver spectrum from E(n) over the lowest n_count levels."""
    dec = eigendecompose(build_hamiltonian(fam))
    n_count = len(dec.eigenvalues) if n_count is None else n_count
    n = np.arange(n_count)
    E = np.asarray(fam.energy(n), dtype=float)
    scale = np.where(n == 0, abs(float(fam.energy(1))), np.abs(E))
    rel = np.abs(dec.eigenvalues[:n_count] - E) / scale
    return float(np.max(rel)), dec.eigenvalues[:n_count], E


def eigenvector_residual(fam, n_count=None):
    """Max |v_n(x) - d_n phi0(x) P_n(eta(x))| over the lowest n_count eigenvectors."""
    dec = eigendecompose(build_hamiltonian(fam))
    x = fam.lattice()
    phi0 = np.sqrt(groundstate_weight(fam, x))
    n_count = dec.eigenvectors.shape[1] if n_count is None else n_count
    worst = 0.0
    for n in range(n_count):
        ref = np.sqrt(fam.norm(n)) * phi0 * fam.poly(n, x)
        worst = max(worst, float(np.max(np.abs(dec.eigenvectors[:, n] - ref))))
    return worst


def dual_polynomials(fam, energy, x_top=None):
    """Q_0..Q_{x_top} at the given energies; row x holds Q_x(E)."""
    _require_rdqm(fam)
    x_top = fam.x_max if x_top is None else int(x_top)
    E = np.atleast_1d(np.asarray(energy, dtype=float))
    xs = np.arange(x_top + 1)
    B = np.asarray(fam.B(xs), dtype=float)
    D = np.asarray(fam.D(xs), dtype=float)
    D[0] = 0.0
    Q = np.empty((x_top + 1,) + E.shape)
    Q[0] = 1.0
    prev = np.zeros_like(E)
    for x in range(x_top):
        if B[x] == 0:
            raise ParameterError(f"B({x}) = 0 inside the lattice")
        Q[x + 1] = ((B[x] + D[x] - E) * Q[x] - D[x] * prev) / B[x]
        prev = Q[x]
    return Q


def dual_polynomial(fam, x, energy):
    """Q_x(E) from the dual three-term recursion with Q_0 = 1."""
    if x < 0 or x > fam.x_max:
        raise IndexError(f"x={x} outside 0..{fam.x_max}")
    Q = dual_polynomials(fam, energy, x)[int(x)]
    return Q[0] if np.ndim(energy) == 0 else Q


def duality_residual(fam, n_top=None, x_top=None):
    """max |P_n(eta(x)) - Q_x(E(n))| for n <= n_top, x <= x_top."""
    x_top = fam.x_max if x_top is None else x_top
    n_top = (fam.N if fam.N is not None else x_top) if n_top is None else n_top
    x = np.arange(x_top + 1)
    E = np.asarray(fam.energy(np.arange(n_top + 1)), dtype=float)
    Q = dual_polynomials(fam, E, x_top)
    worst = 0.0
    for n in range(n_top + 1):
        worst = max(worst, float(np.max(np.abs(fam.poly(n, x) - Q[:, n]))))
    return worst


def completeness_residual(fam, x_top=None, n_cut=None):
    """max |sum_n d_n^2 Q_x Q_y phi0(x) phi0(y) - delta_xy| for x, y <= x_top.

    For the infinite M lattice the n-sum runs until the terms are below 1e-18
    of the diagonal (n_cut may override).
    """
    x_top = fam.x_max if x_top is None else x_top
    if fam.N is not None:
        n_cut = fam.N
    elif n_cut is None:
        n_cut = _completeness_cut(fam, x_top)
    n = np.arange(n_cut + 1)
    E = np.asarray(fam.energy(n), dtype=float)
    Q = dual_polynomials(fam, E, x_top)
    d2 = np.array([fam.norm(k) for k in n])
    S = (Q * d2) @ Q.T
    phi0 = np.sqrt(groundstate_weight(fam, np.arange(x_top + 1)))
    return float(np.max(np.abs(S * np.outer(phi0, phi0) - np.eye(x_top + 1))))


def _completeness_cut(fam, x_top):
    n = 8
    while n < 5000:
        E = np.asarray(fam.energy(np.arange(n, n + 1)), dtype=float)
        Q = dual_polynomials(fam, E, x_top)[:, 0]
        tail = fam.norm(n) * np.max(Q ** 2) * np.max(groundstate_weight(fam, np.arange(x_top + 1)))
        if tail < 1e-18 and n > 2 * x_top:
            return n
        n += 8
    raise SolverError("completeness sum did not converge")


def orthogonality_residual(fam, n_top=None):
    """||G - I||_max with G_nm = sum_x phi0^2 P_n P_m d_n d_m (closed-form d_n)."""
    x = fam.lattice()
    if n_top is None:
        n_top = fam.N if fam.N is not None else int(np.ceil(fam.x_max / 4)) - 1
    w = groundstate_weight(fam, x)
    P = np.array([fam.poly(n, x) for n in range(n_top + 1)])
    d = np.sqrt([fam.norm(n) for n in range(n_top + 1)])
    G = (P * w) @ P.T * np.outer(d, d)
    return float(np.max(np.abs(G - np.eye(n_top + 1))))


def characteristic_equation_residual(fam):
    """max_n |E Q_N(E) - D(N)(Q_N(E) - Q_{N-1}(E))| / scale at E = E(n)."""
    if fam.N is None:
        raise ParameterError("characteristic equation needs a finite lattice")
    N = fam.N
    E = np.asarray(fam.energy(np.arange(N + 1)), dtype=float)
    Q = dual_polynomials(fam, E, N)
    DN = float(fam.D(N))
    lhs = E * Q[N]
    rhs = DN * (Q[N] - Q[N - 1]) if N >= 1 else 0.0 * lhs
    # relative to the size of the terms entering the recursion
    scale = np.maximum(np.maximum(np.abs(E), abs(DN)) * np.max(np.abs(Q), axis=0), 1.0)
    return float(np.max(np.abs(lhs - rhs) / scale))


def lower_triangularity(fam, n_top):
    """H~ eta^n in the eta-power basis: (max above-degree coefficient, max |c_n - E(n)|/|E(n)|)."""
    from .polynomials import apply_htilde
    _require_rdqm(fam)
    m = n_top + 3
    x = np.arange(m)
    if fam.N is not None and fam.N + 1 < m:
        raise ParameterError("lattice too small for the fit")
    eta = np.asarray(fam.eta(x), dtype=float)
    s = max(np.max(np.abs(eta)), 1.0)
    V = np.vander(eta / s, m, increasing=True)
    above = 0.0
    diag = 0.0
    for n in range(n_top + 1):
        vals = apply_htilde(fam, lambda y, n=n: np.asarray(fam.eta(y), dtype=float) ** n)(x)
        c = np.linalg.solve(V, vals) / s ** np.arange(m)
        ref = max(abs(float(fam.energy(n))), 1.0)
        above = max(above, float(np.max(np.abs(c[n + 1:]) * s ** np.arange(n + 1, m)) / (ref * s ** n)))
        if n > 0:
            diag = max(diag, abs(c[n] - float(fam.energy(n))) / abs(float(fam.energy(n))))
        else:
            diag = max(diag, abs(c[0]))
    return above, float(diag)


def tail_levels(fam, tol=1e-5, limit=200):
    """Levels n whose exact eigenvector phi0 P_n is below tol (relative to its peak) on the last three lattice points.

    On a truncated lattice these are the levels the cut cannot disturb beyond
    O(tol^2) in the eigenvalue. Finite lattices return every level.
    """
    _require_rdqm(fam)
    if fam.N is not None:
        return fam.N + 1
    x = fam.lattice()
    phi0 = np.sqrt(groundstate_weight(fam, x))
    count = 0
    for n in range(min(len(x), limit)):
        v = phi0 * fam.poly(n, x)
        if np.max(np.abs(v[-3:])) > tol * np.max(np.abs(v)):
            break
        count += 1
    return max(count, 1)
