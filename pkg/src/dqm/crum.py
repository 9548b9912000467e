"""Crum chains and Krein-Adler deletions for rdQM via Casoratians."""
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import ParameterError, SingularityError, ValidityError
from .lattice import JacobiMatrix, eigendecompose

# equilibrated condition number above which determinants are redone in mpmath
COND_LIMIT = 1e10
MP_DPS = 50


@dataclass(frozen=True)
class DeletionSet:
    indices: tuple

    def __init__(self, indices):
        idx = [int(i) for i in indices]
        if any(i < 0 for i in idx):
            raise ParameterError("deleted levels must be non-negative")
        if len(set(idx)) != len(idx):
            raise ParameterError(f"deleted levels must be distinct: {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def violation(self):
        """First m >= 0 with prod_j (m - d_j) < 0, or None."""
        top = max(self.indices, default=0)
        for m in range(top + 1):
            if np.prod([m - d for d in self.indices]) < 0:
                return m
        return None

    def validate(self):
        m = self.violation()
        if m is not None:
            raise ValidityError(f"deletion set {list(self.indices)} is invalid: "
                                f"prod (m - d_j) < 0 at m={m}", m=m)
        return self

    @property
    def mu(self):
        n = 0
        while n in self.indices:
            n += 1
        return n


def _det_batch(M):
    """Determinants of a stack of small matrices (LU), mpmath when ill-conditioned."""
    M = np.asarray(M, dtype=float)
    if M.shape[-1] == 1:
        return M[..., 0, 0].copy()
    dets = np.linalg.det(M)
    r = np.max(np.abs(M), axis=-1, keepdims=True)
    r[r == 0] = 1.0
    S = M / r
    c = np.max(np.abs(S), axis=-2, keepdims=True)
    c[c == 0] = 1.0
    S = S / c
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(S)
    bad = ~(cond <= COND_LIMIT) & np.all(np.isfinite(M), axis=(-2, -1))
    if np.any(bad):
        flat = M.reshape((-1,) + M.shape[-2:])
        out = dets.reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            with mpmath.workdps(MP_DPS):
                out[i] = float(mpmath.det(mpmath.matrix(flat[i].tolist())))
        dets = out.reshape(dets.shape)
    return dets


def casoratian(fs, x):
    """det(f_k(x+j-1)) for callables f_k of integer arrays; vectorized in x."""
    x = np.asarray(x, dtype=int)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    m = len(fs)
    if m == 0:
        return 1.0 if scalar else np.ones(x.shape)
    pts = x[:, None] + np.arange(m)[None, :]
    M = np.stack([np.asarray(f(pts), dtype=float) for f in fs], axis=-1)
    det = _det_batch(M)
    return det[0] if scalar else det


def eigenfunction(fam, n):
    """phi_n(x) = phi0(x) P_n(eta(x)) as a callable; zero beyond a finite lattice."""
    def phi(xs):
        xs = np.asarray(xs, dtype=int)
        out = np.zeros(xs.shape)
        valid = xs >= 0
        if fam.N is not None:
            valid &= xs <= fam.N
        if np.any(valid):
            v = xs[valid]
            out[valid] = np.sqrt(fam.weight_product(v)) * fam.poly(n, v)
        return out
    return phi


@dataclass
class DeletedSystem:
    base: object
    deletion: DeletionSet
    x: np.ndarray
    B_bar: np.ndarray
    D_bar: np.ndarray
    surviving_levels: tuple
    mu: int
    phi_bar: dict = field(default_factory=dict)
    crum_form_residual: float = None

    @property
    def shift(self):
        return float(self.base.energy(self.mu))

    def hamiltonian(self):
        prod = self.B_bar[:-1] * self.D_bar[1:]
        if np.any(prod < 0):
            raise SingularityError("B_bar D_bar < 0 on the reduced lattice")
        return JacobiMatrix(self.B_bar + self.D_bar + self.shift, -np.sqrt(prod))

    def spectrum_residual(self, n_count=None):
        """Max relative deviation of eig(H_bar) from the surviving E(n)."""
        vals = eigendecompose(self.hamiltonian()).eigenvalues
        levels = np.array(self.surviving_levels)
        n_count = len(vals) if n_count is None else n_count
        E = np.asarray(self.base.energy(levels[:n_count]), dtype=float)
        scale = np.where(E == 0, abs(float(self.base.energy(1))), np.abs(E))
        return float(np.max(np.abs(vals[:n_count] - E) / scale)), vals[:n_count], E


def _reduced_lattice(fam, ell):
    top = fam.x_max - ell
    if top < 0:
        raise ParameterError("deleting more levels than the lattice holds")
    return np.arange(top + 1)


def krein_adler(fam, deletion, n_eigen=None):
    """Deleted system for a valid set D: B_bar, D_bar and phi_bar_n on the reduced lattice."""
    if fam.category != "rdQM":
        raise ParameterError("Krein-Adler deletion is implemented for rdQM only")
    if not isinstance(deletion, DeletionSet):
        deletion = DeletionSet(deletion)
    deletion.validate()
    ell = len(deletion)
    if fam.N is not None and max(deletion.indices, default=0) > fam.N:
        raise ParameterError("deleted level exceeds N")
    mu = deletion.mu
    x = _reduced_lattice(fam, ell)
    phis = [eigenfunction(fam, d) for d in deletion]
    phi_mu = eigenfunction(fam, mu)
    xe = np.arange(x[-1] + 2)
    WD = casoratian(phis, xe)
    WDm = casoratian(phis + [phi_mu], xe)
    if np.any(WD == 0) or np.any(WDm[:-1] == 0):
        raise SingularityError("Casoratian vanishes on the lattice")
    B = lambda y: np.asarray(fam.B(y), dtype=float)
    D = lambda y: np.asarray(fam.D(y), dtype=float)
    with np.errstate(invalid="ignore"):
        Bbar = np.sqrt(np.clip(B(x + ell) * D(x + ell + 1), 0, None)) * WD[x] / WD[x + 1] * WDm[x + 1] / WDm[x]
        Dbar = np.zeros(x.shape)
        if x.size > 1:
            xi = x[1:]
            Dbar[1:] = np.sqrt(B(xi - 1) * D(xi)) * WD[xi + 1] / WD[xi] * WDm[xi - 1] / WDm[xi]
    if fam.N is not None:
        Bbar[-1] = 0.0
    if not (np.all(np.isfinite(Bbar)) and np.all(np.isfinite(Dbar))):
        raise SingularityError("non-finite B_bar or D_bar")
    if np.any(Bbar[:-1] <= 0) or np.any(Dbar[1:] <= 0):
        raise SingularityError("B_bar or D_bar not positive on the reduced lattice")
    top = fam.N if fam.N is not None else x[-1] + ell
    surviving = tuple(n for n in range(top + 1) if n not in deletion.indices)
    if n_eigen is None:
        n_eigen = len(x)
    kvals = np.ones(x.shape)
    for k in range(1, ell + 1):
        kvals = kvals * B(x + k - 1) * D(x + k)
    F = np.sqrt(kvals) / (WD[x] * WD[x + 1])
    phi_bar = {}
    for n in surviving[:n_eigen]:
        W = casoratian(phis + [eigenfunction(fam, n)], x)
        phi_bar[n] = (-1) ** ell * np.sqrt(F) * W
    return DeletedSystem(fam, deletion, x, Bbar, Dbar, surviving, mu, phi_bar)


def norm_identity_residual(system, n_count=None):
    """max_n |(phib_n, phib_n) - prod_j (E(n) - E(d_j)) / d_n^2| / scale, plus off-diagonal overlaps."""
    fam = system.base
    levels = list(system.phi_bar)[:n_count]
    worst = 0.0
    norms = {}
    for n in levels:
        lhs = float(np.sum(system.phi_bar[n] ** 2))
        factor = np.prod([float(fam.energy(n)) - float(fam.energy(d)) for d in system.deletion])
        rhs = factor / fam.norm(n)
        norms[n] = lhs
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    for i, n in enumerate(levels):
        for m in levels[i + 1:]:
            ov = float(np.sum(system.phi_bar[n] * system.phi_bar[m]))
            worst = max(worst, abs(ov) / np.sqrt(norms[n] * norms[m]))
    return float(worst)


def eigenvector_residual(system, n_count=None):
    """Max deviation of the normalized eigenvectors of H_bar from the normalized phi_bar_n."""
    dec = eigendecompose(system.hamiltonian())
    levels = list(system.phi_bar)[:n_count]
    worst = 0.0
    for k, n in enumerate(levels):
        ref = system.phi_bar[n] / np.linalg.norm(system.phi_bar[n])
        v = dec.eigenvectors[:, k]
        worst = max(worst, float(min(np.max(np.abs(v - ref)), np.max(np.abs(v + ref)))))
    return worst


def annihilation_residual(system):
    """max |A_bar phi_bar_mu| / max |phi_bar_mu| with A_bar = sqrt(B_bar) - e^d sqrt(D_bar)."""
    phi = system.phi_bar[system.mu]
    nxt = np.append(phi[1:], 0.0)
    dn = np.append(system.D_bar[1:], 0.0)
    out = np.sqrt(system.B_bar) * phi - np.sqrt(dn) * nxt
    if system.base.N is None:
        # the truncated lattice has no neighbour beyond its last point
        out = out[:-1]
    return float(np.max(np.abs(out)) / np.max(np.abs(phi)))


def crum_chain(fam, s):
    """Crum s-step system; also cross-checks the two determinant forms of phi_n^[s]."""
    if s < 1:
        raise ParameterError("s must be at least 1")
    if fam.N is not None and s > fam.N:
        raise ParameterError("s must not exceed N")
    system = krein_adler(fam, DeletionSet(range(s)))
    system.crum_form_residual = _crum_forms(fam, s)
    return system


def _crum_forms(fam, s):
    """Build B^[k], D^[k] step by step and compare both forms of phi_n^[s]."""
    X = fam.x_max
    xs = np.arange(X + 2)
    B = [np.asarray(fam.B(xs), dtype=float)]
    D = [np.asarray(fam.D(xs), dtype=float)]
    D[0][0] = 0.0
    if fam.N is not None:
        B[0][fam.N:] = 0.0
    phis = [eigenfunction(fam, j) for j in range(s + 1)]
    worst = 0.0
    for k in range(1, s + 1):
        top = X - k
        x = np.arange(top + 1)
        num_pts = np.arange(top + 2)
        W_low = casoratian(phis[:k], np.arange(top + 3))
        Wk = casoratian(phis[:k] + [eigenfunction(fam, k)], num_pts)
        pref = np.ones(num_pts.shape)
        for j in range(k):
            pref = pref * np.sqrt(np.clip(B[j][num_pts], 0, None))
        with np.errstate(all="ignore"):
            phik = (-1) ** k * pref * Wk / W_low[num_pts + 1]
        Bk = np.zeros(xs.shape)
        Dk = np.zeros(xs.shape)
        with np.errstate(all="ignore"):
            Bk[x] = np.sqrt(np.clip(B[k - 1][x + 1] * D[k - 1][x + 1], 0, None)) * phik[x + 1] / phik[x]
            inner = x[1:]
            Dk[inner] = np.sqrt(np.clip(B[k - 1][inner] * D[k - 1][inner], 0, None)) * phik[inner - 1] / phik[inner]
        if fam.N is not None:
            Bk[top:] = 0.0
        B.append(Bk)
        D.append(Dk)
    # both forms of phi_n^[s] on the s-step lattice
    top = X - s
    x = np.arange(top + 1)
    W_low = casoratian(phis[:s], np.arange(top + 2))
    top_n = fam.N if fam.N is not None else min(X, s + 6)
    for n in range(s, top_n + 1):
        Wn = casoratian(phis[:s] + [eigenfunction(fam, n)], x)
        p1 = np.ones(x.shape)
        p2 = np.ones(x.shape)
        for k in range(s):
            p1 = p1 * np.sqrt(B[k][x])
            p2 = p2 * np.sqrt(D[k][x + s - k])
        f1 = (-1) ** s * p1 * Wn / W_low[x + 1]
        f2 = (-1) ** s * p2 * Wn / W_low[x]
        scale = max(np.max(np.abs(f1)), 1e-300)
        keep = np.isfinite(f1) & np.isfinite(f2)
        worst = max(worst, float(np.max(np.abs(f1[keep] - f2[keep])) / scale))
    return worst
