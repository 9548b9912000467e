"""Hamiltonians built from a sinusoidal coordinate and coefficients v_{k,l}.

H~ = eps (V+(x) (e^{beta p} - 1) + V-(x) (e^{-beta p} - 1)) with e^{beta p} f(x) = f(x - i beta).
A coordinate stores the forward shift s = -i beta, so eta(x - i beta) = eta(x + s):
s = 1 on the lattice (beta = i, eps = -1) and s = -i gamma for pure imaginary shifts (eps = 1).
"""
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .errors import (ConstraintError, CoordinateDegeneracyError, NonPolynomialError,
                     ParameterError, SamplingError)
from .polynomials import recurrence_from_samples


@dataclass(frozen=True)
class SinusoidalCoordinate:
    id: str
    eta: object
    r1_1: float
    rm1_2: float
    shift: complex
    eps: int
    interval: tuple

    @property
    def beta(self):
        return 1j * self.shift

    def up(self, x):
        """eta(x - i beta)."""
        return self.eta(np.asarray(x) + self.shift)

    def down(self, x):
        """eta(x + i beta)."""
        return self.eta(np.asarray(x) - self.shift)

    def addition_residual(self, x):
        e = self.eta(x)
        return np.max(np.abs(self.up(x) + self.down(x) - (2 + self.r1_1) * e - self.rm1_2))

    def multiplication_residual(self, x):
        e = self.eta(x)
        lhs = self.up(x) * self.down(x)
        rhs = (e - self.eta(self.shift)) * (e - self.eta(-self.shift))
        return np.max(np.abs(lhs - rhs))


IDQM_COORDINATES = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")
RDQM_COORDINATES = ("i'", "ii'", "iii'", "iv'", "v'")


def coordinate(cid, gamma=1.0, d=None, q=None, eps_prime=1):
    """Catalog coordinate by id; gamma for the idQM entries, d and q for the lattice ones."""
    if cid in IDQM_COORDINATES:
        if cid in ("i", "ii"):
            gamma = 1.0
        if gamma == 0:
            raise ParameterError("gamma must be nonzero")
        s = -1j * gamma
        c, ch = np.cos(gamma), np.cosh(gamma)
        table = {
            "i": (lambda x: np.asarray(x) + 0.0, 0.0, 0.0, (-1.0, 1.0)),
            "ii": (lambda x: np.asarray(x) ** 2, 0.0, -2.0, (0.2, 1.0)),
            "iii": (lambda x: 1 - np.cos(x), 2 * ch - 2, 2 - 2 * ch, (0.2, np.pi - 0.2)),
            "iv": (lambda x: np.sin(x), 2 * ch - 2, 0.0, (-1.3, 1.3)),
            "v": (lambda x: 1 - np.exp(-np.asarray(x)), 2 * c - 2, 2 - 2 * c, (-0.7, 0.7)),
            "vi": (lambda x: np.exp(x) - 1, 2 * c - 2, 2 * c - 2, (-0.7, 0.7)),
            "vii": (lambda x: np.cosh(x) - 1, 2 * c - 2, 2 * c - 2, (0.2, 1.3)),
            "viii": (lambda x: np.sinh(x), 2 * c - 2, 0.0, (-0.9, 0.9)),
        }
        eta, r1, rm1, interval = table[cid]
        return SinusoidalCoordinate(cid, eta, float(r1), float(rm1), s, 1, interval)
    if cid in RDQM_COORDINATES:
        if cid in ("ii'", "v'") and d is None:
            raise ParameterError(f"coordinate {cid} needs d")
        if cid in ("iii'", "iv'", "v'") and not (q is not None and 0 < q < 1):
            raise ParameterError(f"coordinate {cid} needs 0 < q < 1")
        ep = float(eps_prime)
        Q = (q + 1 / q - 2) if q is not None else None
        if cid == "i'":
            eta, r1, rm1, interval = (lambda x: np.asarray(x) + 0.0), 0.0, 0.0, (-1.0, 1.0)
        elif cid == "ii'":
            eta, r1, rm1 = (lambda x: ep * np.asarray(x) * (np.asarray(x) + d)), 0.0, 2 * ep
            interval = (-0.5 * d + 0.4, -0.5 * d + 2.0)
        elif cid == "iii'":
            eta, r1, rm1, interval = (lambda x: 1 - q ** np.asarray(x)), Q, -Q, (-1.5, 1.5)
        elif cid == "iv'":
            eta, r1, rm1, interval = (lambda x: q ** (-np.asarray(x)) - 1), Q, Q, (-1.5, 1.5)
        else:
            eta = lambda x: ep * (q ** (-np.asarray(x)) - 1) * (1 - d * q ** np.asarray(x))
            r1, rm1 = Q, ep * (1 + d) * Q
            x0 = np.log(d) / (-2 * np.log(q)) if d > 0 else -1.0
            interval = (max(x0, -1.0) + 0.4, max(x0, -1.0) + 2.0)
        return SinusoidalCoordinate(cid, eta, float(r1), float(rm1), 1.0, -1, interval)
    raise ParameterError(f"unknown coordinate {cid!r}")


def coordinate_for_family(fam):
    """Catalog coordinate matching an rdQM family's eta."""
    if fam.id == "M":
        return coordinate("i'")
    if fam.id == "R":
        return coordinate("ii'", d=fam.d)
    if fam.id == "qR":
        return coordinate("v'", d=fam.d, q=fam.q)
    raise ParameterError(f"no lattice coordinate for family {fam.id}")


@dataclass(frozen=True)
class PotentialSpec:
    L: int
    v: MappingProxyType

    def __init__(self, L, v):
        L = int(L)
        if L < 1:
            raise ParameterError("L must be a positive integer")
        coeffs = {(int(k), int(l)): float(c) for (k, l), c in dict(v).items()}
        for (k, l) in coeffs:
            if k < 0 or l not in (0, 1) or k + l > L:
                raise ParameterError(f"coefficient v[{k},{l}] outside k+l <= {L}, l in (0,1)")
        if not any(coeffs.get((k, l), 0.0) != 0.0 for k, l in ((L, 0), (L - 1, 1))):
            raise ParameterError(f"no nonzero coefficient with k+l = {L}")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "v", MappingProxyType(coeffs))

    def scaled(self, s):
        return PotentialSpec(self.L, {kl: s * c for kl, c in self.v.items()})


def reduce_spec(coord, L, coeffs):
    """Eliminate l >= 2 using s^2 = sigma s - pi, with s = eta(x -+ i beta),
    sigma = (2 + r1) eta + r_-1 and pi = (eta - eta(-i beta)) (eta - eta(i beta))."""
    sigma = np.array([coord.rm1_2, 2 + coord.r1_1])
    a, b = coord.eta(coord.shift), coord.eta(-coord.shift)
    pi = np.real_if_close(npoly.polymul([-a, 1.0], [-b, 1.0]))
    out = {}

    def add(k, l, c):
        if l <= 1:
            out[(k, l)] = out.get((k, l), 0.0) + c
            return
        # eta^k s^l = eta^k (sigma s^{l-1} - pi s^{l-2})
        for j, sj in enumerate(sigma):
            if sj != 0:
                add(k + j, l - 1, c * sj)
        for j, pj in enumerate(pi):
            if pj != 0:
                add(k + j, l - 2, -c * pj)

    for (k, l), c in dict(coeffs).items():
        add(int(k), int(l), float(c))
    return PotentialSpec(L, {kl: float(np.real(c)) for kl, c in out.items() if c != 0})


def _vtilde(spec, e, s):
    total = 0.0 * e
    for (k, l), c in spec.v.items():
        total = total + c * e ** k * s ** l
    return total


def build_potentials(coord, spec, x):
    """(V+(x), V-(x)) from the same v_{k,l} in both numerators."""
    x = np.asarray(x)
    e, up, dn = coord.eta(x), coord.up(x), coord.down(x)
    den_p = (up - e) * (up - dn)
    den_m = (dn - e) * (dn - up)
    scale = np.maximum(np.abs(e), 1.0)
    if np.any(np.abs(den_p) < 1e-14 * scale ** 2) or np.any(np.abs(den_m) < 1e-14 * scale ** 2):
        raise CoordinateDegeneracyError("eta(x -+ i beta) coincides with eta(x) or its mirror")
    return _vtilde(spec, e, up) / den_p, _vtilde(spec, e, dn) / den_m


def apply_htilde(coord, spec, f, x):
    """H~ f at points x, for f a callable of eta."""
    Vp, Vm = build_potentials(coord, spec, x)
    e = coord.eta(x)
    fe = f(e)
    return coord.eps * (Vp * (f(coord.up(x)) - fe) + Vm * (f(coord.down(x)) - fe))


def fit_family_spec(fam, points=None):
    """L=2 coefficients reproducing B, D of an rdQM family (least squares over a few lattice points)."""
    coord = coordinate_for_family(fam)
    x = np.arange(5) if points is None else np.asarray(points)
    keys = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)]
    e, up, dn = coord.eta(x), coord.up(x), coord.down(x)
    rows, rhs = [], []
    for s, V, other in ((up, fam.B(x), dn), (dn, fam.D(x), up)):
        rows.append(np.stack([e ** k * s ** l for k, l in keys], axis=1))
        rhs.append(V * (s - e) * (s - other))
    Mx = np.vstack(rows)
    b = np.concatenate(rhs)
    col = np.max(np.abs(Mx), axis=0)
    sol, *_ = np.linalg.lstsq(Mx / col, b, rcond=None)
    v = {k: c for k, c in zip(keys, sol / col)}
    return coord, PotentialSpec(2, v)


def potential_reproduction_residual(fam, coord=None, spec=None):
    """max over the lattice of |V+ - B| and |V- - D| relative to max(|B|, |D|)."""
    if spec is None:
        coord, spec = fit_family_spec(fam)
    x = fam.lattice()
    Vp, Vm = build_potentials(coord, spec, x)
    B, D = np.asarray(fam.B(x), dtype=float), np.asarray(fam.D(x), dtype=float)
    scale = max(np.max(np.abs(B)), np.max(np.abs(D)))
    return float(max(np.max(np.abs(Vp - B)), np.max(np.abs(Vm - D))) / scale)


def _eta_range(coord):
    a, b = (float(np.real(coord.eta(t))) for t in coord.interval)
    return min(a, b), max(a, b)


def _monomial_cheb(coord, k, size):
    """Chebyshev coefficients of eta^k on the fit domain, padded to size."""
    lo, hi = _eta_range(coord)
    c = npoly.Polynomial.basis(k).convert(kind=cheb.Chebyshev, domain=[lo, hi]).coef
    return np.pad(c, (0, size - len(c)))


def _eta_nodes(coord, count):
    """Points x whose eta values are Chebyshev nodes on eta(interval)."""
    lo, hi = coord.interval
    elo, ehi = float(np.real(coord.eta(lo))), float(np.real(coord.eta(hi)))
    k = np.arange(count)
    t = np.cos(np.pi * (k + 0.5) / count)
    targets = 0.5 * (elo + ehi) + 0.5 * (ehi - elo) * t
    f = lambda x, y: float(np.real(coord.eta(x))) - y
    return np.array([brentq(f, lo, hi, args=(y,), xtol=1e-15, rtol=1e-15) for y in targets])


@dataclass(frozen=True)
class PolyFit:
    cheb: np.ndarray  # Chebyshev coefficients on the sampled eta range
    coeffs: np.ndarray  # power basis in eta, lowest first
    residual: float
    condition: float

    def above(self, k):
        """Largest Chebyshev coefficient beyond degree k, relative to the largest overall."""
        scale = max(np.max(np.abs(self.cheb)), 1e-300)
        return float(np.max(np.abs(self.cheb[k + 1:]), initial=0.0) / scale)

    def degree(self, tol=1e-9):
        scale = max(np.max(np.abs(self.cheb)), 1e-300)
        nz = np.flatnonzero(np.abs(self.cheb) > tol * scale)
        return int(nz[-1]) if nz.size else 0


def fit_eta_polynomial(coord, values_of, max_degree, tol=1e-9, magnitude_of=None):
    """Least-squares eta-polynomial of degree <= max_degree through sampled values.

    The system is a Chebyshev-Vandermonde matrix on the sampled eta range, so
    degree tests do not depend on where that range sits. ``magnitude_of``
    gives the size of the terms that make up the values, for results that
    cancel to nearly zero.
    """
    count = 2 * max_degree + 6
    x = _eta_nodes(coord, count)
    e = np.real(coord.eta(x))
    y = values_of(x)
    if np.max(np.abs(np.imag(y))) > 1e-9 * max(np.max(np.abs(y)), 1.0):
        raise NonPolynomialError("H~ of a real polynomial is not real on the real axis")
    y = np.real(y)
    lo, hi = _eta_range(coord)
    u = (2 * e - (lo + hi)) / (hi - lo)
    V = cheb.chebvander(u, max_degree)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    ref = np.max(np.abs(y))
    if magnitude_of is not None:
        ref = max(ref, float(np.max(magnitude_of(x))))
    resid = np.max(np.abs(V @ coef - y)) / max(ref, 1e-300)
    if resid > tol:
        raise NonPolynomialError(f"fit residual {resid:.2e} exceeds {tol:.0e}")
    power = cheb.Chebyshev(coef, domain=[lo, hi]).convert(kind=npoly.Polynomial).coef
    power = np.pad(power, (0, max_degree + 1 - len(power)))
    return PolyFit(coef, power, float(resid), float(np.linalg.cond(V)))


@dataclass(frozen=True)
class TriangularityReport:
    degrees: tuple
    bound_ok: bool
    max_above: float
    energies: tuple  # degree-n coefficient of H~ eta^n (meaningful for L=2)


def htilde_image(coord, spec, n, compensation=()):
    """Fit of (H~ - sum_j c_j eta^j) eta^n as a polynomial of degree <= n + L."""
    def values(x):
        out = apply_htilde(coord, spec, lambda e: e ** n, x)
        e = coord.eta(x)
        for j, c in compensation:
            out = out - c * e ** (j + n)
        return out

    def magnitude(x):
        e = coord.eta(x)
        out = np.abs(apply_htilde(coord, spec, lambda t: t ** n, x))
        for j, c in compensation:
            out = np.maximum(out, np.abs(c * e ** (j + n)))
        return out
    return fit_eta_polynomial(coord, values, n + spec.L, magnitude_of=magnitude if compensation else None)


def triangularity_check(coord, spec, n_max):
    """Degrees of H~ eta^n for n <= n_max against the bound n + L - 2."""
    degrees, energies = [], []
    above = 0.0
    for n in range(n_max + 1):
        fit = htilde_image(coord, spec, n)
        above = max(above, fit.above(max(n + spec.L - 2, 0)))
        degrees.append(fit.degree())
        energies.append(float(fit.coeffs[n]))
    ok = all(d <= max(n + spec.L - 2, 0) for n, d in enumerate(degrees))
    return TriangularityReport(tuple(degrees), ok, above, tuple(energies))


def _recurrence_data(fam):
    """(A0, B0, A1, B1, C1) fitted from sampled P_0, P_1, P_2."""
    A0, B0, _, _ = recurrence_from_samples(fam, 0)
    A1, B1, C1, _ = recurrence_from_samples(fam, 1)
    return A0, B0, A1, B1, C1


def _family_shift(fam):
    if fam.category == "rdQM":
        return 1.0, -1
    if fam.category == "idQM":
        return -1j * fam.gamma, 1
    raise ParameterError("Bochner recovery applies to dQM families")


def _bochner_points(fam):
    if fam.category == "rdQM":
        x = fam.lattice()
        return x[:min(len(x), 25)]
    lo, hi = fam.domain
    lo = max(lo, -2.0) + 0.05
    hi = min(hi, 2.0) - 0.05
    return np.linspace(lo, hi, 41)


def bochner_recover(fam, recurrence_from=None):
    """Recover V+- from E(1), E(2) and the n = 1, 2 recurrence data; max relative deviation from the family.

    Both the pointwise 2x2 solve and the closed form in S1, S2 are compared.
    ``recurrence_from`` substitutes P1, P2 (and E) of another family as a negative control.
    """
    src = recurrence_from or fam
    shift, eps = _family_shift(fam)
    A0, B0, A1, B1, C1 = _recurrence_data(src)
    E1, E2 = float(np.real(src.energy(1))), float(np.real(src.energy(2)))
    P1 = lambda e: (e - B0) / A0
    P2 = lambda e: ((e - B0) * (e - B1) - A0 * C1) / (A0 * A1)
    x = _bochner_points(fam)
    e = fam.eta(x)
    up = fam.eta(x + shift)
    dn = fam.eta(x - shift)
    M = np.empty(np.shape(x) + (2, 2), dtype=complex)
    # differences P(u) - P(e) in factored form, free of cancellation
    d1 = lambda u: (u - e) / A0
    d2 = lambda u: (u - e) * (u + e - B0 - B1) / (A0 * A1)
    M[..., 0, 0], M[..., 0, 1] = d1(up), d1(dn)
    M[..., 1, 0], M[..., 1, 1] = d2(up), d2(dn)
    rhs = np.stack([E1 * P1(e) / eps, E2 * P2(e) / eps], axis=-1).astype(complex)
    det = np.linalg.det(M)
    good = np.abs(det) > 1e-12 * np.max(np.abs(M), axis=(-2, -1)) ** 2
    if np.count_nonzero(good) < max(3, len(x) // 2):
        raise SamplingError("2x2 Bochner system singular at too many sample points")
    sol = np.linalg.solve(M[good], rhs[good][..., None])[..., 0]
    xg, eg, ug, dg = x[good], e[good], up[good], dn[good]
    S1 = -E1 * A0 * P1(eg) / eps
    S2 = E2 * A0 * A1 * P2(eg) / eps - E1 * A0 * P1(eg) * (A0 * P1(eg) - B1) / eps
    Vp_closed = (S2 + S1 * dg) / ((ug - eg) * (ug - dg))
    Vm_closed = (S2 + S1 * ug) / ((dg - eg) * (dg - ug))
    if fam.category == "rdQM":
        Vp_ref, Vm_ref = fam.B(xg), fam.D(xg)
    else:
        Vp_ref, Vm_ref = fam.V(xg), fam.Vstar(xg)
    scale = max(np.max(np.abs(Vp_ref)), np.max(np.abs(Vm_ref)))
    dev = max(np.max(np.abs(sol[:, 0] - Vp_ref)), np.max(np.abs(sol[:, 1] - Vm_ref)),
              np.max(np.abs(Vp_closed - Vp_ref)), np.max(np.abs(Vm_closed - Vm_ref)))
    return sol[:, 0], sol[:, 1], float(dev / scale)


@dataclass(frozen=True)
class QESResult:
    e0: float
    e1: float
    constraint_residual: float
    invariance_residual: float


def _compensation_system(coord, spec, M):
    """Linear system for the compensation constants in Chebyshev space.

    Unknowns multiply eta^{m+j} (j = L-2, ..., 1); rows are the Chebyshev
    coefficients above degree M of H~ eta^m for m = M (and M-1 when L = 4).
    """
    powers = [1] if spec.L == 3 else [2, 1]
    ms = [M] if spec.L == 3 or M == 0 else [M - 1, M]
    rows, rhs = [], []
    for m in ms:
        fit = htilde_image(coord, spec, m)
        size = len(fit.cheb)
        cols = [_monomial_cheb(coord, m + j, size)[M + 1:] for j in powers]
        rows.append(np.stack(cols, axis=1))
        rhs.append(fit.cheb[M + 1:])
    return powers, np.vstack(rows), np.concatenate(rhs)


def qes_compensation(coord, spec, M, tol=1e-9):
    """Derive e0 (and e1 for L=4) so that H~' = H~ - e0 eta^{L-2} - e1 eta keeps V_M invariant."""
    if spec.L not in (3, 4):
        raise ParameterError("QES compensation needs L in {3, 4}")
    if M < 0:
        raise ParameterError("M must be non-negative")
    powers, A, b = _compensation_system(coord, spec, M)
    col = np.maximum(np.max(np.abs(A), axis=0), 1e-300)
    sol, *_ = np.linalg.lstsq(A / col, b, rcond=None)
    sol = sol / col
    scale = max(np.max(np.abs(b)), 1e-300)
    constraint = float(np.max(np.abs(A @ sol - b)) / scale) if spec.L == 4 else 0.0
    if constraint > tol:
        raise ConstraintError(f"v31/v40 constraint violated for M={M}: mismatch {constraint:.2e}")
    e0 = float(sol[0])
    e1 = float(sol[1]) if spec.L == 4 else 0.0
    comp = tuple(zip(powers, sol))
    images = [htilde_image(coord, spec, m) for m in range(M + 1)]
    scale = max(max(np.max(np.abs(f.cheb)) for f in images), 1e-300)
    worst = 0.0
    for m in range(M + 1):
        fit = htilde_image(coord, spec, m, comp)
        worst = max(worst, float(np.max(np.abs(fit.cheb[M + 1:]), initial=0.0)) / scale)
    return QESResult(e0, e1, constraint, worst)


def qes_constrained_spec(coord, spec, M):
    """Adjust v31 of an L=4 spec so the compensation system for M is consistent."""
    if spec.L != 4 or M < 1:
        raise ParameterError("the constraint applies to L=4 with M >= 1")

    def mismatch(v31):
        v = dict(spec.v)
        v[(3, 1)] = v31
        # leading coefficients of H~ eta^M and H~ eta^{M-1} must share e0
        s = PotentialSpec(4, v)
        return htilde_image(coord, s, M).coeffs[M + 2] - htilde_image(coord, s, M - 1).coeffs[M + 1]

    f0, f1 = mismatch(0.0), mismatch(1.0)
    if f1 == f0:
        raise ConstraintError("constraint does not depend on v31")
    v = dict(spec.v)
    v[(3, 1)] = -f0 / (f1 - f0)
    return PotentialSpec(4, v)
