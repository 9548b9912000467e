"""Eigenpolynomials by series, three-term recurrence and the Rodrigues ladder.

Shift operators act on different representations per category:

* oQM: ``numpy.polynomial.Polynomial`` in eta (exact differentiation),
* idQM and rdQM: callables of x, evaluated pointwise (complex x for idQM).
"""
from dataclasses import dataclass
from math import factorial, inf
import io

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite as _herm

from .errors import DegeneracyError, LadderError, ParameterError, SamplingError
from .special import pochhammer


def n_max(fam):
    return fam.N if getattr(fam, "N", None) is not None else inf


def _check_n(fam, n):
    if int(n) != n or n < 0 or n > n_max(fam):
        raise IndexError(f"n={n} outside 0..{n_max(fam)}")


def eval_polynomial(fam, n, x):
    """P_n(eta(x)) from the (q-)hypergeometric definition."""
    _check_n(fam, n)
    return fam.poly(int(n), x)


def eta_polynomial(fam, n):
    """P_n as a Polynomial in eta for the oQM families, from explicit coefficients."""
    if fam.category != "oQM":
        raise ParameterError("eta_polynomial is defined for oQM families only")
    n = int(n)
    if fam.id == "H":
        return Polynomial(_herm.herm2poly([0] * n + [1]))
    if fam.id == "L":
        g = fam.g
        coef = [pochhammer(-n, k) / (pochhammer(g + 0.5, k) * factorial(k)) for k in range(n + 1)]
        return pochhammer(g + 0.5, n) / factorial(n) * Polynomial(coef)
    g, h = fam.g, fam.h
    u = Polynomial([0.5, -0.5])
    total = Polynomial([0.0])
    for k in range(n + 1):
        total = total + pochhammer(-n, k) * pochhammer(n + g + h, k) / (
            pochhammer(g + 0.5, k) * factorial(k)) * u ** k
    return pochhammer(g + 0.5, n) / factorial(n) * total


# three-term recurrence

@dataclass(frozen=True)
class RecurrenceCoeffs:
    """eta P_n = A_n P_{n+1} + B_n P_n + C_n P_{n-1}, indexed n = 0..len-1."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __len__(self):
        return len(self.A)


def recurrence_coeffs_rdqm(fam, n_max_):
    """A_n, B_n, C_n of an rdQM family from the closure data."""
    if fam.category != "rdQM":
        raise ParameterError("recurrence_coeffs_rdqm needs an rdQM family")
    if fam.N is not None:
        n_max_ = min(n_max_, fam.N)
    cl = fam.closure
    eta1 = float(fam.eta(1))
    B0 = float(fam.B(0))
    A = np.zeros(n_max_ + 1)
    C = np.zeros(n_max_ + 1)
    A[0] = cl.Rm1(0.0) / cl.R0(0.0)
    for n in range(1, n_max_ + 1):
        E = float(fam.energy(n))
        ap, am = cl.alpha(E)
        if ap == am:
            raise DegeneracyError(f"alpha_+ = alpha_- at n={n}")
        rm1 = cl.Rm1(E)
        A[n] = (rm1 + eta1 * (E - B0) * ap) / (ap * (ap - am))
        C[n] = (rm1 + eta1 * (E - B0) * am) / (am * (am - ap))
    return RecurrenceCoeffs(A, -(A + C), C)


def abrel_residual(fam):
    """|A_0 E(1) + B(0) eta(1)|."""
    A0 = fam.closure.Rm1(0.0) / fam.closure.R0(0.0)
    return abs(A0 * float(fam.energy(1)) + float(fam.B(0)) * float(fam.eta(1)))


def _sample_points(fam, count):
    if fam.category == "rdQM":
        pts = fam.lattice()
        if fam.N is None:
            pts = pts[:max(count, 8)]
        return pts
    lo, hi = fam.domain
    if fam.category == "oQM":
        lo = max(lo, -3.0)
        hi = min(hi, 3.0)
    else:
        lo = max(lo, -3.0) if np.isfinite(lo) else -3.0
        hi = min(hi, 3.0)
    k = np.arange(count)
    nodes = np.cos((2 * k + 1) * np.pi / (2 * count))
    return lo + (hi - lo) * (nodes + 1) / 2


def recurrence_from_samples(fam, n, x=None):
    """Least-squares fit of (A_n, B_n, C_n) from eta P_n sampled at >= 4 points.

    Returns (A_n, B_n, C_n, residual) where residual is the max relative
    misfit of the linear system.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if fam.N is not None and n + 1 > fam.N:
        raise IndexError("P_{n+1} does not exist on this lattice")
    if x is None:
        x = _sample_points(fam, max(8, 2 * n + 4))
    x = np.asarray(x)
    if x.size < 4:
        raise SamplingError("need at least four sample points")
    eta = np.asarray(fam.eta(x))
    pn = np.asarray(fam.poly(n, x))
    cols = [np.asarray(fam.poly(n + 1, x)), pn]
    if n > 0:
        cols.append(np.asarray(fam.poly(n - 1, x)))
    M = np.column_stack(cols)
    rhs = eta * pn
    scale = np.max(np.abs(M), axis=0)
    scale[scale == 0] = 1.0
    Ms = M / scale
    sol, _, rank, sv = np.linalg.lstsq(Ms, rhs, rcond=None)
    if rank < Ms.shape[1] or sv[-1] < 1e-12 * sv[0]:
        raise SamplingError("rank-deficient sample set")
    sol = sol / scale
    resid = np.max(np.abs(M @ sol - rhs)) / max(np.max(np.abs(rhs)), 1e-300)
    A, B = float(np.real(sol[0])), float(np.real(sol[1]))
    C = float(np.real(sol[2])) if n > 0 else 0.0
    return A, B, C, float(resid)


def eval_via_recurrence(coeffs, n, eta_value):
    """Forward recursion from P_{-1} = 0, P_0 = 1."""
    if n >= len(coeffs) + 1 or n < 0:
        raise IndexError("recurrence coefficients do not reach n")
    eta_value = np.asarray(eta_value, dtype=float)
    prev = np.zeros_like(eta_value)
    cur = np.ones_like(eta_value)
    for k in range(n):
        nxt = ((eta_value - coeffs.B[k]) * cur - coeffs.C[k] * prev) / coeffs.A[k]
        prev, cur = cur, nxt
    return cur[()] if cur.ndim == 0 else cur


# shift operators

def forward_shift(fam):
    """F(lambda): maps P_n(.;lambda) to f_n P_{n-1}(.;lambda+delta)."""
    if fam.category == "oQM":
        return lambda p: fam.c_F * p.deriv()
    if fam.category == "idQM":
        half = 0.5j * fam.gamma

        def F(f):
            return lambda x: 1j / fam.varphi(x) * (f(x - half) - f(x + half))
        return F
    B0 = float(fam.B(0))

    def F(f):
        def g(x):
            x = np.asarray(x)
            return B0 / fam.varphi(x) * (f(x) - f(x + 1))
        return g
    return F


def backward_shift(fam):
    """B(lambda): maps P_{n-1}(.;lambda+delta) to b_{n-1} P_n(.;lambda)."""
    if fam.category == "oQM":
        c1 = Polynomial(fam.c1_poly())
        c2 = Polynomial(fam.c2_poly())
        return lambda p: -4.0 / fam.c_F * (c2 * p.deriv() + c1 * p)
    if fam.category == "idQM":
        half = 0.5j * fam.gamma

        def Bop(f):
            def g(x):
                xm, xp = x - half, x + half
                return -1j * (fam.V(x) * fam.varphi(xm) * f(xm) - fam.Vstar(x) * fam.varphi(xp) * f(xp))
            return g
        return Bop
    B0 = float(fam.B(0))

    def Bop(f):
        def g(x):
            x = np.asarray(x)
            head = fam.B(x) * fam.varphi(x) * f(x)
            # D(0) = 0 removes the x-1 = -1 term at the boundary
            xm = np.maximum(x - 1, 0)
            tail = np.where(x >= 1, fam.D(x) * fam.varphi(xm) * f(xm), 0.0)
            return (head - tail) / B0
        return g
    return Bop


def apply_htilde(fam, f):
    """Similarity-transformed Hamiltonian applied to f (same representation rules)."""
    if fam.category == "oQM":
        c1 = Polynomial(fam.c1_poly())
        c2 = Polynomial(fam.c2_poly())
        return -4.0 * (c2 * f.deriv(2) + c1 * f.deriv())
    if fam.category == "idQM":
        shift = 1j * fam.gamma

        def g(x):
            fx = f(x)
            return fam.V(x) * (f(x - shift) - fx) + fam.Vstar(x) * (f(x + shift) - fx)
        return g

    def g(x):
        x = np.asarray(x)
        fx = f(x)
        xm = np.maximum(x - 1, 0)
        return fam.B(x) * (fx - f(x + 1)) + fam.D(x) * (fx - f(xm))
    return g


def _poly_callable(fam, n):
    return lambda x: fam.poly(n, x)


def rodrigues_ladder(fam, n, x=None):
    """P_n(eta(x;lambda);lambda) from n backward shifts applied to 1.

    Every rung uses the family at its own shifted parameters, so eta is
    re-evaluated at lambda + k delta. oQM returns values at x when x is
    given and the eta-Polynomial otherwise; rdQM defaults to the lattice.
    """
    _check_n(fam, n)
    n = int(n)
    chain = [fam]
    for _ in range(n):
        chain.append(chain[-1].shifted())
    if fam.category == "oQM":
        p = Polynomial([1.0])
        for k in range(n - 1, -1, -1):
            level = chain[k]
            b = level.b_nm1(n - k)
            if b == 0:
                raise LadderError(f"b_{n - k - 1} vanishes at rung {k}")
            p = backward_shift(level)(p) / b
        return p if x is None else p(fam.eta(x))
    if fam.category == "rdQM":
        if x is None:
            x = fam.lattice()
        x = np.asarray(x)
        top = int(np.max(x)) if x.size else 0
        grid = np.arange(top + 1)
        vals = np.ones(grid.shape)
        for k in range(n - 1, -1, -1):
            level = chain[k]
            b = level.b_nm1(n - k)
            if b == 0:
                raise LadderError(f"b_{n - k - 1} vanishes at rung {k}")
            B0 = float(level.B(0))
            if B0 == 0:
                raise LadderError(f"B(0) vanishes at rung {k}")
            prev = np.concatenate([[0.0], vals[:-1]])
            vals = (level.B(grid) * level.varphi(grid) * vals
                    - level.D(grid) * level.varphi(np.maximum(grid - 1, 0)) * prev) / (B0 * b)
        return vals[x]
    # idQM: values on the rows x + i j gamma/2, j = -n..n; each rung loses the outer rows
    if x is None:
        raise ValueError("idQM ladder needs sample points x")
    x = np.asarray(x, dtype=complex)
    half = 0.5j * fam.gamma
    rows = np.arange(-n, n + 1)
    z = x[None, ...] + rows.reshape((-1,) + (1,) * x.ndim) * half
    vals = np.ones(z.shape, dtype=complex)
    for k in range(n - 1, -1, -1):
        level = chain[k]
        b = level.b_nm1(n - k)
        if b == 0:
            raise LadderError(f"b_{n - k - 1} vanishes at rung {k}")
        zc = z[1:-1]
        new = -1j * (level.V(zc) * level.varphi(z[:-2]) * vals[:-2]
                     - level.Vstar(zc) * level.varphi(z[2:]) * vals[2:]) / b
        z, vals = zc, new
    out = vals[0]
    if np.all(np.abs(out.imag) <= 1e-12 * np.maximum(1.0, np.abs(out.real))):
        out = out.real
    return out[()] if out.ndim == 0 else out


def _eval(fam, f, x):
    return f(fam.eta(x)) if fam.category == "oQM" else f(x)


def _default_points(fam):
    if fam.category == "rdQM":
        return fam.lattice() if fam.N is not None else fam.lattice()[:40]
    return _sample_points(fam, 24)


def forward_check(fam, n, x=None):
    """max |F P_n(lambda) - f_n P_{n-1}(lambda+delta)| relative to the scale of P_n."""
    _check_n(fam, n)
    if n == 0:
        return 0.0
    x = _default_points(fam) if x is None else np.asarray(x)
    nxt = fam.shifted()
    if fam.category == "oQM":
        lhs = forward_shift(fam)(eta_polynomial(fam, n))(fam.eta(x))
    else:
        if fam.category == "rdQM" and nxt.N is not None:
            x = x[x <= nxt.N]
        lhs = forward_shift(fam)(_poly_callable(fam, n))(x)
    rhs = fam.f_n(n) * nxt.poly(n - 1, x)
    scale = max(np.max(np.abs(rhs)), 1.0)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def factorization_check(fam, n_top=None, x=None):
    """max over n of |B F P_n - E(n) P_n| relative to max |E(n) P_n|."""
    if n_top is None:
        n_top = min(10, n_max(fam))
    x = _default_points(fam) if x is None else np.asarray(x)
    F, B = forward_shift(fam), backward_shift(fam)
    worst = 0.0
    for n in range(int(n_top) + 1):
        if fam.category == "oQM":
            p = eta_polynomial(fam, n)
            lhs = B(F(p))(fam.eta(x))
            pn = p(fam.eta(x))
        else:
            lhs = B(F(_poly_callable(fam, n)))(x)
            pn = fam.poly(n, x)
        rhs = fam.energy(n) * pn
        scale = max(np.max(np.abs(rhs)), np.max(np.abs(pn)), 1.0)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / scale))
    return worst


def difference_equation_residual(fam, n, x=None):
    """|H~ P_n - E(n) P_n| / scale at the sample points (complex-shift aware)."""
    x = _default_points(fam) if x is None else np.asarray(x)
    if fam.category == "oQM":
        p = eta_polynomial(fam, n)
        lhs = apply_htilde(fam, p)(fam.eta(x))
        pn = p(fam.eta(x))
    else:
        lhs = apply_htilde(fam, _poly_callable(fam, n))(x)
        pn = fam.poly(n, x)
    rhs = fam.energy(n) * pn
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(pn)), 1.0)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def triple_agreement(fam, n, x=None):
    """Max relative disagreement among series, recurrence and Rodrigues values of P_n."""
    x = _default_points(fam) if x is None else np.asarray(x)
    series = np.asarray(fam.poly(n, x))
    ladder = np.asarray(rodrigues_ladder(fam, n, x))
    if fam.category == "rdQM":
        coeffs = recurrence_coeffs_rdqm(fam, max(n, 1))
        rec = eval_via_recurrence(coeffs, n, fam.eta(x))
    else:
        A = np.zeros(max(n, 1))
        B = np.zeros(max(n, 1))
        C = np.zeros(max(n, 1))
        for k in range(n):
            A[k], B[k], C[k], _ = recurrence_from_samples(fam, k)
        rec = eval_via_recurrence(RecurrenceCoeffs(A, B, C), n, np.real(fam.eta(x)))
    scale = max(np.max(np.abs(series)), 1.0)
    d1 = np.max(np.abs(series - ladder)) / scale
    d2 = np.max(np.abs(series - rec)) / scale
    return float(max(d1, d2))


def degree_check(fam, n, tol=1e-8):
    """(leading coefficient, relative size of the next one) of P_n fitted through n+2 eta-values."""
    if fam.category == "rdQM":
        if fam.N is not None and fam.N < n + 1:
            raise IndexError("lattice too small for the degree fit")
        x = fam.lattice()[:n + 2]
    elif fam.category == "oQM" and fam.id == "J":
        x = np.linspace(0.1, 1.4, n + 2)
    elif fam.category == "oQM" and fam.id == "L":
        x = np.linspace(0.2, 2.5, n + 2)
    elif fam.id == "AW":
        x = np.linspace(0.2, 2.9, n + 2)
    elif fam.id == "W":
        x = np.linspace(0.1, 2.0, n + 2)
    else:
        x = np.linspace(-1.5, 1.5, n + 2)
    eta = np.real(np.asarray(fam.eta(x), dtype=complex))
    vals = np.real(np.asarray(fam.poly(n, x), dtype=complex))
    V = np.vander(eta, n + 2, increasing=True)
    coef = np.linalg.solve(V, vals)
    scale = np.max(np.abs(coef[:n + 1]))
    return float(coef[n]), float(abs(coef[n + 1]) / scale)


def tabulate(fam, n_top, x=None):
    """CSV text with header x,eta,P_0..P_n and 17 significant digits."""
    if x is None:
        if fam.category != "rdQM":
            raise ValueError("sample points are required for oQM/idQM tables")
        x = fam.lattice()
    n_top = int(min(n_top, n_max(fam)))
    x = np.asarray(x)
    cols = [np.real(np.asarray(fam.poly(n, x), dtype=complex)) for n in range(n_top + 1)]
    eta = np.real(np.asarray(fam.eta(x), dtype=complex))
    out = io.StringIO()
    out.write(",".join(["x", "eta"] + [f"P_{n}" for n in range(n_top + 1)]) + "\n")
    for i in range(x.size):
        row = [x.flat[i], eta.flat[i]] + [c.flat[i] for c in cols]
        out.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return out.getvalue()
