"""Exceptional X_l deformations of the solvable families.

A ``DeformedFamily`` wraps a base descriptor at lambda and builds, for a
degree-l deforming polynomial xi_l, the X_l polynomials P_{l,n}, the deformed
potentials and weight, and the intertwiners between the original system at
lambda + l delta + delta_tilde and the deformed one.

Representations follow ``polynomials``: oQM objects are
``numpy.polynomial.Polynomial`` in eta, idQM and rdQM objects are callables of
x (complex x for idQM; e^{gamma p/2} f(x) = f(x - i gamma/2)).
"""
from dataclasses import dataclass
import io

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import brentq

from .errors import DeformationSingularityError, ConstructionError, DomainError, ParameterError
from .lattice import JacobiMatrix, eigendecompose
from .polynomials import apply_htilde, backward_shift, eta_polynomial, forward_shift
from .quadrature import domain_for, gram_matrix

KIND_BASE = {
    "XL1": "L", "XL2": "L", "XJ1": "J", "XJ2": "J",
    "XMP": "MP", "XW": "W", "XAW": "AW",
    "XM": "M", "XR": "R", "XqR": "qR",
}

# sign factor of P_{l,n}, F-hat and B-hat for oQM
_OQM_SIGN = {"XL1": 1.0, "XL2": -1.0, "XJ1": 1.0, "XJ2": -1.0}


@dataclass(frozen=True)
class TwistMap:
    """Parameter involution t(lambda) of a deformation kind, plus its delta_tilde.

    XL1 and XM deform through the argument (eta -> -eta, x -> -(x + beta + l - 1))
    instead; their ``twist`` is the identity.
    """
    kind: str
    delta_tilde: tuple

    @property
    def argument_twist(self):
        return self.kind in ("XL1", "XM")

    def twist(self, fam):
        p = dict(fam.params)
        k = self.kind
        if k == "XL2":
            p["g"] = -p["g"] - 1
        elif k == "XJ1":
            p["h"] = -p["h"] - 1
        elif k == "XJ2":
            p["g"] = -p["g"] - 1
        elif k == "XMP":
            p["a"] = -p["a"]
        elif k == "XW":
            p["a1"], p["a2"] = -p["a1"], -p["a2"]
        elif k == "XAW":
            # q-families store q^lambda, so lambda -> -lambda inverts
            p["a1"], p["a2"] = 1 / p["a1"], 1 / p["a2"]
        elif k == "XR":
            p["a"], p["b"] = p["d"] - p["a"], p["d"] - p["b"]
        elif k == "XqR":
            p["a"], p["b"] = p["d"] / p["a"], p["d"] / p["b"]
        return fam._with(p)


def twist_map(kind):
    if kind not in KIND_BASE:
        raise ParameterError(f"unknown deformation kind {kind!r}; expected one of {sorted(KIND_BASE)}")
    from .families import FAMILIES
    return TwistMap(kind, tuple(FAMILIES[KIND_BASE[kind]].delta_tilde[kind]))


def _conj_fn(f):
    """v*(x) = conj(v(conj x))."""
    return lambda x: np.conj(f(np.conj(x)))


class DeformedFamily:
    """X_l deformation of ``base`` (a descriptor at lambda)."""

    def __init__(self, base, kind, ell, validate=True):
        if kind not in KIND_BASE:
            raise ParameterError(f"unknown deformation kind {kind!r}")
        if base.id != KIND_BASE[kind]:
            raise ParameterError(f"{kind} deforms {KIND_BASE[kind]}, not {base.id}")
        if int(ell) != ell or ell < 0:
            raise ParameterError("ell must be a non-negative integer")
        self.base = base
        self.kind = kind
        self.ell = int(ell)
        self.category = base.category
        self.tmap = twist_map(kind)
        if validate:
            self._validate()
        dvec = np.asarray(base.delta, dtype=float)
        self.lam_l = base.shift(self.ell * dvec)
        self.lam_lt = base.shift(self.ell * dvec + np.asarray(self.tmap.delta_tilde))
        self.lam_lm1 = base.shift((self.ell - 1) * dvec)

    def __repr__(self):
        return f"{self.kind}(ell={self.ell}, base={self.base!r})"

    def _validate(self):
        p = self.base.params
        if self.kind == "XMP" and self.ell % 2:
            raise ParameterError("XMP requires even ell")
        if self.kind in ("XW", "XAW"):
            a1, a2, a3, a4 = (p[k] for k in ("a1", "a2", "a3", "a4"))
            if np.iscomplexobj(np.array([a1, a2])) and (np.imag(a1) != 0 or np.imag(a2) != 0):
                raise ParameterError(f"{self.kind} requires real a1, a2")
            pair = sorted([a3, a4], key=lambda z: (np.real(z), np.imag(z)))
            conj = sorted([np.conj(a3), np.conj(a4)], key=lambda z: (np.real(z), np.imag(z)))
            if not np.allclose(pair, conj, rtol=1e-12, atol=1e-14):
                raise ParameterError(f"{self.kind} requires {{a3*, a4*}} = {{a3, a4}}")
            for aj in (np.real(a1), np.real(a2)):
                for ak in (a3, a4):
                    ok = (0 < aj < np.real(ak)) if self.kind == "XW" else (abs(ak) < aj < 1)
                    if not ok:
                        raise ParameterError(f"{self.kind} parameter range violated")

    @property
    def up(self):
        """The same deformation at lambda + delta."""
        return DeformedFamily(self.base.shifted(), self.kind, self.ell, validate=False)

    def with_ell(self, ell):
        return DeformedFamily(self.base, self.kind, ell, validate=False)

    # lattice bookkeeping (rdQM)

    @property
    def x_max(self):
        """x_max^l = x_max - l."""
        self._require("rdQM")
        return self.base.x_max - self.ell

    @property
    def n_max(self):
        if self.category == "rdQM" and self.base.N is not None:
            return self.base.N - self.ell
        return np.inf

    def lattice(self):
        return np.arange(self.x_max + 1)

    @property
    def finite(self):
        return self.category == "rdQM" and self.base.N is not None

    def _require(self, category):
        if self.category != category:
            raise ParameterError(f"{self.kind}: operation is defined for {category} only")

    # deforming polynomial

    def xi_poly(self, shifted=False):
        """xi_l(eta; lambda) (or lambda + delta) as a Polynomial in eta (oQM)."""
        self._require("oQM")
        lam = self.base.shifted() if shifted else self.base
        lm1 = lam.shift((self.ell - 1) * np.asarray(lam.delta, dtype=float))
        if self.kind == "XL1":
            return eta_polynomial(lm1, self.ell)(Polynomial([0.0, -1.0]))
        return eta_polynomial(self.tmap.twist(lm1), self.ell)

    def xi(self, x, shifted=False):
        """xi_l(eta(x); lambda) for oQM/idQM, the lattice form xi-check_l(x; lambda) for rdQM."""
        x = np.asarray(x)
        if self.ell == 0:
            return np.ones(x.shape)
        if self.category == "oQM":
            return self.xi_poly(shifted)(self.base.eta(x))
        lam = self.base.shifted() if shifted else self.base
        lm1 = lam.shift((self.ell - 1) * np.asarray(lam.delta, dtype=float))
        if self.kind == "XM":
            return lm1.c ** self.ell * lm1.poly(self.ell, -(x + lm1.beta))
        return self.tmap.twist(lm1).poly(self.ell, x)

    # constants

    def f_hat(self, n):
        p, l, k = self.base.params, self.ell, self.kind
        if k == "XL1":
            return -2.0
        if k in ("XL2", "XJ2"):
            return 2.0 * (n + p["g"] + 0.5)
        if k == "XJ1":
            return -2.0 * (n + p["h"] + 0.5)
        if k == "XMP":
            return 2 * p["a"] + n
        if k == "XW":
            return p["a1"] + p["a2"] + n
        if k == "XAW":
            q = self.base.q
            return -q ** (-(n - l) / 2) * (1 - p["a1"] * p["a2"] * q ** n)
        if k == "XM":
            c, beta = p["c"], p["beta"]
            return (1 - c) / np.sqrt(c) * (beta + n + 2 * l - 1) / (beta + l - 1)
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        if k == "XR":
            return (a + b - d + n) * (c + 2 * l + n - 1) / (c + l - 1)
        q = self.base.q
        return q ** (-n) * (1 - a * b / d * q ** n) * (1 - c * q ** (2 * l + n - 1)) / (1 - c * q ** (l - 1))

    def b_hat(self, n):
        p, l, k = self.base.params, self.ell, self.kind
        if k in ("XL1", "XJ1"):
            return -2.0 * (n + p["g"] + 2 * l - 0.5)
        if k == "XL2":
            return 2.0
        if k == "XJ2":
            return 2.0 * (n + p["h"] + 2 * l - 0.5)
        if k == "XMP":
            return 2.0
        if k == "XW":
            return p["a3"] + p["a4"] + n + 2 * l - 1
        if k == "XAW":
            q = self.base.q
            return -q ** (-(n + l) / 2) * (1 - p["a3"] * p["a4"] * q ** (n + 2 * l - 1))
        if k == "XM":
            c = p["c"]
            return np.sqrt(c) / (1 - c) * (p["beta"] + l - 1)
        if k == "XR":
            return p["c"] + l - 1
        return 1 - p["c"] * self.base.q ** (l - 1)

    @property
    def s_ell(self):
        """s_l of the rdQM norm formula."""
        self._require("rdQM")
        p, l = self.base.params, self.ell
        if self.kind == "XM":
            c = p["c"]
            return (1 - c) / c / (p["beta"] + l - 1)
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        if self.kind == "XR":
            return -(d - a) * (d - b) / ((c + l - 1) * (d + l))
        q = self.base.q
        return -a * b / d * q ** l * (1 - d / a) * (1 - d / b) / ((1 - c * q ** (l - 1)) * (1 - d * q ** l))

    @property
    def kappa_hat(self):
        p, l = self.base.params, self.ell
        if self.kind == "XAW":
            return 1.0 / (p["a1"] * p["a2"] * self.base.q ** l)
        if self.kind == "XqR":
            return 1.0 / (p["a"] * p["b"] / p["d"] * self.base.q ** l)
        return 1.0

    @property
    def s_hat(self):
        if self.category == "oQM":
            return 1.0
        if self.category == "idQM":
            return float(np.sqrt(self.kappa_hat))
        p, l = self.base.params, self.ell
        extra = {"XM": lambda: p["beta"] + l - 1, "XR": lambda: p["c"] + l - 1,
                 "XqR": lambda: 1 - p["c"] * self.base.q ** (l - 1)}[self.kind]()
        return self.kappa_hat * extra

    # oQM auxiliary functions

    def d1(self, lam=None):
        p = (lam or self.base).params
        return {"XL1": 1.0, "XL2": p.get("g", 0) + 0.5, "XJ2": p.get("g", 0) + 0.5,
                "XJ1": p.get("h", 0) + 0.5}[self.kind]

    def d2_poly(self):
        return {"XL1": Polynomial([1.0]), "XL2": Polynomial([0.0, -1.0]),
                "XJ1": Polynomial([-1.0, -1.0]), "XJ2": Polynomial([1.0, -1.0])}[self.kind]

    def d3(self, lam=None):
        p = (lam or self.base).params
        l = self.ell
        return {"XL1": p.get("g", 0) + l - 0.5, "XJ1": p.get("g", 0) + l - 0.5,
                "XL2": 1.0, "XJ2": p.get("h", 0) + l - 0.5}[self.kind]

    def c2_over_d2(self):
        """c_2/d_2 as a polynomial (exact division for all four kinds)."""
        quo, rem = divmod(Polynomial(self.base.c2_poly()), self.d2_poly())
        if np.max(np.abs(rem.coef)) > 1e-14:
            raise ConstructionError("c2/d2 is not polynomial")
        return quo

    # v-factors

    def v1(self, lam):
        """v_1(x; lam) (idQM) as a callable."""
        p = lam.params
        if self.kind == "XMP":
            return lambda x: 1j * (p["a"] + 1j * np.asarray(x))
        if self.kind == "XW":
            return lambda x: (p["a1"] + 1j * np.asarray(x)) * (p["a2"] + 1j * np.asarray(x))
        return lambda x: np.exp(-1j * np.asarray(x)) * (1 - p["a1"] * np.exp(1j * np.asarray(x))) \
            * (1 - p["a2"] * np.exp(1j * np.asarray(x)))

    def v2(self, lam):
        p = lam.params
        if self.kind == "XMP":
            return lambda x: 1j + 0 * np.asarray(x)
        if self.kind == "XW":
            return lambda x: (p["a3"] + 1j * np.asarray(x)) * (p["a4"] + 1j * np.asarray(x))
        return lambda x: np.exp(-1j * np.asarray(x)) * (1 - p["a3"] * np.exp(1j * np.asarray(x))) \
            * (1 - p["a4"] * np.exp(1j * np.asarray(x)))

    def vB(self, lam):
        """(v_1^B, v_2^B, v_1^D, v_2^D) at lam (rdQM) as callables."""
        p = lam.params
        if self.kind == "XM":
            c = p["c"]
            return (lambda x: -np.sqrt(c) + 0 * np.asarray(x, dtype=float),
                    lambda x: lam.B(x) / np.sqrt(c),
                    lambda x: -1 / np.sqrt(c) + 0 * np.asarray(x, dtype=float),
                    lambda x: np.sqrt(c) * lam.D(x))
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        if self.kind == "XR":
            return (lambda x: (x + a) * (x + b) / d,
                    lambda x: (x + c) * (x + d) / d,
                    lambda x: (x + d - a) * (x + d - b) / d,
                    lambda x: (x + d - c) * x / d)
        q = lam.q

        def pre(x):
            return q ** (-np.asarray(x, dtype=float)) / (1 - d)

        def qx(x):
            return q ** np.asarray(x, dtype=float)
        return (lambda x: pre(x) * (1 - a * qx(x)) * (1 - b * qx(x)),
                lambda x: pre(x) * (1 - c * qx(x)) * (1 - d * qx(x)),
                lambda x: pre(x) * a * b / d * (1 - d / a * qx(x)) * (1 - d / b * qx(x)),
                lambda x: pre(x) * c * (1 - d / c * qx(x)) * (1 - qx(x)))

    # X_l polynomials

    def exceptional_poly(self, n):
        """P_{l,n} as a Polynomial in eta (oQM)."""
        self._require("oQM")
        Pn = eta_polynomial(self.lam_lt, n)
        body = self.d2_poly() * self.xi_poly() * Pn.deriv() - self.d1() * self.xi_poly(True) * Pn
        fh = self.f_hat(n)
        if fh == 0:
            raise ConstructionError(f"f_hat_{{l,{n}}} vanishes")
        return 2.0 / fh * _OQM_SIGN[self.kind] * body

    def exceptional(self, n, x):
        """P_{l,n}(eta(x)) (P-check_{l,n}(x) for rdQM) from the bilinear formula."""
        if n < 0 or n > self.n_max or int(n) != n:
            raise IndexError(f"n={n} outside 0..{self.n_max}")
        n = int(n)
        fh = self.f_hat(n)
        if fh == 0:
            raise ConstructionError(f"f_hat_{{l,{n}}} vanishes")
        x = np.asarray(x)
        if self.category == "oQM":
            return self.exceptional_poly(n)(self.base.eta(x))
        if self.category == "idQM":
            h = 0.5j * self.base.gamma
            v1 = self.v1(self.lam_l)
            v1s = _conj_fn(v1)
            Pn = self.lam_lt.poly
            val = (v1(x) * self.xi(x + h) * Pn(n, x - h) - v1s(x) * self.xi(x - h) * Pn(n, x + h))
            return _realify(-1j / (fh * self.base.varphi(x)) * val)
        v1B, _, v1D, _ = self.vB(self.lam_l)
        lt = self.lam_lt
        val = v1B(x) * self.xi(x) * lt.poly(n, x + 1) - v1D(x) * self.xi(x + 1) * lt.poly(n, x)
        return val / (fh * lt.varphi(x))

    # deformed potentials and weight

    def B_ell(self, x):
        self._require("rdQM")
        x = np.asarray(x, dtype=float)
        return (self.lam_l.B(x) * self.xi(x) / self.xi(x + 1)
                * self.xi(x + 1, True) / self.xi(x, True))

    def D_ell(self, x):
        self._require("rdQM")
        x = np.asarray(x, dtype=float)
        return (self.lam_l.D(x) * self.xi(x + 1) / self.xi(x)
                * self.xi(x - 1, True) / self.xi(x, True))

    def V_ell(self, x):
        """V_l(x) and V_l*(x) (idQM)."""
        self._require("idQM")
        h = 0.5j * self.base.gamma
        g = 1j * self.base.gamma
        lam = self.lam_l
        Vl = lam.V(x) * self.xi(x + h) / self.xi(x - h) * self.xi(x - g, True) / self.xi(x, True)
        Vls = lam.Vstar(x) * self.xi(x - h) / self.xi(x + h) * self.xi(x + g, True) / self.xi(x, True)
        return Vl, Vls

    def dw_ell(self, x):
        """(d/dx w_l, d^2/dx^2 w_l) (oQM)."""
        self._require("oQM")
        lam = self.lam_l
        d1u, d2u = _dlog(self.xi_poly(True), self.base, x)
        d1, d2 = _dlog(self.xi_poly(), self.base, x)
        return lam.dw(x) + d1u - d1, lam.d2w(x) + d2u - d2

    def psi_sq(self, x):
        """psi_l(x)^2 (rdQM: phi0(x; lambda + l delta)^2 xi(1) / (xi(x) xi(x+1)))."""
        x = np.asarray(x)
        if self.category == "oQM":
            return self.lam_l.weight(x) / self.xi(x) ** 2
        if self.category == "idQM":
            h = 0.5j * self.base.gamma
            return np.real(self.lam_l.weight(x) / (self.xi(x + h) * self.xi(x - h)))
        xi1 = float(self.xi(1))
        return self.lam_l.weight_product(x) * xi1 / (self.xi(x) * self.xi(x + 1))

    def norm(self, n):
        """h_{l,n} (oQM/idQM) or d_{l,n}^2 (rdQM)."""
        if self.category == "rdQM":
            return self.lam_lt.norm(n) * self.f_hat(n) / (self.b_hat(n) * self.s_ell)
        return self.b_hat(n) / self.f_hat(n) * np.real(self.lam_lt.norm(n))

    def norm_via_l(self, n):
        """The second closed form of d_{l,n}^2, through d_n(lambda + l delta)^2 (rdQM)."""
        self._require("rdQM")
        at_l = DeformedFamily(self.lam_l, self.kind, 0, validate=False)
        return (self.lam_l.norm(n) * self.f_hat(n) / self.b_hat(n)
                * at_l.b_hat(n) / at_l.f_hat(n) * at_l.s_ell / self.s_ell)

    def energy(self, n):
        """E_{l,n}(lambda) = E(n; lambda + l delta)."""
        return self.lam_l.energy(n)


def make_deformed(kind, params=None, ell=1, q=None, N=None):
    """Validated deformed family from the base family's parameters."""
    from .families import make_family
    if kind not in KIND_BASE:
        raise ParameterError(f"unknown deformation kind {kind!r}; expected one of {sorted(KIND_BASE)}")
    base = make_family(KIND_BASE[kind], params, q=q, N=N)
    if base.category == "rdQM" and base.N is not None and ell > base.N:
        raise ParameterError("ell exceeds N")
    return DeformedFamily(base, kind, ell)


def _realify(z):
    z = np.asarray(z)
    if np.iscomplexobj(z) and np.all(np.abs(z.imag) <= 1e-10 * np.maximum(1.0, np.abs(z.real))):
        z = z.real
    return z[()] if z.ndim == 0 else z


# eta derivatives for oQM coordinates (L: x^2, J: cos 2x)

def _eta_derivs(fam, x):
    x = np.asarray(x, dtype=float)
    if fam.id == "L":
        return 2 * x, 2.0 + 0 * x
    if fam.id == "J":
        return -2 * np.sin(2 * x), -4 * np.cos(2 * x)
    raise ParameterError("no deformation of H")


def _dlog(poly, fam, x):
    """First and second x-derivatives of log poly(eta(x))."""
    e = fam.eta(x)
    e1, e2 = _eta_derivs(fam, x)
    p, dp, ddp = poly(e), poly.deriv()(e), poly.deriv(2)(e)
    first = dp * e1 / p
    return first, (ddp * e1 ** 2 + dp * e2) / p - first ** 2


# eval_deforming / eval_exceptional

def eval_deforming(fam, x, shifted=False):
    """xi_l at lambda (or lambda + delta); rdQM returns the lattice form with xi(0) = 1."""
    return fam.xi(x, shifted)


def eval_exceptional(fam, n, x):
    return fam.exceptional(n, x)


# identities of the deforming polynomial

def _rel(res, scale):
    return float(np.max(np.abs(res)) / max(np.max(np.abs(scale)), 1e-300))


def default_points(fam, count=100, seed=0):
    """Sample points: reals inside the oQM domain, complex-shifted for idQM, lattice for rdQM."""
    rng = np.random.default_rng(seed)
    if fam.category == "rdQM":
        return fam.lattice().astype(float)
    if fam.category == "oQM":
        lo, hi = (0.05, 2.5) if fam.base.id == "L" else (0.05, np.pi / 2 - 0.05)
        return np.sort(rng.uniform(lo, hi, count))
    g = abs(fam.base.gamma)
    lo, hi = {"MP": (-2.5, 2.5), "W": (0.1, 2.5), "AW": (0.1, np.pi - 0.1)}[fam.base.id]
    return rng.uniform(lo, hi, count) + 1j * rng.uniform(-g / 2, g / 2, count)


def xi_identities_check(fam, x=None):
    """Relative residuals (r1, r2, r3): the two lambda <-> lambda+delta identities and the xi equation."""
    x = default_points(fam) if x is None else np.asarray(x)
    if fam.ell == 0:
        return 0.0, 0.0, 0.0
    up = fam.up
    if fam.category == "oQM":
        xi, xiu = fam.xi_poly(), fam.xi_poly(True)
        e = fam.base.eta(x)
        lhs1 = fam.d1(fam.lam_l) * xi + fam.d2_poly() * xi.deriv()
        rhs1 = fam.d1() * xiu
        lhs2 = fam.d3() * xiu + fam.c2_over_d2() * xiu.deriv()
        rhs2 = DeformedFamily(fam.lam_l, fam.kind, fam.ell, validate=False).d3() * xi
        # xi equation: c2 xi'' + c1~ xi' = -E~/4 xi
        lm1 = fam.lam_lm1
        if fam.kind == "XL1":
            c1t = Polynomial(lm1.c1_poly())(Polynomial([0.0, -1.0]))
            Et = -float(fam.base.energy(fam.ell))
        else:
            tw = fam.tmap.twist(lm1)
            c1t = Polynomial(tw.c1_poly())
            Et = float(fam.tmap.twist(fam.base).energy(fam.ell))
        lhs3 = Polynomial(fam.base.c2_poly()) * xi.deriv(2) + c1t * xi.deriv()
        rhs3 = -0.25 * Et * xi
        return (_rel(lhs1(e) - rhs1(e), rhs1(e)), _rel(lhs2(e) - rhs2(e), rhs2(e)),
                _rel(lhs3(e) - rhs3(e), np.abs(rhs3(e)) + np.abs(lhs3(e))))
    if fam.category == "idQM":
        h = 0.5j * fam.base.gamma
        vphi = fam.base.varphi(x)
        v1 = fam.v1(fam.lam_l)
        v1s = _conj_fn(v1)
        lhs1 = 1j / vphi * (v1s(x) * fam.xi(x - h) - v1(x) * fam.xi(x + h))
        rhs1 = fam.f_hat(0) * fam.xi(x, True)
        v2 = fam.v2(fam.lam_lm1)
        v2s = _conj_fn(v2)
        lhs2 = -1j / vphi * (v2(x) * fam.xi(x - h, True) - v2s(x) * fam.xi(x + h, True))
        rhs2 = fam.b_hat(0) * fam.xi(x)
        tw = fam.tmap.twist(fam.lam_lm1)
        g = 1j * fam.base.gamma
        xi0 = fam.xi(x)
        lhs3 = tw.V(x) * (fam.xi(x - g) - xi0) + tw.Vstar(x) * (fam.xi(x + g) - xi0)
        rhs3 = tw.energy(fam.ell) * xi0
        return (_rel(lhs1 - rhs1, rhs1), _rel(lhs2 - rhs2, rhs2),
                _rel(lhs3 - rhs3, np.abs(rhs3) + np.abs(lhs3)))
    # rdQM
    x = np.asarray(x, dtype=float)
    v1B, _, v1D, _ = fam.vB(fam.lam_l)
    phi_l = fam.base.shift(fam.ell * np.asarray(fam.base.delta, dtype=float)
                           + np.asarray(fam.tmap.delta_tilde)).varphi(x)
    lhs1 = (v1B(x) * fam.xi(x) - v1D(x) * fam.xi(x + 1)) / phi_l
    rhs1 = fam.f_hat(0) * fam.xi(x, True)
    _, v2B, _, v2D = fam.vB(fam.lam_lm1)
    phi_m = fam.base.shift((fam.ell - 1) * np.asarray(fam.base.delta, dtype=float)
                           + np.asarray(fam.tmap.delta_tilde)).varphi(x)
    lhs2 = (v2B(x) * fam.xi(x, True) - v2D(x) * fam.xi(x - 1, True)) / phi_m
    rhs2 = fam.b_hat(0) * fam.xi(x)
    Bt, Dt, Et = _xi_equation_data(fam)
    xi0 = fam.xi(x)
    lhs3 = Bt(x) * (xi0 - fam.xi(x + 1)) + Dt(x) * (xi0 - fam.xi(x - 1))
    rhs3 = Et * xi0
    del up
    return (_rel(lhs1 - rhs1, rhs1), _rel(lhs2 - rhs2, rhs2),
            _rel(lhs3 - rhs3, np.abs(rhs3) + np.abs(lhs3)))


def _xi_equation_data(fam):
    """(B~, D~, E~) of the difference equation satisfied by xi-check_l (rdQM)."""
    lm1 = fam.lam_lm1
    if fam.kind == "XM":
        def arg(x):
            return -(np.asarray(x, dtype=float) + lm1.beta)
        return (lambda x: -lm1.D(arg(x)), lambda x: -lm1.B(arg(x)),
                -float(fam.base.energy(fam.ell)))
    tw = fam.tmap.twist(lm1)
    return tw.B, tw.D, float(fam.tmap.twist(fam.base).energy(fam.ell))


# positivity / zero-freeness of xi

@dataclass(frozen=True)
class PositivityReport:
    ok: bool
    min_value: float  # min of xi (rdQM, oQM) or min modulus relative to the max (idQM)
    roots_in_domain: tuple


def positivity_scan(fam, grid=400):
    """Check xi_l has no zero where the deformation needs it."""
    if fam.ell == 0:
        return PositivityReport(True, 1.0, ())
    if fam.category == "rdQM":
        x = np.arange(fam.x_max + 2, dtype=float)
        v = np.concatenate([fam.xi(x), fam.xi(x[:-1], True)])
        return PositivityReport(bool(np.all(v > 0)), float(np.min(v)), ())
    if fam.category == "oQM":
        lo, hi = (0.0, np.inf) if fam.base.id == "L" else (-1.0, 1.0)
        roots = []
        for p in (fam.xi_poly(), fam.xi_poly(True)):
            for r in p.roots():
                if abs(np.imag(r)) <= 1e-12 * max(1.0, abs(r)) and lo <= np.real(r) <= hi:
                    roots.append(float(np.real(r)))
        e = np.linspace(0.0, 50.0, grid) if fam.base.id == "L" else np.linspace(-1, 1, grid)
        v = fam.xi_poly()(e)
        sign = np.sign(v[np.argmax(np.abs(v))])
        return PositivityReport(not roots, float(np.min(sign * v)), tuple(roots))
    # idQM: minimum modulus over the rectangle |Im x| <= |gamma|
    g = abs(fam.base.gamma)
    lo, hi = {"MP": (-6.0, 6.0), "W": (0.0, 6.0), "AW": (0.0, np.pi)}[fam.base.id]
    X, Y = np.meshgrid(np.linspace(lo, hi, grid), np.linspace(-g, g, max(grid // 4, 21)))
    z = X + 1j * Y
    m = np.abs(fam.xi(z))
    ratio = float(np.min(m) / np.max(m))
    return PositivityReport(ratio > 1e-8, ratio, ())


def require_positive(fam):
    rep = positivity_scan(fam)
    if not rep.ok:
        raise DeformationSingularityError(
            f"{fam.kind}: deforming polynomial vanishes in the physical domain "
            f"(min {rep.min_value:.3e}, roots {rep.roots_in_domain})")
    return rep


# deformed Hamiltonian (rdQM)

def _jacobi(B, D):
    prod = B[:-1] * D[1:]
    return JacobiMatrix(B + D, -np.sqrt(np.maximum(prod, 0.0)))


@dataclass(frozen=True)
class DeformedHamiltonian:
    matrix: JacobiMatrix
    boundary_residual: float  # max(|D_l(0)|, |B_l(x_max^l)|) relative to max B_l
    eigenvalues: np.ndarray
    expected: np.ndarray
    spectrum_residual: float
    eigenvector_residual: float
    checked_levels: int


@dataclass(frozen=True)
class DeformedPotentialReport:
    """Continuous-x counterpart of DeformedHamiltonian (oQM, idQM)."""
    positivity: PositivityReport
    equation_residual: float  # H_l psi_l P_{l,n} = E(n; lambda + l delta) psi_l P_{l,n}
    shape_invariance: tuple
    checked_levels: int


def build_deformed_hamiltonian(fam, n_check=None):
    """Jacobi matrix of H_l from B_l, D_l and its spectrum against E(n; lambda + l delta).

    oQM and idQM return a DeformedPotentialReport instead.
    """
    if fam.category != "rdQM":
        rep = require_positive(fam)
        n_check = 5 if n_check is None else n_check
        return DeformedPotentialReport(rep, deformed_difference_residual(fam, n_check - 1),
                                       deformed_shape_invariance(fam), n_check)
    require_positive(fam)
    x = fam.lattice().astype(float)
    B = fam.B_ell(x)
    D = fam.D_ell(x)
    bscale = max(np.max(np.abs(B)), 1e-300)
    bnd = abs(D[0]) / bscale
    if fam.finite:
        bnd = max(bnd, abs(B[-1]) / bscale)
        B = B.copy()
        B[-1] = 0.0
    D = D.copy()
    D[0] = 0.0
    if np.any(B[:-1] * D[1:] < 0):
        raise DeformationSingularityError("B_l(x) D_l(x+1) < 0 on the lattice")
    mat = _jacobi(B, D)
    dec = eigendecompose(mat)
    if n_check is None:
        n_check = len(x) if fam.finite else _reliable_count(fam)
    n = np.arange(n_check)
    E = np.asarray(fam.energy(n), dtype=float)
    scale = np.where(n == 0, abs(float(fam.energy(1))), np.abs(E))
    spec = float(np.max(np.abs(dec.eigenvalues[:n_check] - E) / scale))
    vec = 0.0
    xi1 = float(fam.xi(1))
    psi = np.sqrt(fam.psi_sq(x))
    for k in range(n_check):
        ref = np.sqrt(fam.norm(k) / xi1) * psi * fam.exceptional(k, x)
        vec = max(vec, float(np.max(np.abs(dec.eigenvectors[:, k] - ref))))
    return DeformedHamiltonian(mat, float(bnd), dec.eigenvalues, E, spec, vec, int(n_check))


def _reliable_count(fam, tol=1e-5):
    """Levels of a truncated lattice whose exact eigenvector is negligible at the cut.

    The eigenvalue error of such a level is of order tol^2.
    """
    x = fam.lattice().astype(float)
    psi = np.sqrt(fam.psi_sq(x))
    count = 0
    for k in range(min(len(x), 40)):
        v = np.sqrt(fam.norm(k) / float(fam.xi(1))) * psi * fam.exceptional(k, x)
        if np.max(np.abs(v[-3:])) > tol:
            break
        count += 1
    return max(count, 1)


# orthogonality

def exceptional_orthogonality(fam, n_top=None, tol=1e-10):
    """||G - I||_max with G built from the closed-form norms.

    rdQM sums over 0..x_max^l; oQM integrates psi_l^2 by quadrature; idQM is
    implemented for XMP only (best effort).
    """
    if fam.category == "rdQM":
        # infinite lattices are summed well past the truncation point
        x = fam.lattice().astype(float) if fam.finite else np.arange(3 * fam.x_max + 1, dtype=float)
        if n_top is None:
            n_top = fam.n_max if fam.finite else 3
        w = fam.psi_sq(x) / float(fam.xi(1))
        P = np.array([fam.exceptional(n, x) for n in range(n_top + 1)])
        d = np.sqrt([fam.norm(n) for n in range(n_top + 1)])
        G = (P * w) @ P.T * np.outer(d, d)
        return float(np.max(np.abs(G - np.eye(n_top + 1))))
    if fam.category == "idQM" and fam.kind != "XMP":
        raise ParameterError("quadrature orthogonality is implemented for XMP only")
    n_top = 4 if n_top is None else n_top
    require_positive(fam)
    h = np.array([float(np.real(fam.norm(n))) for n in range(n_top + 1)])
    funcs = [lambda x, n=n: np.real(fam.exceptional(n, x)) for n in range(n_top + 1)]
    G = gram_matrix(fam.psi_sq, funcs, domain_for(fam.base), tol, norms=h)
    Dm = np.sqrt(np.outer(np.abs(h), np.abs(h)))
    return float(np.max(np.abs(G / Dm - np.eye(n_top + 1))))


# intertwiners

def hat_BD(fam, x):
    """B-hat_l(x), D-hat_l(x) (rdQM)."""
    x = np.asarray(x, dtype=float)
    lm1 = fam.lam_lm1
    if fam.kind == "XM":
        arg = -(x + lm1.beta)
        Bp, Dp = -lm1.D(arg), -lm1.B(arg)
    else:
        tw = fam.tmap.twist(lm1)
        Bp, Dp = tw.B(x), tw.D(x)
    return fam.xi(x + 1) / fam.xi(x) * Bp, fam.xi(x - 1) / fam.xi(x) * Dp


def hat_A_matrix(fam, size=None):
    """Upper-bidiagonal A-hat on 0..size-1: (A f)(x) = sqrt(B^)(x) f(x) - sqrt(D^)(x+1) f(x+1)."""
    size = fam.x_max + 1 if size is None else size
    x = np.arange(size, dtype=float)
    Bh, _ = hat_BD(fam, x)
    _, Dh = hat_BD(fam, x + 1)
    if np.any(Bh < -1e-14 * np.max(np.abs(Bh))) or np.any(Dh < -1e-14 * max(np.max(np.abs(Dh)), 1e-300)):
        raise DeformationSingularityError("B-hat or D-hat negative on the lattice")
    return np.diag(np.sqrt(np.maximum(Bh, 0.0))) - np.diag(np.sqrt(np.maximum(Dh[:-1], 0.0)), 1)


def _shift_op_hat_F(fam):
    """F-hat_l from its definition psi_l^-1 A-hat phi0(lambda+l delta+delta~) (rdQM)."""
    pref = np.sqrt(float(fam.xi(1)) * fam.s_ell / fam.kappa_hat)

    def op(f):
        def g(x):
            x = np.asarray(x, dtype=float)
            Bh, _ = hat_BD(fam, x)
            _, Dh1 = hat_BD(fam, x + 1)
            phi = np.sqrt(fam.lam_lt.weight_product(np.concatenate([x, x + 1]).astype(int)))
            p0, p1 = phi[:len(x)], phi[len(x):]
            Ag = np.sqrt(Bh) * p0 * f(x) - np.sqrt(np.maximum(Dh1, 0.0)) * p1 * f(x + 1)
            return pref * Ag / np.sqrt(fam.psi_sq(x))
        return g
    return op


def _shift_op_hat_B(fam):
    """B-hat_l from its definition phi0^-1 A-hat^dagger psi_l (rdQM)."""
    pref = 1.0 / np.sqrt(float(fam.xi(1)) * fam.s_ell * fam.kappa_hat)

    def op(f):
        def g(x):
            x = np.asarray(x, dtype=float)
            Bh, Dh = hat_BD(fam, x)
            xm = np.maximum(x - 1, 0)
            psi = np.sqrt(fam.psi_sq(x))
            psim = np.sqrt(fam.psi_sq(xm))
            tail = np.where(x >= 1, np.sqrt(np.maximum(Dh, 0.0)) * psim * f(xm), 0.0)
            Ag = np.sqrt(Bh) * psi * f(x) - tail
            return pref * Ag / np.sqrt(fam.lam_lt.weight_product(x.astype(int)))
        return g
    return op


def hat_F(fam):
    """F-hat_l in explicit (v-factor / xi) form as an operator on callables."""
    if fam.category == "rdQM":
        v1B, _, v1D, _ = fam.vB(fam.lam_l)

        def op(f):
            return lambda x: (v1B(x) * fam.xi(x) * f(x + 1) - v1D(x) * fam.xi(x + 1) * f(x)) \
                / fam.lam_lt.varphi(x)
        return op
    if fam.category == "idQM":
        h = 0.5j * fam.base.gamma
        v1 = fam.v1(fam.lam_l)
        v1s = _conj_fn(v1)

        def op(f):
            return lambda x: -1j / fam.base.varphi(x) * (
                v1(x) * fam.xi(x + h) * f(x - h) - v1s(x) * fam.xi(x - h) * f(x + h))
        return op
    sign = _OQM_SIGN[fam.kind]
    return lambda p: 2 * sign * (fam.d2_poly() * fam.xi_poly() * p.deriv() - fam.d1() * fam.xi_poly(True) * p)


def hat_B(fam):
    """B-hat_l in explicit form as an operator on callables (oQM: on eta-polynomials, rational result)."""
    if fam.category == "rdQM":
        _, v2B, _, v2D = fam.vB(fam.lam_lm1)
        phi_fam = fam.base.shift((fam.ell - 1) * np.asarray(fam.base.delta, dtype=float)
                                 + np.asarray(fam.tmap.delta_tilde))

        def op(f):
            def g(x):
                x = np.asarray(x, dtype=float)
                xm = np.maximum(x - 1, 0)
                tail = np.where(x >= 1, v2D(x) * f(xm), 0.0)
                return (v2B(x) * f(x) - tail) / (fam.xi(x) * phi_fam.varphi(x))
            return g
        return op
    if fam.category == "idQM":
        h = 0.5j * fam.base.gamma
        v2 = fam.v2(fam.lam_lm1)
        v2s = _conj_fn(v2)

        def op(f):
            return lambda x: -1j / (fam.xi(x) * fam.base.varphi(x)) * (
                v2(x) * f(x - h) - v2s(x) * f(x + h))
        return op
    sign = _OQM_SIGN[fam.kind]
    c2d2 = fam.c2_over_d2()

    def op(p):
        def g(eta):
            return -2 * sign / fam.xi_poly()(eta) * (c2d2(eta) * p.deriv()(eta) + fam.d3() * p(eta))
        return g
    return op


def deformed_htilde(fam):
    """H~_l as an operator on callables (rdQM, idQM)."""
    if fam.category == "rdQM":
        def op(f):
            def g(x):
                x = np.asarray(x, dtype=float)
                fx = f(x)
                xm = np.maximum(x - 1, 0)
                lam = fam.lam_l
                up = lam.B(x) * fam.xi(x) / fam.xi(x + 1) * (fam.xi(x + 1, True) / fam.xi(x, True) * fx - f(x + 1))
                dn = np.where(x >= 1, lam.D(x) * fam.xi(x + 1) / fam.xi(x)
                              * (fam.xi(x - 1, True) / fam.xi(x, True) * fx - f(xm)), 0.0)
                return up + dn
            return g
        return op
    fam._require("idQM")
    h = 0.5j * fam.base.gamma
    g_ = 1j * fam.base.gamma
    lam = fam.lam_l

    def op(f):
        def g(x):
            xi0u = fam.xi(x, True)
            t1 = lam.V(x) * fam.xi(x + h) / fam.xi(x - h) * (f(x - g_) - fam.xi(x - g_, True) / xi0u * f(x))
            t2 = lam.Vstar(x) * fam.xi(x - h) / fam.xi(x + h) * (f(x + g_) - fam.xi(x + g_, True) / xi0u * f(x))
            return t1 + t2
        return g
    return op


def deformed_shifts(fam):
    """(F_l, B_l) forward/backward shift operators of the deformed system (rdQM, idQM)."""
    lam = fam.lam_l
    if fam.category == "rdQM":
        B0 = float(lam.B(0))

        def F(f):
            return lambda x: B0 / (lam.varphi(x) * fam.xi(np.asarray(x) + 1)) * (
                fam.xi(np.asarray(x) + 1, True) * f(x) - fam.xi(x, True) * f(np.asarray(x) + 1))

        def Bop(f):
            def g(x):
                x = np.asarray(x, dtype=float)
                xm = np.maximum(x - 1, 0)
                head = lam.B(x) * fam.xi(x) * lam.varphi(x) * f(x)
                tail = np.where(x >= 1, lam.D(x) * fam.xi(x + 1) * lam.varphi(xm) * f(xm), 0.0)
                return (head - tail) / (B0 * fam.xi(x, True))
            return g
        return F, Bop
    fam._require("idQM")
    h = 0.5j * fam.base.gamma

    def F(f):
        return lambda x: 1j / (fam.base.varphi(x) * fam.xi(x)) * (
            fam.xi(x + h, True) * f(x - h) - fam.xi(x - h, True) * f(x + h))

    def Bop(f):
        def g(x):
            return -1j / fam.xi(x, True) * (
                lam.V(x) * fam.xi(x + h) * fam.base.varphi(x - h) * f(x - h)
                - lam.Vstar(x) * fam.xi(x - h) * fam.base.varphi(x + h) * f(x + h))
        return g
    return F, Bop


@dataclass(frozen=True)
class IntertwinerReport:
    h_plus: float  # A^dagger A-hat vs kappa-hat (H(lambda+l delta+delta~) + f0 b0)
    h_minus: float  # A A-hat^dagger vs kappa-hat (H_l + f0 b0)
    forward: float  # F-hat P_n = f-hat_{l,n} P_{l,n}
    backward: float  # B-hat P_{l,n} = b-hat_{l,n} P_n
    energy: float  # E(n; lambda + l delta) = f-hat b-hat - f-hat_0 b-hat_0
    shift_forward: float  # s-hat intertwining of F-hat with F, F_l
    shift_backward: float  # s-hat intertwining of F-hat with B, B_l

    def max(self):
        return max(self.h_plus, self.h_minus, self.forward, self.backward, self.energy,
                   self.shift_forward, self.shift_backward)


def _energy_residual(fam, n_top):
    n = np.arange(n_top + 1)
    E = np.asarray(fam.energy(n), dtype=float)
    fb = np.array([fam.f_hat(k) * fam.b_hat(k) for k in n]) - fam.f_hat(0) * fam.b_hat(0)
    return float(np.max(np.abs(np.real(fb) - E)) / max(np.max(np.abs(E)), 1.0))


def intertwiner_check(fam, n_top=None, x=None):
    """Residuals of the intertwining relations between the original and deformed systems."""
    if fam.category == "rdQM":
        return _intertwiner_rdqm(fam, n_top)
    if fam.category == "oQM":
        return _intertwiner_oqm(fam, n_top or 4, x)
    return _intertwiner_idqm(fam, n_top or 4, x)


def _intertwiner_rdqm(fam, n_top):
    size = fam.x_max + 1
    s = slice(0, size) if fam.finite else slice(0, size - 2)
    x = np.arange(size, dtype=float)
    A = hat_A_matrix(fam, size)
    c = fam.f_hat(0) * fam.b_hat(0)
    kh = fam.kappa_hat
    lt = fam.lam_lt
    Bt, Dt = np.asarray(lt.B(x), dtype=float), np.asarray(lt.D(x), dtype=float)
    Dt[0] = 0.0
    if lt.N is not None and lt.N == size - 1:
        Bt[-1] = 0.0
    H_orig = _jacobi(Bt, Dt).dense()
    Bl, Dl = fam.B_ell(x), fam.D_ell(x)
    Dl[0] = 0.0
    if fam.finite:
        Bl[-1] = 0.0
    H_def = _jacobi(Bl, Dl).dense()
    I = np.eye(size)
    M1 = A.T @ A - kh * (H_orig + c * I)
    M2 = A @ A.T - kh * (H_def + c * I)
    scale = kh * max(np.max(np.abs(H_orig)), abs(c))
    h_plus = float(np.max(np.abs(M1[s, s])) / scale)
    h_minus = float(np.max(np.abs(M2[s, s])) / scale)

    if n_top is None:
        n_top = fam.n_max if fam.finite else 3
    xs = x[s]
    Fdef, Bdef = _shift_op_hat_F(fam), _shift_op_hat_B(fam)
    Fexp, Bexp = hat_F(fam), hat_B(fam)
    fwd = bwd = 0.0
    for n in range(n_top + 1):
        Pn = lambda y, n=n: lt.poly(n, y)
        Pln = lambda y, n=n: fam.exceptional(n, y)
        ref_f = fam.f_hat(n) * Pln(xs)
        ref_b = fam.b_hat(n) * Pn(xs)
        sf = max(np.max(np.abs(ref_f)), 1e-300)
        sb = max(np.max(np.abs(ref_b)), 1e-300)
        fwd = max(fwd, np.max(np.abs(Fdef(Pn)(xs) - ref_f)) / sf, np.max(np.abs(Fexp(Pn)(xs) - ref_f)) / sf)
        bwd = max(bwd, np.max(np.abs(Bdef(Pln)(xs) - ref_b)) / sb, np.max(np.abs(Bexp(Pln)(xs) - ref_b)) / sb)
    sf, sb = _shift_intertwining(fam, n_top, xs)
    return IntertwinerReport(h_plus, h_minus, float(fwd), float(bwd), _energy_residual(fam, n_top), sf, sb)


def _base_shifts(fam):
    lt = fam.lam_lt
    return forward_shift(lt), backward_shift(lt)


def _shift_intertwining(fam, n_top, xs):
    """s(l+d) F^(l+d) F(lt) = s(l) F_l F^(l) on P_n and s(l) F^(l) B(lt) = s(l+d) B_l F^(l+d) on P_{n-1}."""
    up = fam.up
    F_lt, B_lt = _base_shifts(fam)
    Fl, Bl = deformed_shifts(fam)
    Fh, Fh_up = hat_F(fam), hat_F(up)
    lt, lt_up = fam.lam_lt, up.lam_lt
    r1 = r2 = 0.0
    for n in range(1, n_top + 1):
        Pn = lambda y, n=n: lt.poly(n, y)
        lhs = up.s_hat * Fh_up(F_lt(Pn))(xs)
        rhs = fam.s_hat * Fl(Fh(Pn))(xs)
        r1 = max(r1, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
        Pm = lambda y, n=n: lt_up.poly(n - 1, y)
        lhs = fam.s_hat * Fh(B_lt(Pm))(xs)
        rhs = up.s_hat * Bl(Fh_up(Pm))(xs)
        r2 = max(r2, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
    return r1, r2


def _intertwiner_oqm(fam, n_top, x):
    x = default_points(fam) if x is None else np.asarray(x, dtype=float)
    base = fam.base
    lt, ll = fam.lam_lt, fam.lam_l
    e = base.eta(x)
    e1, _ = _eta_derivs(base, x)
    # prepotential of A-hat
    xi = fam.xi_poly()
    dlog1, dlog2 = _dlog(xi, base, x)
    if fam.kind == "XL1":
        g1 = fam.lam_lm1.g
        dw_hat = dlog1 + x + g1 / x
        d2w_hat = dlog2 + 1 - g1 / x ** 2
    else:
        tw = fam.tmap.twist(fam.lam_lm1)
        dw_hat = dlog1 + tw.dw(x)
        d2w_hat = dlog2 + tw.d2w(x)
    c = fam.f_hat(0) * fam.b_hat(0)
    U_plus = dw_hat ** 2 + d2w_hat
    ref_plus = lt.dw(x) ** 2 + lt.d2w(x) + c
    h_plus = _rel(U_plus - ref_plus, ref_plus)
    dwl, d2wl = fam.dw_ell(x)
    U_minus = dw_hat ** 2 - d2w_hat
    ref_minus = dwl ** 2 + d2wl + c
    h_minus = _rel(U_minus - ref_minus, ref_minus)
    # F-hat and B-hat: definition route through the prepotentials and explicit route
    ratio = np.exp(lt.w(x) - ll.w(x)) * xi(e)
    Fexp, Bexp = hat_F(fam), hat_B(fam)
    fwd = bwd = 0.0
    for n in range(n_top + 1):
        Pn = eta_polynomial(lt, n)
        Pln = fam.exceptional_poly(n)
        ref_f = fam.f_hat(n) * Pln(e)
        sf = max(np.max(np.abs(ref_f)), 1e-300)
        via_def = ratio * ((lt.dw(x) - dw_hat) * Pn(e) + Pn.deriv()(e) * e1)
        fwd = max(fwd, np.max(np.abs(via_def - ref_f)) / sf, np.max(np.abs(Fexp(Pn)(e) - ref_f)) / sf)
        ref_b = fam.b_hat(n) * Pn(e)
        sb = max(np.max(np.abs(ref_b)), 1e-300)
        dlog_psi = ll.dw(x) - dlog1
        via_def_b = (-(dlog_psi * Pln(e) + Pln.deriv()(e) * e1) - dw_hat * Pln(e)) / ratio
        bwd = max(bwd, np.max(np.abs(via_def_b - ref_b)) / sb, np.max(np.abs(Bexp(Pln)(e) - ref_b)) / sb)
    sf_, sb_ = _shift_intertwining_oqm(fam, n_top, e)
    return IntertwinerReport(h_plus, h_minus, float(fwd), float(bwd), _energy_residual(fam, n_top), sf_, sb_)


def _oqm_deformed_shifts(fam):
    """F_l, B_l of the deformed oQM system acting on eta-polynomials (rational results as callables)."""
    xi, xiu = fam.xi_poly(), fam.xi_poly(True)
    cF = fam.base.c_F
    c1 = Polynomial(fam.lam_l.c1_poly())
    c2 = Polynomial(fam.base.c2_poly())

    def F(p):
        return lambda e: cF * xiu(e) / xi(e) * (p.deriv()(e) - xiu.deriv()(e) / xiu(e) * p(e))

    def Bop(p):
        return lambda e: -4 / cF * xi(e) / xiu(e) * (
            c2(e) * p.deriv()(e) + c1(e) * p(e) - c2(e) * xi.deriv()(e) / xi(e) * p(e))
    return F, Bop


def _shift_intertwining_oqm(fam, n_top, e):
    """F-hat/F/F_l intertwining with polynomial P_n and the exact rational F_l action.

    F_l and B_l map polynomials to rational functions of eta, so both sides are
    formed by multiplying through with the xi denominators before comparing.
    """
    up = fam.up
    lt, lt_up = fam.lam_lt, up.lam_lt
    Fh, Fh_up = hat_F(fam), hat_F(up)
    Fl, Bl = _oqm_deformed_shifts(fam)
    r1 = r2 = 0.0
    for n in range(1, n_top + 1):
        Pn = eta_polynomial(lt, n)
        lhs = Fh_up(lt.c_F * Pn.deriv())(e)
        rhs = Fl(Fh(Pn))(e)
        r1 = max(r1, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
        Pm = eta_polynomial(lt_up, n - 1)
        Bpm = -4.0 / lt.c_F * (Polynomial(lt.c2_poly()) * Pm.deriv() + Polynomial(lt.c1_poly()) * Pm)
        lhs = Fh(Bpm)(e)
        rhs = Bl(Fh_up(Pm))(e)
        r2 = max(r2, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
    return r1, r2


def _intertwiner_idqm(fam, n_top, x):
    x = default_points(fam) if x is None else np.asarray(x)
    lt = fam.lam_lt
    Fh, Bh = hat_F(fam), hat_B(fam)
    Ht_def = deformed_htilde(fam)
    c = fam.f_hat(0) * fam.b_hat(0)
    hp = hm = fwd = bwd = 0.0
    for n in range(n_top + 1):
        Pn = lambda y, n=n: lt.poly(n, y)
        Pln = lambda y, n=n: fam.exceptional(n, y)
        ref_f = fam.f_hat(n) * Pln(x)
        ref_b = fam.b_hat(n) * Pn(x)
        sf = max(np.max(np.abs(ref_f)), 1e-300)
        sb = max(np.max(np.abs(ref_b)), 1e-300)
        fwd = max(fwd, np.max(np.abs(Fh(Pn)(x) - ref_f)) / sf)
        bwd = max(bwd, np.max(np.abs(Bh(Pln)(x) - ref_b)) / sb)
        # B-hat F-hat = H~(lt) + c on P_n, F-hat B-hat = H~_l + c on P_{l,n}
        lhs = Bh(Fh(Pn))(x)
        rhs = apply_htilde(lt, Pn)(x) + c * Pn(x)
        hp = max(hp, np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))
        lhs = Fh(Bh(Pln))(x)
        rhs = Ht_def(Pln)(x) + c * Pln(x)
        hm = max(hm, np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))
    sf_, sb_ = _shift_intertwining(fam, n_top, x)
    return IntertwinerReport(float(hp), float(hm), float(fwd), float(bwd), _energy_residual(fam, n_top), sf_, sb_)


def deformed_difference_residual(fam, n_top=4, x=None):
    """max_n |H~_l P_{l,n} - E(n; lambda + l delta) P_{l,n}| relative.

    oQM uses the second-order equation of g = P_{l,n}/xi(lambda + delta) in x,
    -g'' - 2 w_l' g' = E g, which follows from H_l = A_l^dagger A_l.
    """
    x = default_points(fam) if x is None else np.asarray(x)
    if fam.category == "oQM":
        return _deformed_equation_oqm(fam, n_top, x)
    if fam.category == "rdQM" and not fam.finite:
        x = x[:-2]
    Ht = deformed_htilde(fam)
    worst = 0.0
    for n in range(n_top + 1):
        P = lambda y, n=n: fam.exceptional(n, y)
        lhs = Ht(P)(x)
        rhs = fam.energy(n) * P(x)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(P(x))) * max(abs(float(fam.energy(max(n, 1)))), 1.0), 1e-300)))
    return worst


def _deformed_equation_oqm(fam, n_top, x):
    e = fam.base.eta(x)
    e1, e2 = _eta_derivs(fam.base, x)
    dwl, _ = fam.dw_ell(x)
    xiu = fam.xi_poly(True)
    a1, a2 = _dlog(xiu, fam.base, x)
    inv = 1.0 / xiu(e)
    # derivatives of 1/xi(lambda+delta) in x from those of its log
    i1 = -a1 * inv
    i2 = (a1 ** 2 - a2) * inv
    worst = 0.0
    for n in range(n_top + 1):
        P = fam.exceptional_poly(n)
        p0, p1 = P(e), P.deriv()(e) * e1
        p2 = P.deriv(2)(e) * e1 ** 2 + P.deriv()(e) * e2
        g0 = p0 * inv
        g1 = p1 * inv + p0 * i1
        g2 = p2 * inv + 2 * p1 * i1 + p0 * i2
        lhs = -g2 - 2 * dwl * g1
        rhs = float(fam.energy(n)) * g0
        gap = abs(float(fam.energy(max(n, 1))))
        scale = max(np.max(np.abs(g2)), gap * np.max(np.abs(g0)), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / scale))
    return worst


# shape invariance of the deformed system

def deformed_shape_invariance(fam):
    """Residuals of the two shape-invariance conditions with (w,V,B,D) -> (w_l,V_l,B_l,D_l)."""
    up = fam.up
    k = fam.base.kappa
    E1 = float(fam.energy(1))
    if fam.category == "rdQM":
        x = np.arange(fam.x_max, dtype=float)
        lhs1 = fam.B_ell(x + 1) * fam.D_ell(x + 1)
        rhs1 = k ** 2 * up.B_ell(x) * up.D_ell(x + 1)
        lhs2 = fam.B_ell(x) + fam.D_ell(x + 1)
        rhs2 = k * (up.B_ell(x) + up.D_ell(x)) + E1
        return _rel(lhs1 - rhs1, lhs1), _rel(lhs2 - rhs2, lhs2)
    if fam.category == "oQM":
        x = default_points(fam)
        dw, d2w = fam.dw_ell(x)
        dwu, d2wu = up.dw_ell(x)
        lhs = dw ** 2 - d2w
        rhs = dwu ** 2 + d2wu + E1
        return _rel(lhs - rhs, np.abs(lhs) + np.abs(rhs)), 0.0
    x = default_points(fam)
    h = 0.5j * fam.base.gamma
    Vm, Vsm = fam.V_ell(x - h)
    Vp, _ = fam.V_ell(x + h)
    _, Vsmh = fam.V_ell(x - h)
    Vu, Vsu = up.V_ell(x)
    _, Vsu_g = up.V_ell(x - 2 * h)
    lhs1 = Vm * Vsm
    rhs1 = k ** 2 * Vu * Vsu_g
    lhs2 = Vp + Vsmh
    rhs2 = k * (Vu + Vsu) - E1
    return _rel(lhs1 - rhs1, lhs1), _rel(lhs2 - rhs2, np.abs(lhs2) + np.abs(rhs2))


# XJ mirror symmetry

def mirror_check_xj(g, h, ell, n, points=None):
    """max |P^{XJ2}_{l,n}(eta; g, h) - (-1)^{l+n} P^{XJ1}_{l,n}(-eta; h, g)| on a grid in (-1, 1)."""
    from .families import make_family
    j2 = DeformedFamily(make_family("J", {"g": g, "h": h}), "XJ2", ell, validate=False)
    j1 = DeformedFamily(make_family("J", {"g": h, "h": g}), "XJ1", ell, validate=False)
    e = np.linspace(-0.99, 0.99, 41) if points is None else np.asarray(points)
    lhs = j2.exceptional_poly(n)(e)
    rhs = (-1) ** (ell + n) * j1.exceptional_poly(n)(-e)
    return float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(lhs)), 1e-300))


# zeros, degree and the missing three-term recurrence

def _coordinate_range(fam):
    """(x_lo, x_hi) on which eta is monotone and real, for fitting in eta."""
    if fam.category == "rdQM":
        return 0.0, float(fam.x_max)
    return {"L": (0.0, 3.0), "J": (0.0, np.pi / 2), "MP": (-3.0, 3.0),
            "W": (0.0, 3.0), "AW": (0.0, np.pi)}[fam.base.id]


def _eta_of(fam):
    lam = fam.lam_l if fam.category == "rdQM" else fam.base
    return lambda x: float(np.real(lam.eta(x)))


def fit_in_eta(fam, values_of, degree):
    """Chebyshev coefficients in eta of a function sampled at Chebyshev nodes in eta.

    Returns (chebyshev series on the sampled eta range, max fit residual relative).
    """
    lo, hi = _coordinate_range(fam)
    eta = _eta_of(fam)
    elo, ehi = sorted((eta(lo), eta(hi)))
    count = degree + 6
    t = np.cos(np.pi * (np.arange(count) + 0.5) / count)
    targets = 0.5 * (elo + ehi) + 0.5 * (ehi - elo) * t
    x = np.array([brentq(lambda s, y=y: eta(s) - y, lo, hi, xtol=1e-15, rtol=1e-15) for y in targets])
    y = np.real(np.asarray(values_of(x)))
    u = (2 * targets - (elo + ehi)) / (ehi - elo)
    coef, *_ = np.linalg.lstsq(cheb.chebvander(u, degree + 2), y, rcond=None)
    series = cheb.Chebyshev(coef, domain=[elo, ehi])
    resid = float(np.max(np.abs(series(targets) - y)) / max(np.max(np.abs(y)), 1e-300))
    return series, resid


def exceptional_degree(fam, n, tol=1e-8):
    """Degree of P_{l,n} in eta (exact for oQM, by Chebyshev fit otherwise)."""
    if fam.category == "oQM":
        c = fam.exceptional_poly(n).coef
        nz = np.flatnonzero(np.abs(c) > tol * np.max(np.abs(c)))
        return int(nz[-1])
    series, _ = fit_in_eta(fam, lambda x: fam.exceptional(n, x), fam.ell + n)
    c = series.coef
    nz = np.flatnonzero(np.abs(c) > tol * np.max(np.abs(c)))
    return int(nz[-1])


def zero_count(fam, n):
    """Zeros of P_{l,n} in the physical region.

    rdQM: sign changes of P-check_{l,n} over 0..x_max^l. oQM: real roots in the
    eta-domain. idQM: real roots of the fitted eta-polynomial in the eta-domain.
    """
    if fam.category == "rdQM":
        v = fam.exceptional(n, fam.lattice().astype(float))
        s = np.sign(v[np.abs(v) > 1e-14 * np.max(np.abs(v))])
        return int(np.count_nonzero(s[1:] != s[:-1]))
    if fam.category == "oQM":
        poly = fam.exceptional_poly(n)
        lo, hi = (0.0, np.inf) if fam.base.id == "L" else (-1.0, 1.0)
    else:
        series, _ = fit_in_eta(fam, lambda x: fam.exceptional(n, x), fam.ell + n)
        poly = series.convert(kind=Polynomial)
        poly = Polynomial(poly.coef[:fam.ell + n + 1])
        lo, hi = {"MP": (-np.inf, np.inf), "W": (0.0, np.inf), "AW": (0.0, 2.0)}[fam.base.id]
    roots = poly.roots()
    real = [r.real for r in roots if abs(r.imag) <= 1e-7 * max(1.0, abs(r))]
    return sum(1 for r in real if lo < r < hi)


def zeros(fam, n):
    """Locations of the zeros counted by zero_count (eta values; rdQM: interpolated x)."""
    if fam.category == "rdQM":
        x = fam.lattice().astype(float)
        v = fam.exceptional(n, x)
        idx = np.flatnonzero(np.sign(v[1:]) != np.sign(v[:-1]))
        out = []
        for i in idx:
            out.append(brentq(lambda s: float(fam.exceptional(n, np.array([s]))[0]), x[i], x[i + 1]))
        return np.array(out)
    if fam.category == "oQM":
        poly = fam.exceptional_poly(n)
        lo, hi = (0.0, np.inf) if fam.base.id == "L" else (-1.0, 1.0)
        r = poly.roots()
        return np.sort(np.array([z.real for z in r if abs(z.imag) <= 1e-7 * max(1.0, abs(z)) and lo < z.real < hi]))
    raise ParameterError("zero locations are tabulated for oQM and rdQM")


def recurrence_witness(fam, x=None):
    """Relative least-squares residual of eta P_{l,1} against span{P_{l,0}, P_{l,1}, P_{l,2}}."""
    if x is None:
        if fam.category == "rdQM":
            x = fam.lattice().astype(float)
        else:
            lo, hi = _coordinate_range(fam)
            x = np.linspace(lo + 0.05, hi - 0.05, 40)
    lam = fam.lam_l if fam.category == "rdQM" else fam.base
    e = np.real(np.asarray(lam.eta(x), dtype=complex))
    # rows carry the orthogonality weight so the region where all P_{l,n} are
    # dominated by their leading terms does not swamp the fit
    rw = np.sqrt(np.abs(fam.psi_sq(x)))
    cols = [rw * np.real(np.asarray(fam.exceptional(k, x), dtype=complex)) for k in range(3)]
    cols = [c / np.max(np.abs(c)) for c in cols]
    target = e * cols[1]
    M = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(M, target, rcond=None)
    return float(np.linalg.norm(M @ coef - target) / np.linalg.norm(target))


def exceptional_table(fam, n_top, x=None):
    """CSV with x, eta, P_{l,0}..P_{l,n_top} (17 significant digits)."""
    if x is None:
        if fam.category != "rdQM":
            raise DomainError("sample points are required for oQM/idQM tables")
        x = fam.lattice().astype(float)
    x = np.asarray(x, dtype=float)
    lam = fam.lam_l if fam.category == "rdQM" else fam.base
    eta = np.real(np.asarray(lam.eta(x), dtype=complex))
    cols = [np.real(np.asarray(fam.exceptional(n, x), dtype=complex)) for n in range(n_top + 1)]
    out = io.StringIO()
    out.write(",".join(["x", "eta"] + [f"P_{fam.ell}_{n}" for n in range(n_top + 1)]) + "\n")
    for i in range(x.size):
        out.write(",".join(format(float(v), ".17g") for v in [x[i], eta[i]] + [c[i] for c in cols]) + "\n")
    return out.getvalue()
