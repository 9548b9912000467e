"""The nine shape-invariant families and their closed-form data.

Each family is an immutable descriptor. ``make_family`` validates the
parameter ranges; shifted or twisted descriptors built internally skip
validation because they legitimately leave the physical range.
"""
from dataclasses import dataclass
from math import factorial, inf
from types import MappingProxyType

import mpmath
import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DegeneracyError, DomainError, ParameterError
from .special import (CANCELLATION_LIMIT, HypergeomSpec, hypergeometric, log_gamma,
                      pochhammer, q_pochhammer)

CATEGORY = {
    "H": "oQM", "L": "oQM", "J": "oQM",
    "MP": "idQM", "W": "idQM", "AW": "idQM",
    "M": "rdQM", "R": "rdQM", "qR": "rdQM",
}

TRUNCATION_RATIO = 1e-16


@dataclass(frozen=True)
class ShiftData:
    delta: tuple
    kappa: float
    # deformation kind -> parameter shift used by the exceptional families
    delta_tilde: MappingProxyType


@dataclass(frozen=True)
class ClosureData:
    """Coefficients of R_1(y), R_0(y), R_{-1}(y), highest power first."""
    r1_coeffs: tuple
    r0_coeffs: tuple
    rm1_coeffs: tuple

    def R1(self, y):
        return _horner(self.r1_coeffs, y)

    def R0(self, y):
        return _horner(self.r0_coeffs, y)

    def Rm1(self, y):
        return _horner(self.rm1_coeffs, y)

    def alpha(self, y):
        """(alpha_plus, alpha_minus) with alpha_plus >= 0 >= alpha_minus."""
        r1 = self.R1(y)
        disc = r1 * r1 + 4 * self.R0(y)
        root = np.sqrt(np.maximum(disc, 0.0))
        return (r1 + root) / 2, (r1 - root) / 2


def _horner(coeffs, y):
    result = 0.0 * np.asarray(y, dtype=float) if np.ndim(y) else 0.0
    for c in coeffs:
        result = result * y + c
    return result


def _closure_from_polys(r1, r0, rm1):
    """Build ClosureData from numpy.polynomial coefficient arrays (low first)."""
    def pad(c, n):
        c = list(np.real_if_close(np.asarray(c, dtype=complex)).astype(float))
        c = c + [0.0] * (n - len(c))
        return tuple(reversed(c[:n]))
    return ClosureData(pad(r1, 2), pad(r0, 3), pad(rm1, 3))


class FamilyDescriptor:
    """Common interface of a solvable family at fixed parameters.

    ``params`` holds the stored parameter values: the plain lambda values for
    non-q families and the q^lambda form for AW and qR.
    """
    id = None
    param_names = ()
    q_family = False
    delta = ()
    delta_tilde = {}

    def __init__(self, params, q=None, N=None):
        self.params = MappingProxyType(dict(params))
        self.q = q
        self.N = N
        self.category = CATEGORY[self.id]
        self.shift_data = ShiftData(tuple(self.delta), self._kappa(),
                                    MappingProxyType(dict(self.delta_tilde)))
        self.closure = self._closure()

    def __repr__(self):
        extra = "".join(f", {k}={v}" for k, v in (("q", self.q), ("N", self.N)) if v is not None)
        body = ", ".join(f"{k}={v:.12g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.params.items())
        return f"{self.id}({body}{extra})"

    def __getattr__(self, name):
        params = self.__dict__.get("params")
        if params is not None and name in params:
            return params[name]
        raise AttributeError(name)

    def describe(self):
        out = {"family": self.id, "params": {k: _jsonable(v) for k, v in self.params.items()}}
        if self.q is not None:
            out["q"] = self.q
        if self.N is not None:
            out["N"] = self.N
        return out

    # parameter shifts

    def _with(self, params):
        return type(self)(params, q=self.q, N=self._infer_N(params))

    def _infer_N(self, params):
        return None

    def shift(self, vec):
        """Descriptor at lambda + vec (vec in lambda space)."""
        vec = np.broadcast_to(np.asarray(vec, dtype=float), (len(self.param_names),))
        new = {}
        for name, v in zip(self.param_names, vec):
            p = self.params[name]
            new[name] = p * self.q ** v if self.q_family else p + v
        return self._with(new)

    def shifted(self, s=1):
        return self.shift(s * np.asarray(self.delta, dtype=float))

    def replace(self, **params):
        new = dict(self.params)
        new.update(params)
        return self._with(new)

    def _kappa(self):
        return 1.0

    @property
    def kappa(self):
        return self.shift_data.kappa

    # evaluators every family provides

    def eta(self, x):
        raise NotImplementedError

    def energy(self, n):
        raise NotImplementedError

    def poly(self, n, x):
        """P_n(eta(x)) from the (q-)hypergeometric definition.

        Points where the double-precision sum loses more than four digits to
        cancellation are redone in mpmath, with the series parameters rebuilt
        from the stored parameters at the working precision so that derived
        quantities (q^-n, d_tilde q^n, ...) stay mutually consistent.
        """
        _check_n(n)
        ctx = _Ctx(np, self.params, self.q, self.N)
        pref, spec = self._series(int(n), np.asarray(x), ctx)
        val, cond = hypergeometric(spec, max_cancellation=None, return_condition=True)
        out = np.asarray(pref * val)
        bad = np.argwhere(np.atleast_1d(cond) > CANCELLATION_LIMIT)
        if bad.size:
            out = np.array(np.atleast_1d(out), dtype=complex)
            xs = np.broadcast_to(np.atleast_1d(x), out.shape)
            conds = np.broadcast_to(np.atleast_1d(cond), out.shape)
            for idx in map(tuple, bad):
                digits = max(30, 20 + int(np.log10(min(conds[idx], 1e300))))
                with mpmath.workdps(digits):
                    mctx = _Ctx(mpmath, self.params, self.q, self.N, self._exact_params)
                    xi = mpmath.mpmathify(complex(xs[idx]) if np.iscomplexobj(xs) else float(xs[idx]))
                    pref_i, spec_i = self._series(int(n), xi, mctx)
                    out[idx] = complex(pref_i * hypergeometric(spec_i, dps=digits))
            out = out.reshape(np.shape(val))
        return _realify(out)

    def _series(self, n, x, ctx):
        """(prefactor, HypergeomSpec) of P_n at x using the parameters in ctx."""
        raise NotImplementedError

    def _exact_params(self, p, q, N):
        """Hook to rebuild parameters fixed by N at working precision."""
        return p

    def f_n(self, n):
        raise NotImplementedError

    def b_nm1(self, n):
        """b_{n-1}; the argument is n."""
        raise NotImplementedError

    def weight(self, x):
        raise NotImplementedError

    def norm(self, n):
        raise NotImplementedError

    def _closure(self):
        raise NotImplementedError

    def alpha(self, y):
        return self.closure.alpha(y)


class _Ctx:
    """Parameter set plus numeric backend (numpy or mpmath) for series evaluation."""

    def __init__(self, xp, params, q, N, exact=None):
        self.xp = xp
        if xp is mpmath:
            params = {k: mpmath.mpmathify(v) for k, v in params.items()}
            q = mpmath.mpf(q) if q is not None else None
            if exact is not None:
                params = exact(params, q, N)
        self.p = params
        self.q = q

    def __getattr__(self, name):
        p = self.__dict__.get("p")
        if p is not None and name in p:
            return p[name]
        raise AttributeError(name)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _realify(z):
    z = np.asarray(z)
    if np.iscomplexobj(z) and np.all(np.abs(z.imag) <= 1e-12 * np.maximum(1.0, np.abs(z.real))):
        z = z.real
    return z[()] if z.ndim == 0 else z


# oQM

class _OQM(FamilyDescriptor):
    domain = (-inf, inf)
    c_F = 1.0

    def c1(self, eta):
        raise NotImplementedError

    def c2(self, eta):
        raise NotImplementedError

    def w(self, x):
        raise NotImplementedError

    def dw(self, x):
        raise NotImplementedError

    def d2w(self, x):
        raise NotImplementedError

    def U(self, x):
        return self.dw(x) ** 2 + self.d2w(x)

    def weight(self, x):
        return np.exp(2 * self.w(x))

    def c1_poly(self):
        """c_1 as a coefficient array in eta, low order first."""
        raise NotImplementedError

    def c2_poly(self):
        raise NotImplementedError


class Hermite(_OQM):
    id = "H"
    param_names = ()
    delta = ()
    delta_tilde = {}
    c_F = 1.0

    def eta(self, x):
        return np.asarray(x)

    def energy(self, n):
        return 2.0 * np.asarray(n)

    def poly(self, n, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        # the series argument -1/x^2 overflows near 0; use the finite power sum there
        big = np.abs(x) >= 1
        if np.any(big):
            xs = x[big]
            series = hypergeometric(HypergeomSpec((-n / 2, -(n - 1) / 2), (), -1.0 / xs ** 2))
            out[big] = (2 * xs) ** n * series
        if np.any(~big):
            xs = x[~big]
            out[~big] = sum((-1) ** k * factorial(n) / (factorial(k) * factorial(n - 2 * k))
                            * (2 * xs) ** (n - 2 * k) for k in range(n // 2 + 1))
        return out[()] if out.ndim == 0 else out

    def f_n(self, n):
        return 2.0 * n

    def b_nm1(self, n):
        return 1.0

    def w(self, x):
        return -0.5 * np.asarray(x) ** 2

    def dw(self, x):
        return -np.asarray(x)

    def d2w(self, x):
        return -1.0 + 0 * np.asarray(x)

    def c1(self, eta):
        return -0.5 * np.asarray(eta)

    def c2(self, eta):
        return 0.25 + 0 * np.asarray(eta)

    def c1_poly(self):
        return np.array([0.0, -0.5])

    def c2_poly(self):
        return np.array([0.25])

    def norm(self, n):
        _check_n(n)
        return 2.0 ** n * factorial(n) * np.sqrt(np.pi)

    def _closure(self):
        return ClosureData((0.0, 0.0), (0.0, 0.0, 4.0), (0.0, 0.0, 0.0))


class Laguerre(_OQM):
    id = "L"
    param_names = ("g",)
    delta = (1.0,)
    delta_tilde = {"XL1": (-1.0,), "XL2": (1.0,)}
    domain = (0.0, inf)
    c_F = 2.0

    def eta(self, x):
        return np.asarray(x) ** 2

    def energy(self, n):
        return 4.0 * np.asarray(n)

    def _series(self, n, x, c):
        g = c.g
        return pochhammer(g + 0.5, n) / factorial(n), HypergeomSpec((-n,), (g + 0.5,), x * x)

    def f_n(self, n):
        return -2.0

    def b_nm1(self, n):
        return -2.0 * n

    def w(self, x):
        x = np.asarray(x)
        return -0.5 * x ** 2 + self.g * np.log(x)

    def dw(self, x):
        x = np.asarray(x)
        return -x + self.g / x

    def d2w(self, x):
        x = np.asarray(x)
        return -1.0 - self.g / x ** 2

    def c1(self, eta):
        return self.g + 0.5 - np.asarray(eta)

    def c2(self, eta):
        return np.asarray(eta)

    def c1_poly(self):
        return np.array([self.g + 0.5, -1.0])

    def c2_poly(self):
        return np.array([0.0, 1.0])

    def norm(self, n):
        _check_n(n)
        return np.exp(log_gamma(n + self.g + 0.5)) / (2 * factorial(n))

    def _closure(self):
        g = self.g
        return ClosureData((0.0, 0.0), (0.0, 0.0, 16.0), (0.0, -8.0, -8.0 * (2 * g + 1)))


class Jacobi(_OQM):
    id = "J"
    param_names = ("g", "h")
    delta = (1.0, 1.0)
    delta_tilde = {"XJ1": (-1.0, 1.0), "XJ2": (1.0, -1.0)}
    domain = (0.0, np.pi / 2)
    c_F = -4.0

    def eta(self, x):
        return np.cos(2 * np.asarray(x))

    def energy(self, n):
        n = np.asarray(n)
        return 4.0 * n * (n + self.g + self.h)

    def _series(self, n, x, c):
        g, h = c.g, c.h
        return pochhammer(g + 0.5, n) / factorial(n), HypergeomSpec(
            (-n, n + g + h), (g + 0.5,), c.xp.sin(x) ** 2)

    def poly_eta(self, n, eta):
        """P_n as a function of eta directly (eta = cos 2x)."""
        g, h = self.g, self.h
        return pochhammer(g + 0.5, n) / factorial(n) * hypergeometric(
            HypergeomSpec((-n, n + g + h), (g + 0.5,), (1 - np.asarray(eta)) / 2))

    def f_n(self, n):
        return -2.0 * (n + self.g + self.h)

    def b_nm1(self, n):
        return -2.0 * n

    def w(self, x):
        x = np.asarray(x)
        return self.g * np.log(np.sin(x)) + self.h * np.log(np.cos(x))

    def dw(self, x):
        x = np.asarray(x)
        return self.g / np.tan(x) - self.h * np.tan(x)

    def d2w(self, x):
        x = np.asarray(x)
        return -self.g / np.sin(x) ** 2 - self.h / np.cos(x) ** 2

    def c1(self, eta):
        return self.h - self.g - (self.g + self.h + 1) * np.asarray(eta)

    def c2(self, eta):
        return 1 - np.asarray(eta) ** 2

    def c1_poly(self):
        return np.array([self.h - self.g, -(self.g + self.h + 1)])

    def c2_poly(self):
        return np.array([1.0, 0.0, -1.0])

    def norm(self, n):
        _check_n(n)
        g, h = self.g, self.h
        lg = log_gamma(n + g + 0.5) + log_gamma(n + h + 0.5)
        if n == 0:
            return np.exp(lg - log_gamma(g + h + 1)) / 2
        return np.exp(lg - log_gamma(n + g + h)) / (2 * factorial(n) * (2 * n + g + h))

    def _closure(self):
        g, h = self.g, self.h
        return ClosureData((0.0, 8.0), (0.0, 16.0, 16.0 * ((g + h) ** 2 - 1)),
                           (0.0, 0.0, 16.0 * (g - h) * (g + h - 1)))


# idQM

class _IDQM(FamilyDescriptor):
    gamma = 1.0
    domain = (-inf, inf)

    def V(self, x):
        raise NotImplementedError

    def Vstar(self, x):
        raise NotImplementedError

    def varphi(self, x):
        raise NotImplementedError


class MeixnerPollaczek(_IDQM):
    id = "MP"
    param_names = ("a",)
    delta = (0.5,)
    delta_tilde = {"XMP": (0.5,)}

    def eta(self, x):
        return np.asarray(x)

    def energy(self, n):
        return 2.0 * np.asarray(n)

    def _series(self, n, x, c):
        a = c.a
        return pochhammer(2 * a, n) / factorial(n) * 1j ** n, HypergeomSpec(
            (-n, a + 1j * x), (2 * a,), 2.0)

    def f_n(self, n):
        return 2.0

    def b_nm1(self, n):
        return float(n)

    def V(self, x):
        return self.a + 1j * np.asarray(x)

    def Vstar(self, x):
        return np.conj(self.a) - 1j * np.asarray(x)

    def varphi(self, x):
        return 1.0 + 0 * np.asarray(x)

    def weight(self, x):
        x = np.asarray(x)
        return np.exp(log_gamma(self.a + 1j * x) + log_gamma(self.a - 1j * x)).real

    def norm(self, n):
        _check_n(n)
        a = self.a
        return 2 * np.pi * np.exp(log_gamma(n + 2 * a) - 2 * a * np.log(2)) / factorial(n)

    def _closure(self):
        return ClosureData((0.0, 0.0), (0.0, 0.0, 4.0), (0.0, 0.0, 0.0))


def _elementary(values):
    """Elementary symmetric polynomials e_1..e_4 of four numbers."""
    c = np.poly(np.asarray(values))
    return [(-1) ** k * c[k] for k in range(1, len(values) + 1)]


class Wilson(_IDQM):
    id = "W"
    param_names = ("a1", "a2", "a3", "a4")
    delta = (0.5, 0.5, 0.5, 0.5)
    delta_tilde = {"XW": (0.5, 0.5, -0.5, -0.5)}
    domain = (0.0, inf)

    @property
    def avec(self):
        return [self.params[k] for k in self.param_names]

    @property
    def b1(self):
        return sum(self.avec)

    def eta(self, x):
        return np.asarray(x) ** 2

    def energy(self, n):
        n = np.asarray(n)
        return n * (n + self.b1 - 1)

    def _series(self, n, x, c):
        a1, a2, a3, a4 = c.a1, c.a2, c.a3, c.a4
        b1 = a1 + a2 + a3 + a4
        pref = pochhammer(a1 + a2, n) * pochhammer(a1 + a3, n) * pochhammer(a1 + a4, n)
        return pref, HypergeomSpec(
            (-n, n + b1 - 1, a1 + 1j * x, a1 - 1j * x), (a1 + a2, a1 + a3, a1 + a4), 1.0)

    def f_n(self, n):
        return -n * (n + self.b1 - 1)

    def b_nm1(self, n):
        return -1.0

    def V(self, x):
        x = np.asarray(x)
        num = np.prod([a + 1j * x for a in self.avec], axis=0)
        return num / (2j * x * (2j * x + 1))

    def Vstar(self, x):
        x = np.asarray(x)
        num = np.prod([np.conj(a) - 1j * x for a in self.avec], axis=0)
        return num / (-2j * x * (-2j * x + 1))

    def varphi(self, x):
        return 2 * np.asarray(x)

    def weight(self, x):
        x = np.asarray(x, dtype=float)
        lg = sum(log_gamma(a + 1j * x) + log_gamma(a - 1j * x) for a in self.avec)
        lg = lg - log_gamma(2j * x) - log_gamma(-2j * x)
        return np.exp(lg).real

    def norm(self, n):
        _check_n(n)
        a = self.avec
        lg = sum(log_gamma(n + a[i] + a[j]) for i in range(4) for j in range(i + 1, 4))
        lg = lg - log_gamma(2 * n + self.b1)
        return _realify(2 * np.pi * factorial(n) * pochhammer(n + self.b1 - 1, n) * np.exp(lg))

    def _closure(self):
        e1, e2, e3, _ = _elementary(self.avec)
        b1, b2, b3 = (np.real_if_close(v) for v in (e1, e2, e3))
        return ClosureData((0.0, 2.0), (0.0, 4.0, float(b1 * (b1 - 2))),
                           (-2.0, float(b1 - 2 * b2), float((2 - b1) * b3)))


class AskeyWilson(_IDQM):
    id = "AW"
    param_names = ("a1", "a2", "a3", "a4")
    q_family = True
    delta = (0.5, 0.5, 0.5, 0.5)
    delta_tilde = {"XAW": (0.5, 0.5, -0.5, -0.5)}
    domain = (0.0, np.pi)

    @property
    def gamma(self):
        return np.log(self.q)

    @property
    def avec(self):
        return [self.params[k] for k in self.param_names]

    @property
    def b4(self):
        return np.prod(self.avec)

    def _kappa(self):
        return 1.0 / self.q

    def eta(self, x):
        return 1 - np.cos(np.asarray(x))

    def energy(self, n):
        n = np.asarray(n)
        q = self.q
        return (q ** (-n) - 1) * (1 - self.b4 * q ** (n - 1.0))

    def _series(self, n, x, c):
        a1, a2, a3, a4 = c.a1, c.a2, c.a3, c.a4
        q = c.q
        e = c.xp.exp(1j * x)
        pref = a1 ** (-n) * q_pochhammer(a1 * a2, q, n) * q_pochhammer(a1 * a3, q, n) \
            * q_pochhammer(a1 * a4, q, n)
        return pref, HypergeomSpec((q ** (-n), a1 * a2 * a3 * a4 * q ** (n - 1), a1 * e, a1 / e),
                                   (a1 * a2, a1 * a3, a1 * a4), q, q_base=q)

    def f_n(self, n):
        q = self.q
        return q ** (n / 2) * (q ** (-n) - 1) * (1 - self.b4 * q ** (n - 1.0))

    def b_nm1(self, n):
        return self.q ** (-n / 2)

    def V(self, x):
        e = np.exp(1j * np.asarray(x))
        num = np.prod([1 - a * e for a in self.avec], axis=0)
        return num / ((1 - e ** 2) * (1 - self.q * e ** 2))

    def Vstar(self, x):
        e = np.exp(-1j * np.asarray(x))
        num = np.prod([1 - np.conj(a) * e for a in self.avec], axis=0)
        return num / ((1 - e ** 2) * (1 - self.q * e ** 2))

    def varphi(self, x):
        return 2 * np.sin(np.asarray(x))

    def weight(self, x):
        x = np.asarray(x, dtype=float)
        q = self.q
        e = np.exp(1j * x)
        val = q_pochhammer(e ** 2, q, inf) * q_pochhammer(1 / e ** 2, q, inf)
        for a in self.avec:
            val = val / (q_pochhammer(a * e, q, inf) * q_pochhammer(a / e, q, inf))
        return np.real(val)

    def norm(self, n):
        _check_n(n)
        q = self.q
        a = self.avec
        b4 = self.b4
        val = 2 * np.pi * q_pochhammer(b4 * q ** (n - 1.0), q, n) * q_pochhammer(b4 * q ** (2.0 * n), q, inf)
        val = val / q_pochhammer(q ** (n + 1.0), q, inf)
        for i in range(4):
            for j in range(i + 1, 4):
                val = val / q_pochhammer(a[i] * a[j] * q ** n, q, inf)
        return _realify(val)

    def _closure(self):
        q = self.q
        b1, _, b3, b4 = (np.real(v) for v in _elementary(self.avec))
        Q = (q ** -0.5 - q ** 0.5) ** 2
        yp = np.array([1 + b4 / q, 1.0])
        r1 = Q * yp
        r0 = Q * npoly.polysub(npoly.polymul(yp, yp), [(1 + 1 / q) ** 2 * b4])
        rm1 = npoly.polysub(
            0.5 * Q * npoly.polysub((b1 + b3 / q) * yp, [(1 + 1 / q) * (b3 + b1 * b4 / q)]), r0)
        return _closure_from_polys(r1, r0, rm1)


# rdQM

class _RDQM(FamilyDescriptor):

    def B(self, x):
        raise NotImplementedError

    def D(self, x):
        raise NotImplementedError

    def varphi(self, x):
        raise NotImplementedError

    @property
    def x_max(self):
        """Largest lattice point; the truncation point for infinite families."""
        if self.N is not None:
            return int(self.N)
        return self.truncation()

    def lattice(self):
        return np.arange(self.x_max + 1)

    def truncation(self):
        """Smallest x with phi0(x)^2 < 1e-16 * max phi0^2."""
        w = [1.0]
        x = 0
        peak = 1.0
        while True:
            w.append(w[-1] * self.B(x) / self.D(x + 1))
            x += 1
            peak = max(peak, w[-1])
            if w[-1] < TRUNCATION_RATIO * peak and w[-1] < w[-2]:
                return x
            if x > 100000:
                raise DomainError("weight does not decay; cannot truncate")

    def weight_product(self, x):
        """phi0(x)^2 from the product of B(y)/D(y+1)."""
        x = np.atleast_1d(np.asarray(x, dtype=int))
        top = int(x.max()) if x.size else 0
        ys = np.arange(top)
        ratios = self.B(ys) / self.D(ys + 1) if top else np.array([])
        cum = np.concatenate([[1.0], np.cumprod(ratios)])
        return cum[x]

    def weight(self, x):
        x = np.asarray(x)
        if np.any(x < 0) or np.any(x != np.round(x)):
            raise DomainError("lattice point must be a non-negative integer")
        if self.N is not None and np.any(x > self.N):
            raise DomainError(f"lattice point exceeds x_max={self.N}")
        return self._weight_closed(x)

    def f_n(self, n):
        return self.energy(n)

    def b_nm1(self, n):
        return 1.0


class Meixner(_RDQM):
    id = "M"
    param_names = ("beta", "c")
    delta = (1.0, 0.0)
    delta_tilde = {"XM": (-1.0, 0.0)}

    def eta(self, x):
        return np.asarray(x, dtype=float)

    def energy(self, n):
        return np.asarray(n, dtype=float)

    def B(self, x):
        c = self.c
        return c * (np.asarray(x) + self.beta) / (1 - c)

    def D(self, x):
        return np.asarray(x, dtype=float) / (1 - self.c)

    def varphi(self, x):
        return 1.0 + 0 * np.asarray(x, dtype=float)

    def _series(self, n, x, c):
        return 1.0, HypergeomSpec((-n, -x), (c.beta,), 1 - 1 / c.c)

    def _poch_ratio(self, k):
        """(beta)_k c^k / k!, through logarithms once k! leaves float range."""
        if k <= 150:
            return pochhammer(self.beta, k) * self.c ** k / factorial(k)
        return mpmath.exp(mpmath.loggamma(self.beta + k) - mpmath.loggamma(self.beta)
                          - mpmath.loggamma(k + 1) + k * mpmath.log(self.c))

    def _weight_closed(self, x):
        x = np.asarray(x)
        out = [float(self._poch_ratio(int(k))) for k in np.atleast_1d(x)]
        return np.asarray(out)[()] if x.ndim == 0 else np.asarray(out)

    def norm(self, n):
        _check_n(n)
        return float(self._poch_ratio(int(n))) * (1 - self.c) ** self.beta

    def _closure(self):
        beta, c = self.beta, self.c
        return ClosureData((0.0, 0.0), (0.0, 0.0, 1.0),
                           (0.0, -(1 + c) / (1 - c), -beta * c / (1 - c)))


class Racah(_RDQM):
    id = "R"
    param_names = ("a", "b", "c", "d")
    delta = (1.0, 1.0, 1.0, 1.0)
    delta_tilde = {"XR": (0.0, 0.0, -1.0, -1.0)}

    def _infer_N(self, params):
        a = params["a"]
        if isinstance(a, (int, float)) and a <= 0 and float(a) == round(a):
            return int(round(-a))
        return None

    @property
    def d_tilde(self):
        return self.a + self.b + self.c - self.d - 1

    def eta(self, x):
        x = np.asarray(x, dtype=float)
        return x * (x + self.d)

    def energy(self, n):
        n = np.asarray(n, dtype=float)
        return n * (n + self.d_tilde)

    def B(self, x):
        a, b, c, d = self.a, self.b, self.c, self.d
        x = np.asarray(x, dtype=float)
        return -(x + a) * (x + b) * (x + c) * (x + d) / ((2 * x + d) * (2 * x + 1 + d))

    def D(self, x):
        a, b, c, d = self.a, self.b, self.c, self.d
        x = np.asarray(x, dtype=float)
        return -(x + d - a) * (x + d - b) * (x + d - c) * x / ((2 * x - 1 + d) * (2 * x + d))

    def varphi(self, x):
        return (2 * np.asarray(x, dtype=float) + self.d + 1) / (self.d + 1)

    def _series(self, n, x, c):
        dt = c.a + c.b + c.c - c.d - 1
        return 1.0, HypergeomSpec((-n, n + dt, -x, x + c.d), (c.a, c.b, c.c), 1.0)

    def _exact_params(self, p, q, N):
        if N is not None:
            p = dict(p, a=mpmath.mpf(-int(N)))
        return p

    def _weight_closed(self, x):
        a, b, c, d = self.a, self.b, self.c, self.d
        x = np.asarray(x)
        out = []
        for k in np.atleast_1d(x):
            k = int(k)
            num = pochhammer(a, k) * pochhammer(b, k) * pochhammer(c, k) * pochhammer(d, k)
            den = (pochhammer(1 + d - a, k) * pochhammer(1 + d - b, k)
                   * pochhammer(1 + d - c, k) * factorial(k))
            out.append(num / den * (2 * k + d) / d)
        return np.asarray(out)[()] if x.ndim == 0 else np.asarray(out)

    def norm(self, n):
        _check_n(n, self.N)
        a, b, c, d, N = self.a, self.b, self.c, self.d, self.N
        dt = self.d_tilde
        num = pochhammer(a, n) * pochhammer(b, n) * pochhammer(c, n) * pochhammer(dt, n)
        den = (pochhammer(1 + dt - a, n) * pochhammer(1 + dt - b, n)
               * pochhammer(1 + dt - c, n) * factorial(n))
        tail = ((-1) ** N * pochhammer(1 + d - a, N) * pochhammer(1 + d - b, N)
                * pochhammer(1 + d - c, N) / (pochhammer(dt + 1, N) * pochhammer(d + 1, 2 * N)))
        return num / den * (2 * n + dt) / dt * tail

    def _closure(self):
        a, b, c, d = self.a, self.b, self.c, self.d
        dt = self.d_tilde
        return ClosureData((0.0, 2.0), (0.0, 4.0, dt ** 2 - 1),
                           (2.0, 2 * (a * b + b * c + c * a) - (1 + d) * (1 + dt), a * b * c * (dt - 1)))


class QRacah(_RDQM):
    id = "qR"
    param_names = ("a", "b", "c", "d")
    q_family = True
    delta = (1.0, 1.0, 1.0, 1.0)
    delta_tilde = {"XqR": (0.0, 0.0, -1.0, -1.0)}

    def _infer_N(self, params):
        a = params["a"]
        m = -np.log(a) / np.log(self.q) if a > 0 else np.nan
        if np.isfinite(m) and abs(m - round(m)) < 1e-9 and round(m) >= 0:
            return int(round(m))
        return None

    def _kappa(self):
        return 1.0 / self.q

    @property
    def d_tilde(self):
        return self.a * self.b * self.c / (self.d * self.q)

    def eta(self, x):
        x = np.asarray(x, dtype=float)
        q = self.q
        return (q ** (-x) - 1) * (1 - self.d * q ** x)

    def energy(self, n):
        n = np.asarray(n, dtype=float)
        q = self.q
        return (q ** (-n) - 1) * (1 - self.d_tilde * q ** n)

    def B(self, x):
        a, b, c, d, q = self.a, self.b, self.c, self.d, self.q
        qx = q ** np.asarray(x, dtype=float)
        return -((1 - a * qx) * (1 - b * qx) * (1 - c * qx) * (1 - d * qx)
                 / ((1 - d * qx * qx) * (1 - d * qx * qx * q)))

    def D(self, x):
        a, b, c, d, q = self.a, self.b, self.c, self.d, self.q
        qx = q ** np.asarray(x, dtype=float)
        return -self.d_tilde * ((1 - d * qx / a) * (1 - d * qx / b) * (1 - d * qx / c) * (1 - qx)
                                / ((1 - d * qx * qx / q) * (1 - d * qx * qx)))

    def varphi(self, x):
        q, d = self.q, self.d
        x = np.asarray(x, dtype=float)
        return (q ** (-x) - d * q ** (x + 1)) / (1 - d * q)

    def _series(self, n, x, c):
        q = c.q
        dt = c.a * c.b * c.c / (c.d * q)
        return 1.0, HypergeomSpec((q ** (-n), dt * q ** n, q ** (-x), c.d * q ** x),
                                  (c.a, c.b, c.c), q, q_base=q)

    def _exact_params(self, p, q, N):
        if N is not None:
            p = dict(p, a=q ** (-int(N)))
        return p

    def _weight_closed(self, x):
        a, b, c, d, q = self.a, self.b, self.c, self.d, self.q
        dt = self.d_tilde
        x = np.asarray(x)
        out = []
        for k in np.atleast_1d(x):
            k = int(k)
            num = (q_pochhammer(a, q, k) * q_pochhammer(b, q, k) * q_pochhammer(c, q, k)
                   * q_pochhammer(d, q, k))
            den = (q_pochhammer(d * q / a, q, k) * q_pochhammer(d * q / b, q, k)
                   * q_pochhammer(d * q / c, q, k) * q_pochhammer(q, q, k) * dt ** k)
            out.append(num / den * (1 - d * q ** (2 * k)) / (1 - d))
        return np.asarray(out)[()] if x.ndim == 0 else np.asarray(out)

    def norm(self, n):
        _check_n(n, self.N)
        a, b, c, d, q, N = self.a, self.b, self.c, self.d, self.q, self.N
        dt = self.d_tilde
        num = (q_pochhammer(a, q, n) * q_pochhammer(b, q, n) * q_pochhammer(c, q, n)
               * q_pochhammer(dt, q, n))
        den = (q_pochhammer(dt * q / a, q, n) * q_pochhammer(dt * q / b, q, n)
               * q_pochhammer(dt * q / c, q, n) * q_pochhammer(q, q, n) * d ** n)
        tail = ((-1) ** N * q_pochhammer(d * q / a, q, N) * q_pochhammer(d * q / b, q, N)
                * q_pochhammer(d * q / c, q, N) * dt ** N * q ** (N * (N + 1) / 2)
                / (q_pochhammer(dt * q, q, N) * q_pochhammer(d * q, q, 2 * N)))
        return num / den * (1 - dt * q ** (2 * n)) / (1 - dt) * tail

    def _closure(self):
        a, b, c, d, q = self.a, self.b, self.c, self.d, self.q
        dt = self.d_tilde
        Q = (q ** -0.5 - q ** 0.5) ** 2
        yp = np.array([1 + dt, 1.0])
        yp2 = npoly.polymul(yp, yp)
        r1 = Q * yp
        r0 = Q * npoly.polysub(yp2, [(q ** -0.5 + q ** 0.5) ** 2 * dt])
        e2 = a * b + b * c + c * a
        lin = a + b + c + d + dt + e2 / q
        const = ((1 - a) * (1 - b) * (1 - c) * (1 - dt / q)
                 + (a + b + c - 1 - d * dt + e2 / q) * (1 + dt))
        rm1 = Q * npoly.polyadd(npoly.polysub((1 + d) * yp2, lin * yp), [const])
        return _closure_from_polys(r1, r0, rm1)


FAMILIES = {cls.id: cls for cls in
            (Hermite, Laguerre, Jacobi, MeixnerPollaczek, Wilson, AskeyWilson, Meixner, Racah, QRacah)}

CONSTRAINTS = {
    "H": "no parameters",
    "L": "g > 0",
    "J": "g > 0, h > 0",
    "MP": "a > 0",
    "W": "Re(a_j) > 0, {a_j*} = {a_j} as a set",
    "AW": "|a_j| < 1, {a_j*} = {a_j} as a set, 0 < q < 1",
    "M": "beta > 0, 0 < c < 1",
    "R": "a = -N, a + b > d > 0, 0 < c < 1 + d",
    "qR": "a = q^-N, 0 < ab < d < 1, qd < c < 1, 0 < q < 1",
}


def _check_n(n, n_max=None):
    if int(n) != n or n < 0 or (n_max is not None and n > n_max):
        raise IndexError(f"n={n} out of range" + (f" 0..{n_max}" if n_max is not None else ""))


def _require(cond, text):
    if not cond:
        raise ParameterError(f"parameter range violated: {text}")


def _conjugation_closed(values, tol=1e-12):
    remaining = list(values)
    for v in values:
        target = np.conj(v)
        for i, w in enumerate(remaining):
            if abs(w - target) <= tol * max(1.0, abs(w)):
                remaining.pop(i)
                break
        else:
            return False
    return True


def make_family(family_id, params=None, q=None, N=None):
    """Validated descriptor for one of the nine families.

    For R the parameter ``a`` defaults to -N; for qR to q^-N.
    """
    if family_id not in FAMILIES:
        raise ParameterError(f"unknown family {family_id!r}; expected one of {sorted(FAMILIES)}")
    cls = FAMILIES[family_id]
    params = dict(params or {})
    if family_id == "R" and "a" not in params and N is not None:
        params["a"] = -float(N)
    if family_id == "qR" and "a" not in params and N is not None and q is not None:
        params["a"] = float(q) ** (-int(N))
    missing = [k for k in cls.param_names if k not in params]
    unknown = [k for k in params if k not in cls.param_names]
    if missing or unknown:
        raise ParameterError(f"{family_id}: expected parameters {cls.param_names}, "
                             f"missing {missing}, unknown {unknown}")
    if cls.q_family:
        if q is None:
            raise ParameterError(f"{family_id} requires q")
        _require(0 < q < 1, "0 < q < 1")
    elif q is not None:
        raise ParameterError(f"{family_id} takes no q")
    params = {k: (complex(v) if isinstance(v, complex) and v.imag != 0 else float(np.real(v)))
              for k, v in params.items()}
    p = params
    if family_id == "L":
        _require(p["g"] > 0, "g > 0")
    elif family_id == "J":
        _require(p["g"] > 0, "g > 0")
        _require(p["h"] > 0, "h > 0")
    elif family_id == "MP":
        _require(p["a"] > 0, "a > 0")
    elif family_id == "W":
        vals = [p[k] for k in cls.param_names]
        _require(all(np.real(v) > 0 for v in vals), "Re(a_j) > 0")
        _require(_conjugation_closed(vals), "{a_j*} = {a_j} as a set")
    elif family_id == "AW":
        vals = [p[k] for k in cls.param_names]
        _require(all(abs(v) < 1 for v in vals), "|a_j| < 1")
        _require(_conjugation_closed(vals), "{a_j*} = {a_j} as a set")
    elif family_id == "M":
        _require(p["beta"] > 0, "beta > 0")
        _require(0 < p["c"] < 1, "0 < c < 1")
        if N is not None:
            raise ParameterError("M is an infinite lattice; N is not accepted")
    elif family_id == "R":
        if N is None:
            N = -p["a"]
        _require(float(N) == int(N) and N >= 0, "N a non-negative integer")
        N = int(N)
        _require(p["a"] == -N, "a = -N")
        _require(p["a"] + p["b"] > p["d"], "a + b > d")
        _require(p["d"] > 0, "d > 0")
        _require(0 < p["c"], "0 < c")
        _require(p["c"] < 1 + p["d"], "c < 1 + d")
    elif family_id == "qR":
        if N is None:
            m = -np.log(p["a"]) / np.log(q) if p["a"] > 0 else np.nan
            _require(np.isfinite(m) and abs(m - round(m)) < 1e-9, "a = q^-N")
            N = int(round(m))
        N = int(N)
        _require(abs(p["a"] - q ** (-N)) <= 1e-12 * q ** (-N), "a = q^-N")
        ab = p["a"] * p["b"]
        _require(0 < ab, "0 < ab")
        _require(ab < p["d"], "ab < d")
        _require(p["d"] < 1, "d < 1")
        _require(q * p["d"] < p["c"], "qd < c")
        _require(p["c"] < 1, "c < 1")
    if family_id not in ("R", "qR") and N is not None:
        raise ParameterError(f"{family_id} takes no N")
    return cls(params, q=q, N=N)


def groundstate_weight(fam, x):
    """phi0(x)^2 in the family's physical domain."""
    x = np.asarray(x)
    if fam.category == "rdQM":
        if np.any(x < 0) or np.any(x != np.round(x)):
            raise DomainError("lattice point must be a non-negative integer")
        if np.any(x > fam.x_max):
            raise DomainError(f"lattice point exceeds x_max={fam.x_max}")
        w = fam.weight_product(x)
        return w[0] if x.ndim == 0 else w
    lo, hi = fam.domain
    if np.any(np.iscomplex(x)) or np.any(x <= lo) or np.any(x >= hi):
        raise DomainError(f"x outside the open domain ({lo}, {hi})")
    return fam.weight(x)


def norm_constant(fam, n):
    """h_n (oQM, idQM) or d_n^2 (rdQM)."""
    return fam.norm(n)


@dataclass(frozen=True)
class AlphaReport:
    max_residual: float
    min_discriminant: float
    rows: tuple


def alpha_consistency(fam, n_max):
    """Check alpha_pm(E(n)) = E(n +- 1) - E(n) for 1 <= n < n_max."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    if getattr(fam, "N", None) is not None:
        n_max = min(n_max, fam.N)
    rows = []
    worst = 0.0
    min_disc = inf
    for n in range(1, n_max):
        E = fam.energy(n)
        r1 = fam.closure.R1(E)
        disc = r1 * r1 + 4 * fam.closure.R0(E)
        ap, am = fam.alpha(E)
        if ap == am:
            raise DegeneracyError(f"alpha_+ = alpha_- at n={n}")
        res = max(abs(ap - (fam.energy(n + 1) - E)), abs(am - (fam.energy(n - 1) - E)))
        worst = max(worst, res)
        min_disc = min(min_disc, disc)
        rows.append((n, float(ap), float(am), float(res)))
    return AlphaReport(float(worst), float(min_disc), tuple(rows))


def energy_from_shape_invariance(fam, n):
    """E(n) = sum_s kappa^s E(1; lambda + s delta)."""
    total = 0.0
    current = fam
    for s in range(n):
        total += fam.kappa ** s * current.energy(1)
        current = current.shifted()
    return total


def load_config(path):
    """Read a family from a key=value file.

    Grammar: one ``key = value`` per line; blank lines and lines starting with
    ``#`` are ignored. Keys: ``family``, ``N``, ``q``, ``param.<name>``.
    """
    fields = {}
    params = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("param."):
                params[key[6:]] = _parse_number(value, path, lineno)
            elif key in ("family", "N", "q"):
                fields[key] = value
            else:
                raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
    if "family" not in fields:
        raise ParameterError(f"{path}: missing family=")
    N = int(fields["N"]) if "N" in fields else None
    q = float(fields["q"]) if "q" in fields else None
    return make_family(fields["family"], params, q=q, N=N)


def _parse_number(text, path, lineno):
    try:
        value = complex(text.replace(" ", ""))
    except ValueError:
        raise ParameterError(f"{path}:{lineno}: not a number: {text!r}") from None
    return value.real if value.imag == 0 else value


def draw_family(family_id, rng, N=None, q=None):
    """A validated descriptor with parameters drawn from ``rng`` inside the family's range.

    The draw ranges stay away from the range boundaries so that the spectra
    are well separated; N defaults to 10 for R and qR.
    """
    u = rng.uniform
    p = {}
    if family_id in ("R", "qR") and N is None:
        N = 10
    # small q makes a = q^-N large and the qR dual recursion ill-conditioned
    if family_id == "AW" and q is None:
        q = float(u(0.3, 0.9))
    if family_id == "qR" and q is None:
        q = float(u(0.75, 0.95))
    if family_id == "L":
        p = {"g": u(0.5, 4.0)}
    elif family_id == "J":
        p = {"g": u(0.5, 4.0), "h": u(0.5, 4.0)}
    elif family_id == "MP":
        p = {"a": u(0.3, 2.0)}
    elif family_id == "W":
        p = dict(zip(Wilson.param_names, u(0.2, 2.0, 4)))
    elif family_id == "AW":
        p = dict(zip(AskeyWilson.param_names, u(-0.8, 0.8, 4)))
    elif family_id == "M":
        p = {"beta": u(0.5, 3.0), "c": u(0.3, 0.45)}
    elif family_id == "R":
        d = u(0.5, 4.0)
        p = {"a": -float(N), "b": d + N + u(0.5, 5.0), "c": u(0.1, 0.9) * (1 + d), "d": d}
    elif family_id == "qR":
        a = q ** (-int(N))
        d = u(0.2, 0.8)
        p = {"a": a, "b": d / a * u(0.1, 0.9), "c": q * d + (1 - q * d) * u(0.1, 0.9), "d": d}
    elif family_id != "H":
        raise ParameterError(f"unknown family {family_id!r}")
    p = {k: float(v) for k, v in p.items()}
    return make_family(family_id, p, q=q, N=N if family_id in ("R", "qR") else None)
