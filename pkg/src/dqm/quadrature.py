"""Weighted inner products on the continuous oQM / idQM domains."""
from dataclasses import dataclass
from math import inf

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ParameterError, QuadratureError

KINDS = ("full_line", "half_line", "interval")
DECAYS = ("gaussian", "gamma_tail", "bounded")

# initial truncation radius and panel width per decay profile
_RADIUS = {"gaussian": 8.0, "gamma_tail": 40.0}
_PANEL = {"gaussian": 1.0, "gamma_tail": 4.0}


@dataclass(frozen=True)
class IntegrationDomain:
    kind: str
    endpoints: tuple
    decay: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown domain kind {self.kind!r}")
        if self.decay not in DECAYS:
            raise ParameterError(f"unknown decay profile {self.decay!r}")
        lo, hi = self.endpoints
        if not lo < hi:
            raise ParameterError("domain endpoints must satisfy lo < hi")
        if self.kind == "interval" and not (np.isfinite(lo) and np.isfinite(hi)):
            raise ParameterError("an interval needs finite endpoints")
        if self.kind != "interval" and self.decay == "bounded":
            raise ParameterError("unbounded domains need a decay profile")


def domain_for(fam):
    """Integration domain of an oQM or idQM family."""
    if fam.category == "rdQM":
        raise ParameterError("rdQM families are summed, not integrated")
    lo, hi = fam.domain
    if np.isfinite(lo) and np.isfinite(hi):
        return IntegrationDomain("interval", (lo, hi), "bounded")
    decay = "gaussian" if fam.category == "oQM" else "gamma_tail"
    kind = "full_line" if lo == -inf else "half_line"
    return IntegrationDomain(kind, (lo, hi), decay)


_NODES = {n: leggauss(n) for n in (30, 60)}


def _gl(func, a, b, n):
    x, w = _NODES[n]
    half = 0.5 * (b - a)
    return half * np.dot(w, np.real(func(0.5 * (a + b) + half * x)))


def _integrate(func, a, b, tol_abs, panel, depth=0):
    """Adaptive nested Gauss-Legendre (30 vs 60 nodes) with bisection; returns (value, error)."""
    if panel is not None:
        edges = list(np.arange(a, b, panel)) + [b]
        parts = [_integrate(func, lo, hi, tol_abs / (len(edges) - 1), None)
                 for lo, hi in zip(edges[:-1], edges[1:])]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)
    coarse = _gl(func, a, b, 30)
    fine = _gl(func, a, b, 60)
    err = abs(fine - coarse)
    if err <= tol_abs or depth >= 60:
        return fine, err
    mid = 0.5 * (a + b)
    left = _integrate(func, a, mid, tol_abs / 2, None, depth + 1)
    right = _integrate(func, mid, b, tol_abs / 2, None, depth + 1)
    return left[0] + right[0], left[1] + right[1]


def _on_domain(func, dom, tol_abs):
    lo, hi = dom.endpoints
    if dom.kind == "interval":
        return _integrate(func, lo, hi, tol_abs, None)
    R = _RADIUS[dom.decay]
    panel = _PANEL[dom.decay]

    def over(radius):
        if dom.kind == "full_line":
            left, e1 = _integrate(func, -radius, 0.0, tol_abs / 2, panel)
            right, e2 = _integrate(func, 0.0, radius, tol_abs / 2, panel)
            return left + right, e1 + e2
        return _integrate(func, lo, lo + radius, tol_abs, panel)

    val, err = over(R)
    for _ in range(6):
        wider, err_w = over(2 * R)
        if abs(wider - val) <= tol_abs:
            return wider, err_w
        val, err, R = wider, err_w, 2 * R
    raise QuadratureError("truncated integral did not settle as the radius grew", estimate=val)


def weighted_inner_product(weight, f, g, dom, tol=1e-10, scale=None):
    """int weight(x) f(x) g(x) dx over the domain (real parts).

    The absolute accuracy target is tol * scale, where scale defaults to the
    integral of the weight itself (h_0 for the family weight).
    """
    if scale is None:
        scale, _ = _on_domain(lambda x: np.real(weight(x)), dom, 1e-14)
        scale = abs(scale)
    if not scale > 0:
        raise QuadratureError("weight integrates to zero", estimate=scale)
    tol_abs = tol * scale

    def integrand(x):
        return np.real(weight(x) * f(x) * g(x))

    val, err = _on_domain(integrand, dom, tol_abs)
    if err > tol_abs:
        raise QuadratureError(f"error estimate {err:.3e} above target {tol_abs:.3e}", estimate=val)
    return val


def gram_matrix(weight, funcs, dom, tol=1e-10, norms=None):
    """Matrix of weighted inner products of the given functions.

    With ``norms`` the (i, j) entry is computed to tol * sqrt(norms_i norms_j).
    """
    k = len(funcs)
    G = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            scale = None if norms is None else float(np.sqrt(abs(norms[i] * norms[j])))
            G[i, j] = G[j, i] = weighted_inner_product(weight, funcs[i], funcs[j], dom, tol, scale)
    return G


def family_norm_residual(fam, n_top, tol=1e-11):
    """max_n |h_n(quadrature) / h_n(closed form) - 1| for n <= n_top, plus the off-diagonal max."""
    dom = domain_for(fam)
    funcs = [lambda x, n=n: np.real(fam.poly(n, x)) for n in range(n_top + 1)]
    h = np.array([float(np.real(fam.norm(n))) for n in range(n_top + 1)])
    G = gram_matrix(fam.weight, funcs, dom, tol, norms=h)
    diag = float(np.max(np.abs(np.diag(G) / h - 1)))
    D = np.sqrt(np.outer(h, h))
    off = np.abs(G / D - np.eye(n_top + 1))
    return diag, float(np.max(off))
