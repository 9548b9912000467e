"""Pochhammer symbols, (q-)hypergeometric series and log-gamma.

All routines accept numpy arrays (elementwise) or plain scalars. Passing
``dps=`` to :func:`hypergeometric` or mpmath numbers to the other routines
switches to the extended-precision path.
"""
from dataclasses import dataclass
import math

import mpmath
import numpy as np
from scipy import special as _sp

from .errors import ConvergenceError, DomainError, ParameterError

# sum |terms| / |sum| above which a double-precision sum is redone with mpmath
CANCELLATION_LIMIT = 1e4
# integer detection for structural termination
_INT_TOL = 1e-12
_QINT_TOL = 1e-9


def _is_mp(*values):
    return any(isinstance(v, (mpmath.mpf, mpmath.mpc)) for v in values)


def _check_q(q):
    if not 0.0 < float(q) < 1.0:
        raise ParameterError(f"q must satisfy 0 < q < 1, got {q}")


def pochhammer(a, n):
    """Shifted factorial (a)_n = a (a+1) ... (a+n-1)."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    result = 1
    for k in range(n):
        result = result * (a + k)
    if isinstance(result, int):
        return float(result)
    return result


def q_pochhammer(a, q, n):
    """q-shifted factorial (a;q)_n. ``n=None`` or ``inf`` gives (a;q)_infinity."""
    _check_q(q)
    if n is None or n == math.inf:
        result = 1
        qk = 1.0
        for _ in range(100000):
            factor = a * qk
            result = result * (1 - factor)
            if np.all(np.abs(factor) < 1e-18):
                break
            qk = qk * q
        else:
            raise ConvergenceError("infinite q-product did not converge")
        return result
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    result = 1
    qk = 1
    for _ in range(n):
        result = result * (1 - a * qk)
        qk = qk * q
    if isinstance(result, int):
        return float(result)
    return result


@dataclass(frozen=True)
class HypergeomSpec:
    """Parameters of rFs (``q_base is None``) or r phi s series."""
    numerator_params: tuple
    denominator_params: tuple
    argument: complex
    q_base: float = None


def _termination_index(a, q):
    """Index m with (a)_{m+1} = 0, or inf. Elementwise."""
    a = np.asarray(a, dtype=complex)
    with np.errstate(all="ignore"):
        if q is None:
            r = np.round(a.real)
            hit = ((np.abs(a.imag) <= _INT_TOL)
                   & (np.abs(a.real - r) <= _INT_TOL * np.maximum(1.0, np.abs(r)))
                   & (r <= 0))
            return np.where(hit, -r, np.inf)
        m = -np.log(a) / math.log(q)
        r = np.round(m.real)
        hit = ((np.abs(m.imag) <= _QINT_TOL)
               & (np.abs(m.real - r) <= _QINT_TOL * np.maximum(1.0, np.abs(r)))
               & (r >= 0))
        return np.where(hit, r, np.inf)


def hypergeometric(spec, max_terms=1000, tol=1e-16, dps=None, max_cancellation=CANCELLATION_LIMIT,
                   return_condition=False):
    """Sum the rFs or r phi s series described by ``spec``.

    Terminating series (a numerator parameter equal to -m, or q^-m in the
    q-case) are summed exactly up to the termination index. Otherwise terms
    are added until ``|term| < tol*|sum|``.

    Parameters may be numpy arrays; they are broadcast against each other and
    against the argument. Elements whose sum of term magnitudes exceeds
    ``max_cancellation`` times the result are re-summed in extended precision.
    With ``return_condition`` the ratio sum|terms|/|sum| is returned as well.
    """
    num = tuple(spec.numerator_params)
    den = tuple(spec.denominator_params)
    z = spec.argument
    q = spec.q_base
    if q is not None:
        _check_q(q)
    if dps is not None or _is_mp(z, *num, *den):
        return _hypergeometric_mp(num, den, z, q, max_terms, tol, dps or mpmath.mp.dps)

    arrays = np.broadcast_arrays(*[np.asarray(v) for v in (*num, *den, z)])
    scalar = arrays[0].ndim == 0
    dtype = np.result_type(float, *arrays)
    arrays = [np.atleast_1d(np.asarray(v, dtype=dtype)) for v in arrays]
    num_a = arrays[:len(num)]
    den_a = arrays[len(num):len(num) + len(den)]
    z_a = arrays[-1]
    shape = z_a.shape

    stop = np.full(shape, np.inf)
    for a in num_a:
        stop = np.minimum(stop, _termination_index(a, q))
    for b in den_a:
        pole = _termination_index(b, q)
        if np.any(pole < stop):
            raise DomainError("denominator parameter produces a pole before termination")
    terminating = np.isfinite(stop)
    if np.any(terminating & (stop >= max_terms)):
        raise ConvergenceError(f"termination index exceeds max_terms={max_terms}")

    r, s = len(num), len(den)
    term = np.ones(shape, dtype=dtype)
    total = np.ones(shape, dtype=dtype)
    magnitude = np.ones(shape)
    active = stop > 0
    converged = ~active
    qk = 1.0
    for k in range(max_terms):
        if not np.any(active):
            break
        if q is None:
            ratio = z_a / (k + 1)
            for a in num_a:
                ratio = ratio * (a + k)
            for b in den_a:
                ratio = ratio / (b + k)
        else:
            ratio = z_a / (1 - qk * q)
            for a in num_a:
                ratio = ratio * (1 - a * qk)
            for b in den_a:
                ratio = ratio / (1 - b * qk)
            ratio = ratio * (-qk) ** (1 + s - r)
            qk = qk * q
        term = np.where(active, term * ratio, 0)
        total = total + term
        magnitude = magnitude + np.abs(term)
        finished = terminating & (stop <= k + 1)
        small = ~terminating & (np.abs(term) <= tol * np.abs(total))
        converged = converged | finished | small
        active = active & ~finished & ~small
    if not np.all(converged):
        raise ConvergenceError(f"series did not converge within {max_terms} terms")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(magnitude == 0, 1.0, magnitude / np.abs(total))
    ratio = np.where(np.isfinite(ratio), ratio, 1e300)
    if max_cancellation is not None:
        bad = np.flatnonzero(ratio > max_cancellation)
        for i in bad:
            digits = 20 + int(np.log10(ratio[i]))
            value = _hypergeometric_mp([complex(a[i]) if np.iscomplexobj(a) else float(a[i]) for a in num_a],
                                       [complex(b[i]) if np.iscomplexobj(b) else float(b[i]) for b in den_a],
                                       complex(z_a[i]) if np.iscomplexobj(z_a) else float(z_a[i]),
                                       q, max_terms, tol, max(digits, 30))
            total[i] = complex(value) if np.iscomplexobj(total) else float(mpmath.re(value))
        ratio[bad] = 1.0
    if return_condition:
        return (total[0], ratio[0]) if scalar else (total.reshape(shape), ratio.reshape(shape))
    return total[0] if scalar else total.reshape(shape)


def _hypergeometric_mp(num, den, z, q, max_terms, tol, dps):
    with mpmath.workdps(dps):
        stop = math.inf
        for a in num:
            stop = min(stop, float(_termination_index(complex(a), q)))
        for b in den:
            if float(_termination_index(complex(b), q)) < stop:
                raise DomainError("denominator parameter produces a pole before termination")
        if math.inf > stop >= max_terms:
            raise ConvergenceError(f"termination index exceeds max_terms={max_terms}")
        tol = max(mpmath.mpf(tol), mpmath.mpf(10) ** (-dps))
        num = [mpmath.mpmathify(a) for a in num]
        den = [mpmath.mpmathify(b) for b in den]
        z = mpmath.mpmathify(z)
        r, s = len(num), len(den)
        qm = mpmath.mpf(q) if q is not None else None
        term = mpmath.mpf(1)
        total = mpmath.mpf(1)
        qk = mpmath.mpf(1)
        k = 0
        while k < stop:
            if k >= max_terms:
                raise ConvergenceError(f"series did not converge within {max_terms} terms")
            if qm is None:
                ratio = z / (k + 1)
                for a in num:
                    ratio *= a + k
                for b in den:
                    ratio /= b + k
            else:
                ratio = z / (1 - qk * qm)
                for a in num:
                    ratio *= 1 - a * qk
                for b in den:
                    ratio /= 1 - b * qk
                ratio *= (-qk) ** (1 + s - r)
                qk *= qm
            term *= ratio
            total += term
            k += 1
            if stop == math.inf and abs(term) <= tol * abs(total):
                break
        return total


def log_gamma(z):
    """Principal branch of log Gamma(z)."""
    if _is_mp(z):
        if mpmath.isint(z) and mpmath.re(z) <= 0:
            raise DomainError(f"log_gamma pole at {z}")
        return mpmath.loggamma(z)
    arr = np.asarray(z)
    zc = arr.astype(complex)
    r = np.round(zc.real)
    if np.any((zc.imag == 0) & (zc.real == r) & (r <= 0)):
        raise DomainError("log_gamma pole at a non-positive integer")
    if not np.iscomplexobj(arr) and np.all(arr > 0):
        return _sp.gammaln(arr.astype(float))
    return _sp.loggamma(zc)
