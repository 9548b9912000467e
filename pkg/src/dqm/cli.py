"""Command-line entry point: tables, spectra and verification reports.

Exit status: 0 when every check passes, 1 when a check fails or the requested
construction is rejected, 2 for usage errors.
"""
import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import crum, exceptional, lattice, operators, polynomials, quadrature, unified
from .errors import ConstraintError, DQMError, ParameterError
from .families import CATEGORY, CONSTRAINTS, FAMILIES, draw_family, energy_from_shape_invariance, load_config, make_family

SCHEMA_VERSION = 1
# lattice size for seeded R / qR draws when --N is not given
DEFAULT_DRAW_N = 8


class UsageError(Exception):
    pass


@dataclass
class Check:
    check_id: str
    paper_ref: str
    residual: float
    tolerance: float

    def record(self, tol_scale):
        tol = self.tolerance * tol_scale
        res = float(self.residual)
        ok = bool(math.isfinite(res) and res <= tol)
        return {"check_id": self.check_id, "paper_ref": self.paper_ref,
                "residual": res, "tolerance": tol, "pass": ok}


# output

def _write_atomic(path, text):
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out):
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        v = complex(v)
        return v.real if v.imag == 0 else {"re": v.real, "im": v.imag}
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _report(suite, subject, checks, args, started, extra=None, error=None):
    records = [c.record(args.tol_scale) for c in checks]
    ok = error is None and all(r["pass"] for r in records)
    rep = {"schema_version": SCHEMA_VERSION, "suite": suite, "subject": subject,
           "checks": records, "pass": ok, "seed": args.seed,
           "wall_time": round(time.perf_counter() - started, 6)}
    if error is not None:
        rep["error"] = {"type": type(error).__name__, "message": str(error)}
    if extra:
        rep.update(extra)
    _emit(json.dumps(_jsonable(rep), indent=2, allow_nan=True) + "\n", args.out)
    return 0 if ok else 1


# family arguments

def _parse_params(text):
    params = {}
    if not text:
        return params
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"parameter {item!r} is not name=value")
        k, v = (s.strip() for s in item.split("=", 1))
        try:
            z = complex(v.replace(" ", ""))
        except ValueError:
            raise UsageError(f"parameter {k}: not a number: {v!r}") from None
        params[k] = z.real if z.imag == 0 else z
    return params


def _family_from(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    if not args.family:
        raise UsageError("--family or --config is required")
    params = _parse_params(args.params)
    if not params and FAMILIES[args.family].param_names:
        # no explicit parameters: a seeded draw inside the family's range
        N = args.N if args.N is not None or args.family not in ("R", "qR") else DEFAULT_DRAW_N
        return draw_family(args.family, np.random.default_rng(args.seed), N=N, q=args.q)
    return make_family(args.family, params, q=args.q, N=args.N)


def _points(text):
    if not text:
        return None
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad point list {text!r}") from None


def _add_family_args(p, family_required=False):
    p.add_argument("--family", choices=sorted(FAMILIES), required=family_required)
    p.add_argument("--params", default="", help="comma-separated name=value pairs")
    p.add_argument("--N", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--config", help="key=value parameter file (family=, param.<name>=, N=, q=)")


def _add_common(p):
    p.add_argument("--out", help="output file (written atomically); stdout when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-scale", type=float, default=1.0, dest="tol_scale")


# verification suites for a single family

def _levels(fam):
    return lattice.tail_levels(fam)


def _suite_spectrum(fam):
    if fam.category != "rdQM":
        return []
    n = _levels(fam)
    truncated = fam.N is None
    return [
        Check("spectrum.eigenvalues", "Jacobi-matrix spectrum equals closed-form energies",
              lattice.spectrum_residual(fam, n)[0], 1e-8 if truncated else 1e-10),
        Check("spectrum.eigenvectors", "eigenvectors equal d_n phi0 P_n",
              lattice.eigenvector_residual(fam, n), 1e-4 if truncated else 1e-9),
    ]


def _suite_orthogonality(fam):
    if fam.category == "rdQM":
        n = _levels(fam)
        return [Check("orthogonality.gram", "lattice Gram matrix with closed-form norms",
                      lattice.orthogonality_residual(fam, n - 1), 1e-8 if fam.N is None else 1e-10)]
    diag, off = quadrature.family_norm_residual(fam, 6)
    return [Check("orthogonality.norms", "quadrature reproduces closed-form norms, n <= 6", diag, 1e-9),
            Check("orthogonality.off_diagonal", "quadrature Gram off-diagonal, n <= 6", off, 1e-9)]


def _suite_duality(fam):
    if fam.category != "rdQM":
        return []
    top = 8 if fam.N is None else None
    out = [Check("duality.polynomials", "P_n(eta(x)) equals dual polynomial Q_x(E(n))",
                 lattice.duality_residual(fam, top, top), 1e-10),
           Check("duality.completeness", "dual orthogonality / completeness of Q_x",
                 lattice.completeness_residual(fam, top), 1e-9),
           Check("duality.boundary", "A_0 E(1) + B(0) eta(1) = 0", polynomials.abrel_residual(fam), 1e-10)]
    if fam.N is not None:
        out.append(Check("duality.characteristic", "characteristic equation at the top of the lattice",
                         lattice.characteristic_equation_residual(fam), 1e-9))
    return out


def _rodrigues_residual(fam, n_top=10):
    x = polynomials._default_points(fam)
    top = n_top if fam.N is None else min(n_top, fam.N)
    worst = 0.0
    for n in range(top + 1):
        ref = np.real(np.asarray(fam.poly(n, x), dtype=complex))
        lad = np.real(np.asarray(polynomials.rodrigues_ladder(fam, n, x), dtype=complex))
        worst = max(worst, float(np.max(np.abs(lad - ref)) / max(np.max(np.abs(ref)), 1.0)))
    return worst


def _suite_shape(fam):
    out = []
    if fam.category == "rdQM":
        out.append(Check("shape.invariance", "shape-invariance conditions on the lattice",
                         max(operators.shape_invariance_residual(fam)), 1e-11))
    out.append(Check("shape.rodrigues", "ladder of backward shifts reproduces P_n, n <= 10",
                     _rodrigues_residual(fam), 1e-9))
    E = np.array([float(np.real(fam.energy(n))) for n in range(1, 7)])
    Es = np.array([float(np.real(energy_from_shape_invariance(fam, n))) for n in range(1, 7)])
    out.append(Check("shape.energy", "energies summed from E(1) along the shifted parameters",
                     float(np.max(np.abs(Es - E)) / np.max(np.abs(E))), 1e-12))
    return out


def _suite_difference(fam):
    top = 6 if fam.N is None else min(6, fam.N)
    return [Check("difference.equation", "P_n solves the difference/differential equation, n <= 6",
                  max(polynomials.difference_equation_residual(fam, n) for n in range(top + 1)), 1e-9),
            Check("difference.factorization", "B F P_n = E(n) P_n",
                  polynomials.factorization_check(fam, top), 1e-9)]


def _suite_closure(fam):
    if fam.category != "rdQM":
        return []
    return [Check("closure.relation", "closure relation [H,[H,eta]]", operators.closure_residual(fam), 1e-10),
            Check("closure.dual", "dual closure relation [eta,[eta,H]]", operators.dual_closure_residual(fam), 1e-10),
            Check("closure.alpha", "alpha_+- are energy gaps", operators.perfect_square_residual(fam), 1e-10),
            Check("closure.algebra", "cubic algebra relations from the two closures",
                  max(operators.askey_wilson_algebra_residual(fam)), 1e-10)]


def _suite_ladder(fam):
    if fam.category != "rdQM":
        return []
    rep = operators.ladder_checks(fam)
    vals = [rep.hermiticity, rep.commutator, rep.raising, rep.lowering, rep.product,
            rep.off_diagonal, rep.eta_tridiagonal]
    return [Check("ladder.identities", "a+- ladder coefficients and eta three-term action", max(vals), 1e-9),
            Check("ladder.ground", "A phi0 = 0", operators.ground_annihilation_residual(fam), 1e-12),
            Check("ladder.htilde_constant", "H~ annihilates constants", operators.htilde_constant_residual(fam), 1e-12)]


def _heisenberg_times(fam):
    return (0.1, 0.5, 1.0) if fam.N is not None else (0.1, 0.5)


def _suite_heisenberg(fam, times=None):
    if fam.category != "rdQM":
        return []
    times = times or _heisenberg_times(fam)
    return [Check("heisenberg.solution", "e^{itH} eta e^{-itH} in closed form at t = "
                  + ", ".join(f"{t:g}" for t in times), operators.heisenberg_check(fam, times), 1e-8)]


def _suite_unified(fam):
    out = []
    if fam.category == "rdQM":
        out.append(Check("unified.potentials", "L = 2 coefficient fit reproduces B, D",
                         unified.potential_reproduction_residual(fam), 1e-10))
    if fam.category != "oQM":
        out.append(Check("unified.bochner", "V+- recovered from n = 1, 2 data",
                         unified.bochner_recover(fam)[2], 1e-10))
    return out


SUITES = {
    "spectrum": _suite_spectrum,
    "orthogonality": _suite_orthogonality,
    "duality": _suite_duality,
    "shape": _suite_shape,
    "difference": _suite_difference,
    "closure": _suite_closure,
    "ladder": _suite_ladder,
    "heisenberg": _suite_heisenberg,
    "unified": _suite_unified,
}


def run_suites(fam, names):
    checks = []
    for name in names:
        checks.extend(SUITES[name](fam))
    return checks


# subcommands

def cmd_families(args):
    rows = [{"id": fid, "category": CATEGORY[fid], "parameters": list(cls.param_names), "q": bool(cls.q_family),
             "constraints": CONSTRAINTS[fid]} for fid, cls in FAMILIES.items()]
    if args.json or args.out:
        _emit(json.dumps({"schema_version": SCHEMA_VERSION, "families": rows}, indent=2) + "\n", args.out)
    else:
        for r in rows:
            q = ", q" if r["q"] else ""
            print(f"{r['id']:<3} {r['category']:<5} ({', '.join(r['parameters'])}{q}): {r['constraints']}")
    return 0


def cmd_tabulate(args):
    fam = _family_from(args)
    if fam.category != "rdQM" and not args.x:
        raise UsageError("--x is required for oQM/idQM tables")
    _emit(polynomials.tabulate(fam, args.n_top, _points(args.x)), args.out)
    return 0


def cmd_spectrum(args):
    fam = _family_from(args)
    if fam.category != "rdQM":
        raise UsageError("spectrum is defined for the rdQM families M, R, qR")
    started = time.perf_counter()
    n = _levels(fam)
    res, vals, E = lattice.spectrum_residual(fam, n)
    dec = lattice.eigendecompose(lattice.build_hamiltonian(fam))
    checks = [Check("spectrum.eigenvalues", "Jacobi-matrix spectrum equals closed-form energies",
                    res, 1e-8 if fam.N is None else 1e-10)]
    extra = {"family": fam.id, "params": fam.describe()["params"],
             "eigenvalues": dec.eigenvalues, "closed_form": np.asarray(fam.energy(np.arange(len(dec.eigenvalues)))),
             "compared_levels": n, "max_rel_residual": res}
    return _report("spectrum", fam.describe(), checks, args, started, extra)


def cmd_verify(args):
    fam = _family_from(args)
    started = time.perf_counter()
    names = list(SUITES) if args.suite == "all" else [args.suite]
    checks = run_suites(fam, names)
    return _report(args.suite, fam.describe(), checks, args, started, {"suites": names})


def cmd_heisenberg(args):
    fam = _family_from(args)
    if fam.category != "rdQM":
        raise UsageError("heisenberg is defined for the rdQM families")
    started = time.perf_counter()
    times = tuple(_points(args.t)) if args.t else None
    return _report("heisenberg", fam.describe(), _suite_heisenberg(fam, times), args, started)


def cmd_crum(args):
    fam = _family_from(args)
    started = time.perf_counter()
    try:
        deletion = [int(v) for v in args.delete.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad deletion list {args.delete!r}") from None
    subject = dict(fam.describe(), deletion=deletion)
    try:
        system = crum.krein_adler(fam, deletion)
    except DQMError as exc:
        return _report("crum", subject, [], args, started, error=exc)
    res, vals, E = system.spectrum_residual()
    norm_res = crum.norm_identity_residual(system)
    checks = [Check("crum.spectrum", "deleted Hamiltonian keeps the surviving energies", res, 1e-9),
              Check("crum.norms", "norm identity of the deleted eigenvectors", norm_res, 1e-8),
              Check("crum.eigenvectors", "Casoratian eigenvectors", crum.eigenvector_residual(system), 1e-8),
              Check("crum.annihilation", "A_bar annihilates the new ground state", crum.annihilation_residual(system), 1e-10)]
    extra = {"x": system.x, "B_bar": system.B_bar, "D_bar": system.D_bar,
             "surviving_levels": system.surviving_levels, "eigenvalues": vals, "closed_form": E}
    return _report("crum", subject, checks, args, started, extra)


def _deformed_from(args):
    params = _parse_params(args.params)
    if args.config:
        base = load_config(args.config)
        fam = exceptional.DeformedFamily(base, args.kind, args.ell)
    else:
        fam = exceptional.make_deformed(args.kind, params, args.ell, q=args.q, N=args.N)
    return fam


def exceptional_checks(fam, seed=0):
    """All checks that apply to a deformation kind, as Check records."""
    pts = exceptional.default_points(fam, seed=seed)
    out = []
    r = exceptional.xi_identities_check(fam, pts)
    out += [Check("xi.forward", "xi identity linking lambda and lambda + delta (f-hat_0)", r[0], 1e-9),
            Check("xi.backward", "xi identity linking lambda + delta and lambda (b-hat_0)", r[1], 1e-9),
            Check("xi.equation", "xi solves the twisted difference/differential equation", r[2], 1e-9)]
    pos = exceptional.positivity_scan(fam)
    out.append(Check("xi.positivity", "deforming polynomial has no zero on the needed domain",
                     0.0 if pos.ok else 1.0, 0.0))
    if not pos.ok:
        return out
    ham = exceptional.build_deformed_hamiltonian(fam)
    if fam.category == "rdQM":
        out += [Check("deformed.boundary", "D_l(0) = 0 and B_l(x_max^l) = 0", ham.boundary_residual, 1e-12),
                Check("deformed.spectrum", "deformed spectrum equals E(n; lambda + l delta)",
                      ham.spectrum_residual, 1e-9 if fam.finite else 1e-8),
                Check("deformed.eigenvectors", "eigenvectors proportional to psi_l P_{l,n}",
                      ham.eigenvector_residual, 1e-9 if fam.finite else 1e-4)]
        out.append(Check("deformed.difference", "H~_l P_{l,n} = E(n; lambda + l delta) P_{l,n}",
                         exceptional.deformed_difference_residual(fam, 4), 1e-9))
    else:
        out.append(Check("deformed.difference", "psi_l P_{l,n} are eigenfunctions of H_l, n <= 4",
                         ham.equation_residual, 1e-9))
    si = exceptional.deformed_shape_invariance(fam)
    out.append(Check("deformed.shape_invariance", "shape invariance of the deformed potentials", max(si), 1e-10))
    if fam.category != "idQM" or fam.kind == "XMP":
        tol = {"rdQM": 1e-9, "oQM": 1e-7, "idQM": 1e-6}[fam.category]
        out.append(Check("exceptional.orthogonality", "Gram matrix of P_{l,n} with closed-form norms",
                         exceptional.exceptional_orthogonality(fam), tol))
    it = exceptional.intertwiner_check(fam, x=None if fam.category != "idQM" else pts)
    out += [Check("intertwiner.original", "A-hat^dagger A-hat = kappa-hat (H(lambda + l delta + delta~) + f0 b0)", it.h_plus, 1e-9),
            Check("intertwiner.deformed", "A-hat A-hat^dagger = kappa-hat (H_l + f0 b0)", it.h_minus, 1e-9),
            Check("intertwiner.forward", "F-hat P_n = f-hat_{l,n} P_{l,n}", it.forward, 1e-9),
            Check("intertwiner.backward", "B-hat P_{l,n} = b-hat_{l,n} P_n", it.backward, 1e-9),
            Check("intertwiner.energy", "E(n; lambda + l delta) = f-hat_n b-hat_n - f-hat_0 b-hat_0", it.energy, 1e-12),
            Check("intertwiner.shift_forward", "s-hat intertwining of F-hat with F and F_l", it.shift_forward, 1e-9),
            Check("intertwiner.shift_backward", "s-hat intertwining of F-hat with B and B_l", it.shift_backward, 1e-9)]
    top = 3 if not fam.finite else min(3, fam.n_max)
    zc = max(abs(exceptional.zero_count(fam, n) - n) for n in range(top + 1))
    dg = max(abs(exceptional.exceptional_degree(fam, n) - (fam.ell + n)) for n in range(top + 1))
    out += [Check("exceptional.zeros", "P_{l,n} has n zeros in the physical region", float(zc), 0.0),
            Check("exceptional.degree", "P_{l,n} has degree l + n in eta", float(dg), 0.0)]
    if fam.kind in ("XJ1", "XJ2"):
        p = fam.base.params
        g, h = (p["g"], p["h"]) if fam.kind == "XJ2" else (p["h"], p["g"])
        m = max(exceptional.mirror_check_xj(g, h, fam.ell, n) for n in range(4))
        out.append(Check("exceptional.mirror", "XJ2 / XJ1 mirror identity", m, 1e-11))
    return out


def cmd_exceptional(args):
    fam = _deformed_from(args)
    started = time.perf_counter()
    subject = dict(fam.base.describe(), kind=fam.kind, ell=fam.ell)
    if args.emit_table:
        if fam.category != "rdQM" and not args.x:
            raise UsageError("--x is required for oQM/idQM tables")
        text = exceptional.exceptional_table(fam, args.n_top, _points(args.x))
        if fam.category != "idQM":
            text += "# zeros\n"
            for n in range(args.n_top + 1):
                z = exceptional.zeros(fam, n)
                text += ",".join([f"n={n}"] + [format(float(v), ".17g") for v in z]) + "\n"
        _emit(text, args.out)
        return 0
    try:
        checks = exceptional_checks(fam, args.seed) if args.verify == "all" else []
    except DQMError as exc:
        return _report("exceptional", subject, [], args, started, error=exc)
    extra = {"f_hat_0": fam.f_hat(0), "b_hat_0": fam.b_hat(0), "kappa_hat": fam.kappa_hat}
    if checks and fam.ell >= 1:
        # size of the misfit of eta P_{l,1} by P_{l,0..2}; nonzero when no three-term recurrence exists
        extra["recurrence_witness"] = exceptional.recurrence_witness(fam)
    return _report("exceptional", subject, checks, args, started, extra)


COORD_KEYS = ("coord", "gamma", "d", "q", "eps_prime")


def load_potential_spec(path):
    """Read a unified-theory spec file.

    Lines are ``key = value``; ``#`` starts a comment. Keys: ``L``,
    ``v.<k>.<l>`` for the coefficients v_{k,l}, and the coordinate options
    ``coord``, ``gamma``, ``d``, ``q``, ``eps_prime``.
    """
    out = {"L": None, "v": {}}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (t.strip() for t in line.split("=", 1))
            if key == "coord":
                # primes are part of the lattice ids, so only matching quotes are removed
                if len(val) >= 2 and val[0] == val[-1] and val[0] in "\"'":
                    val = val[1:-1]
                out["coord"] = val
                continue
            try:
                num = float(val)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: not a number: {val!r}") from None
            if key == "L":
                out["L"] = int(num)
            elif key.startswith("v."):
                parts = key.split(".")
                if len(parts) != 3 or not all(t.isdigit() for t in parts[1:]):
                    raise UsageError(f"{path}:{lineno}: expected v.<k>.<l>")
                out["v"][(int(parts[1]), int(parts[2]))] = num
            elif key in COORD_KEYS:
                out[key] = num
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def cmd_unified(args):
    started = time.perf_counter()
    if args.family or args.config:
        fam = _family_from(args)
        return _report("unified", fam.describe(), _suite_unified(fam), args, started)
    if not args.spec:
        raise UsageError("unified needs --spec (or --family)")
    data = load_potential_spec(args.spec)
    opts = {k: data.get(k) for k in COORD_KEYS}
    for k in COORD_KEYS:
        flag = getattr(args, k, None)
        if flag is not None:
            opts[k] = flag
    if opts["coord"] is None:
        raise UsageError("no coordinate: give --coord or coord = ... in the spec file")
    L = args.L if args.L is not None else data["L"]
    if L is None:
        raise UsageError("L is given neither by --L nor in the spec file")
    coord = unified.coordinate(opts["coord"], gamma=1.0 if opts["gamma"] is None else opts["gamma"],
                               d=opts["d"], q=opts["q"],
                               eps_prime=1 if opts["eps_prime"] is None else opts["eps_prime"])
    spec = unified.PotentialSpec(L, data["v"])
    if L == 4 and args.constrain:
        spec = unified.qes_constrained_spec(coord, spec, args.M)
    subject = {"coord": opts["coord"], "L": L, "M": args.M,
               "v": {f"{k},{l}": c for (k, l), c in sorted(spec.v.items())}}
    subject.update({k: opts[k] for k in ("gamma", "d", "q") if opts[k] is not None})
    tri = unified.triangularity_check(coord, spec, args.n_max)
    checks = [Check("unified.triangularity", f"deg H~ eta^n <= n + L - 2 for n <= {args.n_max}",
                    0.0 if tri.bound_ok else 1.0, 0.0)]
    extra = {"degrees": list(tri.degrees)}
    if L in (3, 4) and args.M is not None:
        try:
            qes = unified.qes_compensation(coord, spec, args.M)
        except ConstraintError as exc:
            return _report("unified", subject, checks, args, started, extra, error=exc)
        checks += [Check("unified.qes_constraint", "compensation system consistency", qes.constraint_residual, 1e-9),
                   Check("unified.qes_invariance", "H~' keeps polynomials of degree <= M", qes.invariance_residual, 1e-9)]
        extra.update(e0=qes.e0, e1=qes.e1)
    return _report("unified", subject, checks, args, started, extra)


def build_parser():
    p = argparse.ArgumentParser(prog="dqm", description="Solvable quantum mechanics toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("families", help="list the nine families and their parameter constraints")
    s.add_argument("--json", action="store_true")
    _add_common(s)
    s.set_defaults(func=cmd_families)

    s = sub.add_parser("tabulate", help="CSV of P_0..P_n")
    _add_family_args(s)
    s.add_argument("--n-top", type=int, default=5, dest="n_top")
    s.add_argument("--x", help="comma-separated sample points (required off the lattice)")
    _add_common(s)
    s.set_defaults(func=cmd_tabulate)

    s = sub.add_parser("spectrum", help="Jacobi-matrix spectrum against closed form")
    _add_family_args(s)
    _add_common(s)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("verify", help="run verification suites on one family")
    _add_family_args(s)
    s.add_argument("--suite", choices=["all"] + list(SUITES), default="all")
    _add_common(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("crum", help="Krein-Adler deletion")
    _add_family_args(s)
    s.add_argument("--delete", required=True, help="comma-separated levels to delete")
    _add_common(s)
    s.set_defaults(func=cmd_crum)

    s = sub.add_parser("exceptional", help="X_l deformations")
    s.add_argument("--kind", required=True, choices=sorted(exceptional.KIND_BASE))
    s.add_argument("--ell", type=int, required=True)
    s.add_argument("--params", default="")
    s.add_argument("--N", type=int)
    s.add_argument("--q", type=float)
    s.add_argument("--config")
    s.add_argument("--verify", choices=["all", "none"], default="all")
    s.add_argument("--emit-table", action="store_true", dest="emit_table")
    s.add_argument("--n-top", type=int, default=3, dest="n_top")
    s.add_argument("--x", help="sample points for oQM/idQM tables")
    _add_common(s)
    s.set_defaults(func=cmd_exceptional)

    s = sub.add_parser("unified", help="potentials from v_{k,l}; QES compensation")
    s.add_argument("--coord")
    s.add_argument("--L", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--spec", help="key = value file: L, v.<k>.<l>, coord, gamma, d, q")
    s.add_argument("--gamma", type=float)
    s.add_argument("--d", type=float)
    s.add_argument("--eps-prime", type=float, dest="eps_prime")
    s.add_argument("--n-max", type=int, default=6, dest="n_max")
    s.add_argument("--constrain", action="store_true", help="L=4: solve v31 from the constraint first")
    _add_family_args(s)
    _add_common(s)
    s.set_defaults(func=cmd_unified)

    s = sub.add_parser("heisenberg", help="closed-form Heisenberg operator check")
    _add_family_args(s)
    s.add_argument("--t", help="comma-separated times")
    _add_common(s)
    s.set_defaults(func=cmd_heisenberg)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterError, FileNotFoundError) as exc:
        parser.error(str(exc))
    except DQMError as exc:
        print(f"dqm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
