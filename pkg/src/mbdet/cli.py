"""Command-line entry point ``mb``.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import equilibrium as eq
from . import oracle
from . import sampler as smp
from . import verify
from .ensemble import EQUILIBRIUM, EnsembleSpec, validate_spec
from .errors import MBError, NumericalError, ValidationError


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems share exit code 1 with invalid input; 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunManifest:
    """Reproducibility record written once per invocation."""

    def __init__(self, argv, command):
        self.argv = list(argv)
        self.command = command
        self.spec_sha256 = None
        self.seeds = []
        self.started = datetime.now(timezone.utc).isoformat()
        self.outputs = []

    def add_output(self, path):
        self.outputs.append(Path(path))

    def to_dict(self) -> dict:
        return {
            "argv": self.argv,
            "command": self.command,
            "spec_sha256": self.spec_sha256,
            "seeds": self.seeds,
            "version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.outputs if p.is_file()],
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _json_default(o):
    if isinstance(o, complex):
        return o.real if o.imag == 0 else [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, default=_json_default, sort_keys=True)


def _emit(obj, path, manifest):
    text = _dump(obj)
    if path:
        Path(path).write_text(text + "\n")
        manifest.add_output(path)
    else:
        print(text)


def _load_spec(args, manifest) -> EnsembleSpec:
    spec = EnsembleSpec.load(args.spec)
    manifest.spec_sha256 = _sha256(args.spec)
    return spec


def _policy(args) -> oracle.PrecisionPolicy:
    kw = {}
    if getattr(args, "base_bits", None):
        kw["base_bits"] = args.base_bits
    if getattr(args, "per_n_bits", None):
        kw["per_n_bits"] = args.per_n_bits
    return oracle.PrecisionPolicy.from_env(**kw)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_eq(args, man):
    spec = validate_spec(_load_spec(args, man), EQUILIBRIUM)
    data = asy.equilibrium_for(spec)
    out = data.to_dict()
    out["A_a"], out["A_b"] = eq.edge_coefficients(data)
    if args.grid:
        xs = np.linspace(spec.a, spec.b, args.grid + 2)[1:-1]
        rows = np.column_stack([xs, eq.density(xs, data), eq.cdf(xs, data), eq.log_potential(xs, data)])
        np.savetxt(args.grid_out, rows, delimiter=",", fmt="%.17g",
                   header="x,rho,cdf,log_potential", comments="")
        man.add_output(args.grid_out)
    _emit(out, args.json_out, man)


def cmd_constants(args, man):
    spec = _load_spec(args, man)
    consts = asy.constants(spec)
    _emit(consts.to_dict(asy.equilibrium_for(spec).ell), args.json_out, man)


def cmd_oracle(args, man):
    spec = _load_spec(args, man)
    recs = oracle.log_det_sweep(spec, args.nmin, args.nmax, _policy(args), verify=not args.no_verify)
    oracle.write_records_csv(recs, args.out)
    man.add_output(args.out)


def _fit_window(recs, nmin, nmax):
    return [r for r in recs if nmin <= r.n <= nmax]


def cmd_fit(args, man):
    spec = _load_spec(args, man)
    if not Path(args.dets).is_file():
        raise ValidationError(f"determinant file not found: {args.dets}")
    recs = _fit_window(oracle.read_records_csv(args.dets), args.nmin, args.nmax)
    fit = verify.fit_spec(recs, spec, args.inverse_n, oscillation=not args.no_oscillation)
    rep = verify.fit_report(fit, asy.constants(spec))
    _emit(rep, args.json_out, man)
    return 0


def cmd_sample(args, man):
    spec = _load_spec(args, man)
    cfg = smp.ChainConfig(args.n, args.steps, args.burn_in if args.burn_in is not None else args.steps // 10,
                          args.thin, args.sigma, args.seed)
    batches = smp.sample_chains(spec, cfg, args.chains)
    man.seeds = [b.seed for b in batches]
    meta = smp.write_samples(batches, args.out)
    man.add_output(args.out)
    man.add_output(meta)


def _t_list(args, spec):
    if args.t:
        return args.t
    return [spec.a + (spec.b - spec.a) / 3.0, spec.a + 2.0 * (spec.b - spec.a) / 3.0]


def cmd_clt(args, man):
    spec = _load_spec(args, man)
    data = asy.equilibrium_for(spec)
    batches = smp.read_samples(args.samples)
    rep = smp.clt_report(batches, _t_list(args, spec), data, min_ess=args.min_ess)
    _emit(rep, args.json_out, man)


def cmd_rigidity(args, man):
    spec = _load_spec(args, man)
    data = asy.equilibrium_for(spec)
    batches = smp.read_samples(args.samples)
    rep = smp.rigidity_report(batches, args.delta, args.epsilon, data)
    _emit(rep, args.json_out, man)


def cmd_report(args, man):
    spec = _load_spec(args, man)
    budget = {"n": args.n, "chains": args.chains, "steps": args.steps, "seed": args.seed,
              "rigidity_chains": args.rigidity_chains}
    rep = end_to_end_report(spec, _policy(args), (args.nmin, args.nmax), budget)
    man.seeds = rep.get("seeds", [])
    _emit(rep, args.json_out, man)


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------
class _Stage:
    def __init__(self, name, log):
        self.name, self.log = name, log

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, ev, tb):
        self.log[self.name] = round(time.perf_counter() - self.t0, 3)
        if isinstance(ev, MBError) and ev.args and not str(ev.args[0]).startswith("["):
            ev.args = (f"[{self.name}] {ev.args[0]}",) + ev.args[1:]
        return False


def end_to_end_report(spec: EnsembleSpec, policy: oracle.PrecisionPolicy,
                      window=(8, 24), budget: dict | None = None) -> dict:
    """Equilibrium, constants, oracle sweep, fit, kappa ratios and sampler checks.

    Returns a JSON-ready bundle with one pass flag per check.  Sampler checks
    run on the base weight; they are skipped when ``budget`` is None or has
    ``chains == 0``.
    """
    budget = budget or {}
    timings: dict = {}
    checks: dict = {}
    out = {"spec": spec.to_dict(), "window": list(window), "timings": timings, "checks": checks}

    with _Stage("equilibrium", timings):
        validate_spec(spec, EQUILIBRIUM)
        data = asy.equilibrium_for(spec)
        xs = np.linspace(spec.a, spec.b, 11)[1:-1]
        norm = eq.integrate_against_density(lambda x: np.ones_like(x), data)
        el = max(abs(eq.el_residual(float(x), data)) for x in xs)
        rt = float(np.max(np.abs(data.J(eq.boundary_values(xs, data)) - xs)))
        pole = float(np.max(np.abs(eq.density(xs, data) - eq.density_from_poles(xs, data))))
        out["equilibrium"] = data.to_dict()
        checks["equilibrium"] = {"normalization_err": abs(norm - 1), "el_residual": el,
                                 "roundtrip": rt, "density_forms": pole,
                                 "pass": abs(norm - 1) <= 1e-10 and el <= 1e-7
                                 and rt <= 1e-12 and pole <= 1e-10}
    with _Stage("constants", timings):
        consts = asy.constants(spec, data)
        out["constants"] = consts.to_dict(data.ell)
        if spec.theta == 1.0 and not spec.singularities and not spec.w_smooth \
                and spec.alpha_left == 0 and spec.alpha_right == 0:
            ref = verify.theta1_reference(spec.a, spec.b)
            errs = {"c0": abs(data.c0 - ref["c0"]), "c1": abs(data.c1 - ref["c1"]),
                    "C1": abs(consts.C1 - ref["C1"]), "C2": abs(consts.C2 - ref["C2"]),
                    "C3": abs(consts.C3 - ref["C3"])}
            checks["theta1_closed_form"] = {"abs_err": errs, "pass": max(errs.values()) <= 1e-12}
    with _Stage("oracle", timings):
        recs = oracle.log_det_sweep(spec, 1, window[1] + 1, policy)
        checks["oracle_precision"] = {"max_err_estimate": max(r.err_estimate for r in recs),
                                      "pass": True}
    with _Stage("fit", timings):
        fit = verify.fit_spec(_fit_window(recs, *window), spec)
        checks["fit"] = verify.fit_report(fit, consts)
    with _Stage("kappa", timings):
        if spec.is_positive():
            rep = verify.kappa_convergence_report(spec, policy, list(range(window[0], window[1] - 3)))
            checks["kappa"] = rep

    chains = int(budget.get("chains", 0) or 0)
    if chains > 0:
        with _Stage("sampler", timings):
            base = spec.base()
            n = int(budget.get("n", 100))
            steps = int(budget.get("steps", 200000))
            seed = int(budget.get("seed", 0))
            cfg = smp.ChainConfig(n, steps, max(steps // 20, 1000 if steps > 2000 else steps // 2),
                                  10, 0.05, seed)
            batches = smp.sample_chains(base, cfg, chains)
            out["seeds"] = [b.seed for b in batches]
            tmid = 0.5 * (spec.a + spec.b)
            t_list = spec.locations or [spec.a + (spec.b - spec.a) / 3.0, spec.a + 2.0 * (spec.b - spec.a) / 3.0]
            bdata = asy.equilibrium_for(base)
            counts = np.concatenate([b.trace for b in batches]).astype(float)
            ess = sum(b.ess_estimate for b in batches)
            m_pred, v_pred = asy.predict_counting_stats(tmid, n, bdata)
            checks["counting"] = {
                "t": tmid, "mean": counts.mean(), "mean_pred": m_pred,
                "variance": counts.var(), "variance_pred": v_pred, "ess": ess,
                "pass": bool(abs(counts.mean() - m_pred) <= 1
                             and 0.7 <= counts.var() / v_pred <= 1.3),
            }
            try:
                checks["clt"] = smp.clt_report(batches, t_list, bdata)
            except smp.InsufficientESS as exc:
                checks["clt"] = {"pass": False, "error": str(exc)}
            rig_chains = int(budget.get("rigidity_chains", 0) or 0)
            if rig_chains:
                rcfg = smp.ChainConfig(n, 2000 + 40 * 5, 2000, 40, 0.05, seed + 1)
                rb = smp.sample_chains(base, rcfg, rig_chains)
                rep = smp.rigidity_report(rb, 0.1 * (spec.b - spec.a), 1.0, bdata)
                rep["pass"] = rep["violation_freq"] <= 0.05
                checks["rigidity"] = rep
    out["pass"] = all(bool(c.get("pass")) for c in checks.values())
    return out


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mb", description="Muttalib-Borodin determinant toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--manifest", help="manifest path (default: next to the first output)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_spec(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--spec", required=True, help="ensemble spec JSON")
        return sp

    def json_flag(sp):
        sp.add_argument("--json", dest="json_out", nargs="?", const=None, default=None,
                        metavar="PATH", help="write JSON to PATH (stdout if omitted)")

    sp = with_spec("eq", "equilibrium data")
    json_flag(sp)
    sp.add_argument("--grid", type=int, default=0, help="number of interior grid points for CSV output")
    sp.add_argument("--grid-out", default="equilibrium.csv")
    sp.set_defaults(func=cmd_eq)

    sp = with_spec("constants", "asymptotic constants C1, C2, C3")
    json_flag(sp)
    sp.set_defaults(func=cmd_constants)

    def precision_flags(sp):
        sp.add_argument("--base-bits", type=int)
        sp.add_argument("--per-n-bits", type=int)

    sp = with_spec("oracle", "determinant sweep to CSV")
    sp.add_argument("--nmin", type=int, default=1)
    sp.add_argument("--nmax", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-verify", action="store_true", help="skip the doubled-precision recheck")
    precision_flags(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = with_spec("fit", "fit the expansion to a determinant CSV")
    sp.add_argument("--dets", required=True)
    sp.add_argument("--nmin", type=int, default=8)
    sp.add_argument("--nmax", type=int, default=24)
    sp.add_argument("--inverse-n", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--no-oscillation", action="store_true")
    json_flag(sp)
    sp.set_defaults(func=cmd_fit)

    sp = with_spec("sample", "Metropolis chains to CSV")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--chains", type=int, default=1)
    sp.add_argument("--steps", type=int, default=200000, help="sweeps per chain")
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int, default=10)
    sp.add_argument("--sigma", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample)

    sp = with_spec("clt", "CLT diagnostics from samples")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--t", type=float, nargs="+")
    sp.add_argument("--min-ess", type=float, default=1e4)
    json_flag(sp)
    sp.set_defaults(func=cmd_clt)

    sp = with_spec("rigidity", "rigidity bounds from samples")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--delta", type=float, default=0.3)
    sp.add_argument("--epsilon", type=float, default=1.0)
    json_flag(sp)
    sp.set_defaults(func=cmd_rigidity)

    sp = with_spec("report", "end-to-end pipeline")
    sp.add_argument("--nmin", type=int, default=8)
    sp.add_argument("--nmax", type=int, default=24)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--chains", type=int, default=0)
    sp.add_argument("--steps", type=int, default=200000)
    sp.add_argument("--rigidity-chains", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    precision_flags(sp)
    json_flag(sp)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    man = RunManifest(argv, argv[0] if argv else None)
    try:
        args = build_parser().parse_args(argv)
        man.command = args.command
        rc = args.func(args, man) or 0
    except ValidationError as exc:
        print(f"mb: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"mb: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    path = args.manifest or (str(man.outputs[0]) + ".manifest.json" if man.outputs
                             else f"mb-{args.command}.manifest.json")
    man.write(path)
    return rc


if __name__ == "__main__":
    sys.exit(main())
