"""Command-line front end.

    partialnull [--config PATH | --preset NAME] [--out DIR] [--seed N] [--threads N] [--json] COMMAND

Commands: check, synthesize, witness, hum. Exit codes: 0 completed (whatever
the verdict), 2 input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__, kalman, moments, spectral, witness
from .io import atomic_write, csv_text, json_text, parse_number
from .schemas import SCHEMAS, with_defaults

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


NUMERIC_ERRORS = (np.linalg.LinAlgError, moments.BiorthogonalityError, moments.AdmissibilityError,
                  witness.WitnessError, spectral.QuadratureError, FloatingPointError, ArithmeticError)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def list_presets() -> list:
    return sorted(p.name[:-5] for p in resources.files("partialnull.presets").iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    f = resources.files("partialnull.presets") / f"{name}.json"
    if not f.is_file():
        raise InputError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return json.loads(f.read_text(encoding="utf-8"))


def load_config(command: str, path: str | None, preset: str | None) -> dict:
    if path and preset:
        raise InputError("use either --config or --preset, not both")
    if preset:
        doc = load_preset(preset)
        if doc.get("command") != command:
            raise InputError(f"preset {preset!r} is for command {doc.get('command')!r}, not {command!r}")
        cfg = doc["config"]
    elif path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise InputError(f"malformed JSON in {path}: line {e.lineno} column {e.colno}: {e.msg}") from e
        except OSError as e:
            raise InputError(f"cannot read config {path}: {e}") from e
    else:
        cfg = {}
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
        full = with_defaults(command, cfg)
        jsonschema.validate(full, SCHEMAS[command])
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InputError(f"config error at {where}: {e.message}") from e
    return full


def _domain(d) -> spectral.IntervalDomain:
    return spectral.IntervalDomain(parse_number(d["a"]), parse_number(d["b"]))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _poly(entries, name):
    try:
        return kalman.MatrixPoly.from_entries(entries)
    except kalman.DimensionError as e:
        raise InputError(f"{name}: {e}") from e


def cmd_check(cfg: dict, out: str, seed: int, threads: int) -> dict:
    A = _poly(cfg["A"], "A")
    B = _poly(cfg["B"], "B")
    n = A.rows
    if A.cols != n:
        raise InputError(f"A must be square, got {A.rows}x{A.cols}")
    if B.rows != n:
        raise InputError(f"B must have {n} rows, got {B.rows}")
    p = cfg["p"]
    if p > n:
        raise InputError(f"p={p} exceeds n={n}")
    T = parse_number(cfg["T"])
    tol = cfg["tol_rel"]
    report = {"command": "check"}
    if cfg["mode"] == "constant":
        if A.degree or B.degree:
            raise InputError("constant mode needs degree-0 entries; use mode 'time'")
        A0, B0 = A.coeffs[0], B.coeffs[0]
        v = kalman.check_partial_constant(A0, B0, p, tol)
        report["verdict"] = v.to_dict()
        if cfg["oracle"]:
            o = kalman.gramian_oracle(A0, B0, p, T, tol)
            report["oracle"] = o.to_dict()
            report["oracle_agrees"] = o.controllable == v.controllable
        basis = kalman.extract_basis(A0, B0, tol)
        report["basis"] = {"r": basis.r, "l_j": [l + 1 for l in basis.l_j], "s_j": list(basis.s_j),
                           "S_i": [s + 1 for s in basis.S_i], "s": basis.s}
        if cfg["transform"]:
            Q, rows = kalman.permute_rows(A0, B0, min(p, basis.s) or 1, tol)
            At, Bt = Q @ A0 @ Q.T, Q @ B0
            tr = kalman.build_transform(At, Bt, kalman.extract_basis(At, Bt, tol), T)
            res = kalman.transform_residual(tr, At)
            atomic_write(os.path.join(out, "check_transform.csv"),
                         csv_text(["t", "residual", "condition"], zip(tr.times, res, tr.conditions)))
            report["transform"] = {"permuted_rows": [r + 1 for r in rows], "C_tilde": tr.C_tilde,
                                   "D": tr.D, "T_star": tr.T_star, "max_residual": float(res.max())}
    else:
        v = kalman.check_partial_time(A, B, p, T, tol)
        report["verdict"] = v.to_dict()
        if cfg["scan_times"]:
            times = [parse_number(t) for t in cfg["scan_times"]]
            report["scan"] = [{"t": t, "rank": r} for t, r in kalman.scan_times(A, B, p, times, tol)]
    rnd = cfg.get("random_instances")
    if rnd:
        rng = np.random.default_rng(seed)
        cnt, nmax, eb = rnd.get("count", 200), rnd.get("n_max", 4), rnd.get("entry_bound", 2)
        rows, agree = [], 0
        for i in range(cnt):
            nn = int(rng.integers(1, nmax + 1))
            mm = int(rng.integers(1, nn + 1))
            pp = int(rng.integers(1, nn + 1))
            Ai = rng.integers(-eb, eb + 1, (nn, nn)).astype(float)
            Bi = rng.integers(-eb, eb + 1, (nn, mm)).astype(float)
            a = kalman.check_partial_constant(Ai, Bi, pp, tol)
            b = kalman.gramian_oracle(Ai, Bi, pp, T, tol)
            agree += a.controllable == b.controllable
            rows.append((i, nn, mm, pp, a.rank, b.rank, a.controllable, b.controllable))
        atomic_write(os.path.join(out, "check_random.csv"),
                     csv_text(["instance", "n", "m", "p", "kalman_rank", "oracle_rank", "kalman", "oracle"], rows))
        report["random_instances"] = {"count": cnt, "agree": agree}
    report["summary"] = {"controllable": report["verdict"]["controllable"], "rank": report["verdict"]["rank"],
                         "required": p, "sufficient_only": report["verdict"]["sufficient_only"]}
    return report


def _alpha_series(a: dict, dom, K: int) -> spectral.CouplingSpec:
    P = 2 * K + 1
    if "cosine_coeffs" in a:
        return spectral.CouplingSpec(np.asarray(a["cosine_coeffs"], dtype=float), dom)
    if "geometric" in a:
        g = a["geometric"]
        c = np.exp(-g["rate"] * np.arange(P + 1, dtype=float))
        c[0] = g.get("alpha0", 0.0)
        return spectral.CouplingSpec(c, dom, tail_bound=float(np.exp(-g["rate"] * (P + 1)) / (1 - np.exp(-g["rate"]))))
    s = a["strided_power"]
    return spectral.CouplingSpec.strided_power(s["stride"], s.get("power", 2.0), max(P, s["stride"]), dom)


def _field(c, K, dom):
    v = np.zeros(K)
    n = min(K, len(c))
    v[:n] = c[:n]
    return spectral.SpectralField(v, dom)


def cmd_synthesize(cfg: dict, out: str, seed: int, threads: int) -> dict:
    dom = _domain(cfg["domain"])
    K, T = cfg["K"], parse_number(cfg["T"])
    if T <= 0:
        raise InputError("T must be positive")
    omega = tuple(parse_number(v) for v in cfg["omega"])
    if len(cfg["y0"]) > K or len(cfg["z0"]) > K:
        raise InputError(f"initial data have more than K={K} coefficients")
    spec = _alpha_series(cfg["alpha"], dom, K)
    A = spectral.coupling_matrix(spec, K)
    y0, z0 = _field(cfg["y0"], K, dom), _field(cfg["z0"], K, dom)
    try:
        fam = moments.biorthogonal_family(K, T, cfg["mode"], dom)
    except ValueError as e:
        raise InputError(str(e)) from e
    try:
        prof = moments.spatial_profile(omega, K, dom)
    except ValueError as e:
        raise InputError(str(e)) from e
    prob = moments.moment_targets(y0, z0, A, prof, T, K)
    syn = moments.synthesize_control(prob, fam, prof, cfg["gamma_cap"])
    traj = spectral.solve_forward(y0, z0, A, syn.control, T, cfg["n_steps"])
    yk = np.abs(traj.yT)
    scale = y0.norm() + z0.norm()
    decay = moments.verify_decay_condition(A) if K >= 4 else None
    ts = np.linspace(0.0, T, cfg["n_samples"])
    atomic_write(os.path.join(out, "control.csv"), csv_text(["t", "gamma"], zip(ts, syn.gamma(ts))))
    atomic_write(os.path.join(out, "control.json"), json_text({
        "f_coeffs": prof.f_coeffs, "gamma_exp_coeffs": syn.amplitudes, "gamma_rates": syn.gamma.rates,
        "gamma_form": "gamma(t) = sum_j c_j exp(-mu_j (T - t))", "K": K, "T": T}))
    atomic_write(os.path.join(out, "trajectory.csv"), traj.to_csv())
    report = {
        "command": "synthesize",
        "biorthogonality_residual": fam.residual, "gram_condition": fam.condition_estimate,
        "q_norm_growth_slope": fam.growth_fit()[0],
        "profile": {"beta": prof.beta, "attempts": prof.attempts, "leakage": prof.leakage,
                    "centers": prof.centers, "radius": prof.radius},
        "targets": prob.targets, "targets_tail": prob.tail,
        "gamma_l2": syn.gamma_l2, "gamma_exceeds_cap": syn.exceeds_cap,
        "moment_residual": syn.moment_residual,
        "closed_loop": {"max_abs_yk_T": float(yk.max()), "bound": 1e-6 * scale,
                        "passed": bool(yk.max() < 1e-6 * scale),
                        "unresolved_tail_estimate": moments.unresolved_tail(y0, z0, K, T)},
        "decay_condition": None if decay is None else decay.__dict__,
    }
    report["summary"] = {"closed_loop_max": float(yk.max()), "passed": report["closed_loop"]["passed"],
                         "decay_condition_satisfied": None if decay is None else decay.satisfied}
    return report


def cmd_witness(cfg: dict, out: str, seed: int, threads: int) -> dict:
    m, G, T = cfg["m"], cfg["G"], parse_number(cfg["T"])
    if G < 2 * m + 1:
        raise InputError(f"G={G} violates G >= 2m+1 = {2 * m + 1}")
    if min(cfg["M_list"]) < 2:
        raise InputError("all M must be >= 2")
    if len(cfg["M_list"]) < 4:
        raise InputError("M_list needs at least 4 entries for the slope fits")
    rep = witness.certificate_sweep(m, G, T, cfg["M_list"], cfg["n_quad"], cfg["cross_check"])
    atomic_write(os.path.join(out, "witness.csv"),
                 csv_text(["M", "A_M", "pairing", "ratio", "k1"], rep.rows()))
    d = rep.to_dict()
    d["ratio_definition"] = "pairing / sqrt(A_M)"
    atomic_write(os.path.join(out, "witness.json"), json_text(d))
    verdict = "VALID" if rep.valid else "INVALID"
    return {"command": "witness", "report": d,
            "summary": {"verdict": verdict, "slope_A": rep.slope_A, "slope_pairing": rep.slope_pairing,
                        "ratio_growth": rep.ratio[-1] / rep.ratio[0], "k1_modal": rep.k1_modal}}


def build_hum_config(cfg: dict, n_cells: int | None = None):
    from . import hum
    dom = _domain(cfg["domain"])
    T = parse_number(cfg["T"])
    scheme = hum.TimeScheme.from_mode(T, cfg["dt_mode"], cfg["n_steps"], parse_number(cfg["dt"]))
    omega = tuple(parse_number(v) for v in cfg["omega"])
    n = n_cells or cfg["n_cells"][0]
    mesh = hum.Mesh1D(dom, n)
    return hum.HumConfig(mesh, scheme, mesh.h ** cfg["eps_exponent"], omega, hum.alpha_from_spec(cfg["alpha"]),
                         hum.field_from_spec(cfg["y0"]), hum.field_from_spec(cfg["z0"]),
                         cfg["cg_tol"], cfg["cg_max_iter"], cfg["method"])


def cmd_hum(cfg: dict, out: str, seed: int, threads: int) -> dict:
    from . import hum
    try:
        base = build_hum_config(cfg)
    except ValueError as e:
        raise InputError(str(e)) from e
    res = hum.sweep(base, cfg["n_cells"], cfg["eps_exponent"], threads)
    header = ["h", "epsilon", "min_F", "u_norm", "yT_norm", "cg_iters", "fenchel_gap"]
    atomic_write(os.path.join(out, "hum_sweep.csv"), csv_text(header, res.table()))
    dat = "# h min_F u_norm yT_norm\n" + "".join(
        f"{r.h!r} {r.min_F!r} {r.control_norm!r} {r.yT_norm!r}\n" for r in res.runs)
    atomic_write(os.path.join(out, "hum_loglog.dat"), dat)
    F = [r.min_F for r in res.runs]
    summary = {"slopes": res.slopes, "min_F_ratio": max(F) / min(F) if min(F) > 0 else float("inf"),
               "min_F_growth": F[-1] / F[0] if F[0] > 0 else float("inf"),
               "max_fenchel_gap": max(r.fenchel_gap for r in res.runs),
               "n_steps": base.scheme.n_steps, "dt": base.scheme.dt, "dt_mode": cfg["dt_mode"],
               "backend": hum.DEFAULT_BACKEND}
    atomic_write(os.path.join(out, "hum_summary.json"), json_text({"config": cfg, "summary": summary}))
    return {"command": "hum", "runs": [r.__dict__ | {"history": None} for r in res.runs], "summary": summary}


COMMANDS = {"check": cmd_check, "synthesize": cmd_synthesize, "witness": cmd_witness, "hum": cmd_hum}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", metavar="PATH", default=d(None), help="JSON config file")
    p.add_argument("--preset", metavar="NAME", default=d(None), help="bundled config (see --list-presets)")
    p.add_argument("--out", metavar="DIR", default=d("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, metavar="N", default=d(0), help="seed for randomized checks")
    p.add_argument("--threads", type=int, metavar="N", default=d(1), help="worker threads for sweeps")
    p.add_argument("--json", action="store_true", default=d(False), help="print a JSON summary to stdout")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partialnull", description=__doc__.splitlines()[0])
    _global_flags(p, False)
    p.add_argument("--list-presets", action="store_true", help="list bundled presets and exit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _global_flags(sp, True)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    if args.list_presets:
        print("\n".join(list_presets()))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.command, args.config, args.preset)
        report = COMMANDS[args.command](cfg, args.out, args.seed, max(1, args.threads))
    except (InputError, kalman.DimensionError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    report["config"] = cfg
    report["seed"] = args.seed
    report["version"] = __version__
    atomic_write(os.path.join(args.out, f"{args.command}_report.json"), json_text(report))
    if args.json:
        sys.stdout.write(json_text({"command": args.command, "summary": report["summary"],
                                    "out": os.path.abspath(args.out)}))
    else:
        _print_human(args.command, report["summary"])
    return EXIT_OK


def _print_human(command, s):
    if command == "check":
        state = "controllable" if s["controllable"] else "not controllable"
        extra = " (sufficient condition only)" if s["sufficient_only"] else ""
        print(f"{state}: rank {s['rank']} of required {s['required']}{extra}")
    elif command == "witness":
        print(f"{s['verdict']}: slope_A={s['slope_A']:.3f} slope_pairing={s['slope_pairing']:.3f} "
              f"ratio growth={s['ratio_growth']:.2f} k1={s['k1_modal']}")
    elif command == "synthesize":
        print(f"closed loop max|y_k(T)| = {s['closed_loop_max']:.3e} ({'ok' if s['passed'] else 'FAILED'})")
    else:
        sl = s["slopes"]
        print(f"slopes: min_F {sl['min_F']:.3f}, u {sl['u_norm']:.3f}, y(T) {sl['yT_norm']:.3f}; "
              f"min_F max/min {s['min_F_ratio']:.3g}")


if __name__ == "__main__":
    sys.exit(main())
