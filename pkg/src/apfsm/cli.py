"""``apfsm`` command-line front end.

Exit status: 0 on success, 1 when the model (or an input file) is at fault,
2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import analysis, montecarlo
from .errors import AnalysisError, ModelError
from .language import DiagnosticError, load_model
from .microsim import MicroParams, calibrate
from .scenario import ScenarioParams, generate_model
from .statespace import BuildMode, build, classify_terminals

EXIT_OK, EXIT_MODEL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def write_atomic(path, text):
    """Write via a temporary file in the target directory and rename, so a
    failed run never leaves a partial file behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_model(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return load_model(text)
    except DiagnosticError as err:
        err.filename = str(path)
        raise


def _default_mode(direction, mode):
    if mode is not None:
        return mode
    return "autonomous" if direction == "fixed" else "interval"


def _build(args, direction):
    model = _read_model(args.model)
    mode = _default_mode(direction, args.mode)
    return build(model, mode, workers=args.workers)


# ---------------------------------------------------------------- subcommands

def cmd_validate(args):
    _read_model(args.model)
    return EXIT_OK


def cmd_build(args):
    model = _read_model(args.model)
    ss = build(model, args.mode or "autonomous", workers=args.workers)
    st = ss.stats
    print(f"mode: {ss.mode.value}")
    print(f"states: {st.states}")
    print(f"choices: {st.choices}")
    print(f"transitions: {st.transitions}")
    print(f"build time: {st.seconds:.3f} s")
    if args.out:
        write_atomic(args.out, ss.dump())
    return EXIT_OK


def cmd_check(args):
    ss = _build(args, args.dir)
    vv = analysis.reach(ss, args.target, args.dir, tol=args.tol)
    print(f"{vv.value:.10f}")
    return EXIT_OK


def cmd_outcomes(args):
    ss = _build(args, args.dir)
    part = classify_terminals(ss)
    res = analysis.outcome_summary(ss, part, args.dir, tol=args.tol)
    width = max(len(k) for k in res)
    for k, v in res.items():
        print(f"{k:<{width}}  {v:.10f}")
    if args.out:
        write_atomic(args.out, "category,probability\n" + "".join(f"{k},{v:.10g}\n" for k, v in res.items()))
    return EXIT_OK


def cmd_curve(args):
    if args.step <= 0 or args.frm > args.to:
        raise UsageError("curve range needs --from <= --to and --step > 0")
    model = _read_model(args.model)
    ss = build(model, args.mode or "interval", workers=args.workers)
    curve = analysis.deadline_curve(ss, args.target, args.time_var, args.frm, args.to, args.step, tol=args.tol)
    csv = curve.to_csv()
    if args.out:
        write_atomic(args.out, csv)
        last = curve.points[-1]
        print(f"{len(curve.points)} points; at T={last[0]}: min {last[1]:.10f} max {last[2]:.10f} "
              f"uniform {last[3]:.10f}")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def cmd_reward(args):
    ss = _build(args, args.dir)
    vv = analysis.expected_reward(ss, args.reward, args.target, args.dir, tol=args.tol)
    print(f"{vv.value:.10f}")
    return EXIT_OK


def cmd_simulate(args):
    if args.n < 1:
        raise UsageError("-n must be >= 1")
    model = _read_model(args.model)
    est = montecarlo.estimate(model, args.event, args.n, args.seed, args.scheduler, workers=args.workers)
    print(f"{est.event}: {est.point:.6f}  95% CI [{est.lo:.6f}, {est.hi:.6f}]  n={est.n} seed={est.seed}"
          + (f"  truncated={est.truncated}" if est.truncated else ""))
    if args.out:
        write_atomic(args.out, est.to_csv())
    if args.trace:
        write_atomic(args.trace, montecarlo.sample_path(model, args.scheduler, args.seed).dump())
    return EXIT_OK


def cmd_calibrate(args):
    data = json.loads(Path(args.params).read_text(encoding="utf-8")) if args.params else {}
    if args.seed is not None:
        data["seed"] = args.seed
    stats = calibrate(MicroParams.from_dict(data))
    for name, s in stats.actions.items():
        extra = "".join(f" {k}={v:.4f}" for k, v in s.prob.items())
        print(f"{name}: time [{s.time.lo}..{s.time.hi}] battery [{s.battery.lo}..{s.battery.hi}]{extra}")
    write_atomic(args.out, stats.to_json())
    return EXIT_OK


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def cmd_gen_scenario(args):
    data = json.loads(Path(args.params).read_text(encoding="utf-8")) if args.params else {}
    data.update(_parse_set(args.set))
    try:
        params = ScenarioParams.from_dict(data)
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from None
    if args.stats:
        params = params.with_stats(json.loads(Path(args.stats).read_text(encoding="utf-8")))
    text = generate_model(params)
    load_model(text)  # generator/validator contract
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def make_parser():
    p = argparse.ArgumentParser(prog="apfsm", description="Autonomous probabilistic FSM verification toolkit")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def model_cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("model", help=".apfsm model file")
        sp.set_defaults(fn=fn)
        return sp

    def analysis_opts(sp, with_dir=True):
        if with_dir:
            sp.add_argument("--dir", choices=analysis.DIRECTIONS, default="fixed")
        sp.add_argument("--mode", choices=[m.value for m in BuildMode], default=None)
        sp.add_argument("--tol", type=float, default=analysis.DEFAULT_TOL)

    model_cmd("validate", cmd_validate, "parse and validate a model")

    sp = model_cmd("build", cmd_build, "build the state space and print its size")
    sp.add_argument("--mode", choices=[m.value for m in BuildMode], default=None)
    sp.add_argument("--out", help="write a state-space dump here")

    sp = model_cmd("check", cmd_check, "reachability probability of a label")
    sp.add_argument("--target", required=True)
    analysis_opts(sp)

    sp = model_cmd("outcomes", cmd_outcomes, "probability of every outcome category")
    analysis_opts(sp)
    sp.add_argument("--out")

    sp = model_cmd("curve", cmd_curve, "deadline curve as CSV")
    sp.add_argument("--target", default="success")
    sp.add_argument("--time-var", default="t")
    sp.add_argument("--from", dest="frm", type=int, required=True)
    sp.add_argument("--to", type=int, required=True)
    sp.add_argument("--step", type=int, default=1)
    analysis_opts(sp, with_dir=False)
    sp.add_argument("--out")

    sp = model_cmd("reward", cmd_reward, "expected accumulated reward")
    sp.add_argument("--reward", required=True)
    sp.add_argument("--target", default="absorbing")
    analysis_opts(sp)

    sp = model_cmd("simulate", cmd_simulate, "Monte Carlo estimate of a label")
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("--event", required=True)
    sp.add_argument("--scheduler", choices=montecarlo.SCHEDULERS, default="uniform")
    sp.add_argument("--out")
    sp.add_argument("--trace", help="write one sample trace here")

    sp = sub.add_parser("calibrate", help="run the micro-simulations", parents=[common])
    sp.add_argument("--params", help="JSON micro-simulation parameters")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_calibrate)

    sp = sub.add_parser("gen-scenario", help="generate the UAV mission model", parents=[common])
    sp.add_argument("--params", help="JSON scenario parameters")
    sp.add_argument("--stats", help="calibration table from `calibrate`")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_gen_scenario)
    return p


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.workers < 1:
        print("apfsm: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is None and args.command == "simulate":
        args.seed = 0
    try:
        return args.fn(args)
    except UsageError as err:
        print(f"apfsm: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DiagnosticError as err:
        name = getattr(err, "filename", "<model>")
        for d in err.diagnostics:
            print(d.format(name), file=sys.stderr)
        return EXIT_MODEL
    except (ModelError, AnalysisError, KeyError, ValueError, OSError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"apfsm: error: {msg}", file=sys.stderr)
        return EXIT_MODEL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
