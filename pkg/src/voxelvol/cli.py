"""Command-line interface: ``voxelvol <command> [options]``.

Every command accepts ``--config FILE`` (a JSON object whose keys are
option names, with dashes or underscores); explicit flags override values
from the file.  Exit codes: 0 success, 2 usage or input error, 3 numerical
failure (quadrature or budget exhausted).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, asymptotics, configs, estimators, experiments, imaging
from .asymptotics import BudgetExhausted
from .configs import InvalidInput
from .phantoms import Phantom
from .quadrature import QuadratureError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _load_json(path, what: str):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {path} is not valid JSON: {exc}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, int(args.threads))
    env = os.environ.get("VOXELVOL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"VOXELVOL_THREADS must be an integer, got {env!r}") from None
    return 1


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_classes(args) -> dict:
    if args.d not in configs.SUPPORTED_DIMS:
        raise UsageError(f"--d must be one of {configs.SUPPORTED_DIMS}")
    table = configs.class_table(args.d)
    if args.format == "csv":
        lines = ["id,representative_mask,size,separable,label,members"]
        for row in table["classes"]:
            members = " ".join(map(str, row["members"]))
            lines.append(
                f"{row['id']},{row['representative_mask']},{len(row['members'])},"
                f"{int(row['separable'])},{row['label'] or ''},{members}"
            )
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(json.dumps(table, indent=2), args.out)
    return {"rows": len(table["classes"])}


def cmd_coeffs(args) -> dict:
    if args.d not in configs.SUPPORTED_DIMS:
        raise UsageError(f"--d must be one of {configs.SUPPORTED_DIMS}")
    if args.mode in ("phi", "lambda"):
        if not args.phantom:
            raise UsageError(f"--mode {args.mode} requires --phantom")
        X = Phantom.from_dict(_load_json(args.phantom, "phantom"))
        if X.dim != args.d:
            raise UsageError(f"phantom is {X.dim}-dimensional but --d is {args.d}")
        table = asymptotics.stationary_coefficients(X, tol=args.tol)
        if args.closed_form:
            asymptotics.apply_closed_forms(table)
    else:
        table = asymptotics.isotropic_coefficients(args.d, tol=args.tol, prefer_closed_form=args.closed_form)
    _emit(table.to_csv(), args.out)
    return {"classes": len(table.psi_bar)}


def _pose_from_args(args, d: int) -> imaging.LatticePose:
    R = np.eye(d) if args.rotation is None else np.array(json.loads(args.rotation), dtype=float)
    c = np.zeros(d) if args.offset is None else np.array(json.loads(args.offset), dtype=float)
    return imaging.LatticePose(args.a, R, c)


def cmd_voxelize(args) -> dict:
    if not args.phantom or args.a is None or not args.output:
        raise UsageError("voxelize needs a phantom file, --a and --output")
    X = Phantom.from_dict(_load_json(args.phantom, "phantom"))
    pose = _pose_from_args(args, X.dim)
    img = imaging.voxelize(X, pose, margin=args.margin)
    img.write(args.output)
    return {"dims": list(img.dims), "foreground": img.foreground_count()}


def cmd_count(args) -> dict:
    if not args.image:
        raise UsageError("count needs an input .bvox file")
    img = imaging.BinaryImage.read(args.image)
    hist = imaging.count_configurations(img)
    if args.oracle:
        ref = imaging.brute_force_count(img)
        if ref != hist:
            print("error: fast and reference counts differ", file=sys.stderr)
            return {"oracle": "mismatch", "_exit": EXIT_NUMERIC}
    _emit(hist.to_csv(), args.out)
    return {"cells": hist.window_cells, "oracle": "match" if args.oracle else None}


def cmd_estimate(args) -> dict:
    if not args.image or not args.weights:
        raise UsageError("estimate needs an input .bvox file and a weights file")
    weights = estimators.WeightVector.from_dict(_load_json(args.weights, "weights"))
    img = imaging.BinaryImage.read(args.image)
    if img.dim != weights.d:
        raise UsageError(f"image is {img.dim}-dimensional but weights are for d={weights.d}")
    hist = imaging.count_configurations(img)
    value = estimators.evaluate(weights, hist, img.pose.a)
    print(repr(value))
    return {"estimate": value}


def cmd_experiment(args) -> dict:
    if not args.design:
        raise UsageError("experiment needs a design file")
    data = _load_json(args.design, "design")
    if args.seed is not None:
        data["seed"] = args.seed
    design = experiments.DesignSpec.from_dict(data)
    result = experiments.run(design, threads=_threads(args))
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.results_csv())
    (out / "summary.csv").write_text(result.summary_csv())
    (out / "fit.json").write_text(result.fit_json() + "\n")
    sys.stdout.write(result.summary_csv())
    if result.fit is not None:
        f = result.fit
        print(f"c_minus1 = {f.c_minus1:.6g} +/- {f.sigma[0]:.2g}   c0 = {f.c0:.6g} +/- {f.sigma[1]:.2g}")
    return {"design": design.to_dict(), "outputs": ["results.csv", "summary.csv", "fit.json"]}


def cmd_feasibility(args) -> dict:
    if args.d == 3:
        system = estimators.build_nonexistence_system_3d(args.source)
    elif args.d == 2:
        system = estimators.build_euler_system_2d()
    else:
        raise UsageError("--d must be 2 or 3")
    report = estimators.check_feasibility(system).to_dict()
    if args.d == 3:
        sub = estimators.check_feasibility(system.sub(system.labels[:3]))
        x = sub.solution
        report["capsule_subsystem_solution"] = dict(zip(system.unknowns, map(float, x)))
        report["normalization_residual"] = float(system.matrix[3] @ x - system.rhs[3])
    _emit(json.dumps(report, indent=2), args.out)
    return report


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values (flags override it)")
    common.add_argument("--out-dir", help="directory for outputs and manifest.json")
    common.add_argument("--threads", type=int, help="worker cap (fallback: VOXELVOL_THREADS)")
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="voxelvol", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"voxelvol {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("classes", parents=[common], help="configuration class table")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_classes)

    s = sub.add_parser("coeffs", parents=[common], help="asymptotic coefficient table (CSV)")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--mode", choices=("psi", "mu", "phi", "lambda"), default="mu")
    s.add_argument("--phantom", help="phantom JSON (required for phi and lambda)")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--closed-form", action="store_true", help="use closed forms where available")
    s.add_argument("--out")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("voxelize", parents=[common], help="sample a phantom on a lattice (BVOX)")
    s.add_argument("phantom", nargs="?")
    s.add_argument("--a", type=float)
    s.add_argument("--rotation", help="rotation matrix as JSON, default identity")
    s.add_argument("--offset", help="lattice offset c in [0,1)^d as JSON, default 0")
    s.add_argument("--margin", type=float, help="window margin, at least a (default a)")
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_voxelize)

    s = sub.add_parser("count", parents=[common], help="configuration histogram (CSV l,count)")
    s.add_argument("image", nargs="?")
    s.add_argument("--oracle", action="store_true", help="cross-check with the reference counter")
    s.add_argument("--out")
    s.set_defaults(func=cmd_count)

    s = sub.add_parser("estimate", parents=[common], help="evaluate a weighted estimator")
    s.add_argument("image", nargs="?")
    s.add_argument("weights", nargs="?")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser(
        "experiment",
        parents=[common],
        help="design-based Monte Carlo",
        description="Runs replicates at each spacing and fits mean(a) = c_minus1/a + c0. "
        "Geometric spacings such as r/25, r/50, r/100 condition the fit well.",
    )
    s.add_argument("design", nargs="?")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("feasibility", parents=[common], help="(non)existence systems")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--source", choices=("closed-form", "quadrature"), default="closed-form")
    s.add_argument("--out")
    s.set_defaults(func=cmd_feasibility)
    return p


def _resolve(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        raw = _load_json(args.config, "config")
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        file_vals = {k.replace("-", "_"): v for k, v in raw.items()}
        explicit = parser.parse_args(argv)
        # Re-parse with file values as defaults so explicit flags win.
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(file_vals) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**file_vals)
        args = parser.parse_args(argv)
        args.config = explicit.config
    for name in ("phantom", "image", "weights", "design", "output", "out", "out_dir", "config"):
        if getattr(args, name, None):
            setattr(args, name, str(Path(getattr(args, name)).resolve()))
    return args


def _manifest(args, info: dict) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    return {"tool": "voxelvol", "version": __version__, "command": args.command, "config": resolved, "result": info}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _resolve(parser, argv)
        info = args.func(args) or {}
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, InvalidInput, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, BudgetExhausted) as exc:
        bound = float(np.max(exc.error))
        print(f"numerical failure: {exc} (error bound {bound:.3g})", file=sys.stderr)
        return EXIT_NUMERIC
    code = info.pop("_exit", EXIT_OK) if isinstance(info, dict) else EXIT_OK
    manifest = json.dumps(_manifest(args, info), indent=2, default=str)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(manifest + "\n")
    else:
        print(manifest, file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
