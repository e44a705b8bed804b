"""Command-line front end.

Every command writes its outputs plus one ``manifest.json`` into ``--out-dir``.
Exit codes: 0 success, 2 config or usage error, 3 simulation failure,
4 estimation failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, data_path
from .bench import mc_config_from_dict, run_monte_carlo
from .direct_pem import MisoStructure, pem_fit
from .errors import (DivergedSimulation, InvariantViolation, NetLpmError,
                     ParseError, PredictorSetWarning, SingularAtLine)
from .indirect import run_indirect, write_target_csv
from .lpm import LpmConfig, write_frf_csv
from .lti_core import freq_response
from .network import (NetworkModel, PredictorSet, check_predictor_set,
                      check_stability, closed_loop_frm, load_network,
                      module_frm)
from .parfit import ModelOrders, TargetFrf, fit_target
from .simulator import (ExcitationSpec, excitation_from_dict, read_dataset,
                        simulate, write_dataset)

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_EST = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    command: str
    config_paths: dict
    seed: int | None
    tool_version: str
    output_directory: str
    started_at: str
    wall_clock_s: float
    arguments: dict

    def write(self, out_dir: Path) -> None:
        d = {"schema_version": 1, **asdict(self)}
        (out_dir / "manifest.json").write_text(json.dumps(d, indent=2) + "\n")


# --------------------------------------------------------------------------
# config helpers

def _read_json(path, what):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} file not found: {p}", EXIT_CONFIG)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{p}: line {exc.lineno} col {exc.colno}: {exc.msg}",
                       EXIT_CONFIG) from None


def _resolve(path, base: Path | None = None) -> Path:
    """Plain path, path relative to ``base``, or a shipped config name."""
    p = Path(path)
    if p.is_file():
        return p
    if base is not None and (base / p).is_file():
        return base / p
    shipped = data_path(p.name)
    if shipped.is_file():
        return Path(str(shipped))
    return p


def _load_network(path, base=None) -> NetworkModel:
    p = _resolve(path, base)
    if not p.is_file():
        raise CliError(f"network file not found: {path}", EXIT_CONFIG)
    try:
        return load_network(p.read_text())
    except NetLpmError as exc:
        raise CliError(f"{p}: {exc}", EXIT_CONFIG) from None


def _int_list(text, what):
    try:
        return [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise CliError(f"{what}: expected comma-separated integers, got {text!r}",
                       EXIT_CONFIG) from None


def _target(text):
    parts = str(text).replace("<-", ",").split(",")
    if len(parts) != 2:
        raise CliError(f"target must look like 'j<-i', got {text!r}", EXIT_CONFIG)
    j, i = _int_list(",".join(parts), "target")
    return j, i


def _orders(text):
    vals = _int_list(text, "orders")
    if len(vals) not in (2, 3):
        raise CliError("orders must be 'nb,na' or 'nb,na,delay'", EXIT_CONFIG)
    try:
        return ModelOrders(*vals)
    except ValueError as exc:
        raise CliError(f"orders: {exc}", EXIT_CONFIG) from None


def _predictor_set(model, target, predictors):
    j, i = _target(target)
    D = _int_list(predictors, "predictors")
    for n in (j, i, *D):
        if not 1 <= n <= model.L:
            raise CliError(f"node {n} is not in the network (1..{model.L})", EXIT_CONFIG)
    ps = PredictorSet(j, i, tuple(D))
    return ps, check_predictor_set(model, ps)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> dict:
    if args.N < 1:
        raise CliError("N must be a positive integer", EXIT_CONFIG)
    model = _load_network(args.network)
    if args.excitation:
        try:
            exc_spec = excitation_from_dict(
                {k: v for k, v in _read_json(args.excitation, "excitation").items()
                 if k != "schema_version"})
        except (NetLpmError, TypeError) as exc:
            raise CliError(f"{args.excitation}: {exc}", EXIT_CONFIG) from None
    else:
        exc_spec = ExcitationSpec("white", 0.1)
    out = _out_dir(args.out_dir)
    try:
        ds = simulate(model, exc_spec, args.N, args.seed,
                      process_noise=not args.no_process_noise,
                      sensor_noise=not args.no_sensor_noise)
    except (DivergedSimulation, ArithmeticError) as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_SIM) from None
    write_dataset(ds, out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'} ({ds.N} samples, {ds.L} nodes)")
    return {"network": str(args.network), "excitation": args.excitation}


def _estimate_common(method, ps, report, est_dict, extra):
    return {"schema_version": 1, "method": method,
            "target": {"output": ps.output, "input": ps.input},
            "predictors": list(ps.predictors),
            "predictor_check": {"valid": report.valid, "summary": report.summary()},
            **est_dict, "extra": extra}


def _write_model_frf(path, tf, N):
    lines = np.arange(1, (N + 1) // 2)
    G = freq_response(tf, lines, N)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["line", "freq_norm", "Re", "Im"])
        for k, g in zip(lines, G):
            wr.writerow([int(k), repr(k / N), repr(float(g.real)), repr(float(g.imag))])


def cmd_identify(args) -> dict:
    model = _load_network(args.network)
    ps, report = _predictor_set(model, args.target, args.predictors)
    if not report.membership:
        print(report.summary(), file=sys.stderr)
        raise CliError("predictor set is not admissible for this target", EXIT_CONFIG)
    if not report.valid:
        print("warning: predictor set fails the predictor-input conditions\n"
              + report.summary(), file=sys.stderr)
    ds_path = Path(args.dataset)
    if not ds_path.is_file():
        raise CliError(f"dataset not found: {ds_path}", EXIT_CONFIG)
    try:
        ds = read_dataset(ds_path)
    except ParseError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    if ds.L != model.L:
        raise CliError(f"dataset has {ds.L} nodes, network has {model.L}", EXIT_CONFIG)
    orders = _orders(args.orders)
    refs = (_int_list(args.references, "references") if args.references
            else sorted(model.reference_set))
    try:
        cfg = LpmConfig(args.degree, args.half_width)
        if args.method == "ilpm_elis":
            cfg.check(len(refs))
            cfg.check(len(ps.predictors))
    except InvariantViolation as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    out = _out_dir(args.out_dir)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PredictorSetWarning)
            if args.method == "ilpm_elis":
                res = run_indirect(ds, ps, refs, cfg)
                write_target_csv(res, out / "target_frf.csv")
                write_frf_csv(res.S_hat, out / "stage1_frf.csv",
                              [f"w{d}" for d in ps.predictors], [f"r{r}" for r in refs])
                target = TargetFrf.from_indirect(res, band=args.band)
                est = fit_target(target, orders)
                extra = {"lines_used": [int(k) for k in target.lines],
                         "band": args.band,
                         "lpm": {"degree": cfg.degree, "half_width": cfg.half_width},
                         "references": refs}
                est_dict = est.to_dict()
            else:
                st = MisoStructure.from_network(model, ps, orders)
                res = pem_fit(ds, st, restarts=args.restarts, restart_seed=args.seed)
                est = res.module(ps.input)
                full = res.to_dict(ps.input)
                est_dict = est.to_dict()
                est_dict["cost"] = full["cost"]
                extra = {"noise_model": full["noise_model"],
                         "modules": full["modules"],
                         "restart_costs": [float(c) for c in res.restarts]}
    except CliError:
        raise
    except (NetLpmError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise CliError(f"estimation failed: {type(exc).__name__}: {exc}", EXIT_EST) from None
    _dump(out / "estimate.json", _estimate_common(args.method, ps, report, est_dict, extra))
    _write_model_frf(out / "model_frf.csv", est.tf, ds.N)
    print(f"theta = {np.array2string(est.theta, precision=6)}  "
          f"cost = {est_dict['cost']:.6g}  converged = {est.converged}")
    return {"dataset": str(ds_path), "network": str(args.network)}


def cmd_montecarlo(args) -> dict:
    cfg_path = Path(args.config)
    if not cfg_path.is_file():
        shipped = data_path(cfg_path.name)
        if shipped.is_file():
            cfg_path = Path(str(shipped))
    raw = _read_json(cfg_path, "Monte Carlo config")
    if not isinstance(raw, dict):
        raise CliError(f"{cfg_path}: expected a JSON object", EXIT_CONFIG)
    raw = dict(raw)
    raw.pop("schema_version", None)
    try:
        net_ref = raw.pop("network")
        target = raw.pop("target")
        predictors = raw.pop("predictors")
    except KeyError as exc:
        raise CliError(f"{cfg_path}: missing field {exc}", EXIT_CONFIG) from None
    if args.seed is not None:
        raw["base_seed"] = args.seed
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    try:
        cfg = mc_config_from_dict(raw)
    except (ParseError, InvariantViolation) as exc:
        raise CliError(f"{cfg_path}: {exc}", EXIT_CONFIG) from None
    model = _load_network(net_ref, cfg_path.parent)
    ps, report = _predictor_set(model, f"{target['output']},{target['input']}"
                                if isinstance(target, dict) else target,
                                ",".join(map(str, predictors)))
    if not report.membership:
        raise CliError("predictor set is not admissible for this target", EXIT_CONFIG)
    if not check_stability(model).stable:
        raise CliError("network is unstable", EXIT_SIM)
    out = _out_dir(args.out_dir)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PredictorSetWarning)
        rep = run_monte_carlo(cfg, model, ps, jobs=args.jobs)
    rep.write(out)
    for m in cfg.methods:
        print(f"{m}: median fit {rep.median_fit(m):.4f} "
              f"({len(rep.errors[m])} failed of {cfg.replicates})")
    return {"config": str(cfg_path), "network": str(net_ref)}


def cmd_frf(args) -> dict:
    if args.N < 2:
        raise CliError("N must be at least 2", EXIT_CONFIG)
    model = _load_network(args.network)
    lines = (np.asarray(_int_list(args.lines, "lines")) if args.lines
             else np.arange(0, args.N // 2 + 1))
    if np.any(lines < 0) or np.any(lines >= args.N):
        raise CliError("lines must lie in [0, N)", EXIT_CONFIG)
    out = _out_dir(args.out_dir)
    try:
        Gm = module_frm(model, lines, args.N)
        T = closed_loop_frm(model, lines, args.N)
    except (SingularAtLine, NetLpmError) as exc:
        raise CliError(str(exc), EXIT_EST) from None
    edges = sorted(model.modules)
    with open(out / "modules_frf.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["line", "freq_norm"]
                    + [f"{p}_G{j}{l}" for (j, l) in edges for p in ("Re", "Im")])
        for n, k in enumerate(lines):
            row = [int(k), repr(k / args.N)]
            for (j, l) in edges:
                g = Gm[n, j - 1, l - 1]
                row += [repr(float(g.real)), repr(float(g.imag))]
            wr.writerow(row)
    L = model.L
    with open(out / "closed_loop_frf.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["line", "freq_norm"]
                    + [f"{p}_T{a}{b}" for a in range(1, L + 1)
                       for b in range(1, L + 1) for p in ("Re", "Im")])
        for n, k in enumerate(lines):
            row = [int(k), repr(k / args.N)]
            for a in range(L):
                for b in range(L):
                    row += [repr(float(T[n, a, b].real)), repr(float(T[n, a, b].imag))]
            wr.writerow(row)
    print(f"wrote FRFs on {lines.size} lines to {out}")
    return {"network": str(args.network)}


def cmd_check_predictors(args) -> dict:
    model = _load_network(args.network)
    ps, report = _predictor_set(model, args.target, args.predictors)
    print(report.summary())
    print("valid" if report.valid else "INVALID")
    if args.out_dir:
        out = _out_dir(args.out_dir)
        _dump(out / "predictor_check.json",
              {"schema_version": 1, "target": {"output": ps.output, "input": ps.input},
               "predictors": list(ps.predictors), "membership": report.membership,
               "parallel_paths": report.parallel_paths, "loops": report.loops,
               "parallel_witness": list(report.parallel_witness),
               "loop_witness": list(report.loop_witness), "valid": report.valid})
    if not report.valid:
        raise CliError("predictor set fails the predictor-input conditions", EXIT_CONFIG)
    return {"network": str(args.network)}


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netlpm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"netlpm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a network and write a dataset CSV")
    s.add_argument("--network", required=True, help="network JSON (or shipped name)")
    s.add_argument("--excitation", help="excitation JSON (default: white, variance 0.1)")
    s.add_argument("--N", type=int, required=True, help="number of samples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-process-noise", action="store_true")
    s.add_argument("--no-sensor-noise", action="store_true")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("identify", help="identify one module from a dataset")
    s.add_argument("--dataset", required=True, help="CSV written by 'simulate'")
    s.add_argument("--network", required=True,
                   help="network JSON; used for node count, references and true orders")
    s.add_argument("--target", required=True, help="target module as 'j<-i' or 'j,i'")
    s.add_argument("--predictors", required=True, help="predictor nodes, e.g. 1,2,4")
    s.add_argument("--method", choices=("ilpm_elis", "dm_to"), default="ilpm_elis")
    s.add_argument("--orders", default="2,2,1", help="nb,na[,delay] of the target")
    s.add_argument("--references", help="reference nodes (default: from network)")
    s.add_argument("--degree", type=int, default=2, help="LPM polynomial degree")
    s.add_argument("--half-width", type=int, default=12, help="LPM window half width")
    s.add_argument("--band", choices=("mid", "all"), default="mid",
                   help="lines passed to the parametric fit")
    s.add_argument("--restarts", type=int, default=5, help="dm_to multi-start count")
    s.add_argument("--seed", type=int, default=0, help="dm_to restart perturbation seed")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("montecarlo", help="run a Monte Carlo comparison")
    s.add_argument("--config", required=True, help="Monte Carlo JSON (or shipped name)")
    s.add_argument("--seed", type=int, help="override base_seed")
    s.add_argument("--replicates", type=int, help="override the replicate count")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("frf", help="dump analytic module and closed-loop FRFs")
    s.add_argument("--network", required=True)
    s.add_argument("--N", type=int, required=True, help="DFT length")
    s.add_argument("--lines", help="comma-separated lines (default 0..N/2)")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_frf)

    s = sub.add_parser("check-predictors", help="check a predictor set for a target")
    s.add_argument("--network", required=True)
    s.add_argument("--target", required=True, help="'j<-i' or 'j,i'")
    s.add_argument("--predictors", required=True)
    s.add_argument("--out-dir", help="also write predictor_check.json here")
    s.set_defaults(func=cmd_check_predictors)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        paths = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    out_dir = getattr(args, "out_dir", None)
    if out_dir:
        arguments = {k: v for k, v in vars(args).items() if k != "func"}
        RunManifest(command=args.command, config_paths=paths,
                    seed=getattr(args, "seed", None), tool_version=__version__,
                    output_directory=str(Path(out_dir)), started_at=started,
                    wall_clock_s=round(time.perf_counter() - t0, 3),
                    arguments=arguments).write(Path(out_dir))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
