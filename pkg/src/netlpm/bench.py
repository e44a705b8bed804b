"""Monte Carlo comparison of the indirect LPM + weighted fit against the direct method.

Replicate ``m`` is simulated with seed ``base_seed + m``. Every enabled method
is run on the same dataset; failures are recorded per replicate and never
abort the sweep. Aggregation is in seed order, so a report depends only on
its configuration.
"""
from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .direct_pem import MisoStructure, pem_fit
from .errors import (DegenerateTruth, DidNotConverge, GridMismatch, ParseError,
                     PredictorSetWarning)
from .indirect import run_indirect
from .lpm import LpmConfig, mid_band
from .lti_core import freq_response, impulse_response
from .network import NetworkModel, PredictorSet, check_predictor_set
from .parfit import ModelOrders, TargetFrf, fit_target
from .simulator import ExcitationSpec, excitation_from_dict, simulate

__all__ = ["fit_metric", "McConfig", "McReport", "run_monte_carlo",
           "run_replicate", "mc_config_from_dict", "METHODS"]

METHODS = ("ilpm_elis", "dm_to")


def fit_metric(g_true, g_est) -> float:
    """``1 - ||g_true - g_est|| / ||g_true - mean(g_true)||`` (may be negative)."""
    g_true = np.asarray(g_true, dtype=float)
    g_est = np.asarray(g_est, dtype=float)
    if g_true.shape != g_est.shape or g_true.size < 2:
        raise ValueError("impulse responses must have equal length >= 2")
    den = np.linalg.norm(g_true - g_true.mean())
    if den < 1e-14:
        raise DegenerateTruth("true impulse response is constant")
    return float(1.0 - np.linalg.norm(g_true - g_est) / den)


@dataclass(frozen=True)
class McConfig:
    replicates: int = 100
    N: int = 500
    base_seed: int = 0
    methods: tuple = METHODS
    lpm: LpmConfig = LpmConfig(2, 12)
    orders: ModelOrders = ModelOrders(2, 2, 1)
    excitation: ExcitationSpec = ExcitationSpec("white", 0.1)
    ir_horizon: int = 100
    process_noise: bool = True
    pem_restarts: int = 5

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> dict:
        return {"replicates": self.replicates, "N": self.N,
                "base_seed": self.base_seed, "methods": list(self.methods),
                "lpm": {"degree": self.lpm.degree,
                        "half_width": self.lpm.half_width},
                "orders": self.orders.to_dict(),
                "excitation": self.excitation.to_dict(),
                "ir_horizon": self.ir_horizon,
                "process_noise": self.process_noise,
                "pem_restarts": self.pem_restarts}


_MC_FIELDS = {"replicates", "N", "base_seed", "methods", "lpm", "orders",
              "excitation", "ir_horizon", "process_noise", "pem_restarts"}


def mc_config_from_dict(d: dict) -> McConfig:
    """Build an :class:`McConfig` from the JSON form written by ``to_dict``.

    Unknown keys and malformed values raise :class:`ParseError` naming the
    offending field.
    """
    if not isinstance(d, dict):
        raise ParseError("Monte Carlo config must be a JSON object")
    unknown = set(d) - _MC_FIELDS
    if unknown:
        raise ParseError(f"unknown Monte Carlo fields {sorted(unknown)}")
    kw = {}
    try:
        for key in ("replicates", "N", "base_seed", "ir_horizon", "pem_restarts"):
            if key in d:
                if isinstance(d[key], bool) or not isinstance(d[key], int):
                    raise ParseError(f"field '{key}': expected an integer")
                kw[key] = d[key]
        if "process_noise" in d:
            kw["process_noise"] = bool(d["process_noise"])
        if "methods" in d:
            kw["methods"] = tuple(d["methods"])
        if "lpm" in d:
            lp = d["lpm"]
            kw["lpm"] = LpmConfig(int(lp.get("degree", 2)), int(lp.get("half_width", 12)))
        if "orders" in d:
            o = d["orders"]
            kw["orders"] = ModelOrders(int(o["nb"]), int(o["na"]), int(o.get("delay", 1)))
        if "excitation" in d:
            kw["excitation"] = excitation_from_dict(d["excitation"])
        return McConfig(**kw)
    except ParseError:
        raise
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from None
    except (TypeError, AttributeError, ValueError) as exc:
        raise ParseError(str(exc)) from None


@dataclass
class McReport:
    """Per-replicate results and their aggregates.

    ``fits[method]`` and ``thetas[method]`` hold ``nan`` for failed
    replicates; ``errors[method]`` maps a replicate index to its error text.
    ``frf[method]`` has shape ``(M, n_lines)`` on ``lines`` and holds the
    parametric estimate; ``frf_np`` holds the nonparametric (indirect LPM)
    target FRF of the ``ilpm_elis`` arm on the same lines.
    """

    config: McConfig
    seeds: list
    theta_true: np.ndarray
    lines: np.ndarray
    frf_true: np.ndarray
    fits: dict = field(default_factory=dict)
    thetas: dict = field(default_factory=dict)
    frf: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    frf_np: np.ndarray | None = None

    def ok(self, method) -> np.ndarray:
        return np.isfinite(self.fits[method])

    def median_fit(self, method) -> float:
        f = self.fits[method][self.ok(method)]
        return float(np.median(f)) if f.size else float("nan")

    def param_stats(self, method) -> dict:
        th = self.thetas[method][self.ok(method)]
        mean = th.mean(axis=0)
        std = th.std(axis=0, ddof=1) if th.shape[0] > 1 else np.zeros(th.shape[1])
        return {"mean": mean, "std": std, "bias": mean - self.theta_true}

    def frf_stats(self, method, nonparametric: bool = False) -> dict:
        """Mean error and standard deviation of the mean of the FRF per line."""
        if nonparametric:
            if self.frf_np is None:
                raise ValueError("no nonparametric FRFs were recorded")
            G = self.frf_np[self.ok("ilpm_elis")]
        else:
            G = self.frf[method][self.ok(method)]
        M = G.shape[0]
        mean = G.mean(axis=0)
        if M > 1:
            std = np.sqrt(np.sum(np.abs(G - mean) ** 2, axis=0) / (M - 1))
        else:
            std = np.zeros(G.shape[1])
        return {"mean_err": mean - self.frf_true, "std_of_mean": std / np.sqrt(M)}

    def to_dict(self) -> dict:
        out = {"schema_version": 1, "config": self.config.to_dict(),
               "seeds": list(self.seeds),
               "theta_true": self.theta_true.tolist(), "methods": {}}
        for m in self.config.methods:
            ps = self.param_stats(m)
            out["methods"][m] = {
                "fits": [None if not np.isfinite(f) else float(f)
                         for f in self.fits[m]],
                "median_fit": self.median_fit(m),
                "n_failed": int(np.sum(~self.ok(m))),
                "errors": {str(k): v for k, v in sorted(self.errors[m].items())},
                "theta_mean": ps["mean"].tolist(),
                "theta_std": ps["std"].tolist(),
                "theta_bias": ps["bias"].tolist()}
        return out

    def write(self, out_dir) -> None:
        """``report.json`` plus ``fits.csv``, ``params.csv`` and ``frf_stats.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        n_num = self.config.orders.n_num
        pnames = ([f"b{k}" for k in range(self.config.orders.delay,
                                          self.config.orders.delay + n_num)]
                  + [f"a{k}" for k in range(1, self.config.orders.na + 1)])
        with open(out / "fits.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "replicate", "fit"])
            for m in self.config.methods:
                for i, f in enumerate(self.fits[m]):
                    wr.writerow([m, i, repr(float(f))])
        with open(out / "params.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "replicate"] + pnames)
            for m in self.config.methods:
                for i, th in enumerate(self.thetas[m]):
                    wr.writerow([m, i] + [repr(float(x)) for x in th])
        with open(out / "frf_stats.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            head = ["line"]
            for m in self.config.methods:
                head += [f"mean_err_db_{m}", f"std_of_mean_db_{m}"]
            stats = {m: self.frf_stats(m) for m in self.config.methods}
            if self.frf_np is not None:
                head += ["mean_err_db_ilpm_lpm", "std_of_mean_db_ilpm_lpm"]
                stats["ilpm_lpm"] = self.frf_stats("ilpm_elis", nonparametric=True)
            wr.writerow(head)
            with np.errstate(divide="ignore"):
                for n, k in enumerate(self.lines):
                    row = [int(k)]
                    for m in stats:
                        row += [repr(float(20 * np.log10(np.abs(stats[m]["mean_err"][n])))),
                                repr(float(20 * np.log10(stats[m]["std_of_mean"][n])))]
                    wr.writerow(row)


def run_replicate(cfg: McConfig, model: NetworkModel, ps: PredictorSet, seed: int):
    """Run every enabled method on one dataset.

    Returns ``{method: (theta, frf_on_mid_band, error_or_None)}``; the
    ``ilpm_elis`` entry carries the nonparametric target FRF as a fourth item.
    """
    ds = simulate(model, cfg.excitation, cfg.N, seed,
                  process_noise=cfg.process_noise)
    lines = mid_band(cfg.N, cfg.lpm.half_width)
    out = {}
    for method in cfg.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DidNotConverge)
                warnings.simplefilter("ignore", PredictorSetWarning)
                extra = ()
                if method == "ilpm_elis":
                    res = run_indirect(ds, ps, sorted(model.reference_set), cfg.lpm)
                    target = TargetFrf.from_indirect(res)
                    if not np.array_equal(target.lines, lines):
                        raise GridMismatch("indirect mid band differs from the report grid")
                    est = fit_target(target, cfg.orders)
                    extra = (target.values,)
                else:
                    st = MisoStructure.from_network(model, ps, cfg.orders)
                    est = pem_fit(ds, st, restarts=cfg.pem_restarts).module(ps.input)
            tf = est.tf
            frf = freq_response(tf, lines, cfg.N)
            if not (np.all(np.isfinite(est.theta)) and np.all(np.isfinite(frf))):
                raise FloatingPointError("non-finite estimate")
            with np.errstate(over="ignore", invalid="ignore"):
                ir = impulse_response(tf, cfg.ir_horizon)
            if not np.all(np.isfinite(ir)):
                raise FloatingPointError(
                    "estimate diverged: impulse response overflows (max pole "
                    f"radius {np.max(np.abs(tf.poles())):.3g})")
            out[method] = (est.theta, frf, None) + extra
        except Exception as exc:  # recorded, never fatal for the sweep
            out[method] = (None, None, f"{type(exc).__name__}: {exc}")
    return out


def _job(args):
    return run_replicate(*args)


def run_monte_carlo(cfg: McConfig, model: NetworkModel, ps: PredictorSet,
                    jobs: int = 1) -> McReport:
    """Run ``cfg.replicates`` independent experiments.

    ``jobs > 1`` spreads replicates over worker processes; results are
    aggregated in seed order either way.
    """
    report = check_predictor_set(model, ps)
    if not report.valid:
        warnings.warn("predictor set fails the predictor-input conditions:\n"
                      + report.summary(), PredictorSetWarning, stacklevel=2)
    target = model.modules[(ps.output, ps.input)]
    theta_true = cfg.orders.theta_of(target)
    lines = mid_band(cfg.N, cfg.lpm.half_width)
    seeds = [cfg.base_seed + m for m in range(cfg.replicates)]
    args = [(cfg, model, ps, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, args))
    else:
        results = [_job(a) for a in args]
    g_true = impulse_response(target, cfg.ir_horizon)
    n_th = cfg.orders.n_theta
    rep = McReport(config=cfg, seeds=seeds, theta_true=theta_true, lines=lines,
                   frf_true=freq_response(target, lines, cfg.N))
    for method in cfg.methods:
        fits = np.full(len(seeds), np.nan)
        thetas = np.full((len(seeds), n_th), np.nan)
        frf = np.full((len(seeds), lines.size), np.nan + 0j)
        errs = {}
        frf_np = np.full_like(frf, np.nan)
        for i, res in enumerate(results):
            theta, G, err = res[method][:3]
            if err is not None:
                errs[i] = err
                continue
            thetas[i] = theta
            frf[i] = G
            if method == "ilpm_elis":
                frf_np[i] = res[method][3]
            fits[i] = fit_metric(g_true, impulse_response(cfg.orders.to_tf(theta),
                                                          cfg.ir_horizon))
        rep.fits[method] = fits
        rep.thetas[method] = thetas
        rep.frf[method] = frf
        rep.errors[method] = errs
        if method == "ilpm_elis":
            rep.frf_np = frf_np
    return rep
