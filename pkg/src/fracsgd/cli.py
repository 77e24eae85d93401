"""Command-line entry point: ``fracsgd <command> [options]``.

Every command writes into its own output directory together with a
manifest.json; passing that manifest back as ``--config`` repeats the command
and reproduces its CSV outputs bitwise.

Exit codes: 0 ok, 1 failed checks, 2 config error, 3 data error,
4 numerical divergence, 5 insufficient telemetry.
"""
import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, bench, config, ffpe, llc, trainer
from . import validate as oracle

logger = logging.getLogger("fracsgd")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_TELEMETRY = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg, artifacts, started, status="ok", extra=None):
    """Record the resolved config and every file this command wrote under ``out``."""
    out = Path(out)
    manifest = {
        "tool": "fracsgd",
        "version": __version__,
        "command": command,
        "run_id": config.run_id(cfg),
        "started": started,
        "finished": _now(),
        "status": status,
        "config": json.loads(config.canonical(cfg)),
        "artifacts": [{"path": str(a), "sha256": _sha256(out / a)} for a in artifacts],
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _load(path, sections=None):
    if path is None:
        raise CliError(EXIT_CONFIG, "--config is required")
    try:
        return config.load(path, sections)
    except config.ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc


def _out_dir(args, default):
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


# train / ensemble ------------------------------------------------------------

def train_into(cfg, out):
    """Train one configuration into ``out``; returns ``(log, manifest)``."""
    started = _now()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        train, test = config.load_datasets(cfg)
        rc = config.run_config(cfg, train)
    except config.DataError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    except config.ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    ckpt_dir = None
    if rc.checkpoint_every:
        ckpt_dir = out / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
    try:
        log = trainer.train_run(rc, train, test, checkpoint_dir=ckpt_dir)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    log.to_csv(out / "log.csv")
    artifacts = ["log.csv"]
    if ckpt_dir is not None:
        artifacts += sorted(str(p.relative_to(out)) for p in ckpt_dir.iterdir())
    summary = trainer.finalize(log) if log.status == "ok" and len(log) else {}
    manifest = write_manifest(out, "train", cfg, artifacts, started, log.status, {
        "message": log.message,
        "increment_kurtosis": log.increment_kurtosis,
        "final_llc": _finite(summary.get("final_llc")),
        "final_gen_error": _finite(summary.get("final_gen_error")),
    })
    return log, manifest


def cmd_train(args):
    cfg = _load(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = _out_dir(args, Path("runs") / config.run_id(cfg))
    log, _ = train_into(cfg, out)
    print(f"{out}: {len(log)} telemetry rows, status {log.status}")
    if log.status != "ok":
        print(log.message, file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


INDEX_COLUMNS = ("member", "run_dir", "run_id", "seed", "data_seed", "hidden", "status",
                 "final_llc", "final_gen_error", "message")


def _member(job):
    cfg, out = job
    try:
        log, man = train_into(cfg, out)
        return {"status": log.status, "message": log.message, "run_id": man["run_id"],
                "final_llc": man["final_llc"], "final_gen_error": man["final_gen_error"]}
    except CliError as exc:
        return {"status": "failed", "message": str(exc), "run_id": config.run_id(cfg),
                "final_llc": None, "final_gen_error": None}


def cmd_ensemble(args):
    cfg = _load(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.n_seeds is not None:
        cfg["ensemble"]["seeds"] = args.n_seeds
    try:
        members = config.members(cfg)
    except config.ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    started = _now()
    out = _out_dir(args, Path("ensembles") / config.run_id(cfg))
    jobs = [(m, out / f"run_{i:03d}") for i, m in enumerate(members)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_COLUMNS)
        for i, ((m, run_dir), r) in enumerate(zip(jobs, results)):
            w.writerow([i, run_dir.name, r["run_id"], m["seed"], m["data"]["seed"],
                        "-".join(map(str, m["model"]["hidden"])), r["status"],
                        "" if r["final_llc"] is None else repr(r["final_llc"]),
                        "" if r["final_gen_error"] is None else repr(r["final_gen_error"]),
                        r["message"]])
    failed = sum(r["status"] != "ok" for r in results)
    write_manifest(out, "ensemble", cfg, ["index.csv"], started,
                   "ok" if not failed else ("failed" if failed == len(results) else "partial"),
                   {"members": len(results), "failed_members": failed})
    print(f"{out}: {len(results) - failed}/{len(results)} runs ok")
    return EXIT_DIVERGED if failed == len(results) else EXIT_OK


# analyze -----------------------------------------------------------------------

def _read_index(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def analyze_dir(src, discard_fraction=analysis.DEFAULT_DISCARD, final_window=10, window=None):
    """Library form of ``fracsgd analyze``: returns the report dict and per-run fits."""
    src = Path(src)
    if (src / "index.csv").is_file():
        rows = _read_index(src / "index.csv")
    elif (src / "log.csv").is_file():
        rows = [{"member": "0", "run_dir": ".", "hidden": "", "status": "ok"}]
    else:
        raise CliError(EXIT_TELEMETRY, f"no log.csv or index.csv under {src}")
    runs, skipped, curves = [], [], []
    for row in rows:
        path = src / row["run_dir"] / "log.csv"
        if row.get("status", "ok") != "ok" or not path.is_file():
            skipped.append({"run_dir": row["run_dir"], "reason": row.get("message") or "run failed"})
            continue
        log = trainer.TrajectoryLog.from_csv(path)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit, rep = analysis.analyze_trajectory(log.steps, log.displacement, log.llc,
                                                       window, discard_fraction, final_window)
                fin = trainer.finalize(log, final_window)
        except ValueError as exc:
            skipped.append({"run_dir": row["run_dir"], "reason": f"insufficient telemetry: {exc}"})
            continue
        runs.append({"run_dir": row["run_dir"], "hidden": row.get("hidden", ""),
                     "fit": fit.to_dict(), "report": rep.to_dict(),
                     "final_llc": fin["final_llc"], "final_gen_error": fin["final_gen_error"]})
        steps = log.array("steps")
        sel = (steps >= fit.t_min) & (steps <= fit.t_max)
        for t, r, used in zip(steps, log.array("displacement"), sel):
            pred = math.exp(fit.intercept) * t ** fit.slope if t > 0 else math.nan
            curves.append([row["run_dir"], int(t), r, pred, int(used)])
    if not runs:
        raise CliError(EXIT_TELEMETRY, "no run has enough telemetry for a power-law fit; "
                       + "; ".join(s["reason"] for s in skipped))
    reps = [r["report"] for r in runs]
    report = {
        "schema_version": config.SCHEMA_VERSION,
        "source": str(src),
        "settings": {"discard_fraction": discard_fraction, "final_window": final_window,
                     "window": list(window) if window else None},
        "n_runs": len(runs),
        "runs": runs,
        "skipped": skipped,
        "summary": {
            "min_r_squared": min(r["fit"]["r_squared"] for r in runs),
            "max_slope": max(r["fit"]["slope"] for r in runs),
            "all_subdiffusive": all(r["fit"]["subdiffusive"] for r in runs),
            "lemma2_fraction": float(np.mean([r["lemma2_holds"] for r in reps])),
            "corollary3_fraction": float(np.mean([r["corollary3_holds"] for r in reps])),
            "min_lemma2_margin": min(r["lemma2_margin"] for r in reps),
            "min_corollary3_margin": min(r["corollary3_margin"] for r in reps),
        },
        "histogram": None,
        "llc_vs_generalization": {"per_run": None, "per_architecture": None},
    }
    if len(runs) >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report["histogram"] = analysis.diffusion_exponent_histogram(
                [r["diffusion_exponent"] for r in reps]).to_dict()
    pairs = [(r["final_llc"], r["final_gen_error"]) for r in runs]
    report["llc_vs_generalization"]["per_run"] = _relation(pairs)
    groups = {}
    for r in runs:
        groups.setdefault(r["hidden"], []).append((r["final_llc"], r["final_gen_error"]))
    if len(groups) >= 3:
        means = [tuple(np.mean(v, axis=0)) for v in groups.values()]
        rel = _relation(means)
        if rel is not None:
            rel["architectures"] = list(groups)
        report["llc_vs_generalization"]["per_architecture"] = rel
    return report, curves


def _relation(pairs):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return analysis.llc_vs_generalization(pairs).to_dict()
    except ValueError:
        return None


def cmd_analyze(args):
    started = _now()
    settings = {"source": None, "discard_fraction": analysis.DEFAULT_DISCARD, "final_window": 10,
                "window": None}
    if args.config:
        cfg = _load(args.config, sections=["analyze"])
        settings.update({k: v for k, v in cfg["analysis"].items() if v is not None})
        settings.update(cfg.get("analyze", {}))
    if args.source:
        settings["source"] = args.source
    if settings["source"] is None:
        raise CliError(EXIT_CONFIG, "analyze needs a run or ensemble directory")
    src = Path(settings["source"])
    report, curves = analyze_dir(src, settings["discard_fraction"], settings["final_window"],
                                 settings["window"])
    out = _out_dir(args, src / "analysis")
    _write_json(out / "report.json", report)
    with open(out / "loglog.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_dir", "step", "displacement", "fitted", "in_fit"])
        for row in curves:
            w.writerow(row[:2] + [repr(float(row[2])), repr(float(row[3])), row[4]])
    with open(out / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        h = report["histogram"]
        if h:
            for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
                w.writerow([repr(lo), repr(hi), c])
    with open(out / "scatter.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_dir", "hidden", "final_llc", "final_gen_error", "diffusion_exponent"])
        for r in report["runs"]:
            w.writerow([r["run_dir"], r["hidden"], repr(r["final_llc"]), repr(r["final_gen_error"]),
                        repr(r["report"]["diffusion_exponent"])])
    cfg = {"schema_version": config.SCHEMA_VERSION,
           "analyze": {k: v for k, v in settings.items() if v is not None}}
    cfg["analyze"]["source"] = str(src)
    write_manifest(out, "analyze", cfg, ["report.json", "loglog.csv", "histogram.csv", "scatter.csv"],
                   started)
    s = report["summary"]
    print(f"{out}: {report['n_runs']} runs, min R^2 {s['min_r_squared']:.3f}, "
          f"max slope {s['max_slope']:.3f}, d_s <= lambda_final on {s['lemma2_fraction']:.0%}")
    return EXIT_OK


# llc ---------------------------------------------------------------------------

TOYS = {
    "w^2": lambda: llc.power_potential(2, 1),
    "w^4": lambda: llc.power_potential(4, 1),
    "norm2_d4": lambda: llc.power_potential(2, 4),
    "product": llc.product_potential,
}


def cmd_llc(args):
    started = _now()
    cfg = _load(args.config, sections=["toy"])
    if args.seed is not None:
        cfg["seed"] = args.seed
    s = cfg["sgld"]
    sgld = llc.SgldConfig(s["step_size"], s["localization"], s["chains"], s["draws"], s["burn_in"],
                          s["batch_size"])
    out = _out_dir(args, Path("llc") / config.run_id(cfg))
    artifacts = ["llc.json"]
    if args.checkpoint:
        try:
            train, _ = config.load_datasets(cfg)
        except config.DataError as exc:
            raise CliError(EXIT_DATA, str(exc)) from exc
        ckpt = trainer.Checkpoint.load(args.checkpoint)
        est = llc.estimate_llc(ckpt.params, train, sgld, seed=cfg["seed"])
        result = {"checkpoint": str(args.checkpoint), "step": ckpt.step}
        cfg["checkpoint"] = str(args.checkpoint)
    else:
        toy = cfg.get("toy")
        if not toy or toy.get("potential") not in TOYS:
            raise CliError(EXIT_CONFIG, f"[toy] potential must be one of {sorted(TOYS)}, "
                           "or pass --checkpoint")
        pot = TOYS[toy["potential"]]()
        w0 = np.zeros(pot.dim)
        est = llc.estimate_llc_toy(pot, w0, toy.get("m", 10_000), sgld, seed=cfg["seed"])
        eps = np.logspace(math.log10(toy.get("eps_max", 0.1)), math.log10(toy.get("eps_min", 1e-4)),
                          toy.get("eps_points", 10))
        scan = llc.volume_scan(pot, w0, eps, toy.get("samples", 1_000_000), seed=cfg["seed"],
                               multiplicity=toy.get("multiplicity", 1))
        result = {"potential": pot.name, "analytic": pot.lam, "volume_oracle": scan.lam,
                  "volume_r_squared": scan.r_squared, "volume_note": scan.note}
        with open(out / "volume_scan.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "volume"])
            for e, v in zip(scan.epsilons, scan.volumes):
                w.writerow([repr(float(e)), repr(float(v))])
        artifacts.append("volume_scan.csv")
    result.update({"lambda_hat": est.lambda_hat, "std_err": est.std_err,
                   "chains_used": est.chains_used, "dropped_chains": est.dropped_chains,
                   "negative": est.negative_flag, "m": est.m, "beta": est.beta})
    _write_json(out / "llc.json", result)
    write_manifest(out, "llc", cfg, artifacts, started)
    print(f"{out}: lambda_hat = {est.lambda_hat:.4g} +- {est.std_err:.2g}")
    return EXIT_OK


# ffpe --------------------------------------------------------------------------

POTENTIALS = {
    "double_well": lambda x: (x ** 2 - 1) ** 2,
    "quadratic": lambda x: 0.5 * x ** 2,
    "flat": lambda x: np.zeros_like(x),
}

FFPE_DEFAULTS = {"a": -2.5, "b": 2.5, "n": 200, "potential": "double_well", "coefficients": None,
                 "diffusion": 0.5, "cells_per_value": 1, "gamma": 1.0, "alpha": 1.0,
                 "t_end": 100.0, "steps": 400, "grading": 1.0, "snapshots": [],
                 "initial": "gaussian", "initial_center": 0.5, "initial_width": 0.1}


def ffpe_problem(spec):
    """Build an FfpeProblem from an ``[ffpe]`` table (defaults filled in)."""
    if spec["coefficients"] is not None:
        V = np.polynomial.Polynomial(spec["coefficients"])
    elif spec["potential"] in POTENTIALS:
        V = POTENTIALS[spec["potential"]]
    else:
        raise config.ConfigError(f"unknown potential {spec['potential']!r}")
    D = spec["diffusion"]
    if isinstance(D, list):
        reps = np.repeat(np.asarray(D, dtype=np.float64), spec["cells_per_value"])
        D = np.tile(reps, spec["n"] // len(reps) + 1)[:spec["n"]]
    return ffpe.FfpeProblem.from_functions(spec["a"], spec["b"], spec["n"], V, D, spec["gamma"],
                                           spec["alpha"])


def cmd_ffpe(args):
    started = _now()
    cfg = _load(args.config, sections=["ffpe"])
    unknown = set(cfg.get("ffpe", {})) - set(FFPE_DEFAULTS)
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown [ffpe] keys {sorted(unknown)}")
    spec = {**FFPE_DEFAULTS, **cfg.get("ffpe", {})}
    cfg["ffpe"] = spec
    try:
        prob = ffpe_problem(spec)
    except (config.ConfigError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    if spec["initial"] == "uniform":
        p0 = np.ones(prob.n)
    else:
        p0 = np.exp(-(prob.x - spec["initial_center"]) ** 2 / spec["initial_width"])
    if spec["grading"] == 1:
        times = ffpe.uniform_times(spec["t_end"], spec["steps"])
    else:
        times = ffpe.graded_times(spec["t_end"], spec["steps"], spec["grading"])
    try:
        state, snaps = ffpe.solve(prob, p0, times, list(spec["snapshots"]) + [spec["t_end"]])
    except ffpe.MassConservationError as exc:
        raise CliError(EXIT_DIVERGED, str(exc)) from exc
    out = _out_dir(args, Path("ffpe") / config.run_id(cfg))
    ffpe.write_snapshots(out / "snapshots.csv", prob, snaps)
    summary = {"final_time": state.t, "max_mass_error": state.max_mass_error,
               "negatives_clipped": state.negatives_clipped, "l1_to_boltzmann": None}
    try:
        summary["l1_to_boltzmann"] = ffpe.l1_distance(state.p, ffpe.boltzmann_stationary(prob), prob.h)
    except ffpe.StationaryHypothesisError as exc:
        summary["boltzmann_note"] = str(exc)
    _write_json(out / "summary.json", summary)
    write_manifest(out, "ffpe", cfg, ["snapshots.csv", "summary.json"], started)
    print(f"{out}: t={state.t:g}, L1 to Boltzmann {summary['l1_to_boltzmann']}")
    return EXIT_OK


# bench -------------------------------------------------------------------------

BENCH_DEFAULTS = {"graph": "gasket", "level": 8, "size": 201, "walkers": 100_000, "steps": 10_000,
                  "return_window": None, "msd_window": None}


def cmd_bench(args):
    started = _now()
    cfg = _load(args.config, sections=["bench"])
    if args.seed is not None:
        cfg["seed"] = args.seed
    unknown = set(cfg.get("bench", {})) - set(BENCH_DEFAULTS)
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown [bench] keys {sorted(unknown)}")
    spec = {**BENCH_DEFAULTS, **cfg.get("bench", {})}
    cfg["bench"] = spec
    steps = spec["steps"]
    rwin = tuple(spec["return_window"] or (16, steps // 5))
    mwin = tuple(spec["msd_window"] or (steps // 100, steps))
    try:
        if spec["graph"] == "gasket":
            g = bench.build_gasket(spec["level"])
        elif spec["graph"] == "chain":
            g = bench.chain_graph(spec["size"])
        elif spec["graph"] == "lattice":
            g = bench.lattice_graph(spec["size"])
        else:
            raise ValueError(f"unknown graph {spec['graph']!r}")
        ens = bench.simulate_walks(g, steps, spec["walkers"], cfg["seed"])
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    out = _out_dir(args, Path("bench") / config.run_id(cfg))
    t = np.arange(steps + 1)
    with open(out / "msd.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "msd"])
        w.writerows([int(a), repr(float(b))] for a, b in zip(t, ens.msd))
    with open(out / "return.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "return_prob"])
        w.writerows([int(a), repr(float(b))] for a, b in zip(t, ens.return_prob))
    try:
        if spec["graph"] == "gasket":
            radii = np.geomspace(4, 2 ** spec["level"], 7)
            verdict = bench.certify(
                g, ens, radii, rwin, mwin,
                expected={"d_f": bench.GASKET_DF, "d_walk": bench.GASKET_DWALK, "d_s": bench.GASKET_DS},
                tol=oracle.GASKET_TOL)
        else:
            expected = 1.0 if spec["graph"] == "chain" else 2.0
            dw = bench.walker_dimension(ens, mwin).exponent
            ds = bench.spectral_from_return(ens, rwin, g).exponent
            err = max(abs(dw - 2) / 2, abs(ds - expected) / expected)
            verdict = {"graph": g.name, "d_walk": dw, "d_s": ds, "expected_d_s": expected,
                       "subdiffusive": bool(dw > 2.05), "ok": bool(err <= 0.05)}
    except ValueError as exc:
        raise CliError(EXIT_TELEMETRY, str(exc)) from exc
    _write_json(out / "verdict.json", verdict)
    write_manifest(out, "bench", cfg, ["msd.csv", "return.csv", "verdict.json"], started)
    print(f"{out}: {g.name} d_walk={verdict['d_walk']:.3f} d_s={verdict['d_s']:.3f} "
          f"{'PASS' if verdict['ok'] else 'FAIL'}")
    return EXIT_OK if verdict["ok"] else EXIT_FAILED


# validate ----------------------------------------------------------------------

def cmd_validate(args):
    only = [g for item in (args.only or []) for g in item.split(",") if g]
    try:
        checks = oracle.run(only or None, quick=args.quick)
    except KeyError as exc:
        raise CliError(EXIT_CONFIG, f"{exc.args[0]}; known groups: {', '.join(oracle.GROUPS)}") from exc
    print(oracle.format_table(checks))
    if args.out:
        out = _out_dir(args, args.out)
        _write_json(out / "validate.json", [c.to_dict() for c in checks])
    failed = [c for c in checks if not c.ok]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


# -------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="fracsgd", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"fracsgd {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="TOML config or a manifest.json to re-run")
        sp.add_argument("--out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, help="override the root seed")
        return sp

    common(sub.add_parser("train", help="train one network and log its trajectory"))
    sp = common(sub.add_parser("ensemble", help="train many seeds / architectures"))
    sp.add_argument("--n-seeds", type=int, help="runs per architecture (overrides ensemble.seeds)")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp = common(sub.add_parser("analyze", help="fit scaling laws and test the inequalities"), seed=False)
    sp.add_argument("source", nargs="?", help="run or ensemble directory")
    sp = common(sub.add_parser("llc", help="estimate an LLC (toy potential or checkpoint)"))
    sp.add_argument("--checkpoint", help="checkpoint stem (without .bin/.json)")
    common(sub.add_parser("ffpe", help="solve a 1-D time-fractional Fokker-Planck problem"), seed=False)
    common(sub.add_parser("bench", help="random walks on a fractal or control graph"))
    sp = sub.add_parser("validate", help="run the oracle suite")
    sp.add_argument("--only", action="append", help=f"groups to run: {', '.join(oracle.GROUPS)}")
    sp.add_argument("--quick", action="store_true", help="smaller gradient and gasket checks")
    sp.add_argument("--out", help="directory for validate.json")
    return p


COMMANDS = {"train": cmd_train, "ensemble": cmd_ensemble, "analyze": cmd_analyze, "llc": cmd_llc,
            "ffpe": cmd_ffpe, "bench": cmd_bench, "validate": cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"fracsgd {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
