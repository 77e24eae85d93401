"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the full list is repeated in the pytest
terminal summary. Criteria 7 to 10 train real ensembles through the CLI and
take several minutes each.
"""
import hashlib
import json
import time
from pathlib import Path

import pytest
from scipy.special import gamma as gamma_fn

from fracsgd import bench, cli
from fracsgd import validate as oracle

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _timed(fn, *a, **kw):
    start = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - start


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _all_ok(checks):
    return all(c.ok for c in checks)


def _describe(checks):
    return "; ".join(f"{c.claim}: margin {c.margin:.3g}" for c in checks)


def test_criterion_01_gradient(record_criterion):
    cases = oracle.gradient_cases(100, seed=0)
    assert max(p.dim for p, _ in cases) <= 5000
    checks, secs = _timed(oracle.check_gradient, 100, 1e-4, 0)
    ok = _all_ok(checks) and secs < 30
    record_criterion(1, "gradient vs central differences", ok, secs,
                     f"max rel error {checks[0].detail['max_rel_error']:.2e}")
    assert ok


def test_criterion_02_caputo(record_criterion):
    # D^0.5 t at t = 1 is 1/Gamma(1.5) = 2/sqrt(pi)
    assert round(1 / gamma_fn(1.5), 4) == 1.1284
    checks, secs = _timed(oracle.check_caputo, 0.5, 0.15)
    ok = _all_ok(checks) and secs < 10
    record_criterion(2, "Caputo L1 kernel value and convergence order", ok, secs, _describe(checks))
    assert ok


def test_criterion_03_steady_state(record_criterion):
    checks, secs = _timed(oracle.check_lemma1, (0.5, 0.75, 1.0), 1e8, 1500, 1e-3, 1e-10)
    ok = _all_ok(checks) and len(checks) == 3 and secs < 300
    detail = "; ".join(f"L1 {c.detail['l1']:.2e} mass {c.detail['max_mass_error']:.1e}" for c in checks)
    record_criterion(3, "FFPE double-well steady state is Boltzmann", ok, secs, detail)
    assert ok


def test_criterion_04_posterior_identity(record_criterion):
    checks, secs = _timed(oracle.check_corollary2)
    ok = _all_ok(checks)
    record_criterion(4, "stationary density vs posterior identity", ok, secs, _describe(checks))
    assert ok


def test_criterion_05_llc_vs_volume(record_criterion):
    checks, secs = _timed(oracle.check_llc, 10_000)
    ok = _all_ok(checks) and len(checks) == 3 and secs < 120
    detail = "; ".join(f"{c.claim.split('for ')[-1]} sgld {c.detail['sgld']:.3f} volume {c.detail['volume']:.3f}"
                       for c in checks)
    record_criterion(5, "SGLD LLC agrees with volume oracle", ok, secs, detail)
    assert ok


def test_criterion_06_fractal_bench(record_criterion):
    checks, secs = _timed(oracle.check_gasket, level=8, walkers=100_000, steps=10_000)
    ok = _all_ok(checks) and len(checks) == 6 and secs < 300
    detail = "; ".join(f"{c.claim.split(' within')[0].split(' is diffusive')[0]} margin {c.margin:.3f}"
                       for c in checks)
    record_criterion(6, "Sierpinski gasket certification and diffusive controls", ok, secs, detail)
    assert ok
    assert bench.GASKET_DF == pytest.approx(1.585, abs=5e-4)
    assert bench.GASKET_DWALK == pytest.approx(2.322, abs=5e-4)
    assert bench.GASKET_DS == pytest.approx(1.365, abs=5e-4)


@pytest.fixture(scope="module")
def blobs_ensemble(tmp_path_factory):
    out = tmp_path_factory.mktemp("blobs") / "ensemble"
    start = time.perf_counter()
    code = cli.main(["ensemble", "--config", str(CONFIGS / "blobs_train.toml"), "--out", str(out)])
    assert code == 0
    assert cli.main(["analyze", str(out)]) == 0
    secs = time.perf_counter() - start
    report = json.loads((out / "analysis" / "report.json").read_text())
    return out, report, secs


def test_criterion_07_subdiffusion(blobs_ensemble, record_criterion):
    out, report, secs = blobs_ensemble
    runs = report["runs"]
    member = json.loads((out / "run_000" / "manifest.json").read_text())
    ok = (len(runs) == 20 and not report["skipped"]
          and all(r["fit"]["r_squared"] > 0.95 and r["fit"]["slope"] <= 0.5 for r in runs)
          and all(r["fit"]["t_max"] >= 2000 for r in runs)
          and secs < 15 * 60)
    s = report["summary"]
    record_criterion(7, "20-seed ensemble displacement is subdiffusive", ok, secs,
                     f"min R^2 {s['min_r_squared']:.3f}, max slope {s['max_slope']:.3f}, "
                     f"{len(runs)} runs, {member['config']['training']['epochs']} epochs")
    assert ok


def test_criterion_08_dimension_inequalities(blobs_ensemble, record_criterion):
    _, report, secs = blobs_ensemble
    s = report["summary"]
    ok = s["lemma2_fraction"] >= 0.95 and s["corollary3_fraction"] >= 0.95
    record_criterion(8, "d_s <= lambda_final and d_s <= lambda_bar", ok, 0.0,
                     f"lemma fractions {s['lemma2_fraction']:.0%} / {s['corollary3_fraction']:.0%}, "
                     f"min margins {s['min_lemma2_margin']:.2f} / {s['min_corollary3_margin']:.2f}")
    assert ok


def test_criterion_09_exponent_concentration(blobs_ensemble, record_criterion):
    _, report, _ = blobs_ensemble
    h = report["histogram"]
    ok = h["concentrated_high"]
    record_criterion(9, "diffusion-exponent histogram concentrates high", ok, 0.0,
                     f"median {h['median']:.4f} vs midpoint {h['midpoint']:.4f}, skew {h['skew']:.2f}")
    assert ok


def test_criterion_10_llc_vs_generalization(tmp_path, record_criterion):
    out = tmp_path / "sweep"
    start = time.perf_counter()
    assert cli.main(["ensemble", "--config", str(CONFIGS / "arch_sweep.toml"), "--out", str(out)]) == 0
    assert cli.main(["analyze", str(out)]) == 0
    secs = time.perf_counter() - start
    report = json.loads((out / "analysis" / "report.json").read_text())
    rel = report["llc_vs_generalization"]["per_architecture"]
    per_run = report["llc_vs_generalization"]["per_run"]
    ok = rel is not None and rel["n"] >= 6 and rel["slope"] > 0 and rel["pearson_r"] > 0.5
    record_criterion(10, "final LLC vs generalization error across architectures", ok, secs,
                     f"per-architecture r {rel['pearson_r']:.3f} over {rel['n']} architectures "
                     f"(per-run r {per_run['pearson_r']:.3f})" if rel else "no relation")
    assert ok


def test_criterion_11_manifest_determinism(blobs_ensemble, tmp_path, record_criterion):
    out, _, _ = blobs_ensemble
    start = time.perf_counter()
    pairs = []

    def rerun(command, first, second, extra=()):
        assert cli.main([command, "--config", str(first / "manifest.json"), "--out", str(second), *extra]) \
            in (0, 1)
        names = [a["path"] for a in json.loads((first / "manifest.json").read_text())["artifacts"]]
        pairs.extend((first / n, second / n) for n in names if n.endswith(".csv"))

    rerun("train", out / "run_000", tmp_path / "train")
    rerun("analyze", out / "analysis", tmp_path / "analyze")

    small = tmp_path / "small.toml"
    small.write_text("schema_version = 1\n[data]\nclasses = 3\ndim = 4\nper_class = 40\n"
                     "[model]\nhidden = [8]\n[optimizer]\nbatch_size = 10\n"
                     "[training]\nepochs = 40\ntelemetry_every = 10\nllc_every = 10\n"
                     "[sgld]\nchains = 2\ndraws = 40\nburn_in = 20\n[ensemble]\nseeds = 2\n")
    assert cli.main(["ensemble", "--config", str(small), "--out", str(tmp_path / "ens_a")]) == 0
    rerun("ensemble", tmp_path / "ens_a", tmp_path / "ens_b")
    pairs.extend((tmp_path / "ens_a" / f"run_00{i}" / "log.csv", tmp_path / "ens_b" / f"run_00{i}" / "log.csv")
                 for i in range(2))

    tools = {
        "ffpe": "[ffpe]\nalpha = 0.75\nn = 80\nt_end = 1e4\nsteps = 200\ngrading = 3.0\nsnapshots = [1.0]\n",
        "bench": '[bench]\ngraph = "chain"\nsize = 2001\nwalkers = 2000\nsteps = 1000\n',
        "llc": '[sgld]\nstep_size = 1e-4\nlocalization = 1.0\nchains = 8\ndraws = 300\nburn_in = 100\n'
               '[toy]\npotential = "w^4"\nsamples = 100000\neps_min = 1e-5\n',
    }
    for command, body in tools.items():
        cfg = tmp_path / f"{command}.toml"
        cfg.write_text("schema_version = 1\n" + body)
        assert cli.main([command, "--config", str(cfg), "--out", str(tmp_path / f"{command}_a")]) in (0, 1)
        rerun(command, tmp_path / f"{command}_a", tmp_path / f"{command}_b")

    mismatched = [str(a.relative_to(a.parents[1])) for a, b in pairs if _sha(a) != _sha(b)]
    secs = time.perf_counter() - start
    ok = not mismatched and len(pairs) >= 10
    record_criterion(11, "manifest re-runs reproduce CSVs bitwise", ok, secs,
                     f"{len(pairs)} CSVs compared" + (f", mismatched: {mismatched}" if mismatched else ""))
    assert ok
