import math

import numpy as np
import pytest

from fracsgd import data, llc, nn, trainer
from fracsgd.validate import TOY_SGLD, check_llc

M = 10_000


def test_toy_agreement_with_volume_oracle():
    for c in check_llc(M):
        assert c.ok, c.detail


def test_product_potential_agreement():
    pot = llc.product_potential()
    est = llc.estimate_llc_toy(pot, np.zeros(2), M, TOY_SGLD, seed=0)
    scan = llc.volume_scan(pot, np.zeros(2), np.logspace(-1, -6, 12), 1_000_000, multiplicity=2)
    assert abs(est.lambda_hat - scan.lam) <= 0.1 + 0.2 * abs(scan.lam)


@pytest.mark.parametrize("make, lam", [(lambda: llc.power_potential(2, 1), 0.5),
                                       (lambda: llc.power_potential(2, 4), 2.0)])
def test_quadratic_upper_bound_small_step(make, lam):
    # the Euler-Maruyama bias at eps=1e-4 is a few percent; at 1e-5 the bound d/2 holds
    cfg = llc.SgldConfig(1e-5, 1.0, 200, 8000, 2000)
    est = llc.estimate_llc_toy(make(), np.zeros(make().dim), M, cfg, seed=0)
    assert est.lambda_hat <= lam + 3 * est.std_err
    assert est.lambda_hat == pytest.approx(lam, rel=0.05)


def test_std_err_scales_with_chains():
    pot = llc.power_potential(2, 1)
    se = np.array([[llc.estimate_llc_toy(pot, [0.0], M, llc.SgldConfig(1e-4, 1.0, k, 300, 100),
                                         seed=rep).std_err for k in (4, 8)] for rep in range(50)])
    # the squared standard error is unbiased for var/chains, so doubling chains halves its mean
    rms = np.sqrt((se ** 2).mean(axis=0))
    assert rms[1] / rms[0] == pytest.approx(1 / math.sqrt(2), abs=0.1)


def test_off_minimum_center_flags_negative():
    est = llc.estimate_llc_toy(llc.power_potential(2, 1), [1.0], M, TOY_SGLD, seed=0)
    assert est.negative_flag and est.lambda_hat < -100


def test_toy_determinism():
    pot = llc.power_potential(4, 1)
    cfg = llc.SgldConfig(1e-4, 1.0, 8, 200, 100)
    a = llc.estimate_llc_toy(pot, [0.0], M, cfg, seed=3)
    b = llc.estimate_llc_toy(pot, [0.0], M, cfg, seed=3)
    assert a.lambda_hat == b.lambda_hat and a.std_err == b.std_err


def test_sgld_config_validation():
    with pytest.raises(ValueError):
        llc.SgldConfig(step_size=0)
    with pytest.raises(ValueError):
        llc.SgldConfig(draws=10, burn_in=10)
    with pytest.raises(ValueError):
        llc.SgldConfig().inverse_temperature(2)
    assert llc.SgldConfig().inverse_temperature(math.e ** 2) == pytest.approx(0.5)
    assert llc.SgldConfig(beta=0.3).inverse_temperature(100) == 0.3


@pytest.mark.parametrize("make, eps, lam, tol", [
    (lambda: llc.power_potential(2, 1), np.logspace(-1, -4, 10), 0.5, 0.05),
    (lambda: llc.power_potential(4, 1), np.logspace(-1, -5, 10), 0.25, 0.05),
])
def test_volume_scan_examples(make, eps, lam, tol):
    pot = make()
    scan = llc.volume_scan(pot, np.zeros(pot.dim), eps, 1_000_000)
    assert scan.lam == pytest.approx(lam, abs=tol) and scan.r_squared > 0.99


def test_volume_scan_product_log_correction():
    pot = llc.product_potential()
    eps = np.logspace(-1, -6, 12)
    corrected = llc.volume_scan(pot, np.zeros(2), eps, 1_000_000, multiplicity=2)
    assert corrected.lam == pytest.approx(0.5, abs=0.1)
    assert "log" in corrected.note


def test_volume_scan_input_errors():
    pot = llc.power_potential(2, 1)
    with pytest.raises(ValueError):
        llc.volume_scan(pot, [0.0], [0.1, 0.01])
    with pytest.raises(ValueError):
        llc.volume_scan(pot, [0.0], [0.1, 0.0, 1e-3])
    with pytest.raises(ValueError):
        llc.volume_scan(llc.power_potential(2, 5), np.zeros(5), np.logspace(-1, -3, 5))


def test_volume_scan_zero_hits_warn():
    pot = llc.power_potential(2, 1)
    with pytest.warns(UserWarning):
        scan = llc.volume_scan(pot, [0.0], np.logspace(-1, -14, 8), 1000)
    assert len(scan.excluded) > 0


def test_near_stability_examples():
    assert llc.near_stability_diagnostic([1.0, 2.0, 3.0]) == 0
    assert llc.near_stability_diagnostic([-1.0, 2.0, 3.0, 4.0]) == 0.25
    with pytest.raises(ValueError):
        llc.near_stability_diagnostic([])


def test_wbic_examples():
    assert llc.wbic(1.0, 2.0, math.e) == pytest.approx(math.e + 2)
    vals = [llc.wbic(0.5, lam, 100) for lam in (0.5, 1.0, 2.0)]
    assert vals == sorted(vals)
    with pytest.raises(ValueError):
        llc.wbic(1.0, 1.0, 1)


@pytest.fixture(scope="module")
def converged_run(tmp_path_factory):
    tr, te = data.split(data.synth_blobs(4, 8, 250, 0.7, 0), data.SplitSpec(0.5, 0))
    cfg = trainer.RunConfig(nn.Architecture((8, 16, 16, 4)), nn.OptimizerConfig("sgd", 0.01, 0, 25), 150, 0,
                            telemetry_every=100, checkpoint_every=100, llc_every=0)
    ckdir = tmp_path_factory.mktemp("ckpt")
    trainer.train_run(cfg, tr, te, checkpoint_dir=ckdir)
    return cfg, tr, te, ckdir


def test_network_llc_series(converged_run):
    cfg, tr, te, ckdir = converged_run
    sgld = llc.SgldConfig(1e-3, 100.0, 4, 200, 90, batch_size=25)
    ckpts = [(s, trainer.Checkpoint.load(ckdir / f"ckpt_{s:08d}").params) for s in range(2100, 3001, 100)]
    series = llc.llc_series(ckpts, tr, sgld, seed=0)
    lam = np.array([e.lambda_hat for e in series])
    assert lam.std() < 0.2 * lam.mean()
    assert llc.near_stability_diagnostic(series) < 0.1
    assert np.all(lam <= cfg.arch.dim / 2)


def test_llc_series_duplicate_steps_identical(converged_run):
    cfg, tr, te, ckdir = converged_run
    w = trainer.Checkpoint.load(ckdir / "ckpt_00000100").params
    sgld = llc.SgldConfig(1e-3, 100.0, 2, 40, 20, batch_size=25)
    a, b = llc.llc_series([(100, w), (100, w)], tr, sgld, seed=5)
    assert a.lambda_hat == b.lambda_hat
    c = llc.estimate_llc(w, tr, sgld, seed=7)
    d = llc.estimate_llc(w, tr, sgld, seed=7)
    assert c.lambda_hat == d.lambda_hat and c.chains_used == 2


def test_estimate_llc_errors(converged_run):
    cfg, tr, te, _ = converged_run
    w = nn.init_params(cfg.arch, 0)
    with pytest.raises(ValueError):
        llc.estimate_llc(w, tr.subset(np.array([], dtype=int)))
