import math
import warnings

import numpy as np
import pytest

from fracsgd import data, nn, trainer
from fracsgd.trainer import Checkpoint, RunConfig, TrajectoryLog


def _blobs(seed=0, spread=0.5, classes=3, dim=4, per_class=40):
    return data.split(data.synth_blobs(classes, dim, per_class, spread, seed), data.SplitSpec(0.5, seed))


def _cfg(epochs=5, seed=0, kind="sgd", lr=0.05, hidden=(8,), dim=4, classes=3, **kw):
    kw.setdefault("telemetry_every", 2)
    kw.setdefault("llc_every", 0)
    return RunConfig(nn.Architecture((dim,) + hidden + (classes,)), nn.OptimizerConfig(kind, lr, 0.0, 10),
                     epochs, seed, **kw)


def test_zero_epochs_single_row():
    tr, te = _blobs()
    log = trainer.train_run(_cfg(epochs=0), tr, te)
    assert log.steps == [0] and log.displacement == [0.0] and log.status == "ok"


def test_zero_learning_rate_is_stationary():
    tr, te = _blobs()
    log = trainer.train_run(_cfg(lr=0.0), tr, te)
    assert set(log.displacement) == {0.0}
    assert len(set(log.train_loss)) == 1


def test_telemetry_cadence_and_monotone_steps():
    tr, te = _blobs()
    log = trainer.train_run(_cfg(epochs=3), tr, te)
    # 60 training samples in batches of 10: 6 steps per epoch
    assert log.steps == [0, 2, 4, 6, 8, 10, 12, 14, 16, 18]
    assert len(log.step_increments) == 18
    assert all(np.isnan(log.llc))


def test_generalization_error_perfect():
    tr, te = _blobs(spread=1e-3)
    arch = nn.Architecture((4, 3))
    # a linear layer whose rows are the class centres classifies blobs exactly
    w = np.concatenate([data.blob_centers(3, 4).T.ravel(), np.zeros(3)])
    assert trainer.generalization_error(nn.ParamVector(w, arch), te) == 0.0


def test_generalization_error_random_labels_binomial():
    # predictions are fixed by the weights, labels are uniform: error ~ Binomial(n, 1 - 1/k) / n
    k, n = 4, 4000
    rng = np.random.default_rng(5)
    ds = data.Dataset(rng.standard_normal((n, 3)), rng.integers(0, k, n), k)
    p = nn.init_params(nn.Architecture((3, 6, k)), 0)
    err = trainer.generalization_error(p, ds)
    q = 1 - 1 / k
    assert abs(err - q) < 3 * math.sqrt(q * (1 - q) / n)


def test_generalization_error_permutation_invariant():
    tr, te = _blobs()
    p = nn.init_params(nn.Architecture((4, 8, 3)), 1)
    perm = np.random.default_rng(0).permutation(len(te))
    assert trainer.generalization_error(p, te) == trainer.generalization_error(p, te.subset(perm))
    with pytest.raises(ValueError):
        trainer.generalization_error(p, te.subset(np.array([], dtype=int)))


def test_finalize_examples(tmp_path):
    log = TrajectoryLog(steps=list(range(12)), gen_error=[0.3] * 12, llc=[2.0] * 12)
    assert trainer.finalize(log) == {"final_llc": 2.0, "final_gen_error": pytest.approx(0.3)}
    log = TrajectoryLog(steps=list(range(10)), gen_error=list(range(1, 11)),
                        llc=[math.nan] * 2 + list(range(1, 11)))
    log.gen_error = [float(v) for v in range(1, 11)]
    out = trainer.finalize(log)
    assert out["final_llc"] == 5.5 and out["final_gen_error"] == 5.5
    with pytest.warns(UserWarning):
        trainer.finalize(TrajectoryLog(gen_error=[1.0], llc=[1.0]))


def test_log_csv_round_trip(tmp_path):
    tr, te = _blobs()
    log = trainer.train_run(_cfg(), tr, te)
    log.to_csv(tmp_path / "log.csv")
    back = TrajectoryLog.from_csv(tmp_path / "log.csv")
    assert back.steps == log.steps
    for c in ("displacement", "increment", "train_loss", "gen_error"):
        assert getattr(back, c) == getattr(log, c)
    with pytest.warns(UserWarning):
        assert trainer.finalize(back)["final_gen_error"] == trainer.finalize(log)["final_gen_error"]
    header = (tmp_path / "log.csv").read_text().splitlines()[0].split(",")
    assert header[:7] == list(trainer.LOG_COLUMNS) and header[7:] == ["layer_0", "layer_1"]


@pytest.mark.parametrize("kind", ["sgd", "adamw"])
def test_checkpoint_resume_bitwise(tmp_path, kind):
    tr, te = _blobs()
    cfg = _cfg(epochs=100, kind=kind, lr=0.01 if kind == "adamw" else 0.05, telemetry_every=20)
    full = trainer.train_run(cfg, tr, te)
    assert full.steps[-1] == 600
    ck = trainer.checkpoint_at(cfg, tr, te, 250)
    ck.save(tmp_path / "ck")
    resumed = trainer.train_run(cfg, tr, te, resume=Checkpoint.load(tmp_path / "ck"))
    assert resumed.final_params.values.tobytes() == full.final_params.values.tobytes()
    for c in ("steps", "displacement", "increment", "train_loss", "gen_error", "step_increments"):
        assert getattr(resumed, c) == getattr(full, c)


def test_checkpoint_files_written_and_hash_guard(tmp_path):
    tr, te = _blobs()
    cfg = _cfg(epochs=2, checkpoint_every=4)
    trainer.train_run(cfg, tr, te, checkpoint_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["ckpt_00000004.bin", "ckpt_00000004.json", "ckpt_00000008.bin", "ckpt_00000008.json",
                     "ckpt_00000012.bin", "ckpt_00000012.json"]
    ck = Checkpoint.load(tmp_path / "ckpt_00000008")
    assert ck.step == 8 and ck.params.dim == cfg.arch.dim
    with pytest.raises(ValueError):
        trainer.train_run(_cfg(epochs=2, seed=1), tr, te, resume=ck)


def test_same_seed_identical_and_seeds_differ():
    tr, te = _blobs()
    a = trainer.train_run(_cfg(seed=3), tr, te)
    b = trainer.train_run(_cfg(seed=3), tr, te)
    c = trainer.train_run(_cfg(seed=4), tr, te)
    assert a.displacement == b.displacement and a.train_loss == b.train_loss
    assert a.displacement != c.displacement


def test_ensemble_parallel_matches_serial():
    tr, te = _blobs()
    cfgs = [_cfg(seed=s) for s in range(3)]
    serial = trainer.ensemble(cfgs, tr, te, jobs=1)
    parallel = trainer.ensemble(cfgs, tr, te, jobs=2)
    for s, p in zip(serial, parallel):
        assert s.displacement == p.displacement and s.train_loss == p.train_loss


def test_ensemble_isolates_failures():
    tr, te = _blobs()
    bad = _cfg(dim=5)  # input width does not match the data
    logs = trainer.ensemble([_cfg(seed=0), bad, _cfg(seed=2)], tr, te)
    assert [l.status for l in logs] == ["ok", "failed", "ok"]
    assert "ValueError" in logs[1].message


def test_divergence_marks_run_failed():
    tr, te = _blobs()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        log = trainer.train_run(_cfg(lr=1e154, epochs=20), tr, te)
    assert log.status == "failed" and "diverged" in log.message


def test_heavy_tail_flag():
    log = TrajectoryLog(step_increments=[1.0] * 999 + [1e4])
    assert log.increment_kurtosis > 50 and log.heavy_tailed()
    rng = np.random.default_rng(0)
    light = TrajectoryLog(step_increments=list(np.abs(rng.standard_normal(1000))))
    assert not light.heavy_tailed()
    assert TrajectoryLog(step_increments=[1.0] * 10).increment_kurtosis == 0.0


def test_config_hash_and_round_trip():
    a, b = _cfg(seed=1), _cfg(seed=2)
    assert a.config_hash() != b.config_hash()
    assert RunConfig.from_dict(a.to_dict()).config_hash() == a.config_hash()


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(telemetry_every=3, llc_every=10)
    with pytest.raises(ValueError):
        _cfg(telemetry_every=0)
    with pytest.raises(ValueError):
        _cfg(epochs=-1)


def test_shape_mismatch_rejected():
    tr, te = _blobs()
    with pytest.raises(ValueError):
        trainer.train_run(_cfg(classes=2), tr, te)


def test_easy_blobs_ensemble_generalizes():
    tr, te = data.split(data.synth_blobs(4, 8, 100, 0.3, seed=0), data.SplitSpec(0.5, 0))
    cfgs = [_cfg(epochs=20, seed=s, dim=8, classes=4, hidden=(16,), telemetry_every=20) for s in range(20)]
    logs = trainer.ensemble(cfgs, tr, te)
    good = sum(l.status == "ok" and l.gen_error[-1] < 0.05 for l in logs)
    assert good >= 18
