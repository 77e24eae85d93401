"""Deterministic training loop that records the displacement telemetry of a run."""
import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import nn
from .data import batches
from .llc import SgldConfig, estimate_llc, _point_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    arch: nn.Architecture
    opt: nn.OptimizerConfig
    epochs: int
    seed: int = 0
    telemetry_every: int = 100
    checkpoint_every: int = 0
    llc_every: int = 100
    sgld: SgldConfig = SgldConfig()
    kurtosis_threshold: float = 50.0

    def __post_init__(self):
        if self.telemetry_every < 1:
            raise ValueError("telemetry_every must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.llc_every and self.llc_every % self.telemetry_every:
            raise ValueError("llc_every must be a multiple of telemetry_every")

    def to_dict(self):
        return {
            "arch": self.arch.to_dict(),
            "opt": self.opt.to_dict(),
            "epochs": self.epochs,
            "seed": self.seed,
            "telemetry_every": self.telemetry_every,
            "checkpoint_every": self.checkpoint_every,
            "llc_every": self.llc_every,
            "sgld": self.sgld.to_dict(),
            "kurtosis_threshold": self.kurtosis_threshold,
        }

    @classmethod
    def from_dict(cls, d):
        opt = dict(d["opt"])
        opt["betas"] = tuple(opt.get("betas", (0.9, 0.999)))
        arch = dict(d["arch"])
        arch["layer_widths"] = tuple(arch["layer_widths"])
        return cls(
            arch=nn.Architecture(**arch),
            opt=nn.OptimizerConfig(**opt),
            epochs=d["epochs"],
            seed=d.get("seed", 0),
            telemetry_every=d.get("telemetry_every", 100),
            checkpoint_every=d.get("checkpoint_every", 0),
            llc_every=d.get("llc_every", 100),
            sgld=SgldConfig(**d.get("sgld", {})),
            kurtosis_threshold=d.get("kurtosis_threshold", 50.0),
        )

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


LOG_COLUMNS = ("step", "displacement", "increment", "train_loss", "gen_error", "llc", "llc_std_err")


@dataclass
class TrajectoryLog:
    """Telemetry of one run; every series has one entry per telemetry point."""
    steps: list = field(default_factory=list)
    displacement: list = field(default_factory=list)
    increment: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    gen_error: list = field(default_factory=list)
    llc: list = field(default_factory=list)
    llc_std_err: list = field(default_factory=list)
    per_layer: list = field(default_factory=list)
    step_increments: list = field(default_factory=list)
    run_id: str = ""
    config_hash: str = ""
    status: str = "ok"
    message: str = ""

    def __len__(self):
        return len(self.steps)

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=np.float64)

    @property
    def increment_kurtosis(self):
        """Excess kurtosis of per-step displacement increments."""
        inc = np.asarray(self.step_increments)
        if len(inc) < 4 or np.ptp(inc) == 0:
            return 0.0
        return float(stats.kurtosis(inc, fisher=True))

    def heavy_tailed(self, threshold=50.0):
        return self.increment_kurtosis > threshold

    def to_csv(self, path):
        n_layers = len(self.per_layer[0]) if self.per_layer else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(LOG_COLUMNS) + [f"layer_{i}" for i in range(n_layers)])
            for i in range(len(self.steps)):
                row = [str(self.steps[i])] + [repr(float(getattr(self, c)[i])) for c in LOG_COLUMNS[1:]]
                row += [repr(float(v)) for v in self.per_layer[i]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n_layers = len(header) - len(LOG_COLUMNS)
            for row in reader:
                log.steps.append(int(row[0]))
                for j, c in enumerate(LOG_COLUMNS[1:], start=1):
                    getattr(log, c).append(float(row[j]))
                log.per_layer.append([float(v) for v in row[len(LOG_COLUMNS):len(LOG_COLUMNS) + n_layers]])
        return log

    def state_dict(self):
        keys = ("steps", "displacement", "increment", "train_loss", "gen_error", "llc",
                "llc_std_err", "per_layer", "step_increments")
        return {k: [list(map(float, v)) if isinstance(v, (list, np.ndarray)) else v
                    for v in getattr(self, k)] for k in keys}

    @classmethod
    def from_state_dict(cls, d, **kw):
        log = cls(**kw)
        for k, v in d.items():
            setattr(log, k, list(v))
        log.steps = [int(s) for s in log.steps]
        log.per_layer = [np.asarray(p) for p in log.per_layer]
        return log


def generalization_error(params, test_set):
    """Misclassification rate on ``test_set``."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    pred = nn.predict_logits(params, test_set.features).argmax(axis=1)
    return float(np.mean(pred != test_set.labels))


@dataclass
class Checkpoint:
    step: int
    params: nn.ParamVector
    initial: nn.ParamVector
    opt_state: object
    log: TrajectoryLog
    previous: nn.ParamVector = None

    def save(self, stem):
        """Write ``<stem>.bin`` (little-endian float64 segments) and ``<stem>.json``."""
        stem = Path(stem)
        prev = self.previous if self.previous is not None else self.params
        segments = [("params", self.params.values), ("initial", self.initial.values),
                    ("previous", prev.values)]
        if isinstance(self.opt_state, nn.AdamState):
            segments += [("adam_m", self.opt_state.m), ("adam_v", self.opt_state.v)]
        header = {
            "format": "fracsgd-checkpoint/1",
            "dtype": "<f8",
            "step": self.step,
            "arch": self.params.arch.to_dict(),
            "segments": [{"name": n, "offset": 0, "length": int(a.size)} for n, a in segments],
            "adam_step": self.opt_state.step if isinstance(self.opt_state, nn.AdamState) else None,
            "log": self.log.state_dict(),
            "run_id": self.log.run_id,
            "config_hash": self.log.config_hash,
        }
        off = 0
        for seg in header["segments"]:
            seg["offset"] = off
            off += seg["length"]
        flat = np.concatenate([a for _, a in segments]).astype("<f8")
        stem.with_suffix(".bin").write_bytes(flat.tobytes())
        stem.with_suffix(".json").write_text(json.dumps(header))

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        header = json.loads(stem.with_suffix(".json").read_text())
        flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
        seg = {s["name"]: flat[s["offset"]:s["offset"] + s["length"]].copy() for s in header["segments"]}
        a = header["arch"]
        arch = nn.Architecture(tuple(a["layer_widths"]), a["activation"], a["use_batch_norm"])
        state = None
        if "adam_m" in seg:
            state = nn.AdamState(header["adam_step"], seg["adam_m"], seg["adam_v"])
        log = TrajectoryLog.from_state_dict(header["log"], run_id=header["run_id"],
                                            config_hash=header["config_hash"])
        return cls(header["step"], nn.ParamVector(seg["params"], arch),
                   nn.ParamVector(seg["initial"], arch), state, log,
                   nn.ParamVector(seg["previous"], arch))


def _record(log, cfg, step, w, w0, w_prev, train, test, llc_seed):
    log.steps.append(step)
    log.displacement.append(nn.displacement(w, w0))
    log.increment.append(nn.displacement(w, w_prev))
    log.per_layer.append(nn.per_layer_displacement(w, w0))
    log.train_loss.append(nn.loss(w, (train.features, train.labels)))
    log.gen_error.append(generalization_error(w, test))
    if cfg.llc_every and step % cfg.llc_every == 0:
        sgld = cfg.sgld
        if sgld.batch_size is None:
            sgld = SgldConfig(**{**sgld.to_dict(), "batch_size": cfg.opt.batch_size})
        est = estimate_llc(w, train, sgld, seed=_point_seed(llc_seed, step))
        log.llc.append(est.lambda_hat)
        log.llc_std_err.append(est.std_err)
    else:
        log.llc.append(math.nan)
        log.llc_std_err.append(math.nan)


def train_run(cfg, train, test, resume=None, checkpoint_dir=None, stop_at=None):
    """Train one network and return its TrajectoryLog.

    ``resume`` continues from a Checkpoint and reproduces the uninterrupted run
    bitwise. ``stop_at`` halts after that many optimizer steps (used to cut
    checkpoints for resume tests). A non-finite loss marks the run failed and
    returns the telemetry gathered so far.
    """
    if train.dim != cfg.arch.layer_widths[0] or test.dim != cfg.arch.layer_widths[0]:
        raise ValueError("dataset width does not match the input layer")
    if max(train.labels.max(initial=0), test.labels.max(initial=0)) >= cfg.arch.layer_widths[-1]:
        raise ValueError("labels exceed the output width")
    chash = cfg.config_hash()
    run_id = chash[:12]
    bs = min(cfg.opt.batch_size, len(train))
    per_epoch = math.ceil(len(train) / bs)
    total = cfg.epochs * per_epoch

    if resume is None:
        w0 = nn.init_params(cfg.arch, cfg.seed)
        w = w0.copy()
        state = nn.init_optimizer_state(cfg.opt, w.dim)
        log = TrajectoryLog(run_id=run_id, config_hash=chash)
        _record(log, cfg, 0, w, w0, w0, train, test, cfg.seed)
        step = 0
    else:
        if resume.log.config_hash != chash:
            raise ValueError("checkpoint was written by a different configuration")
        w0, w, state, step = resume.initial, resume.params.copy(), resume.opt_state, resume.step
        log = TrajectoryLog.from_state_dict(resume.log.state_dict(), run_id=run_id, config_hash=chash)
        w_prev_telemetry = (resume.params if resume.previous is None else resume.previous).copy()
    if resume is None:
        w_prev_telemetry = w.copy()

    while step < total and (stop_at is None or step < stop_at):
        epoch, offset = divmod(step, per_epoch)
        for X, y in batches(train, bs, (cfg.seed, epoch))[offset:]:
            try:
                _, g = nn.loss_and_grad(w, (X, y))
                w_new, state = nn.optimizer_step(w, g, cfg.opt, state)
            except nn.NumericalOverflowError as exc:
                log.status, log.message = "failed", f"diverged at step {step}: {exc}"
                logger.warning("run %s %s", run_id, log.message)
                return log
            log.step_increments.append(nn.displacement(w_new, w))
            w = w_new
            step += 1
            if step % cfg.telemetry_every == 0:
                try:
                    _record(log, cfg, step, w, w0, w_prev_telemetry, train, test, cfg.seed)
                except nn.NumericalOverflowError as exc:
                    log.status, log.message = "failed", f"diverged at step {step}: {exc}"
                    return log
                w_prev_telemetry = w.copy()
            if checkpoint_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                Checkpoint(step, w, w0, state, log, w_prev_telemetry).save(
                    Path(checkpoint_dir) / f"ckpt_{step:08d}")
            if stop_at is not None and step >= stop_at:
                break
    log.final_params = w
    log.last_checkpoint = Checkpoint(step, w.copy(), w0, state, log, w_prev_telemetry)
    if log.heavy_tailed(cfg.kurtosis_threshold):
        log.message = f"increment excess kurtosis {log.increment_kurtosis:.1f} exceeds threshold"
        logger.warning("run %s outside the light-tail regime: %s", run_id, log.message)
    return log


def checkpoint_at(cfg, train, test, step):
    """Train to ``step`` and return the in-memory Checkpoint there."""
    log = train_run(cfg, train, test, stop_at=step)
    if log.status != "ok":
        raise RuntimeError(log.message)
    return log.last_checkpoint


def finalize(log, window=10):
    """Trailing-window means of the LLC and generalization error series."""
    llc = log.array("llc")
    llc = llc[np.isfinite(llc)]
    gen = log.array("gen_error")
    if len(llc) < window or len(gen) < window:
        warnings.warn(f"fewer than {window} telemetry points; averaging what is available",
                      stacklevel=2)
    return {
        "final_llc": float(llc[-window:].mean()) if len(llc) else math.nan,
        "final_gen_error": float(gen[-window:].mean()) if len(gen) else math.nan,
    }


def _run_one(args):
    cfg, train, test = args
    try:
        return train_run(cfg, train, test)
    except Exception as exc:  # isolate failures between ensemble members
        logger.exception("run with seed %s failed", cfg.seed)
        return TrajectoryLog(run_id=cfg.config_hash()[:12], config_hash=cfg.config_hash(),
                             status="failed", message=f"{type(exc).__name__}: {exc}")


def ensemble(cfgs, train, test, jobs=1):
    """Run independent configurations; output order follows ``cfgs`` regardless of ``jobs``."""
    work = [(c, train, test) for c in cfgs]
    if jobs <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))
