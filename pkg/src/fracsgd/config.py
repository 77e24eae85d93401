"""Versioned TOML experiment configs and their translation into library objects.

A config (or the ``config`` block of a manifest.json) looks like::

    schema_version = 1
    seed = 0

    [data]
    source = "blobs"          # or "idx" (files resolved against $FRACSGD_DATA)
    classes = 4
    dim = 8
    per_class = 250
    spread = 0.7
    train_fraction = 0.5

    [model]
    hidden = [16, 16]

    [optimizer]
    kind = "sgd"
    learning_rate = 0.01
    batch_size = 25

    [training]
    epochs = 150
    telemetry_every = 100
    llc_every = 100
"""
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import data, nn
from .llc import SgldConfig
from .rng import stream
from .trainer import RunConfig

SCHEMA_VERSION = 1
DATA_ENV = "FRACSGD_DATA"


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "data": {"source": "blobs", "classes": 4, "dim": 8, "per_class": 250, "spread": 0.7,
             "seed": 0, "train_fraction": 0.5, "subset_size": None, "balanced": True,
             "images": None, "labels": None, "test_images": None, "test_labels": None,
             "standardize": False},
    "model": {"hidden": [16, 16], "batch_norm": False},
    "optimizer": {"kind": "sgd", "learning_rate": 0.01, "weight_decay": 0.0, "batch_size": 25},
    "training": {"epochs": 150, "telemetry_every": 100, "checkpoint_every": 0, "llc_every": 100,
                 "kurtosis_threshold": 50.0},
    "sgld": {"step_size": 1e-3, "localization": 100.0, "chains": 4, "draws": 200, "burn_in": 90,
             "batch_size": None},
    "ensemble": {"seeds": 1, "hidden_sweep": None, "data_seeds": None},
    "analysis": {"discard_fraction": 0.2, "final_window": 10, "window": None},
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{path}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}{key}' must be a table")
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _strip_none(d):
    # TOML has no null, so keep manifests round-trippable by dropping unset keys
    return {k: _strip_none(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}


def load(path, sections=None):
    """Read a TOML config or a manifest.json and return the fully resolved dict.

    ``sections`` restricts which top-level tables are allowed (besides the
    common keys); tool-specific tables such as ``[ffpe]`` are passed through.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
            if "config" in raw:
                raw = raw["config"]
        else:
            raw = tomllib.loads(path.read_text())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    extra = {k: raw.pop(k) for k in list(raw) if k not in DEFAULTS}
    if sections is not None:
        bad = set(extra) - set(sections)
        if bad:
            raise ConfigError(f"{path}: unknown section(s) {sorted(bad)}")
    cfg = _merge(DEFAULTS, raw)
    cfg.update(extra)
    return cfg


def canonical(cfg):
    return json.dumps(_strip_none(cfg), sort_keys=True, separators=(",", ":"))


def run_id(cfg):
    """Content hash of the resolved config (seed included)."""
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def data_dir():
    return Path(os.environ.get(DATA_ENV, "data"))


def load_datasets(cfg):
    """Return ``(train, test)`` for the ``[data]`` table."""
    d = cfg["data"]
    spec_kw = {"train_fraction": d["train_fraction"], "seed": d["seed"],
               "subset_size": d["subset_size"], "balanced": d["balanced"]}
    try:
        spec = data.SplitSpec(**spec_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if d["source"] == "blobs":
        try:
            ds = data.synth_blobs(d["classes"], d["dim"], d["per_class"], d["spread"], d["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return data.split(ds, spec)
    if d["source"] != "idx":
        raise ConfigError(f"data.source must be 'blobs' or 'idx', got {d['source']!r}")
    if not d["images"] or not d["labels"]:
        raise ConfigError("idx data needs data.images and data.labels")
    root = data_dir()

    def read(images, labels):
        try:
            return data.load_idx(root / images, root / labels, d["classes"], d["standardize"])
        except (OSError, data.IdxError) as exc:
            raise DataError(f"{exc} (data directory {root}, set ${DATA_ENV} to change it)") from exc

    ds = read(d["images"], d["labels"])
    if d["test_images"]:
        if not d["test_labels"]:
            raise ConfigError("data.test_images needs data.test_labels")
        test = read(d["test_images"], d["test_labels"])
        idx = data.subset_indices(ds, spec, stream(d["seed"], "split"))
        return ds.subset(idx), test
    return data.split(ds, spec)


def run_config(cfg, train):
    """Build the trainer's RunConfig; the input width comes from ``train``."""
    return _build(cfg, train.dim)


def _build(cfg, in_dim):
    d, m, o, t, s = cfg["data"], cfg["model"], cfg["optimizer"], cfg["training"], cfg["sgld"]
    try:
        arch = nn.Architecture((in_dim,) + tuple(m["hidden"]) + (d["classes"],),
                               use_batch_norm=m["batch_norm"])
        opt = nn.OptimizerConfig(o["kind"], o["learning_rate"], o["weight_decay"], o["batch_size"])
        sgld = SgldConfig(s["step_size"], s["localization"], s["chains"], s["draws"], s["burn_in"],
                          s["batch_size"])
        return RunConfig(arch, opt, t["epochs"], cfg["seed"], t["telemetry_every"],
                         t["checkpoint_every"], t["llc_every"], sgld, t["kurtosis_threshold"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def members(cfg):
    """Expand an ensemble config into per-member configs (hidden x data seed x run seed)."""
    e = cfg["ensemble"]
    if e["seeds"] < 1:
        raise ConfigError("ensemble.seeds must be >= 1")
    sweep = e["hidden_sweep"] or [cfg["model"]["hidden"]]
    data_seeds = e["data_seeds"] or [cfg["data"]["seed"]]
    out = []
    for hidden in sweep:
        for ds in data_seeds:
            for i in range(e["seeds"]):
                c = copy.deepcopy(cfg)
                c["model"]["hidden"] = list(hidden)
                c["data"]["seed"] = ds
                c["seed"] = cfg["seed"] + i
                c["ensemble"] = {"seeds": 1, "hidden_sweep": None, "data_seeds": None}
                out.append(c)
    return out
