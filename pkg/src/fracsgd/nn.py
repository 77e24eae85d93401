"""Fixed-topology ReLU MLP with hand-written backprop, SGD/AdamW and flat parameter access.

All arithmetic is float64. The network's trainable state is a single flat
vector (``ParamVector``) so that weight-space displacement is a plain norm.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import stream

BN_EPS = 1e-5


class NumericalOverflowError(FloatingPointError):
    """Raised when activations, loss or gradients stop being finite."""


@dataclass(frozen=True)
class Architecture:
    layer_widths: tuple
    activation: str = "relu"
    use_batch_norm: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("architecture needs an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be >= 1, got {widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def n_layers(self):
        """Number of dense (weight) layers."""
        return len(self.layer_widths) - 1

    @cached_property
    def blocks(self):
        """Ordered ``(layer, name, offset, shape)`` for every parameter tensor."""
        out = []
        off = 0
        for l in range(self.n_layers):
            fan_in, fan_out = self.layer_widths[l], self.layer_widths[l + 1]
            shapes = [("W", (fan_in, fan_out)), ("b", (fan_out,))]
            if self.use_batch_norm and l < self.n_layers - 1:
                shapes += [("bn_gamma", (fan_out,)), ("bn_beta", (fan_out,))]
            for name, shape in shapes:
                out.append((l, name, off, shape))
                off += int(np.prod(shape))
        return tuple(out)

    @cached_property
    def dim(self):
        return sum(int(np.prod(s)) for _, _, _, s in self.blocks)

    @cached_property
    def layer_slices(self):
        """One contiguous slice per dense layer (weights, bias and its BN affine)."""
        bounds = {}
        for l, _, off, shape in self.blocks:
            lo, hi = bounds.get(l, (off, off))
            bounds[l] = (min(lo, off), max(hi, off + int(np.prod(shape))))
        return tuple(slice(*bounds[l]) for l in range(self.n_layers))

    def to_dict(self):
        return {
            "layer_widths": list(self.layer_widths),
            "activation": self.activation,
            "use_batch_norm": self.use_batch_norm,
        }


@dataclass
class ParamVector:
    values: np.ndarray
    arch: Architecture

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.arch.dim,):
            raise ValueError(f"expected {self.arch.dim} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalOverflowError("non-finite parameter values")

    @property
    def dim(self):
        return self.arch.dim

    @property
    def layer_offsets(self):
        return self.arch.layer_slices

    def layer(self, l):
        return self.values[self.arch.layer_slices[l]]

    def tensors(self):
        """Per-layer dicts of views into ``values``."""
        out = [dict() for _ in range(self.arch.n_layers)]
        for l, name, off, shape in self.arch.blocks:
            out[l][name] = self.values[off:off + int(np.prod(shape))].reshape(shape)
        return out

    def copy(self):
        return ParamVector(self.values.copy(), self.arch)


def init_params(arch, seed):
    """Kaiming fan-in normal weights, zero biases, unit BN scale."""
    rng = stream(seed, "init")
    values = np.zeros(arch.dim)
    for _, name, off, shape in arch.blocks:
        n = int(np.prod(shape))
        if name == "W":
            values[off:off + n] = rng.standard_normal(n) * np.sqrt(2.0 / shape[0])
        elif name == "bn_gamma":
            values[off:off + n] = 1.0
    return ParamVector(values, arch)


def _forward(params, X):
    arch = params.arch
    layers = params.tensors()
    cache = []
    h = X
    for l, p in enumerate(layers):
        z = h @ p["W"] + p["b"]
        if l == arch.n_layers - 1:
            cache.append({"h": h})
            return z, cache
        entry = {"h": h}
        if arch.use_batch_norm:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            inv = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mu) * inv
            entry.update(zhat=zhat, inv=inv)
            z = p["bn_gamma"] * zhat + p["bn_beta"]
        entry["z"] = z
        cache.append(entry)
        h = np.maximum(z, 0.0)


def predict_logits(params, X):
    logits, _ = _forward(params, np.asarray(X, dtype=np.float64))
    return logits


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_batch(arch, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty batch")
    if X.ndim != 2 or X.shape[1] != arch.layer_widths[0]:
        raise ValueError(f"feature width {X.shape[-1]} != input width {arch.layer_widths[0]}")
    return X, y


def loss(params, batch):
    X, y = _check_batch(params.arch, *batch)
    with np.errstate(over="ignore", invalid="ignore"):
        logp = _log_softmax(predict_logits(params, X))
    val = -logp[np.arange(len(y)), y].mean()
    if not np.isfinite(val):
        raise NumericalOverflowError("non-finite loss")
    return float(val)


def loss_and_grad(params, batch):
    """Mean cross-entropy over ``batch = (X, y)`` and its exact gradient."""
    arch = params.arch
    X, y = _check_batch(arch, *batch)

    with np.errstate(over="ignore", invalid="ignore"):
        logits, cache = _forward(params, X)
        if not np.all(np.isfinite(logits)):
            raise NumericalOverflowError("non-finite activations in forward pass")
        logp = _log_softmax(logits)
    n = len(y)
    val = -logp[np.arange(n), y].mean()

    grad = np.zeros(arch.dim)
    gviews = ParamVector(grad, arch).tensors()
    layers = params.tensors()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for l in range(arch.n_layers - 1, -1, -1):
        h = cache[l]["h"]
        gviews[l]["W"][...] = h.T @ delta
        gviews[l]["b"][...] = delta.sum(axis=0)
        if l == 0:
            break
        dh = delta @ layers[l]["W"].T
        prev = cache[l - 1]
        dz = dh * (prev["z"] > 0)
        if arch.use_batch_norm:
            zhat, inv = prev["zhat"], prev["inv"]
            gviews[l - 1]["bn_gamma"][...] = (dz * zhat).sum(axis=0)
            gviews[l - 1]["bn_beta"][...] = dz.sum(axis=0)
            dzhat = dz * layers[l - 1]["bn_gamma"]
            m = dz.shape[0]
            dz = inv / m * (m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0))
        delta = dz

    if not (np.isfinite(val) and np.all(np.isfinite(grad))):
        raise NumericalOverflowError("non-finite loss or gradient")
    return float(val), grad


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 256
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def theory_regime(self):
        """Small-step, no-decay SGD: the setting the diffusion picture assumes."""
        return self.kind == "sgd" and 0 < self.learning_rate <= 0.01 and self.weight_decay == 0

    def to_dict(self):
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "betas": list(self.betas),
            "eps": self.eps,
        }


@dataclass
class AdamState:
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)


def init_optimizer_state(opt, dim):
    if opt.kind == "adamw":
        return AdamState(0, np.zeros(dim), np.zeros(dim))
    return None


def optimizer_step(params, grad, opt, state=None):
    """One optimizer update; returns ``(new_params, new_state)``. Inputs are not mutated."""
    w = params.values
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != w.shape:
        raise ValueError("gradient and parameters are not aligned")
    lr = opt.learning_rate
    if opt.kind == "sgd":
        if opt.weight_decay:
            g = g + opt.weight_decay * w
        return ParamVector(w - lr * g, params.arch), state

    if state is None:
        state = init_optimizer_state(opt, w.size)
    b1, b2 = opt.betas
    t = state.step + 1
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    mhat = m / (1 - b1 ** t)
    vhat = v / (1 - b2 ** t)
    w_new = w * (1 - lr * opt.weight_decay) - lr * mhat / (np.sqrt(vhat) + opt.eps)
    return ParamVector(w_new, params.arch), AdamState(t, m, v)


def displacement(params, reference):
    """Euclidean distance between two points in weight space."""
    _check_layout(params, reference)
    return float(np.linalg.norm(params.values - reference.values))


def per_layer_displacement(params, reference):
    _check_layout(params, reference)
    diff = params.values - reference.values
    return np.array([np.linalg.norm(diff[s]) for s in params.arch.layer_slices])


def _check_layout(a, b):
    if a.arch != b.arch:
        raise ValueError("parameter vectors have different layouts")
