"""Local learning coefficient estimation by localized SGLD, plus volume-scaling oracles.

The estimator samples the tempered, localized posterior

    p(w) ~ exp(-m*beta*L_m(w) - localization/2 * |w - w*|^2),    beta = 1/log m

and reports ``m*beta*(E[L_m(w)] - L_m(w*))``. For a homogeneous potential
``L = c|w|^k`` (and vanishing localization) the answer is exactly ``d/k``.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .analysis import ols_fit
from .rng import stream

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e6


@dataclass(frozen=True)
class SgldConfig:
    step_size: float = 1e-4
    localization: float = 100.0
    chains: int = 4
    draws: int = 200
    burn_in: int = 90
    batch_size: int = None
    beta: float = None

    def __post_init__(self):
        if self.step_size <= 0 or self.localization < 0:
            raise ValueError("step_size must be positive and localization nonnegative")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.draws <= self.burn_in:
            raise ValueError("draws must exceed burn_in")

    def inverse_temperature(self, m):
        if self.beta is not None:
            return float(self.beta)
        if m < 3:
            raise ValueError("beta = 1/log m needs m >= 3")
        return 1.0 / math.log(m)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("step_size", "localization", "chains", "draws", "burn_in", "batch_size", "beta")}


@dataclass
class LlcEstimate:
    lambda_hat: float
    std_err: float
    chains_used: int
    center_loss: float
    m: int
    beta: float
    chain_estimates: np.ndarray = field(repr=False, default=None)
    dropped_chains: int = 0

    @property
    def negative_flag(self):
        return bool(self.lambda_hat < 0)


def _summarize(chain_means, center_loss, m, beta, dropped):
    lam = m * beta * (np.asarray(chain_means) - center_loss)
    if len(lam) == 0:
        return LlcEstimate(math.nan, math.nan, 0, center_loss, m, beta, lam, dropped)
    se = float(lam.std(ddof=1) / math.sqrt(len(lam))) if len(lam) > 1 else 0.0
    return LlcEstimate(float(lam.mean()), se, len(lam), center_loss, m, beta, lam, dropped)


def estimate_llc(w_star, ds, cfg=SgldConfig(), seed=0):
    """Estimate the LLC of a network at ``w_star`` on dataset ``ds``.

    Draw losses are the minibatch losses already computed for the SGLD gradient.
    """
    m = len(ds)
    if m == 0:
        raise ValueError("empty dataset")
    if not np.all(np.isfinite(w_star.values)):
        raise ValueError("w* must be finite")
    beta = cfg.inverse_temperature(m)
    nbeta = m * beta
    bs = min(cfg.batch_size or m, m)
    center = nn.loss(w_star, (ds.features, ds.labels))
    eps = cfg.step_size
    noise = math.sqrt(eps)

    means = []
    dropped = 0
    for c in range(cfg.chains):
        rng = stream(seed, "sgld", c)
        w = w_star.values.copy()
        total, kept = 0.0, 0
        ok = True
        for step in range(cfg.draws):
            idx = rng.choice(m, bs, replace=False) if bs < m else slice(None)
            try:
                loss, grad = nn.loss_and_grad(nn.ParamVector(w, w_star.arch),
                                              (ds.features[idx], ds.labels[idx]))
            except nn.NumericalOverflowError:
                ok = False
                break
            if loss > DIVERGENCE_LOSS:
                ok = False
                break
            if step >= cfg.burn_in:
                total += loss
                kept += 1
            drift = nbeta * grad + cfg.localization * (w - w_star.values)
            w = w - 0.5 * eps * drift + noise * rng.standard_normal(w.size)
        if ok:
            means.append(total / kept)
        else:
            dropped += 1
            logger.warning("SGLD chain %d diverged and was dropped", c)
    return _summarize(means, center, m, beta, dropped)


def llc_series(checkpoints, ds, cfg=SgldConfig(), seed=0):
    """One estimate per ``(step, ParamVector)`` pair; chains are keyed on the step."""
    return [estimate_llc(w, ds, cfg, seed=_point_seed(seed, step)) for step, w in checkpoints]


def _point_seed(seed, step):
    return int(stream(seed, "llc-point", int(step)).integers(2**31))


def near_stability_diagnostic(series):
    """Fraction of estimates that came out negative (w* not near a minimum)."""
    vals = [s.lambda_hat if isinstance(s, LlcEstimate) else float(s) for s in series]
    if not vals:
        raise ValueError("empty series")
    return float(np.mean([v < 0 for v in vals]))


def wbic(center_loss, lam, m):
    if m < 2:
        raise ValueError("m must be >= 2")
    return m * center_loss + lam * math.log(m)


class ToyPotential:
    """Analytic loss ``L(w)`` with gradient, evaluated row-wise on ``(n, d)`` arrays."""

    def __init__(self, name, dim, value, grad, lam=None):
        self.name = name
        self.dim = dim
        self._value = value
        self._grad = grad
        self.lam = lam

    def value(self, w):
        return self._value(np.atleast_2d(w))

    def grad(self, w):
        return self._grad(np.atleast_2d(w))

    def __repr__(self):
        return f"ToyPotential({self.name!r}, dim={self.dim})"


def power_potential(power, dim=1):
    """``sum_i |w_i|^power``; the LLC at the origin is ``dim/power``."""
    return ToyPotential(
        f"|w|^{power}" if dim == 1 else f"sum |w_i|^{power} (d={dim})", dim,
        lambda w: (np.abs(w) ** power).sum(axis=1),
        lambda w: power * np.sign(w) * np.abs(w) ** (power - 1),
        lam=dim / power,
    )


def product_potential():
    """``w1^2 * w2^2``: LLC 1/2 with multiplicity 2 at the origin."""
    return ToyPotential(
        "w1^2 w2^2", 2,
        lambda w: (w[:, 0] * w[:, 1]) ** 2,
        lambda w: np.stack([2 * w[:, 0] * w[:, 1] ** 2, 2 * w[:, 1] * w[:, 0] ** 2], axis=1),
        lam=0.5,
    )


def estimate_llc_toy(potential, w_star, m, cfg=SgldConfig(), seed=0):
    """Same estimator on an analytic potential, all chains advanced together.

    ``m`` is the nominal sample size fixing ``beta = 1/log m``; the gradient is exact.
    """
    w_star = np.asarray(w_star, dtype=np.float64).reshape(1, potential.dim)
    beta = cfg.inverse_temperature(m)
    nbeta = m * beta
    rng = stream(seed, "sgld-toy")
    eps = cfg.step_size
    w = np.repeat(w_star, cfg.chains, axis=0)
    total = np.zeros(cfg.chains)
    alive = np.ones(cfg.chains, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(cfg.draws):
            loss = potential.value(w)
            alive &= np.isfinite(loss) & (loss <= DIVERGENCE_LOSS)
            if step >= cfg.burn_in:
                total += np.where(alive, loss, 0.0)
            drift = nbeta * potential.grad(w) + cfg.localization * (w - w_star)
            w = w - 0.5 * eps * drift + math.sqrt(eps) * rng.standard_normal(w.shape)
            w[~alive] = w_star
    center = float(potential.value(w_star)[0])
    means = total[alive] / (cfg.draws - cfg.burn_in)
    return _summarize(means, center, m, beta, int((~alive).sum()))


@dataclass
class VolumeScan:
    epsilons: np.ndarray
    volumes: np.ndarray
    lam: float
    r_squared: float
    excluded: np.ndarray
    note: str = ""


def _ball_samples(rng, n, dim, radius):
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return direction * r[:, None]


def volume_scan(potential, w_star, epsilons, samples=1_000_000, radius=1.0, seed=0,
                multiplicity=1):
    """Monte Carlo volume ``V(eps)`` of ``{w in B(w*, radius): L(w) - L(w*) < eps}``.

    The learning coefficient is the log-log slope of ``V`` against ``eps``. With
    ``multiplicity > 1`` the ``log(1/eps)^(multiplicity-1)`` factor is divided out first.
    """
    if potential.dim > 4:
        raise ValueError("volume scan is Monte Carlo over the ball; use dim <= 4")
    eps = np.sort(np.asarray(epsilons, dtype=np.float64))[::-1]
    if np.any(eps <= 0):
        raise ValueError("epsilons must be positive")
    if eps[0] / eps[-1] < 100 * (1 - 1e-9):
        raise ValueError("epsilon grid must span at least two decades")
    w_star = np.asarray(w_star, dtype=np.float64).reshape(1, potential.dim)
    rng = stream(seed, "volume-scan")
    center = potential.value(w_star)[0]
    hits = np.zeros(len(eps))
    chunk = 200_000
    for start in range(0, samples, chunk):
        w = w_star + _ball_samples(rng, min(chunk, samples - start), potential.dim, radius)
        excess = potential.value(w) - center
        hits += (excess[None, :] < eps[:, None]).sum(axis=1)
    ball = math.pi ** (potential.dim / 2) / math.gamma(potential.dim / 2 + 1) * radius ** potential.dim
    volumes = hits / samples * ball
    keep = hits > 0
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} epsilon values had no Monte Carlo hits; excluded",
                      stacklevel=2)
    x = np.log(eps[keep])
    y = np.log(volumes[keep])
    note = ""
    if multiplicity > 1:
        y = y - (multiplicity - 1) * np.log(np.log(1.0 / eps[keep]))
        note = f"divided out log(1/eps)^{multiplicity - 1}"
    if keep.sum() < 3:
        raise ValueError("fewer than three epsilon values with hits")
    slope, _, r2 = ols_fit(x, y)
    return VolumeScan(eps, volumes, slope, r2, eps[~keep], note)
