"""Time-fractional Fokker-Planck solver in 1-D.

Solves

    D_t^alpha p = d/dx ( D(x) dp/dx + gamma * p * dV/dx )

with a Caputo time derivative (L1 scheme, arbitrary time grid), a
Scharfetter-Gummel finite-volume flux and zero-flux (reflecting) walls. The
flux is exponentially fitted, so with constant D the discrete steady state is
exactly the Boltzmann density exp(-gamma V / D) sampled at cell centres.
"""
import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gamma as gamma_fn

logger = logging.getLogger(__name__)

MASS_TOL = 1e-8
NEGATIVE_TOL = 1e-12


class MassConservationError(RuntimeError):
    pass


class StationaryHypothesisError(ValueError):
    pass


def _check_alpha(alpha):
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


@dataclass(frozen=True)
class CaputoKernel:
    alpha: float
    dt: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def scale(self):
        return self.dt ** (-self.alpha) / gamma_fn(2 - self.alpha)

    def weights(self, n):
        """``b_k = (k+1)^(1-alpha) - k^(1-alpha)`` for ``k < n``."""
        k = np.arange(n, dtype=np.float64)
        lower = k ** (1 - self.alpha)
        lower[:1] = 0.0  # 0**0 would give 1 at alpha = 1
        return (k + 1) ** (1 - self.alpha) - lower


def caputo_derivative(f, alpha, dt):
    """L1 approximation of the Caputo derivative at ``t_0 .. t_n`` (zero at ``t_0``).

    ``alpha = 1`` reduces to backward differences.
    """
    f = np.asarray(f, dtype=np.float64)
    if len(f) < 2:
        raise ValueError("need at least two samples")
    kern = CaputoKernel(alpha, dt)
    n = len(f) - 1
    incr = np.diff(f)
    out = np.zeros(n + 1)
    out[1:] = kern.scale * np.convolve(kern.weights(n), incr)[:n]
    return out


def l1_weights(times, n, alpha):
    """Nonuniform-grid L1 weights ``a_{n,k}``, k = 1..n, multiplying ``p^k - p^{k-1}``."""
    t = np.asarray(times[:n + 1], dtype=np.float64)
    tau = np.diff(t)
    tn = t[n]
    hi = (tn - t[:-1]) ** (1 - alpha)
    lo = (tn - t[1:]) ** (1 - alpha)
    lo[-1] = 0.0  # 0**0 would give 1 at alpha = 1
    return (hi - lo) / (tau * gamma_fn(2 - alpha))


def uniform_times(t_end, n_steps):
    return np.linspace(0.0, t_end, n_steps + 1)


def graded_times(t_end, n_steps, grading=3.0):
    """``t_k = t_end (k/N)^grading``: fine steps early, where Caputo solutions are least smooth."""
    return t_end * (np.arange(n_steps + 1) / n_steps) ** grading


@dataclass
class FfpeProblem:
    a: float
    b: float
    n: int
    potential: np.ndarray
    diffusion: np.ndarray
    gamma: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        self.potential = np.broadcast_to(np.asarray(self.potential, dtype=np.float64), (self.n,)).copy()
        self.diffusion = np.broadcast_to(np.asarray(self.diffusion, dtype=np.float64), (self.n,)).copy()
        if np.any(self.diffusion <= 0):
            raise ValueError("diffusion must be positive")
        if not np.all(np.isfinite(self.potential)):
            raise ValueError("potential must be finite on the grid")
        if self.b <= self.a or self.n < 2:
            raise ValueError("need b > a and at least two cells")

    @classmethod
    def from_functions(cls, a, b, n, potential, diffusion, gamma=1.0, alpha=1.0):
        x = a + (np.arange(n) + 0.5) * (b - a) / n
        V = potential(x) if callable(potential) else potential
        D = diffusion(x) if callable(diffusion) else diffusion
        return cls(a, b, n, V, D, gamma, alpha)

    @property
    def h(self):
        return (self.b - self.a) / self.n

    @property
    def x(self):
        return self.a + (np.arange(self.n) + 0.5) * self.h

    def with_alpha(self, alpha):
        return FfpeProblem(self.a, self.b, self.n, self.potential, self.diffusion, self.gamma, alpha)


def _bernoulli(u):
    u = np.asarray(u, dtype=np.float64)
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    return np.where(small, 1 - u / 2 + u * u / 12, safe / np.expm1(safe))


def _face_coefficients(problem):
    """Per interior face: the flux is ``cp * p[i+1] - cm * p[i]`` (times 1/h for the update)."""
    D = problem.diffusion
    Df = 2 * D[:-1] * D[1:] / (D[:-1] + D[1:])
    u = problem.gamma * np.diff(problem.potential) / Df
    h = problem.h
    return Df / h * _bernoulli(-u), Df / h * _bernoulli(u)


def operator_bands(problem):
    """Banded (3, n) form of the generator A with dp/dt = A p; columns sum to zero."""
    cp, cm = _face_coefficients(problem)
    h = problem.h
    n = problem.n
    ab = np.zeros((3, n))
    # face i between cells i and i+1 contributes G to row i and -G to row i+1
    ab[1, :-1] -= cm / h
    ab[1, 1:] -= cp / h
    ab[0, 1:] = cp / h     # A[i, i+1]
    ab[2, :-1] = cm / h    # A[i+1, i]
    return ab


def face_fluxes(problem, p):
    """Net flux ``D p' + gamma V' p`` at interior faces (reflecting walls carry none)."""
    cp, cm = _face_coefficients(problem)
    return cp * p[1:] - cm * p[:-1]


def apply_operator(problem, p):
    """``A p`` in telescoping flux form, so its sum is zero up to one rounding per face."""
    g = face_fluxes(problem, p)
    return np.diff(np.concatenate(([0.0], g, [0.0]))) / problem.h


@dataclass
class FfpeState:
    p: np.ndarray
    t: float = 0.0
    times: list = field(default_factory=lambda: [0.0])
    increments: np.ndarray = None
    initial_mass: float = None
    negatives_clipped: int = 0
    max_mass_error: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.increments is None:
            self.increments = np.zeros((0, len(self.p)))
        if self.initial_mass is None:
            self.initial_mass = float(self.p.sum())

    @property
    def history(self):
        """Stored Caputo memory: one density increment per completed step."""
        return self.increments[:len(self.times) - 1]


def initial_state(problem, p0):
    """Normalize ``p0`` (callable or values at cell centres) to unit mass."""
    p = p0(problem.x) if callable(p0) else np.asarray(p0, dtype=np.float64)
    p = np.broadcast_to(p, (problem.n,)).astype(np.float64)
    if np.any(p < 0):
        raise ValueError("initial density must be nonnegative")
    p = p / (p.sum() * problem.h)
    return FfpeState(p, 0.0, [0.0], None, float(p.sum() * problem.h))


def ffpe_step(state, problem, t_next, bands=None):
    """Advance ``state`` in place to ``t_next`` with the implicit L1 scheme.

    The memory term runs over the full stored history. The unknown is the
    increment ``p^n - p^(n-1)``, which keeps the mass error proportional to
    the remaining transient even for very long steps.
    """
    if t_next <= state.t:
        raise ValueError("t_next must exceed the current time")
    if bands is None:
        bands = operator_bands(problem)
    state.times.append(float(t_next))
    n = len(state.times) - 1
    w = l1_weights(state.times, n, problem.alpha)
    lead = w[-1]
    rhs = apply_operator(problem, state.p)
    if n > 1 and problem.alpha < 1:
        rhs -= w[:-1] @ state.increments[:n - 1]
    lhs = -bands
    lhs[1] += lead
    delta = solve_banded((1, 1), lhs, rhs)
    p = state.p + delta

    neg = p < -NEGATIVE_TOL
    if neg.any():
        state.negatives_clipped += int(neg.sum())
        logger.debug("clipping %d negative cells at t=%g", int(neg.sum()), t_next)
    p = np.where(p < 0, 0.0, p)
    mass_err = abs(p.sum() * problem.h - state.initial_mass)
    state.max_mass_error = max(state.max_mass_error, mass_err)
    if mass_err > MASS_TOL:
        raise MassConservationError(f"mass drifted by {mass_err:.3g} at t={t_next}")

    if n > len(state.increments):
        grown = np.zeros((max(2 * len(state.increments), 16), problem.n))
        grown[:n - 1] = state.increments[:n - 1]
        state.increments = grown
    state.increments[n - 1] = p - state.p
    state.p = p
    state.t = float(t_next)
    return state


def solve(problem, p0, times, snapshot_times=()):
    """Integrate over the time grid ``times`` (starting at 0).

    Returns ``(final_state, snapshots)``; snapshots maps each requested time to
    the density at the first grid time at or after it.
    """
    times = np.asarray(times, dtype=np.float64)
    if times[0] != 0:
        raise ValueError("time grid must start at 0")
    state = initial_state(problem, p0)
    state.increments = np.zeros((len(times) - 1, problem.n))
    bands = operator_bands(problem)
    pending = sorted(snapshot_times)
    snaps = {}
    for t in times[1:]:
        while pending and pending[0] <= state.t:
            snaps[pending.pop(0)] = state.p.copy()
        ffpe_step(state, problem, t, bands)
    for s in pending:
        snaps[s] = state.p.copy()
    return state, snaps


def boltzmann_stationary(problem, tol=1.05):
    """Normalized ``exp(-gamma V / D)`` on the grid; D must be (nearly) constant."""
    D = problem.diffusion
    if D.max() / D.min() > tol:
        raise StationaryHypothesisError(
            "the Boltzmann steady state needs an approximately constant diffusion "
            f"coefficient; max/min = {D.max() / D.min():.3f} exceeds {tol}")
    e = -problem.gamma * problem.potential / D.mean()
    p = np.exp(e - e.max())
    return p / (p.sum() * problem.h)


def l1_distance(p, q, h):
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum() * h)


def posterior_identity_check(p_s, potential, m, d_xi):
    """Max deviation of ``log(p_s^(m D)) + m V`` from its grid mean.

    Zero (up to rounding) exactly when ``p_s^(m D)`` is proportional to the
    likelihood ``exp(-m V)``.
    """
    dev = m * d_xi * np.log(np.asarray(p_s, dtype=np.float64)) + m * np.asarray(potential)
    return float(np.max(np.abs(dev - dev.mean())))


def homogenized_diffusion(period_values):
    """1-D homogenized coefficient: the harmonic mean over one period."""
    v = np.asarray(period_values, dtype=np.float64)
    return float(len(v) / np.sum(1.0 / v))


def effective_vs_resolved(a, b, n, pattern, cells_per_value, t_end, n_steps, p0,
                          potential=0.0, gamma=1.0):
    """Solve the resolved problem with periodic D and the homogenized one; compare at ``t_end``.

    ``pattern`` is one period of D values, each repeated over ``cells_per_value`` cells.
    """
    period_cells = len(pattern) * cells_per_value
    if period_cells * 10 > n:
        warnings.warn("period is not small compared with the domain", stacklevel=2)
    D = np.tile(np.repeat(pattern, cells_per_value), n // period_cells + 1)[:n]
    resolved = FfpeProblem.from_functions(a, b, n, potential, D, gamma, 1.0)
    d_hat = homogenized_diffusion(pattern)
    homog = FfpeProblem.from_functions(a, b, n, potential, d_hat, gamma, 1.0)
    times = uniform_times(t_end, n_steps)
    s_res, _ = solve(resolved, p0, times)
    s_hom, _ = solve(homog, p0, times)
    return {
        "d_hat": d_hat,
        "period": period_cells * resolved.h,
        "l1_distance": l1_distance(s_res.p, s_hom.p, resolved.h),
    }


def write_snapshots(path, problem, snapshots):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "p"])
        for t in sorted(snapshots):
            for x, p in zip(problem.x, snapshots[t]):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(p))])
