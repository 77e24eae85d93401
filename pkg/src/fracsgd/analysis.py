"""Scaling-law analysis of weight trajectories.

Displacement grows like ``R(t) ~ t^slope`` with ``slope = d_s / (2*lambda)``;
``nu = 1/slope`` is the walker dimension and ``nu >= 2`` means subdiffusion.
"""
import logging
import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

DEFAULT_DISCARD = 0.2


def ols_fit(x, y):
    """Ordinary least squares ``y = slope*x + intercept``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least two points")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = dx @ dx
    if sxx == 0:
        raise ValueError("x has zero variance")
    slope = (dx @ dy) / sxx
    intercept = ym - slope * xm
    ss_tot = dy @ dy
    resid = y - (slope * x + intercept)
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - (resid @ resid) / ss_tot)
    return float(slope), float(intercept), float(r2)


@dataclass
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    t_min: float
    t_max: float
    n_points: int

    @property
    def nu(self):
        return math.inf if self.slope == 0 else 1.0 / self.slope

    @property
    def subdiffusive(self):
        """``nu >= 2``."""
        return self.slope <= 0.5

    def to_dict(self):
        d = asdict(self)
        d["nu"] = self.nu
        d["subdiffusive"] = self.subdiffusive
        return d


def fit_power_law(t, r, window=None, discard_fraction=0.0):
    """Fit ``log r = slope*log t + c`` by OLS.

    Points with ``t <= 0`` or ``r <= 0`` are dropped. ``window=(t_min, t_max)``
    restricts the fit; otherwise the first ``discard_fraction`` of the remaining
    points (the pre-asymptotic regime) is skipped.
    """
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    ok = (t > 0) & (r > 0) & np.isfinite(r)
    t, r = t[ok], r[ok]
    if window is not None:
        lo, hi = window
        sel = (t >= lo) & (t <= hi)
        t, r = t[sel], r[sel]
    elif discard_fraction:
        start = int(math.floor(discard_fraction * len(t)))
        t, r = t[start:], r[start:]
    if len(t) < 3:
        raise ValueError(f"power-law fit needs >= 3 positive points, got {len(t)}")
    slope, intercept, r2 = ols_fit(np.log(t), np.log(r))
    return PowerLawFit(slope, intercept, r2, float(t[0]), float(t[-1]), len(t))


def spectral_dimension(slope, lambda_final):
    """``d_s = 2*lambda*slope``; accepts a PowerLawFit or a bare slope."""
    if isinstance(slope, PowerLawFit):
        slope = slope.slope
    if slope <= 0 or lambda_final <= 0:
        raise ValueError(f"need slope > 0 and lambda > 0 (got {slope}, {lambda_final})")
    return 2.0 * lambda_final * slope


@dataclass
class DimensionReport:
    d_s: float
    nu: float
    d_walk: float
    lambda_final: float
    lambda_bar: float
    lemma2_holds: bool
    corollary3_holds: bool
    lemma2_margin: float
    corollary3_margin: float
    slope: float = math.nan
    diffusive_boundary: bool = False

    @property
    def margin(self):
        return min(self.lemma2_margin, self.corollary3_margin)

    @property
    def diffusion_exponent(self):
        """Exponent of the effective diffusion coefficient, ``2 - 1/nu``."""
        return 2.0 - 1.0 / self.nu

    def to_dict(self):
        d = asdict(self)
        d["margin"] = self.margin
        d["diffusion_exponent"] = self.diffusion_exponent
        return d


def check_inequalities(llc_series, d_s, lambda_final=None, discard_fraction=DEFAULT_DISCARD):
    """Test ``d_s <= lambda_final`` and ``d_s <= lambda_bar`` (time average of the LLC).

    ``lambda_bar`` averages the estimates left after dropping the first
    ``discard_fraction`` of the series. ``lambda_final`` defaults to the mean of
    the last ten estimates.
    """
    lam = np.asarray([v for v in llc_series if np.isfinite(v)], dtype=np.float64)
    if len(lam) == 0 or np.all(lam < 0):
        raise ValueError("LLC series is empty or entirely negative; no valid report")
    if len(lam) < 10:
        warnings.warn(f"only {len(lam)} LLC estimates (want >= 10)", stacklevel=2)
    start = int(math.floor(discard_fraction * len(lam)))
    lambda_bar = float(lam[start:].mean())
    if lambda_final is None:
        lambda_final = float(lam[-10:].mean())
    d_walk = 2.0 * lambda_final / d_s if d_s > 0 else math.inf
    return DimensionReport(
        d_s=float(d_s),
        nu=d_walk,
        d_walk=d_walk,
        lambda_final=float(lambda_final),
        lambda_bar=lambda_bar,
        lemma2_holds=bool(d_s <= lambda_final),
        corollary3_holds=bool(d_s <= lambda_bar),
        lemma2_margin=float(lambda_final - d_s),
        corollary3_margin=float(lambda_bar - d_s),
        slope=1.0 / d_walk if d_walk else math.nan,
        diffusive_boundary=bool(np.isclose(d_walk, 2.0)),
    )


def analyze_trajectory(steps, displacement, llc, window=None, discard_fraction=DEFAULT_DISCARD,
                       final_window=10):
    """Power-law fit plus the dimension report for one run."""
    fit = fit_power_law(steps, displacement, window=window, discard_fraction=discard_fraction)
    lam = np.asarray(llc, dtype=np.float64)
    lam = lam[np.isfinite(lam)]
    lambda_final = float(lam[-final_window:].mean())
    d_s = spectral_dimension(fit, lambda_final)
    report = check_inequalities(lam, d_s, lambda_final, discard_fraction)
    report.slope = fit.slope
    return fit, report


@dataclass
class EffectiveDiffusion:
    xi: float
    nu_w: float
    d_xi: float


def effective_diffusion(xi, lambda_w, d_s):
    """Homogenized diffusion coefficient ``xi^(2 - 1/nu)`` with ``nu = 2*lambda/d_s``."""
    if xi <= 0 or lambda_w <= 0 or d_s <= 0:
        raise ValueError("xi, lambda and d_s must be positive")
    nu = 2.0 * lambda_w / d_s
    return EffectiveDiffusion(float(xi), nu, float(xi ** (2.0 - 1.0 / nu)))


@dataclass
class ExponentHistogram:
    counts: np.ndarray
    edges: np.ndarray
    exponents: np.ndarray
    median: float
    skew: float
    midpoint: float

    @property
    def concentrated_high(self):
        """Median exponent above the midpoint of the observed range."""
        return bool(self.median > self.midpoint)

    def to_dict(self):
        return {
            "counts": self.counts.tolist(),
            "edges": self.edges.tolist(),
            "exponents": self.exponents.tolist(),
            "median": self.median,
            "skew": self.skew,
            "midpoint": self.midpoint,
            "concentrated_high": self.concentrated_high,
        }


def diffusion_exponent_histogram(reports, bins=10):
    """Histogram of ``2 - 1/nu`` across runs (reports, or exponents given directly)."""
    exps = np.array([r.diffusion_exponent if isinstance(r, DimensionReport) else float(r)
                     for r in reports])
    if len(exps) < 10:
        warnings.warn(f"histogram over only {len(exps)} runs (want >= 10)", stacklevel=2)
    lo, hi = exps.min(), exps.max()
    counts, edges = np.histogram(exps, bins=bins, range=(lo, hi) if hi > lo else None)
    skew = float(stats.skew(exps)) if hi > lo else 0.0
    return ExponentHistogram(counts, edges, exps, float(np.median(exps)), skew, float(0.5 * (lo + hi)))


@dataclass
class LinearRelation:
    slope: float
    intercept: float
    pearson_r: float
    n: int
    residuals: np.ndarray

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "pearson_r": self.pearson_r,
                "n": self.n, "residuals": self.residuals.tolist()}


def llc_vs_generalization(pairs):
    """OLS of generalization error on final LLC, with Pearson r."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("need at least three (llc, gen_error) pairs")
    if len(arr) < 5:
        warnings.warn("fewer than five points in LLC/generalization fit", stacklevel=2)
    x, y = arr[:, 0], arr[:, 1]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate variance in LLC or generalization error")
    slope, intercept, _ = ols_fit(x, y)
    r = float(np.corrcoef(x, y)[0, 1])
    return LinearRelation(slope, intercept, r, len(x), y - (slope * x + intercept))
