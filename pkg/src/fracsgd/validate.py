"""Self-contained oracle suite: every check builds its own synthetic inputs.

Each check returns a ``Check`` whose margin is positive when it passes (the
distance from the observed error to its tolerance).
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from . import analysis, bench, ffpe, llc, nn
from .rng import stream


@dataclass
class Check:
    group: str
    claim: str
    ok: bool
    margin: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self):
        return {"group": self.group, "claim": self.claim, "ok": self.ok, "margin": self.margin,
                "detail": self.detail, "seconds": self.seconds}


# gradient ------------------------------------------------------------------

def gradient_cases(n_cases=100, seed=0):
    """Random small nets and batches, avoiding draws that sit on a ReLU kink."""
    rng = stream(seed, "gradcheck")
    cases = []
    while len(cases) < n_cases:
        depth = int(rng.integers(1, 3))
        widths = (int(rng.integers(2, 6)),) + tuple(int(rng.integers(2, 8)) for _ in range(depth)) \
            + (int(rng.integers(2, 5)),)
        arch = nn.Architecture(widths, use_batch_norm=bool(rng.integers(2)))
        params = nn.init_params(arch, int(rng.integers(2**31)))
        params.values[:] += 0.1 * rng.standard_normal(params.dim)
        X = rng.standard_normal((int(rng.integers(3, 9)), widths[0]))
        y = rng.integers(0, widths[-1], len(X))
        if _min_preactivation(params, X) < 1e-3:
            continue
        cases.append((params, (X, y)))
    return cases


def _min_preactivation(params, X):
    out = math.inf
    h = X
    blocks = params.tensors()
    for l in range(params.arch.n_layers):
        t = blocks[l]
        z = h @ t["W"] + t["b"]
        if l < params.arch.n_layers - 1:
            if params.arch.use_batch_norm:
                mu, var = z.mean(axis=0), z.var(axis=0)
                z = t["bn_gamma"] * (z - mu) / np.sqrt(var + nn.BN_EPS) + t["bn_beta"]
            out = min(out, float(np.abs(z).min()))
            h = np.maximum(z, 0)
    return out


def max_gradient_error(params, batch, h=1e-4):
    """Max over coordinates of ``|g - g_fd| / max(|g| + |g_fd|, floor)``."""
    _, g = nn.loss_and_grad(params, batch)
    fd = np.empty_like(g)
    w = params.values
    for i in range(len(w)):
        old = w[i]
        w[i] = old + h
        up = nn.loss(params, batch)
        w[i] = old - h
        down = nn.loss(params, batch)
        w[i] = old
        fd[i] = (up - down) / (2 * h)
    # bias gradients under batch norm are exactly zero; the floor keeps them from
    # turning rounding noise into a large ratio
    denom = np.maximum(np.abs(g) + np.abs(fd), 1e-6)
    return float(np.max(np.abs(g - fd) / denom))


def check_gradient(n_cases=100, tol=1e-4, seed=0):
    errs = [max_gradient_error(p, b) for p, b in gradient_cases(n_cases, seed)]
    worst = max(errs)
    return [Check("gradient", f"analytic gradient matches central differences ({n_cases} cases)",
                  worst < tol, tol - worst, {"max_rel_error": worst, "tol": tol})]


# caputo --------------------------------------------------------------------

def check_caputo(alpha=0.5, tol_order=0.15):
    out = []
    n = 100
    t = np.linspace(0, 1, n + 1)
    value = ffpe.caputo_derivative(t, alpha, 1.0 / n)[-1]
    exact = 1.0 / gamma_fn(2 - alpha)
    # the L1 scheme is exact on piecewise-linear f
    err = abs(value - exact)
    bound = (1.0 / n) ** (2 - alpha)
    out.append(Check("caputo", f"D^{alpha} t at t=1 equals 1/Gamma({2 - alpha})", err <= bound,
                     bound - err, {"value": value, "exact": exact}))
    const = ffpe.caputo_derivative(np.full(11, 3.0), alpha, 0.1)
    out.append(Check("caputo", "derivative of a constant vanishes", bool(np.all(const == 0)),
                     0.0 - float(np.abs(const).max()), {}))
    errs = []
    for n in (20, 40, 80, 160):
        t = np.linspace(0, 1, n + 1)
        d = ffpe.caputo_derivative(t ** 2, alpha, 1.0 / n)[-1]
        errs.append(abs(d - 2.0 / gamma_fn(3 - alpha)))
    orders = np.log2(np.asarray(errs[:-1]) / np.asarray(errs[1:]))
    dev = float(np.max(np.abs(orders - (2 - alpha))))
    out.append(Check("caputo", f"L1 convergence order 2-alpha over three halvings",
                     dev <= tol_order, tol_order - dev, {"orders": orders.tolist()}))
    return out


# steady state ---------------------------------------------------------------

DOUBLE_WELL = dict(a=-2.5, b=2.5, n=200, diffusion=0.5, gamma=1.0)


def double_well_problem(alpha, n=DOUBLE_WELL["n"]):
    d = DOUBLE_WELL
    return ffpe.FfpeProblem.from_functions(d["a"], d["b"], n, lambda x: (x ** 2 - 1) ** 2,
                                           d["diffusion"], d["gamma"], alpha)


def off_center_start(x):
    return np.exp(-(x - 0.5) ** 2 / 0.1)


def check_lemma1(alphas=(0.5, 0.75, 1.0), t_end=1e8, n_steps=1500, tol=1e-3, mass_tol=1e-10):
    out = []
    for alpha in alphas:
        prob = double_well_problem(alpha)
        state, _ = ffpe.solve(prob, off_center_start, ffpe.graded_times(t_end, n_steps))
        dist = ffpe.l1_distance(state.p, ffpe.boltzmann_stationary(prob), prob.h)
        ok = dist < tol and state.max_mass_error <= mass_tol
        out.append(Check("lemma1", f"alpha={alpha}: long-run density is Boltzmann", ok,
                         tol - dist,
                         {"l1": dist, "max_mass_error": state.max_mass_error,
                          "clipped": state.negatives_clipped}))
    return out


# stationary density vs posterior --------------------------------------------

def check_corollary2(m=50, d_xi=0.5, noise=0.01, seed=0):
    prob = ffpe.FfpeProblem.from_functions(-2.0, 2.0, 400, lambda x: (x ** 2 - 1) ** 2, d_xi)
    p_s = ffpe.boltzmann_stationary(prob)
    exact = ffpe.posterior_identity_check(p_s, prob.potential, m, d_xi)
    out = [Check("corollary2", "p_s^(m D) is proportional to exp(-m L)", exact < 1e-12,
                 1e-12 - exact, {"deviation": exact})]
    rng = stream(seed, "corollary2")
    xi = rng.uniform(-1, 1, prob.n)
    perturbed = ffpe.posterior_identity_check(p_s * (1 + noise * xi), prob.potential, m, d_xi)
    # first order: m D log(1 + noise*xi) ~ m D noise xi, centred and maximized
    predicted = m * d_xi * noise * float(np.max(np.abs(xi - xi.mean())))
    ratio = perturbed / predicted
    out.append(Check("corollary2", "perturbation response matches first order", 0.5 <= ratio <= 2,
                     min(ratio - 0.5, 2 - ratio), {"observed": perturbed, "predicted": predicted}))
    return out


# llc -------------------------------------------------------------------------

TOY_SGLD = llc.SgldConfig(step_size=1e-4, localization=1.0, chains=200, draws=3000, burn_in=1000)
TOY_CASES = (
    ("w^2", lambda: llc.power_potential(2, 1), np.logspace(-1, -4, 10), 1_000_000),
    ("w^4", lambda: llc.power_potential(4, 1), np.logspace(-1, -5, 10), 1_000_000),
    ("|w|^2 (d=4)", lambda: llc.power_potential(2, 4), np.logspace(-0.05, -2.05, 10), 4_000_000),
)


def check_llc(m=10_000, seed=0, cases=TOY_CASES, cfg=TOY_SGLD):
    out = []
    for name, make, eps, samples in cases:
        pot = make()
        w0 = np.zeros(pot.dim)
        est = llc.estimate_llc_toy(pot, w0, m, cfg, seed=seed)
        scan = llc.volume_scan(pot, w0, eps, samples, seed=seed)
        tol = 0.1 + 0.2 * abs(scan.lam)
        err = abs(est.lambda_hat - scan.lam)
        out.append(Check("llc", f"SGLD estimate agrees with volume oracle for {name}", err <= tol,
                         tol - err, {"sgld": est.lambda_hat, "volume": scan.lam,
                                     "analytic": pot.lam, "volume_r2": scan.r_squared}))
    return out


# dimension inequalities on synthetic telemetry ------------------------------

def check_inequalities_synthetic():
    steps = np.arange(100, 5001, 100)
    disp = 0.3 * steps ** 0.25
    lam = np.full(len(steps), 2.0)
    fit, rep = analysis.analyze_trajectory(steps, disp, lam)
    ok = abs(rep.d_s - 1.0) < 1e-9 and rep.lemma2_holds and rep.corollary3_holds
    out = [Check("lemma2", "exact t^0.25 walk with lambda=2 gives d_s=1 <= lambda", ok,
                 rep.margin, rep.to_dict())]
    # d_s <= lambda is equivalent to slope <= 1/2, so a superdiffusive walk must fail
    _, bad = analysis.analyze_trajectory(steps, 0.3 * steps ** 0.75, lam)
    out.append(Check("lemma2", "superdiffusive t^0.75 walk is flagged as a violation",
                     not bad.lemma2_holds and not bad.corollary3_holds, -bad.margin, bad.to_dict()))
    return out


# fractal bench -----------------------------------------------------------------

GASKET_TOL = {"d_f": 0.05, "d_walk": 0.05, "d_s": 0.10, "identity": 0.10}


def gasket_certificate(level=8, walkers=100_000, steps=10_000, seed=0):
    g = bench.build_gasket(level)
    side = 2 ** level
    ens = bench.simulate_walks(g, steps, walkers, seed)
    radii = np.geomspace(4, side, 7)
    return bench.certify(
        g, ens, radii, return_window=(16, steps // 5), msd_window=(steps // 100, steps),
        expected={"d_f": bench.GASKET_DF, "d_walk": bench.GASKET_DWALK, "d_s": bench.GASKET_DS},
        tol=GASKET_TOL)


def control_certificates(walkers=20_000, steps=2000, seed=0):
    chain = bench.chain_graph(4001)
    lat = bench.lattice_graph(201)
    out = {}
    for g, ds in ((chain, 1.0), (lat, 2.0)):
        ens = bench.simulate_walks(g, steps, walkers, seed)
        out[g.name] = {
            "d_walk": bench.walker_dimension(ens, (steps // 100, steps)).exponent,
            "d_s": bench.spectral_from_return(ens, (16, steps), g).exponent,
            "expected_d_s": ds,
        }
    return out


def check_gasket(level=8, walkers=100_000, steps=10_000, seed=0):
    cert = gasket_certificate(level, walkers, steps, seed)
    out = []
    for key, c in cert["checks"].items():
        tol = GASKET_TOL[key]
        out.append(Check("gasket", f"Sierpinski gasket {key} within {tol:.0%}", c["ok"],
                         tol - c["rel_error"], c))
    for name, c in control_certificates(seed=seed).items():
        err = max(abs(c["d_walk"] - 2) / 2, abs(c["d_s"] - c["expected_d_s"]) / c["expected_d_s"])
        out.append(Check("gasket", f"{name} is diffusive (d_walk=2, d_s={c['expected_d_s']:g})",
                         err <= 0.05, 0.05 - err, c))
    return out


GROUPS = {
    "gradient": check_gradient,
    "caputo": check_caputo,
    "lemma1": check_lemma1,
    "corollary2": check_corollary2,
    "llc": check_llc,
    "lemma2": check_inequalities_synthetic,
    "gasket": check_gasket,
}

QUICK = {
    "gradient": dict(n_cases=20),
    "gasket": dict(level=7, walkers=20_000, steps=4000),
}


def run(only=None, quick=False):
    """Run the selected groups (all by default) and return the list of checks."""
    names = list(GROUPS) if not only else list(only)
    unknown = [n for n in names if n not in GROUPS]
    if unknown:
        raise KeyError(f"unknown check group(s): {', '.join(unknown)}")
    checks = []
    for name in names:
        t0 = time.perf_counter()
        kwargs = QUICK.get(name, {}) if quick else {}
        group = GROUPS[name](**kwargs)
        dt = time.perf_counter() - t0
        for c in group:
            c.seconds = dt / len(group)
        checks.extend(group)
    return checks


def format_table(checks):
    width = max([len(c.claim) for c in checks] + [5])
    lines = [f"{'group':<11} {'claim':<{width}}  status  margin"]
    for c in checks:
        lines.append(f"{c.group:<11} {c.claim:<{width}}  {'PASS' if c.ok else 'FAIL':<6}  {c.margin:.3g}")
    return "\n".join(lines)
