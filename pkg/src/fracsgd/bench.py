"""Random walks on graphs with known fractal dimensions.

The Sierpinski gasket has mass dimension ln3/ln2, walker dimension ln5/ln2 and
spectral dimension 2 ln3/ln5; chains and square lattices are the diffusive
controls. These certify the estimators before they are trusted on weights.
"""
import math
from dataclasses import dataclass

import numpy as np

from .analysis import ols_fit
from .rng import stream

GASKET_DF = math.log(3) / math.log(2)
GASKET_DWALK = math.log(5) / math.log(2)
GASKET_DS = 2 * math.log(3) / math.log(5)


@dataclass
class FractalGraph:
    coords: np.ndarray      # (n, 2) embedding
    neighbors: np.ndarray   # (n, max_degree), padded with -1
    degree: np.ndarray
    level: int
    origin: int = 0
    name: str = "graph"

    @property
    def n_vertices(self):
        return len(self.coords)

    @property
    def n_edges(self):
        return int(self.degree.sum()) // 2

    def is_connected(self):
        seen = np.zeros(self.n_vertices, dtype=bool)
        seen[self.origin] = True
        frontier = [self.origin]
        while frontier:
            nxt = self.neighbors[frontier].ravel()
            nxt = np.unique(nxt[nxt >= 0])
            nxt = nxt[~seen[nxt]]
            seen[nxt] = True
            frontier = nxt.tolist()
        return bool(seen.all())


def _from_edges(coords, edges, level, origin, name):
    n = len(coords)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(edges.ravel(), minlength=n)
    nbr = -np.ones((n, max(int(deg.max(initial=0)), 1)), dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for a, b in edges:
        nbr[a, fill[a]] = b
        fill[a] += 1
        nbr[b, fill[b]] = a
        fill[b] += 1
    return FractalGraph(np.asarray(coords, dtype=np.float64), nbr, deg, level, origin, name)


def build_gasket(level):
    """Sierpinski gasket graph of side ``2**level`` with the origin at the lower-left corner."""
    if not 0 <= level <= 10:
        raise ValueError("gasket level must lie in [0, 10]")
    # unit up-triangles in lattice coordinates (a, b) -> a*e1 + b*e2
    tri = np.zeros((1, 2), dtype=np.int64)
    for k in range(level):
        s = 2 ** k
        tri = np.concatenate([tri, tri + (s, 0), tri + (0, s)])
    corners = np.stack([tri, tri + (1, 0), tri + (0, 1)], axis=1).reshape(-1, 2)
    keys, inverse = np.unique(corners, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1, 3)
    edges = np.concatenate([inverse[:, [0, 1]], inverse[:, [1, 2]], inverse[:, [2, 0]]])
    coords = np.column_stack([keys[:, 0] + 0.5 * keys[:, 1], keys[:, 1] * math.sqrt(3) / 2])
    origin = int(np.flatnonzero((keys[:, 0] == 0) & (keys[:, 1] == 0))[0])
    return _from_edges(coords, edges, level, origin, f"gasket-{level}")


def chain_graph(n):
    """Path of ``n`` vertices with the origin in the middle."""
    coords = np.column_stack([np.arange(n, dtype=np.float64), np.zeros(n)])
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return _from_edges(coords, edges, 0, n // 2, f"chain-{n}")


def lattice_graph(side):
    """``side x side`` square lattice with the origin at the centre."""
    ij = np.indices((side, side)).reshape(2, -1).T
    idx = np.arange(side * side).reshape(side, side)
    edges = np.concatenate([
        np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()]),
        np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()]),
    ])
    return _from_edges(ij.astype(np.float64), edges, 0, int(idx[side // 2, side // 2]),
                       f"lattice-{side}")


def complete_graph(k):
    angle = 2 * np.pi * np.arange(k) / k
    coords = np.column_stack([np.cos(angle), np.sin(angle)])
    edges = [(a, b) for a in range(k) for b in range(a + 1, k)]
    return _from_edges(coords, edges, 0, 0, f"K{k}")


@dataclass
class WalkEnsemble:
    steps: int
    walkers: int
    msd: np.ndarray
    return_prob: np.ndarray


def simulate_walks(graph, steps, walkers, seed=0, chunk=100_000, budget=5e10):
    """Simple random walks from ``graph.origin``.

    Returns the mean squared Euclidean displacement and the fraction of walkers
    sitting at the origin after every step.
    """
    if steps * walkers > budget:
        raise ValueError(f"{steps}x{walkers} walker-steps exceeds the budget of {budget:g}")
    msd = np.zeros(steps + 1)
    at_origin = np.zeros(steps + 1)
    x0 = graph.coords[graph.origin]
    for c, start in enumerate(range(0, walkers, chunk)):
        n = min(chunk, walkers - start)
        rng = stream(seed, "walks", c)
        pos = np.full(n, graph.origin, dtype=np.int64)
        at_origin[0] += n
        for t in range(1, steps + 1):
            pick = (rng.random(n) * graph.degree[pos]).astype(np.int64)
            pos = graph.neighbors[pos, pick]
            d = graph.coords[pos] - x0
            msd[t] += np.einsum("ij,ij->", d, d)
            at_origin[t] += np.count_nonzero(pos == graph.origin)
    return WalkEnsemble(steps, walkers, msd / walkers, at_origin / walkers)


@dataclass
class ScalingFit:
    exponent: float
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def mass_dimension(graph, radii):
    """Slope of log(#vertices within Euclidean radius r of the origin) vs log r."""
    radii = np.asarray(radii, dtype=np.float64)
    if len(radii) < 3:
        raise ValueError("need at least three radii")
    if radii.max() / radii.min() < 10 * (1 - 1e-9):
        raise ValueError("radii must span at least one decade")
    dist = np.linalg.norm(graph.coords - graph.coords[graph.origin], axis=1)
    counts = np.array([np.count_nonzero(dist <= r + 1e-9) for r in radii])
    slope, icpt, r2 = ols_fit(np.log(radii), np.log(counts))
    return ScalingFit(slope, slope, icpt, r2, len(radii))


class SaturatedWindowError(ValueError):
    pass


def _even_window(n, window):
    lo, hi = window
    t = np.arange(n)
    return t[(t >= lo) & (t <= hi) & (t % 2 == 0) & (t > 0)]


def spectral_from_return(ensemble, window, graph=None):
    """``d_s = -2 * slope`` of log P0(t) vs log t over even t in ``window``."""
    t = _even_window(len(ensemble.return_prob), window)
    p = ensemble.return_prob[t]
    if len(t) < 3:
        raise ValueError("window holds fewer than three even steps")
    if np.any(p <= 0):
        raise SaturatedWindowError(
            f"no returns recorded at t={int(t[p <= 0][0])}; shrink the window or add walkers")
    if graph is not None:
        stationary = graph.degree[graph.origin] / (2.0 * graph.n_edges)
        # bipartite graphs double the even-step stationary mass
        if p[-1] < 4 * stationary:
            raise SaturatedWindowError(
                f"P0({int(t[-1])})={p[-1]:.3g} is within 4x of the stationary value "
                f"{stationary:.3g}; finite-size saturation")
    slope, icpt, r2 = ols_fit(np.log(t), np.log(p))
    return ScalingFit(-2.0 * slope, slope, icpt, r2, len(t))


def walker_dimension(ensemble, window):
    """``d_walk = 2 / slope`` of log MSD vs log t."""
    lo, hi = window
    t = np.arange(len(ensemble.msd))
    sel = (t >= max(lo, 1)) & (t <= hi)
    slope, icpt, r2 = ols_fit(np.log(t[sel]), np.log(ensemble.msd[sel]))
    return ScalingFit(2.0 / slope, slope, icpt, r2, int(sel.sum()))


def certify(graph, ensemble, radii, return_window, msd_window, expected=None, tol=None):
    """Estimate all three dimensions and the cross identity ``d_s = 2 d_f / d_walk``."""
    df = mass_dimension(graph, radii).exponent
    dw = walker_dimension(ensemble, msd_window).exponent
    ds = spectral_from_return(ensemble, return_window, graph).exponent
    out = {
        "graph": graph.name,
        "d_f": df,
        "d_walk": dw,
        "d_s": ds,
        "identity_rel_error": abs(ds - 2 * df / dw) / ds,
        "subdiffusive": bool(dw > 2.05),
    }
    if expected:
        checks = {}
        for key, value in expected.items():
            rel = abs(out[key] - value) / value
            checks[key] = {"expected": value, "rel_error": rel, "ok": bool(rel <= tol[key])}
        checks["identity"] = {"rel_error": out["identity_rel_error"],
                              "ok": bool(out["identity_rel_error"] <= tol.get("identity", 0.1))}
        out["checks"] = checks
        out["ok"] = all(c["ok"] for c in checks.values())
    return out
