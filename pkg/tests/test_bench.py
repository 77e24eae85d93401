import numpy as np
import pytest

from fracsgd import bench


@pytest.mark.parametrize("level", range(0, 7))
def test_gasket_counts(level):
    g = bench.build_gasket(level)
    assert g.n_vertices == 3 * (3 ** level + 1) // 2
    assert g.n_edges == 3 ** (level + 1)
    assert g.degree.max() == (4 if level else 2)
    assert g.degree[g.origin] == 2
    assert g.is_connected()


def test_gasket_level_one():
    g = bench.build_gasket(1)
    assert (g.n_vertices, g.n_edges) == (6, 9)
    assert sorted(g.degree.tolist()) == [2, 2, 2, 4, 4, 4]
    np.testing.assert_allclose(g.coords[g.origin], [0, 0])


def test_gasket_level_bounds():
    with pytest.raises(ValueError):
        bench.build_gasket(-1)
    with pytest.raises(ValueError):
        bench.build_gasket(11)


def test_known_constants():
    assert bench.GASKET_DS == pytest.approx(2 * bench.GASKET_DF / bench.GASKET_DWALK, abs=1e-15)
    assert bench.GASKET_DS == pytest.approx(1.3652123, abs=1e-7)


def test_control_graphs():
    c = bench.chain_graph(11)
    assert (c.n_vertices, c.n_edges, c.origin) == (11, 10, 5) and c.is_connected()
    lat = bench.lattice_graph(5)
    assert (lat.n_vertices, lat.n_edges) == (25, 40) and lat.degree[lat.origin] == 4
    np.testing.assert_allclose(lat.coords[lat.origin], [2, 2])


def test_zero_steps():
    ens = bench.simulate_walks(bench.build_gasket(3), 0, 50)
    assert ens.msd.tolist() == [0.0] and ens.return_prob.tolist() == [1.0]


def test_walks_deterministic():
    g = bench.build_gasket(3)
    a = bench.simulate_walks(g, 20, 500, seed=4)
    b = bench.simulate_walks(g, 20, 500, seed=4)
    assert a.msd.tobytes() == b.msd.tobytes() and a.return_prob.tobytes() == b.return_prob.tobytes()
    assert a.msd[1] == 1.0  # every neighbour of the corner is one unit away


def test_chain_walk_oracles():
    # on a long chain the MSD of a simple walk is exactly t; returns vanish at odd t
    g = bench.chain_graph(401)
    ens = bench.simulate_walks(g, 100, 40_000, seed=1)
    t = np.arange(101)
    np.testing.assert_allclose(ens.msd[1:], t[1:], rtol=0.03)
    assert np.all(ens.return_prob[1::2] == 0)
    # P0(2) = 1/2 for a simple walk on Z
    assert ens.return_prob[2] == pytest.approx(0.5, abs=0.01)


def test_complete_graph_return_limit():
    # K4 mixes in one step: P0(t) -> deg / 2E = 1/4
    ens = bench.simulate_walks(bench.complete_graph(4), 30, 40_000, seed=0)
    assert ens.return_prob[10:].mean() == pytest.approx(0.25, abs=0.01)
    assert ens.return_prob[1] == 0


def test_mass_dimension_controls():
    assert bench.mass_dimension(bench.chain_graph(2001), np.geomspace(4, 400, 8)).exponent == \
        pytest.approx(1.0, abs=0.02)
    assert bench.mass_dimension(bench.lattice_graph(201), np.geomspace(4, 80, 8)).exponent == \
        pytest.approx(2.0, abs=0.05)
    assert bench.mass_dimension(bench.build_gasket(8), np.geomspace(4, 256, 7)).exponent == \
        pytest.approx(bench.GASKET_DF, rel=0.05)


def test_mass_dimension_input_errors():
    g = bench.chain_graph(101)
    with pytest.raises(ValueError):
        bench.mass_dimension(g, [2, 4])
    with pytest.raises(ValueError):
        bench.mass_dimension(g, [2, 4, 8])


def test_saturated_window_errors():
    small = bench.build_gasket(2)
    ens = bench.simulate_walks(small, 400, 2000, seed=0)
    with pytest.raises(bench.SaturatedWindowError):
        bench.spectral_from_return(ens, (20, 400), small)
    chain = bench.chain_graph(1001)
    sparse = bench.simulate_walks(chain, 200, 20, seed=0)
    with pytest.raises(bench.SaturatedWindowError):
        bench.spectral_from_return(sparse, (50, 200))


def test_walk_budget():
    with pytest.raises(ValueError):
        bench.simulate_walks(bench.chain_graph(11), 1000, 1000, budget=1e5)


def test_chain_certificate():
    g = bench.chain_graph(4001)
    ens = bench.simulate_walks(g, 2000, 20_000, seed=0)
    out = bench.certify(g, ens, np.geomspace(4, 400, 8), (16, 400), (20, 2000),
                        expected={"d_walk": 2.0, "d_s": 1.0, "d_f": 1.0},
                        tol={"d_walk": 0.05, "d_s": 0.05, "d_f": 0.05})
    assert out["ok"], out
    assert not out["subdiffusive"]
