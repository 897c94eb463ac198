"""Smoke test for the Python bindings. Build and install the extension first (see README)."""

import math

import fusion_bounds_py as fb


def main():
    lam1, lam2 = fb.boltzmann_weights(3.0, 1.0, 100.0)
    assert math.isclose(lam1 + lam2, 1.0) and lam1 > 0.999

    data = fb.Dataset.simulate("base", n=1000, seed=1)
    assert len(data) == 1000 and data.covariate_names == ["x1", "x2", "x3"]

    nuis = fb.Nuisances.cross_fit(data, k=2, seed=1)
    est = fb.estimate_bounds(data, nuis, rho=0.1, gamma=0.1)
    assert est["theta_lb_bc"] <= est["theta_ub_bc"], est
    print("bounds at (0.1, 0.1):", round(est["theta_lb_bc"], 3), round(est["theta_ub_bc"], 3))

    sub = fb.estimate_bounds(data, nuis, rho=0.1, gamma=0.1, subgroup="x1 > 1")
    assert sub["n_effective"] < 1000

    # True nuisances, no confounding and no sensitivity: the bounds coincide.
    oracle_data, oracle = fb.Nuisances.oracle(n=1000, seed=2, beta=0.0)
    tight = fb.estimate_bounds(oracle_data, oracle, rho=0.0, gamma=0.0)
    assert abs(tight["theta_ub_bc"] - tight["theta_lb_bc"]) < 1e-9

    arms = fb.compat_test(oracle, rho=0.0, gamma=0.0, r=200)
    assert [a["t"] for a in arms] == [0, 1]

    grid = fb.compute_frontier(data, grid_n=4, seed=1)
    assert len(grid["cells"]) == 16
    print("regions:", sorted({c["region"] for c in grid["cells"]}))

    try:
        fb.Dataset.simulate("no-such-scenario")
    except fb.FusionBoundsError as err:
        assert "UnknownScenario" in str(err)
    else:
        raise AssertionError("expected an error")

    print("smoke test passed")


if __name__ == "__main__":
    main()
