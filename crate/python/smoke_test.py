"""Exercise the wpcn extension end to end on short runs.

Build and install first:
    cd crates/py && maturin build --release && pip install ../../target/wheels/wpcn-*.whl
"""

import cmath
import math

import numpy as np

import wpcn


def check_constants():
    cfg = wpcn.Config()
    k = cfg.constants()
    assert math.isclose(k["threshold"], (3 + 2 * math.sqrt(2)) * k["delta"] * k["p_max"], rel_tol=1e-12)
    assert math.isclose(k["energy_scale"], (2 + math.sqrt(2)) * k["delta"], rel_tol=1e-12)
    c, u0 = wpcn.threshold_constants(k["delta"], k["p_max"])
    assert (c, u0) == (k["energy_scale"], k["threshold"])
    topo = cfg.topology()
    assert topo["nodes"] == 5 and len(topo["links"]) == 6


def check_numerics():
    a = wpcn.ula_steering(0.4, 8)
    assert len(a) == 8 and all(math.isclose(abs(z), 1.0) for z in a)
    assert wpcn.link_capacity(0.0, 1e-3 + 0j, 1e4, 1e-16, 5e-6) == 0.0

    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = x @ x.conj().T
    h = (h + h.conj().T) / 2
    value, vector = wpcn.max_eigvec(h.tolist())
    assert math.isclose(value, np.linalg.eigvalsh(h)[-1], rel_tol=1e-9)
    v = np.array(vector)
    assert np.linalg.norm(h @ v - value * v) <= 1e-8 * max(np.linalg.norm(h), 1.0)

    try:
        wpcn.max_eigvec([[0, 1j], [1j, 0]])
    except ValueError:
        pass
    else:
        raise AssertionError("non-Hermitian input accepted")

    assert wpcn.lyapunov_value([[2.0]], [0.0], 1.0) == 4.0


def check_closed_loop():
    cfg = wpcn.Config(overrides=[("run.slots", "2000")])
    sim = wpcn.Simulation(cfg)
    for _ in range(200):
        before = min(sim.state["battery"])
        rec = sim.step()
        assert rec["drift_ok"] in (True, None)
        assert min(sim.state["battery"]) >= 0.0 and before >= 0.0
    assert sim.state["slot"] == 200
    assert sim.lyapunov() >= 0.0

    m1, m2 = wpcn.run(cfg), wpcn.run(cfg)
    assert m1 == m2
    assert m1["battery_outages"] == 0 and m1["drift_failures"] == 0

    rows = wpcn.sweep(cfg, [1e13, 1e12])
    assert [r["v"] for r in rows] == [1e12, 1e13]

    metrics, points = wpcn.pattern(cfg, 90)
    assert len(points) == 90
    assert all(points[k][1] == points[90 - k][1] for k in range(1, 90))

    try:
        wpcn.run(cfg.with_override("constants.v", "0"))
    except ValueError:
        pass
    else:
        raise AssertionError("V = 0 accepted")


def main():
    check_constants()
    check_numerics()
    check_closed_loop()
    print("smoke test passed")


if __name__ == "__main__":
    main()
