"""Smoke test of the conc_lab extension.

Run with ``python crates/python/python/smoke_test.py`` or ``pytest`` after
``pip install --no-build-isolation -e crates/python``.
"""

import math

import pytest

import conc_lab


def test_chamber_certificate():
    cert = conc_lab.certify_chamber(4)
    assert cert["delta"] == 0.0625
    assert cert["K"] <= 1 + 4 * 4**2.5
    assert cert["diam_B"] <= 4 * math.sqrt(4)
    for n in range(2, 10):
        assert abs(conc_lab.chamber_spectral_radius(n) - math.cos(math.pi / n)) < 1e-10


def test_contracting_failure_raises():
    domain = """{"dim": 2, "faces": [
        {"normal": [1, 0], "offset": 0, "direction": [1, 2]},
        {"normal": [0, 1], "offset": 0, "direction": [2, 1]}]}"""
    with pytest.raises(conc_lab.CertificationError):
        conc_lab.certify_domain(domain)


def test_rank_model_and_local_times():
    re = conc_lab.simulate_rank([1.0, 0.0, -1.0], 1.0, 1e-2, 64, seed=7)
    assert len(re) == 64
    raw = re.raw()
    assert raw.dim == 3 and raw.master_seed == 7
    gaps = re.gaps()
    assert all(g >= 0 for i in range(2) for g in gaps.terminal(i))
    lt = re.local_times()
    assert lt.dim == 2
    assert all(v >= 0 for v in lt.terminal(0))
    again = conc_lab.simulate_rank([1.0, 0.0, -1.0], 1.0, 1e-2, 64, seed=7).raw()
    assert again.to_csv() == raw.to_csv()


def test_reflection_and_metrics():
    grid = conc_lab.TimeGrid(1.0, 0.25)
    phi, l = conc_lab.skorokhod_map_1d([0.0, -0.25, -0.5, -0.25, -1.0], grid)
    assert l == [0.0, 0.25, 0.5, 0.5, 1.0]
    assert phi == [0.0, 0.0, 0.0, 0.25, 0.0]
    a = [[0.0, 1.0, 2.0, 1.0, 0.0]]
    b = [[0.5, 1.5, 2.5, 1.5, 0.5]]
    assert conc_lab.path_distance(a, b, grid, "uniform") == 0.5


def test_exact_transport_and_inequality():
    p = conc_lab.simulate_brownian([0.0, 0.0], 1.0, 0.05, 32, seed=1)
    q = conc_lab.simulate_brownian([0.5, -0.5], 1.0, 0.05, 32, seed=2)
    w, assignment = conc_lab.wasserstein(p, q, p=2)
    assert sorted(assignment) == list(range(32))
    assert w > 0
    w_self, ident = conc_lab.wasserstein(p, p)
    assert w_self == 0 and ident == list(range(32))
    consts = conc_lab.qtci_constants(1.0, 2)
    h = 0.5 * (0.5**2 + 0.5**2)
    base = conc_lab.simulate_brownian([0.0, 0.0], 1.0, 0.05, 32, seed=3)
    rep = conc_lab.qtci_verify(p, q, consts["c_nd"], h, baseline=base)
    assert rep["bound"] == pytest.approx(math.sqrt(2 * consts["c_nd"] * h))
    assert conc_lab.rank_model_entropy([1.0, 0.0, -1.0], 1.0) == 1.0


def test_orlicz_and_h():
    x = 1.0
    for _ in range(50):
        x -= (math.exp(x) - x - 2) / (math.exp(x) - 1)
    assert conc_lab.orlicz_norm([1.0] * 5)["norm_phi"] == pytest.approx(1 / x, abs=1e-9)
    assert conc_lab.h_function(1 / math.log(2)) < 0


def test_tail_experiment():
    rep, chi = conc_lab.max_local_time_experiment(2, 200, seed=3, dt=1e-2)
    assert len(chi) == 200
    assert rep["n_samples"] == 200
    assert rep["thresholds"][0] == pytest.approx(rep["r_grid"][0] * 2**2.5)
    value, valid = conc_lab.bound_preq(1.0, 2 * math.sqrt(2 * math.log(2)))
    assert valid and value == pytest.approx(1.0)
    with pytest.raises(ValueError):
        conc_lab.max_local_time_experiment(2, 10, seed=3, dt=1e-2, r_grid=[0.1, 0.2])


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
