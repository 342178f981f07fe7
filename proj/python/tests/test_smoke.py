import csv
import io
import math

import pytest

import vqoe


def small_cell(k=3, q_a=0.0):
    cfg = vqoe.reference_config()
    cfg.capacity_bps = 2.5e6
    cfg.max_flows = k
    cfg = vqoe.with_load(cfg, 0.96, 0.6)
    cfg.startup_threshold = q_a
    return cfg


def test_reference_cell_values():
    cfg = vqoe.reference_config()
    assert cfg.offered_load() == pytest.approx(0.96)
    r = vqoe.solve_qoe(cfg)
    c1, c2 = r["classes"]
    assert abs(c1["starvation_probability"] - 0.48) <= 0.05
    assert abs(c2["starvation_probability"] - 0.57) <= 0.05
    assert c1["mean_dtvt"] == pytest.approx(c2["mean_dtvt"], abs=1e-6)


def test_stationary_distribution_sums_to_one():
    g = vqoe.generator_mc1(small_cell(4))
    assert abs(g.sum(axis=1)).max() < 1e-12
    z = vqoe.stationary_distribution(g)
    assert z.sum() == pytest.approx(1.0)
    assert (z >= 0).all()


def test_simulation_matches_model():
    cfg = small_cell(3, 10.0)
    model = vqoe.solve_qoe(cfg)["classes"]
    sim = vqoe.simulate(cfg, "basic", 40000, seed=5, replicas=2)["classes"]
    for m, s in zip(model, sim):
        assert abs(m["starvation_probability"] - s["starvation_fraction"]) < 0.03
    again = vqoe.simulate(cfg, "basic", 40000, seed=5, replicas=2)["classes"]
    assert again == sim


def test_fit_and_posterior():
    xs = vqoe.sample_hyperexp(0.6, 94.0, 1143.0, 200000, seed=3)
    sel = vqoe.fit_viewing_times(xs)
    assert sel["ranking"][0] == "hyperexp"
    assert vqoe.class_posterior(0.0, 0.6011, 94.0, 1143.0) == pytest.approx(0.9482, abs=1e-4)


def test_errors_are_typed():
    cfg = vqoe.reference_config()
    cfg.max_flows = 0
    with pytest.raises(vqoe.DomainError):
        vqoe.solve_qoe(cfg)
    with pytest.raises(vqoe.Error):
        vqoe.simulate(vqoe.reference_config(), "warp")
    with pytest.raises(vqoe.DomainError):
        vqoe.solve_csv("[system]\nunknown = 1\n")


def test_config_driven_solve():
    text = vqoe.default_config_text().replace("q_a = 0", "q_a = 0, 30")
    rows = list(csv.DictReader(io.StringIO(vqoe.solve_csv(text))))
    assert len(rows) == 4
    assert {r["class"] for r in rows} == {"1", "2"}
    assert all(math.isfinite(float(r["starvation_probability"])) for r in rows)
