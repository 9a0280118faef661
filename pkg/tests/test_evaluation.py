import math

import numpy as np
import pytest
import torch

from conftest import SMALL_CFG
from futureplan.evaluation import (evaluate_closed_loop, evaluate_open_loop, mix_jobs, open_loop_errors, predict,
                                   suite_jobs, template_emission_rate)
from futureplan.training import build_model
from futureplan.world.closed_loop import oracle_policy, zero_policy
from futureplan.world.scenarios import HAZARD_FREE


def test_open_loop_exact_prediction():
    gt = np.random.default_rng(0).normal(size=(5, 6, 2))
    m = open_loop_errors(gt, gt)
    assert m["ade"] == m["fde"] == m["avg_l2"] == 0.0 and m["l2"] == [0.0] * 6


def test_open_loop_translation():
    gt = np.random.default_rng(0).normal(size=(5, 6, 2))
    m = open_loop_errors(gt + np.array([0.3, 0.4]), gt)
    assert m["ade"] == pytest.approx(0.5, abs=1e-12)
    assert m["fde"] == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(m["l2"], 0.5)


def test_open_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        e, f = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        p, g = rng.normal(size=(e, f, 2)), rng.normal(size=(e, f, 2))
        errs = [[math.hypot(*(p[i, t] - g[i, t])) for t in range(f)] for i in range(e)]
        m = open_loop_errors(p, g)
        assert abs(m["ade"] - sum(map(sum, errs)) / (e * f)) < 1e-6
        assert abs(m["fde"] - sum(r[-1] for r in errs) / e) < 1e-6


def test_open_loop_edge_cases():
    m = open_loop_errors(np.zeros((0, 6, 2)), np.zeros((0, 6, 2)))
    assert math.isnan(m["ade"])
    with pytest.raises(ValueError):
        open_loop_errors(np.zeros((1, 6, 2)), np.zeros((1, 5, 2)))


@pytest.fixture(scope="module")
def small_model():
    return build_model(SMALL_CFG, __import__("futureplan.world.core", fromlist=["WorldConfig"]).WorldConfig())


def test_predict_and_open_loop(small_model, small_dataset):
    coarse, final = predict(small_model, small_dataset, batch_size=7)
    assert coarse.shape == final.shape == (len(small_dataset), 6, 2)
    c2, f2 = predict(small_model, small_dataset, batch_size=64)
    assert np.allclose(coarse, c2, atol=1e-5) and np.allclose(final, f2, atol=1e-5)
    res = evaluate_open_loop(small_model, small_dataset)
    assert res["episodes"] == len(small_dataset) and set(res) >= {"coarse", "final"}


def test_template_emission_rate_bounds(small_model, small_dataset):
    rate = template_emission_rate(small_model, small_dataset.subset(range(4)))
    assert 0.0 <= rate <= 1.0


def test_jobs():
    assert suite_jobs(["a", "b"], [1, 2]) == [("a", 1), ("a", 2), ("b", 1), ("b", 2)]
    jobs = mix_jobs({"merge": 1.0, "emergency-brake": 3.0}, 8, 100)
    assert sum(sc == "emergency-brake" for sc, _ in jobs) == 6
    assert len({j for j in jobs}) == 8


def test_closed_loop_policies():
    jobs = suite_jobs(HAZARD_FREE, [900_000, 900_001])
    oracle = evaluate_closed_loop(None, jobs, policy=oracle_policy)
    assert oracle["success_rate"] == 1.0 and oracle["collision_rate"] == 0.0
    assert set(oracle["per_scenario"]) == set(HAZARD_FREE)
    zero = evaluate_closed_loop(None, jobs, policy=zero_policy)
    assert zero["success_rate"] == 0.0
    assert zero["route_completion"] < oracle["route_completion"]


def test_closed_loop_with_model(small_model):
    res = evaluate_closed_loop(small_model, [("straight-follow", 900_000)], max_steps=5)
    assert len(res["runs"]) == 1 and 0.0 <= res["driving_score"] <= 100.0
