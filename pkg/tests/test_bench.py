import pytest

from conftest import SMALL_CFG
from futureplan.bench import bench_decode
from futureplan.training import build_model
from futureplan.world.core import WorldConfig


def test_bench_report():
    model = build_model(SMALL_CFG, WorldConfig())
    rep = bench_decode(model, reps=5)
    for key in ("prefill_median_s", "autoregressive_median_s", "baseline_median_s"):
        assert rep[key] > 0
    assert rep["template_tokens"] == 6 * (SMALL_CFG.num_tokens + 2) + 1 and rep["reps"] == 5
    assert rep["ar_over_prefill"] > 1.0
    assert rep["reference_full_scale"]["ar_over_prefill"] == pytest.approx(36.62 / 2.03)
    assert "machine" in rep and rep["schema_version"] == 1
    with pytest.raises(ValueError):
        bench_decode(model, reps=0)
