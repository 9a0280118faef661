import json
import zipfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from futureplan.archive import ArchiveError, load_archive, save_archive
from futureplan.world.dataset import (Dataset, allocate_counts, episode_jobs, generate_dataset, load_dataset,
                                      parse_scenario_mix, save_dataset)
from futureplan.world.scenarios import SCENARIOS, UnknownScenarioError


@settings(max_examples=50, deadline=None)
@given(arr=hnp.arrays(st.sampled_from([np.float32, np.float64, np.int64, np.bool_, np.uint8]),
                      hnp.array_shapes(min_dims=0, max_dims=4, max_side=5)))
def test_archive_round_trip(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("a") / "x.fpa"
    save_archive(p, {"x": arr, "y": np.arange(3)}, {"note": "hi"})
    got, meta = load_archive(p)
    assert got["x"].dtype == arr.dtype and got["x"].shape == arr.shape
    assert got["x"].tobytes() == np.ascontiguousarray(arr).tobytes()
    assert meta["note"] == "hi" and meta["arrays"]["x"]["nbytes"] == arr.nbytes


def test_archive_readable_by_numpy(tmp_path):
    p = tmp_path / "x.npz"
    save_archive(p, {"a": np.eye(3)}, {})
    with np.load(p) as z:
        assert np.array_equal(z["a"], np.eye(3))


def test_archive_deterministic_bytes(tmp_path):
    for name in ("a", "b"):
        save_archive(tmp_path / name, {"z": np.ones(4), "a": np.zeros(2)}, {"k": 1})
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_archive_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_text("not a zip")
    with pytest.raises(ArchiveError):
        load_archive(bad)
    p = tmp_path / "v.fpa"
    with zipfile.ZipFile(p, "w") as zf:
        zf.writestr("manifest.json", json.dumps({"format": "futureplan-archive", "version": 99, "arrays": {}}))
    with pytest.raises(ArchiveError, match="version"):
        load_archive(p)
    with pytest.raises(ArchiveError):
        save_archive(tmp_path / "o", {"o": np.array([object()])}, {})


def test_mix_parsing_and_allocation():
    mix = parse_scenario_mix("merge:2,emergency-brake")
    assert mix == {"merge": 2.0, "emergency-brake": 1.0}
    assert allocate_counts(mix, 10) == {"merge": 7, "emergency-brake": 3}
    assert sum(allocate_counts(parse_scenario_mix("all"), 500).values()) == 500
    assert set(parse_scenario_mix("all")) == set(SCENARIOS)
    with pytest.raises(UnknownScenarioError):
        parse_scenario_mix("merge,nope")


def test_episode_seeds_distinct():
    jobs = episode_jobs(parse_scenario_mix("all"), 50, 2)
    assert len({s for s, _ in jobs}) == 50


def test_dataset_files_byte_identical(tmp_path):
    mix = parse_scenario_mix("all")
    for name in ("a", "b"):
        save_dataset(tmp_path / name, generate_dataset(mix, 10, 5))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_empty_dataset(tmp_path):
    p = tmp_path / "e"
    save_dataset(p, generate_dataset(parse_scenario_mix("all"), 0, 0))
    ds = load_dataset(p)
    assert len(ds) == 0
    _, meta = load_archive(p)
    assert meta["num_episodes"] == 0 and sum(meta["scenario_counts"].values()) == 0


def test_round_trip_and_manifest(tmp_path, small_dataset):
    p = tmp_path / "d"
    save_dataset(p, small_dataset)
    ds = load_dataset(p)
    assert len(ds) == len(small_dataset) == 40
    for name in ("obs_bev", "gt_traj", "command", "agent_futures", "lanes", "seed", "scenario_id"):
        assert np.array_equal(getattr(ds, name), getattr(small_dataset, name))
    _, meta = load_archive(p)
    assert sum(meta["scenario_counts"].values()) == 40
    assert meta["meters_per_pixel"] == ds.world.meters_per_pixel and meta["waypoint_spacing_s"] == 0.5
    ep = ds[3]
    assert ep.scenario in SCENARIOS and ep.gt_traj.shape == (6, 2)


def test_wrong_kind_rejected(tmp_path):
    p = tmp_path / "x"
    save_archive(p, {"a": np.zeros(1)}, {"kind": "other"})
    with pytest.raises(ArchiveError, match="not an episode dataset"):
        load_dataset(p)


def test_split_disjoint(small_dataset):
    tr, ho = small_dataset.split(0.25, 0)
    assert len(tr) + len(ho) == len(small_dataset) and len(ho) == 10
    keys_tr = set(zip(tr.seed.tolist(), tr.scenario_id.tolist()))
    keys_ho = set(zip(ho.seed.tolist(), ho.scenario_id.tolist()))
    assert not keys_tr & keys_ho


def test_parallel_generation_matches_serial():
    mix = parse_scenario_mix("merge,emergency-brake")
    a = generate_dataset(mix, 6, 1, workers=1)
    b = generate_dataset(mix, 6, 1, workers=2)
    assert np.array_equal(a.obs_bev, b.obs_bev) and np.array_equal(a.gt_traj, b.gt_traj)


def test_from_episodes_type():
    assert isinstance(Dataset.from_episodes([]), Dataset)
