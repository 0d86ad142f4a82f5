import math

import pytest

from aos_sim.errors import QueryError
from aos_sim.sampling import ground_coverage, samples_per_point
from aos_sim.sweep import (FOOTPRINT_EXCEEDS_EXTENT, TABLE_FIELDS, SweepConfig, SweepRecord, find_optimal_fov,
                           plot_results, read_records, records_to_csv, run_sweep, seed_mean, visibility_by_fov,
                           write_results)

TINY = dict(resolution_px=32, extent_m=40.0, roi_m=4.0, altitudes_m=(30,), sample_dists_m=(2.0,), seeds=(0,))


def _rec(fov, vis, seed=0, density="dense"):
    c = ground_coverage(30, fov)
    return SweepRecord(density, 400.0, seed, float(fov), 30.0, 1.0, c, samples_per_point(c, 1.0), vis, 0.0, 0.0)


def test_empty_forest_single_cell():
    recs = run_sweep(SweepConfig(fovs_deg=(50,), densities=("custom(0)",), **TINY))
    assert len(recs) == 1
    assert recs[0].ok and recs[0].visibility_mean == 1.0


def test_two_fovs_coverage_ratio():
    recs = run_sweep(SweepConfig(fovs_deg=(30, 60), densities=("custom(0)",), **TINY))
    assert len(recs) == 2
    ratio = recs[0].coverage_m / recs[1].coverage_m
    assert ratio == pytest.approx(math.tan(math.radians(15)) / math.tan(math.radians(30)), rel=1e-12)


def test_find_optimal_fov_argmax_and_tie():
    assert find_optimal_fov([_rec(20, 0.3), _rec(50, 0.5), _rec(90, 0.4)], "dense", 30, 1.0) == 50
    assert find_optimal_fov([_rec(60, 0.5), _rec(40, 0.5)], "dense", 30, 1.0) == 40


def test_find_optimal_fov_errors():
    with pytest.raises(QueryError):
        find_optimal_fov([], "dense", 30, 1.0)
    with pytest.raises(QueryError):
        find_optimal_fov([_rec(50, 0.5)], "dense", 30, 1.0)
    with pytest.raises(QueryError):
        find_optimal_fov([_rec(20, 0.3), _rec(50, 0.5)], "sparse", 30, 1.0)


def test_seed_mean_and_curve():
    recs = [_rec(50, 0.4, 0), _rec(50, 0.6, 1), _rec(70, 0.2, 0)]
    assert seed_mean(recs, density="dense", fov_deg=50) == pytest.approx(0.5)
    assert visibility_by_fov(recs, "dense", 30, 1.0) == {50.0: pytest.approx(0.5), 70.0: 0.2}


@pytest.fixture(scope="module")
def small_sweep():
    cfg = SweepConfig(fovs_deg=(30, 50), densities=("sparse", "dense"), **TINY)
    return cfg, run_sweep(cfg)


def test_records_self_consistent(small_sweep):
    _, recs = small_sweep
    assert len(recs) == 4
    for r in recs:
        c = ground_coverage(r.altitude_m, r.fov_deg)
        assert r.coverage_m == c and r.samples_n == samples_per_point(c, r.sample_dist_m)
        assert 0 <= r.visibility_mean <= 1
    assert [r.key() for r in recs] == sorted(r.key() for r in recs)


def test_sweep_table_is_deterministic(small_sweep):
    cfg, recs = small_sweep
    assert records_to_csv(run_sweep(cfg)) == records_to_csv(recs)


def test_workers_do_not_change_results(small_sweep):
    cfg, recs = small_sweep
    par = SweepConfig(**{**cfg.__dict__, "workers": 3})
    assert records_to_csv(run_sweep(par)) == records_to_csv(recs)


def test_footprint_larger_than_extent_fails_row():
    recs = run_sweep(SweepConfig(fovs_deg=(90,), densities=("sparse",), **{**TINY, "extent_m": 30.0}))
    assert recs[0].status == "failed" and recs[0].reason == FOOTPRINT_EXCEEDS_EXTENT
    assert math.isnan(recs[0].visibility_mean)


def test_write_and_read_back(tmp_path, small_sweep):
    cfg, recs = small_sweep
    write_results(recs, tmp_path, cfg)
    header = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert header.split(",") == TABLE_FIELDS
    back = read_records(tmp_path / "results.csv")
    assert records_to_csv(back) == records_to_csv(recs)
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "timings.csv").exists()
    paths = plot_results(recs, tmp_path)
    assert len(paths) == 2 and all((tmp_path / p).exists() for p in paths)


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(fovs_deg=()).validate()
    with pytest.raises(ValueError):
        SweepConfig(fovs_deg=(180,)).validate()
    with pytest.raises(ValueError):
        SweepConfig(mode="spiral").validate()
