import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectraloc.dataset import NoiseModel
from spectraloc.evaluation import (
    EvalReport,
    EvaluationError,
    PipelineConfig,
    ablate_sensor_count,
    ablate_subbands,
    centroid_separation,
    cluster_separation,
    error_percentiles,
    evaluate_model,
    mean_ci,
    run_leave_one_out,
    stress_test,
    summarize,
)
from spectraloc.lightsim import generate_dataset
from spectraloc.models.localizer import fit_localizer
from spectraloc.models.training import TrainConfig
from spectraloc.scenes import two_wall_scene

from conftest import small_scene_factory

KNN = PipelineConfig(kind="knn", knn_k=3)
NET = PipelineConfig(train=TrainConfig(learning_rate=1e-3, max_epochs=15, hidden=16, seed=1))


@pytest.fixture(scope="module")
def three_days():
    return generate_dataset(small_scene_factory(), 6, NoiseModel(), seed=4, days=3)


# --- metrics --------------------------------------------------------------------

def test_percentile_examples():
    assert error_percentiles([1, 2, 3, 4, 5], [0.5]) == pytest.approx([3.0])
    assert error_percentiles(list(range(10)), [0.9]) == pytest.approx([8.1])
    assert error_percentiles([4.2] * 7, [0.1, 0.5, 0.99]) == pytest.approx([4.2] * 3)
    with pytest.raises(EvaluationError):
        error_percentiles([], [0.5])
    with pytest.raises(EvaluationError):
        error_percentiles([1.0], [1.5])


def rank_oracle(errors, q):
    s = sorted(errors)
    pos = (len(s) - 1) * q
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50),
       st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_percentiles_match_rank_oracle_and_are_monotone(errors, qs):
    qs = sorted(qs)
    got = error_percentiles(errors, qs)
    assert got == pytest.approx([rank_oracle(errors, q) for q in qs], abs=1e-9)
    assert all(a <= b + 1e-12 for a, b in zip(got, got[1:]))


def test_mean_ci():
    assert mean_ci([3.0]) == (3.0, 0.0)
    mean, ci = mean_ci([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert ci == pytest.approx(1.96 * np.std([1, 2, 3, 4], ddof=1) / 2)


def test_centroid_separation_examples():
    assert centroid_separation([[0, 0], [0, 0], [3, 4], [3, 4]], ["a", "a", "b", "b"]) == 5.0
    assert centroid_separation([[1, 1], [1, 1]], ["a", "b"]) == 0.0
    with pytest.raises(EvaluationError):
        centroid_separation([[1, 1]], ["a"])


def test_spectral_separates_metameric_walls_better():
    sc = two_wall_scene()
    d = generate_dataset(sc, 20, NoiseModel(), seed=0)
    assert cluster_separation(d, "spectral") > cluster_separation(d, "intensity")


# --- reports --------------------------------------------------------------------

def check_records(report: EvalReport):
    """Recompute every error from the stored CSV records alone."""
    rows = list(csv.DictReader(io.StringIO(report.samples_csv())))
    assert len(rows) == len(report.truth)
    for r in rows:
        e = float(np.hypot(float(r["pred_x"]) - float(r["x"]), float(r["pred_y"]) - float(r["y"])))
        assert float(r["error"]) == pytest.approx(e, abs=1e-12)
        assert float(r["error"]) >= 0
    s = report.summary
    assert s["median"] <= s["p75"] <= s["p90"]


def test_leave_one_out_folds(three_days):
    rep = run_leave_one_out(three_days, "day", KNN)
    assert [f["held_out"] for f in rep.folds] == ["0", "1", "2"]
    assert len(rep.truth) == len(three_days)
    assert sum(f["n_test"] for f in rep.folds) == len(three_days)
    assert rep.groups.count("1") == sum(fp.day == 1 for fp in three_days)
    check_records(rep)
    with pytest.raises(EvaluationError):
        run_leave_one_out(three_days, "condition", KNN)


def test_two_groups_two_folds(three_days):
    two = three_days.subset([i for i, fp in enumerate(three_days) if fp.day < 2])
    assert len(run_leave_one_out(two, "day", KNN).folds) == 2


def test_reports_are_deterministic(three_days, tmp_path):
    a = run_leave_one_out(three_days, "day", NET)
    b = run_leave_one_out(three_days, "day", NET)
    assert a.dumps() == b.dumps() and a.samples_csv() == b.samples_csv()
    written = a.save(tmp_path, "loo")
    assert sorted(p.rsplit("/", 1)[1] for p in written) == ["loo.json", "loo_samples.csv"]
    body = json.loads((tmp_path / "loo.json").read_text())
    assert body["summary"] == a.summary and body["n_samples"] == len(three_days)


def test_sensor_count_ablation_binomials(small_scene):
    from spectraloc.lightsim import Scene
    offs = small_scene.sensor_offsets + (("head", (0.0, 0.0, 1.7)),)
    sc = Scene(small_scene.layout, small_scene.lights, small_scene.surfaces, small_scene.spots, offs)
    d = generate_dataset(sc, 5, NoiseModel(), seed=1, days=2)
    rep = ablate_sensor_count(d, KNN)
    curve = rep.curves["p90_by_sensor_count"]
    assert [(p.x, p.count) for p in curve] == [(1.0, 3), (2.0, 3), (3.0, 1)]
    assert curve[-1].ci == 0.0
    assert [row["sensor"] for row in rep.tables["per_sensor"]] == ["front", "hip", "head"]
    check_records(rep)
    capped = ablate_sensor_count(d, KNN, sizes=[2], cap=2)
    assert capped.curves["p90_by_sensor_count"][0].count == 2


def test_subband_ablation_sizes():
    sc = two_wall_scene()
    d = generate_dataset(sc, 4, NoiseModel(), seed=2, days=2)
    rgb = ablate_subbands(d, KNN, "rgb", trials=3)
    pts = rgb.curves["p90_by_subbands"]
    assert [p.x for p in pts] == [3, 6, 9, 12, 15, 18]
    assert [p.count for p in pts] == [3, 3, 3, 3, 3, 1]
    rnd = ablate_subbands(d, KNN, "random", sizes=[1, 18], trials=5)
    one, full = rnd.curves["p90_by_subbands"]
    assert (full.count, full.ci) == (1, 0.0)
    assert one.count == 5
    assert ablate_subbands(d, KNN, sizes=[1], trials=30).curves["p90_by_subbands"][0].count == 18
    assert ablate_subbands(d, KNN, sizes=[1], trials=30, distinct=False).curves["p90_by_subbands"][0].count == 30
    assert "intensity" in rnd.tables
    with pytest.raises(EvaluationError):
        ablate_subbands(d, KNN, "greedy")


def test_stress_dimming(three_days):
    train = three_days.subset([i for i, fp in enumerate(three_days) if fp.day != 2])
    test = three_days.subset([i for i, fp in enumerate(three_days) if fp.day == 2])
    same = stress_test(train, test, NET)
    dim = stress_test(train, test.scaled(0.5), NET)
    assert np.array_equal(dim.errors, same.errors)
    assert dim.variants["normalized"] == same.variants["normalized"]
    assert dim.variants["raw"]["median"] > dim.variants["normalized"]["median"]
    check_records(dim)


def test_stress_matches_plain_holdout(three_days):
    train = three_days.subset([i for i, fp in enumerate(three_days) if fp.day != 2])
    test = three_days.subset([i for i, fp in enumerate(three_days) if fp.day == 2])
    rep = stress_test(train, test, KNN)
    model = fit_localizer(train, KNN.preprocessing(train), kind="knn", knn_k=3, spots=three_days.spots)
    assert np.array_equal(evaluate_model(model, test).errors, rep.errors)


def test_stress_rejects_sensor_mismatch(three_days):
    from spectraloc.dataset import Dataset, Fingerprint
    fp = three_days.fingerprints[0]
    odd = Dataset(three_days.layout, (Fingerprint(fp.spot_id, fp.x, fp.y, {"hip": fp.spectra["hip"]}),))
    with pytest.raises(EvaluationError, match="sensor sets differ"):
        stress_test(three_days, odd, KNN)


def test_pipeline_config_roundtrip():
    cfg = PipelineConfig(sensors=("a", "b"), mask=(1, 2), normalized=False, train=TrainConfig(seed=4))
    assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(EvaluationError):
        PipelineConfig.from_dict({"colour": 1})
    with pytest.raises(EvaluationError):
        PipelineConfig(kind="svm")
