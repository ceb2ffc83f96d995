"""Acceptance suite: one group of tests per criterion, summarized at the end of the run."""

import itertools
import math
import time

import numpy as np
import pytest

from spectraloc.dataset import ChannelCountError, NoiseModel, parse_log, serialize_log
from spectraloc.evaluation import (
    PipelineConfig,
    ablate_sensor_count,
    ablate_subbands,
    error_percentiles,
    run_leave_one_out,
)
from spectraloc.lightsim import LightSource, Scene, Spot, Surface, generate_dataset, los_contribution, simulate_reading
from spectraloc.models.gradcheck import check_gradients
from spectraloc.models.knn import knn_predict
from spectraloc.models.localizer import fit_localizer
from spectraloc.models.network import cnn_lengths, forward, init_params
from spectraloc.models.training import TrainConfig
from spectraloc.preprocess import Preprocessing, SubBandMask, assemble
from spectraloc.scenes import cubicle_office
from spectraloc.spectral import Spectrum, SubBandLayout

from conftest import rng

criterion = pytest.mark.criterion

# experiment settings shared by criteria 5-7
TRAIN = TrainConfig(learning_rate=1e-3, max_epochs=100, patience=20, seed=1, loss="ce")
HOLDOUT = 2


@pytest.fixture(scope="module")
def office():
    sc = cubicle_office()
    d = generate_dataset(sc, 10, NoiseModel(), seed=7, days=5, light_drift=0.1, stray_rate=0.15)
    return sc, d


# --- 1 --------------------------------------------------------------------------

@criterion(1, "analytic gradients match central differences")
def test_gradient_oracle(record_property):
    shapes = [(1, 18), (8, 18), (2, 9), (4, 6), (3, 18), (8, 1)]  # (M sensors, N bands)
    start = time.perf_counter()
    worst = 0.0
    for i, (m, n) in enumerate(shapes):
        r = rng(i)
        length, k = m * n, int(r.integers(2, 9))
        p = init_params(length, k, r, hidden=24, dropout=0.5)
        for name in p.tensors:
            if "bias" in name or name.startswith("bn"):
                p.tensors[name] = p.tensors[name] + r.normal(0, 0.3, p.tensors[name].shape)
        x = r.uniform(0, 1, (int(r.integers(4, 9)), length))
        y = r.uniform(-3, 3, (len(x), 2))
        for c in check_gradients(p, r.uniform(-3, 3, (k, 2)), x, y, h=1e-4, max_entries=80, seed=i):
            assert c.checked > 0
            assert c.rel_error < 1e-4, (m, n, c)
            worst = max(worst, c.rel_error)
    elapsed = time.perf_counter() - start
    record_property("measured", f"worst rel err {worst:.1e}, {elapsed:.1f} s")
    assert elapsed < 60


# --- 2 --------------------------------------------------------------------------

@criterion(2, "normalization invariance, per sample and end to end")
def test_assembly_scaling_invariance():
    lay = SubBandLayout.as7265x()
    r = rng(2)
    for _ in range(50):
        vals = r.uniform(0, 5e4, (8, 18))
        labels = [f"s{i}" for i in range(8)]
        mask = SubBandMask(tuple(sorted(r.choice(18, int(r.integers(2, 19)), replace=False))))
        base = assemble(_fp(lay, labels, vals), labels, mask).values
        for k in (0.5, 2.0, 10.0):
            for c in (0.0, 37.5, 1e3):
                got = assemble(_fp(lay, labels, k * vals + c), labels, mask).values
                assert np.array_equal(got, base)


def _fp(lay, labels, vals):
    from spectraloc.dataset import Fingerprint
    return Fingerprint("p", 0.0, 0.0, {l: Spectrum(lay, v) for l, v in zip(labels, vals)})


@criterion(2, "normalization invariance, per sample and end to end")
def test_dimmed_predictions_identical(office, record_property):
    sc, d = office
    small = d.subset(range(0, len(d), 3))
    model = fit_localizer(small, Preprocessing(small.sensors), train_config=TrainConfig(max_epochs=3, seed=0))
    plain = model.predict_dataset(small)
    for k in (0.5, 2.0, 10.0):
        dim = model.predict_dataset(small.scaled(k))
        assert np.array_equal(dim.coords, plain.coords)
        assert np.array_equal(dim.spot_index, plain.spot_index)
    record_property("measured", f"{len(small)} samples x 3 dimming factors, exact")


# --- 3 --------------------------------------------------------------------------

def _enumerate_terms(lights, surfaces, pos):
    total = np.zeros(len(lights[0].emission.energy)) if lights else 0.0
    for l in lights:
        total = total + l.emission.energy / math.dist(pos, l.position) ** 2
        for s in surfaces:
            b2 = math.dist(l.position, s.position) ** 2
            c2 = math.dist(s.position, pos) ** 2
            total = total + s.reflectance * l.emission.energy / (b2 * c2)
    return total


@criterion(3, "inverse-square law and term-enumeration oracle")
def test_physics_oracles(record_property):
    lay = SubBandLayout.as7265x()
    src = LightSource((0, 0, 0), Spectrum(lay, np.linspace(100, 900, 18)))
    for a in (0.3, 1.0, 2.5, 7.0):
        near, far = los_contribution(src, a).energy, los_contribution(src, 2 * a).energy
        assert np.allclose(far, near / 4, rtol=1e-14, atol=0)
        assert np.allclose(los_contribution(src, a / 2).energy, 4 * near, rtol=1e-14, atol=0)
    r = rng(3)
    worst = 0.0
    for _ in range(300):
        lights = tuple(LightSource(r.uniform(-4, 4, 3), Spectrum(lay, r.uniform(0, 5e3, 18)))
                       for _ in range(int(r.integers(1, 4))))
        surfaces = tuple(Surface(r.uniform(-4, 4, 3), r.uniform(0, 1, 18)) for _ in range(int(r.integers(0, 4))))
        pos = tuple(r.uniform(-4, 4, 3))
        got = simulate_reading(Scene(lay, lights, surfaces, (Spot("s", 0, 0),)), pos).energy
        want = _enumerate_terms(lights, surfaces, pos)
        rel = np.max(np.abs(got - want) / np.abs(want))
        worst = max(worst, rel)
        assert rel <= 1e-12
    record_property("measured", f"worst rel err {worst:.1e} over 300 scenes")


# --- 4 --------------------------------------------------------------------------

@criterion(4, "kNN equals exhaustive search")
def test_knn_oracle():
    r = rng(4)
    for _ in range(200):
        n, dim = int(r.integers(1, 60)), int(r.integers(1, 20))
        k = int(r.integers(1, n + 1))
        xs = r.integers(0, 3, (n, dim)) * 0.5
        xy = r.uniform(-5, 5, (n, 2))
        q = r.integers(0, 3, dim) * 0.5
        train = [(v, float(a), float(b)) for v, (a, b) in zip(xs, xy)]
        order = sorted(range(n), key=lambda i: (sum((xs[i] - q) ** 2), i))[:k]
        want = (sum(xy[i, 0] for i in order) / k, sum(xy[i, 1] for i in order) / k)
        assert knn_predict(train, q, k) == pytest.approx(want, abs=1e-12)


# --- 5 --------------------------------------------------------------------------

@criterion(5, "leave-one-day-out: spectral beats intensity")
def test_spectral_beats_intensity(office, record_property):
    sc, d = office
    assert len(sc.spots) >= 10
    refl = np.stack([s.reflectance for s in sc.surfaces])
    assert np.linalg.matrix_rank(refl) >= 3
    start = time.perf_counter()
    spectral = run_leave_one_out(d, "day", PipelineConfig(train=TRAIN)).summary
    intensity = run_leave_one_out(d, "day", PipelineConfig(mode="intensity", train=TRAIN)).summary
    elapsed = time.perf_counter() - start
    record_property("measured", f"spectral median {spectral['median']:.3f} / p90 {spectral['p90']:.3f}, "
                                f"intensity {intensity['median']:.3f} / {intensity['p90']:.3f}, {elapsed:.0f} s")
    assert spectral["median"] < intensity["median"]
    assert spectral["p90"] < intensity["p90"]
    assert spectral["median"] <= 0.5
    assert elapsed < 600


# --- 6 --------------------------------------------------------------------------

@criterion(6, "sub-band plateau and single band above intensity")
def test_subband_plateau(office, record_property):
    _, d = office
    rep = ablate_subbands(d, PipelineConfig(normalized=False, train=TRAIN), "random",
                          holdout=HOLDOUT, sizes=[1, 8, 18], trials=18, seed=0)
    curve = {int(p.x): p for p in rep.curves["p90_by_subbands"]}
    intensity = rep.tables["intensity"][0]["p90"]
    record_property("measured", f"n=1 {curve[1].mean:.3f}, n=8 {curve[8].mean:.3f}, "
                                f"n=18 {curve[18].mean:.3f}, intensity {intensity:.3f}")
    assert curve[1].count == 18 and curve[18].count == 1
    assert abs(curve[8].mean - curve[18].mean) <= 0.1 * curve[18].mean
    assert curve[1].mean < intensity


# --- 7 --------------------------------------------------------------------------

@criterion(7, "all sensors no worse than one sensor")
def test_sensor_count_trend(office, record_property):
    _, d = office
    rep = ablate_sensor_count(d, PipelineConfig(train=TRAIN), holdout=HOLDOUT, sizes=[1, 8])
    one, full = rep.curves["p90_by_sensor_count"]
    record_property("measured", f"1 sensor {one.mean:.3f} +- {one.ci:.3f}, 8 sensors {full.mean:.3f}")
    assert (one.count, full.count) == (8, 1)
    assert full.mean <= one.mean


# --- 8 --------------------------------------------------------------------------

@criterion(8, "structural invariants and determinism")
def test_softmax_and_hull():
    r = rng(8)
    for length in (144, 18, 8, 3):
        k = int(r.integers(2, 13))
        p = init_params(length, k, r)
        xy = r.uniform(-5, 5, (k, 2))
        out = forward(p, xy, r.uniform(0, 1, (64, length)) * 10 ** r.uniform(-2, 2))
        assert np.max(np.abs(out.weights.sum(axis=1) - 1)) <= 1e-12
        assert np.all(out.weights >= 0)
        # convex combination: every prediction solves w @ xy with w on the simplex
        assert np.allclose(out.weights @ xy, out.coords, atol=1e-12)
        assert np.all(out.coords >= xy.min(axis=0) - 1e-12) and np.all(out.coords <= xy.max(axis=0) + 1e-12)


@criterion(8, "structural invariants and determinism")
def test_percentile_monotone_and_conv_lengths():
    r = rng(9)
    for _ in range(100):
        e = r.exponential(1.0, int(r.integers(1, 200)))
        q = error_percentiles(e, np.linspace(0, 1, 21))
        assert np.all(np.diff(q) >= 0)
    assert cnn_lengths(144) == (71, 35)
    assert init_params(144, 12, rng(0)).flat_length == 64 * 35 == 2240


@criterion(8, "structural invariants and determinism")
def test_byte_identical_reruns(office):
    _, d = office
    small = d.subset(range(0, len(d), 4))
    cfg = PipelineConfig(train=TrainConfig(max_epochs=3, seed=11, learning_rate=1e-3))
    a = fit_localizer(small, cfg.preprocessing(small), train_config=cfg.train)
    b = fit_localizer(small, cfg.preprocessing(small), train_config=cfg.train)
    assert a.dumps() == b.dumps()
    ra = run_leave_one_out(small, "day", cfg.with_(train=cfg.train.__class__(max_epochs=2, seed=11)))
    rb = run_leave_one_out(small, "day", cfg.with_(train=cfg.train.__class__(max_epochs=2, seed=11)))
    assert ra.dumps() == rb.dumps() and ra.samples_csv() == rb.samples_csv()


# --- 9 --------------------------------------------------------------------------

@criterion(9, "log roundtrip and malformed-row rejection")
def test_roundtrip_and_malformed(office):
    sc, d = office
    text = serialize_log(d)
    assert parse_log(text) == d
    lines = text.splitlines()
    for bad_row in (2, 17, len(lines)):
        broken = list(lines)
        broken[bad_row - 1] = broken[bad_row - 1].rsplit(",", 1)[0]  # drop one channel
        with pytest.raises(ChannelCountError) as exc:
            parse_log("\n".join(broken))
        assert exc.value.row == bad_row
