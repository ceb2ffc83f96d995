"""Single-bounce spectral light propagation and synthetic fingerprint generation.

A reading is the direct term ``L / a^2`` of every light plus, for every
(light, surface) pair, the bounced term ``R * L / (b^2 c^2)``. Surfaces are
point reflectors; there is no occlusion and no angular factor.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from spectraloc.dataset import Dataset, Fingerprint, NoiseModel, apply_noise_array
from spectraloc.spectral import Spectrum, SpectralError, SubBandLayout

Point = tuple[float, float, float]


class DegenerateGeometryError(ValueError):
    """A sensor, light and/or surface coincide, so a propagation distance is zero."""


class SceneError(ValueError):
    pass


def _point(p) -> Point:
    v = tuple(float(c) for c in p)
    if len(v) != 3 or not all(np.isfinite(v)):
        raise SceneError(f"expected a finite 3D point, got {p!r}")
    return v  # type: ignore[return-value]


@dataclass(frozen=True)
class LightSource:
    position: Point
    emission: Spectrum

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _point(self.position))


@dataclass(frozen=True, eq=False)
class Surface:
    position: Point
    reflectance: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _point(self.position))
        r = np.array(self.reflectance, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise SceneError("reflectance entries must lie in [0, 1]")
        r.setflags(write=False)
        object.__setattr__(self, "reflectance", r)


@dataclass(frozen=True)
class Spot:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class Scene:
    layout: SubBandLayout
    lights: tuple[LightSource, ...] = ()
    surfaces: tuple[Surface, ...] = ()
    spots: tuple[Spot, ...] = ()
    sensor_offsets: tuple[tuple[str, Point], ...] = (("sensor", (0.0, 0.0, 1.0)),)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lights", tuple(self.lights))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "spots", tuple(self.spots))
        object.__setattr__(
            self, "sensor_offsets", tuple((str(l), _point(o)) for l, o in self.sensor_offsets)
        )
        if not self.spots:
            raise SceneError("scene needs at least one spot")
        ids = [s.id for s in self.spots]
        if len(set(ids)) != len(ids):
            raise SceneError("spot ids must be unique")
        labels = [l for l, _ in self.sensor_offsets]
        if not labels or len(set(labels)) != len(labels):
            raise SceneError("sensor labels must be unique and non-empty")
        for light in self.lights:
            if light.emission.layout != self.layout:
                raise SceneError("light emission layout differs from scene layout")
        for surf in self.surfaces:
            if surf.reflectance.shape[0] != self.layout.count:
                raise SceneError(
                    f"reflectance has {surf.reflectance.shape[0]} bands, layout has {self.layout.count}"
                )

    def with_lights(self, lights: Sequence[LightSource]) -> "Scene":
        return Scene(self.layout, tuple(lights), self.surfaces, self.spots, self.sensor_offsets)


def los_contribution(src: LightSource, a: float) -> Spectrum:
    if not a > 0:
        raise DegenerateGeometryError(f"sensor-to-light distance must be positive, got {a}")
    return Spectrum(src.emission.layout, src.emission.energy / (a * a))


def reflected_contribution(src: LightSource, surf: Surface, b: float, c: float) -> Spectrum:
    if not b > 0:
        raise DegenerateGeometryError(f"light-to-surface distance must be positive, got {b}")
    if not c > 0:
        raise DegenerateGeometryError(f"surface-to-sensor distance must be positive, got {c}")
    return Spectrum(
        src.emission.layout, (1.0 / (c * c)) * surf.reflectance * (src.emission.energy / (b * b))
    )


def _geometry(scene: Scene) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    lp = np.array([l.position for l in scene.lights], dtype=np.float64).reshape(-1, 3)
    em = np.array([l.emission.energy for l in scene.lights]).reshape(-1, scene.layout.count)
    sp = np.array([s.position for s in scene.surfaces], dtype=np.float64).reshape(-1, 3)
    rf = np.array([s.reflectance for s in scene.surfaces]).reshape(-1, scene.layout.count)
    return lp, em, sp, rf


def reading_terms_batch(scene: Scene, positions) -> np.ndarray:
    """Per-light contributions at many sensor positions, shape ``(P, n_lights, N)``.

    Each entry is the direct term of one light plus the bounces of that light
    off every surface.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3 or not np.all(np.isfinite(pos)):
        raise SceneError(f"expected finite (P, 3) sensor positions, got shape {pos.shape}")
    lp, em, sp, rf = _geometry(scene)
    a2 = ((pos[:, None, :] - lp[None, :, :]) ** 2).sum(-1)
    b2 = ((lp[:, None, :] - sp[None, :, :]) ** 2).sum(-1)
    c2 = ((sp[None, :, :] - pos[:, None, :]) ** 2).sum(-1)
    if np.any(a2 == 0):
        p, i = np.argwhere(a2 == 0)[0]
        raise DegenerateGeometryError(f"sensor coincides with light #{i} at {tuple(lp[i])}")
    if np.any(b2 == 0):
        i, j = np.argwhere(b2 == 0)[0]
        raise DegenerateGeometryError(f"light #{i} coincides with surface #{j} at {tuple(sp[j])}")
    if np.any(c2 == 0):
        p, j = np.argwhere(c2 == 0)[0]
        raise DegenerateGeometryError(f"sensor coincides with surface #{j} at {tuple(sp[j])}")
    # bounce weight 1/(b^2 c^2) for every (position, light, surface)
    w = (1.0 / b2)[None, :, :] * (1.0 / c2)[:, None, :]
    bounced = np.einsum("pls,sn->pln", w, rf) * em[None, :, :]
    return em[None, :, :] / a2[:, :, None] + bounced


def reading_terms(scene: Scene, sensor_position) -> np.ndarray:
    """Per-light contribution (direct plus all bounces) as an ``(n_lights, N)`` array."""
    return reading_terms_batch(scene, [_point(sensor_position)])[0]


def simulate_reading(scene: Scene, sensor_position) -> Spectrum:
    return Spectrum(scene.layout, reading_terms(scene, sensor_position).sum(axis=0))


def _spot_rng(seed: int, spot_id: str, day: int) -> np.random.Generator:
    # sub-stream keyed on (seed, spot, day) so spot order never changes output
    key = zlib.crc32(str(spot_id).encode("utf-8"))
    return np.random.default_rng([seed, key, day])


def _nearest_spots(spots: Sequence[Spot]) -> dict[str, list[Spot]]:
    xy = np.array([(s.x, s.y) for s in spots])
    out = {}
    for i, s in enumerate(spots):
        d = np.hypot(*(xy - xy[i]).T)
        d[i] = np.inf
        out[s.id] = [spots[j] for j in np.flatnonzero(d <= d.min() * (1 + 1e-9))] if len(spots) > 1 else [s]
    return out


def generate_dataset(
    scene: Scene,
    samples_per_spot: int,
    noise: NoiseModel,
    seed: int,
    *,
    days: int = 1,
    condition: str = "default",
    light_drift: float = 0.0,
    first_day: int = 0,
    position_jitter: float = 0.0,
    stray_rate: float = 0.0,
) -> Dataset:
    """Noisy fingerprints for every spot, ``samples_per_spot`` per spot and day.

    ``light_drift`` draws, once per day, an independent gain in
    ``[1 - drift, 1 + drift]`` for every light (bulb ageing, mains variation),
    shared by all spots of that day. ``position_jitter`` moves the wearer of
    each sample uniformly within ``+-jitter`` metres of the spot centre on both
    floor axes; the recorded coordinate stays the spot centre.
    ``stray_rate`` is the chance that a sample is taken while the wearer
    stands on a nearest neighbouring spot (walking between marks) but is still
    logged under the intended spot; this error does not shrink with more bands.
    """
    if samples_per_spot < 1:
        raise ValueError("samples_per_spot must be >= 1")
    if days < 1:
        raise ValueError("days must be >= 1")
    if not 0 <= light_drift < 1:
        raise ValueError("light_drift must lie in [0, 1)")
    if not 0 <= position_jitter < 1:
        raise ValueError("position_jitter must lie in [0, 1)")
    if not 0 <= stray_rate < 1:
        raise ValueError("stray_rate must lie in [0, 1)")
    labels = [lbl for lbl, _ in scene.sensor_offsets]
    offsets = np.array([o for _, o in scene.sensor_offsets])
    n_lights, n_bands = len(scene.lights), scene.layout.count
    neighbours = _nearest_spots(scene.spots) if stray_rate > 0 else {}
    still = {}
    if position_jitter == 0 and n_lights:
        for spot in scene.spots:
            still[spot.id] = reading_terms_batch(scene, offsets + (spot.x, spot.y, 0.0))
    fps = []
    for day in range(first_day, first_day + days):
        gains = np.ones(n_lights)
        if light_drift > 0:
            gains = np.random.default_rng([seed, day, 0x9E37]).uniform(
                1 - light_drift, 1 + light_drift, size=n_lights
            )
        for k, spot in enumerate(scene.spots):
            rng = _spot_rng(seed, spot.id, day)
            for s in range(samples_per_spot):
                at = spot
                if stray_rate > 0 and rng.random() < stray_rate:
                    near = neighbours[spot.id]
                    at = near[rng.integers(len(near))]
                if not n_lights:
                    clean = np.zeros((len(labels), n_bands))
                elif position_jitter == 0:
                    clean = np.einsum("l,mln->mn", gains, still[at.id])
                else:
                    dx, dy = rng.uniform(-position_jitter, position_jitter, size=2)
                    moved = offsets + (at.x + dx, at.y + dy, 0.0)
                    clean = np.einsum("l,mln->mn", gains, reading_terms_batch(scene, moved))
                noisy = apply_noise_array(clean, noise, rng)
                fps.append(
                    Fingerprint(
                        spot.id, spot.x, spot.y,
                        {lbl: Spectrum(scene.layout, noisy[m]) for m, lbl in enumerate(labels)},
                        day, condition, float(k * samples_per_spot + s),
                    )
                )
    return Dataset(scene.layout, tuple(fps), {s.id: (s.x, s.y) for s in scene.spots})


# --- scene files -------------------------------------------------------------

_SCENE_KEYS = {"layout", "lights", "surfaces", "spots", "sensor_offsets"}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise SceneError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise SceneError(f"{where}: unknown keys {sorted(unknown)}")
    missing = allowed - set(d)
    if missing:
        raise SceneError(f"{where}: missing keys {sorted(missing)}")


def scene_from_dict(d: dict) -> Scene:
    _check_keys(d, _SCENE_KEYS, "scene")
    try:
        layout = SubBandLayout.from_dict(d["layout"])
        lights = []
        for i, l in enumerate(d["lights"]):
            _check_keys(l, {"position", "emission"}, f"lights[{i}]")
            lights.append(LightSource(l["position"], Spectrum(layout, l["emission"])))
        surfaces = []
        for i, s in enumerate(d["surfaces"]):
            _check_keys(s, {"position", "reflectance"}, f"surfaces[{i}]")
            surfaces.append(Surface(s["position"], s["reflectance"]))
        spots = []
        for i, s in enumerate(d["spots"]):
            _check_keys(s, {"id", "x", "y"}, f"spots[{i}]")
            spots.append(Spot(str(s["id"]), float(s["x"]), float(s["y"])))
        offsets = []
        for i, o in enumerate(d["sensor_offsets"]):
            _check_keys(o, {"label", "offset"}, f"sensor_offsets[{i}]")
            offsets.append((o["label"], o["offset"]))
    except SpectralError as exc:
        raise SceneError(str(exc)) from exc
    except (TypeError, KeyError) as exc:
        raise SceneError(f"malformed scene: {exc}") from exc
    return Scene(layout, tuple(lights), tuple(surfaces), tuple(spots), tuple(offsets))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "layout": scene.layout.to_dict(),
        "lights": [
            {"position": list(l.position), "emission": l.emission.energy.tolist()}
            for l in scene.lights
        ],
        "surfaces": [
            {"position": list(s.position), "reflectance": s.reflectance.tolist()}
            for s in scene.surfaces
        ],
        "spots": [{"id": s.id, "x": s.x, "y": s.y} for s in scene.spots],
        "sensor_offsets": [{"label": l, "offset": list(o)} for l, o in scene.sensor_offsets],
    }


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: not valid JSON ({exc})") from exc
    return scene_from_dict(d)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene_to_dict(scene), f, indent=2)
        f.write("\n")
