"""Min-max normalization, sub-band masks, sensor subsets and model-input assembly."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from spectraloc.dataset import Dataset, Fingerprint

# normalized features are snapped to this grid so that affine rescaling of the
# raw readings (which perturbs the last few bits) maps to identical inputs
NORM_QUANTUM = 2.0**-30
RGB_GROUP_SIZE = 6


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class SubBandMask:
    selected: tuple[int, ...]

    def __post_init__(self) -> None:
        sel = tuple(sorted(int(i) for i in self.selected))
        if not sel:
            raise PreprocessError("mask must select at least one band")
        if len(set(sel)) != len(sel):
            raise PreprocessError("mask indices must be unique")
        if sel[0] < 0:
            raise PreprocessError("mask indices must be non-negative")
        object.__setattr__(self, "selected", sel)

    @classmethod
    def full(cls, n_bands: int) -> "SubBandMask":
        return cls(tuple(range(n_bands)))

    def __len__(self) -> int:
        return len(self.selected)

    def check(self, n_bands: int) -> None:
        if self.selected[-1] >= n_bands:
            raise PreprocessError(f"mask index {self.selected[-1]} outside layout of {n_bands} bands")


@dataclass(frozen=True)
class ModelInput:
    values: np.ndarray
    sensor_labels: tuple[str, ...]
    mask: SubBandMask | None  # None: intensity mode, one value per sensor
    normalized: bool = True
    degenerate: bool = False


def _quantize(v: np.ndarray) -> np.ndarray:
    return np.round(v / NORM_QUANTUM) * NORM_QUANTUM


def normalize_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise min-max scaling of a 2-D array; returns (scaled, degenerate_flags)."""
    v = np.asarray(v, dtype=np.float64)
    lo = v.min(axis=-1, keepdims=True)
    span = v.max(axis=-1, keepdims=True) - lo
    degenerate = span[..., 0] == 0
    safe = np.where(span == 0, 1.0, span)
    out = np.where(span == 0, 0.0, (v - lo) / safe)
    return _quantize(out), degenerate


def normalize(v: Sequence[float]) -> tuple[np.ndarray, bool]:
    """Min-max scale one measurement vector into [0, 1].

    An all-equal vector maps to zeros and is reported as degenerate.
    """
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise PreprocessError("cannot normalize an empty vector")
    out, flag = normalize_rows(arr[None, :])
    return out[0], bool(flag[0])


def rgb_restricted_masks(k: int, n_groups: int = 3, group_size: int = RGB_GROUP_SIZE) -> list[SubBandMask]:
    """Every mask taking exactly ``k`` bands from each consecutive color block."""
    if not 1 <= k <= group_size:
        raise PreprocessError(f"k must lie in [1, {group_size}], got {k}")
    per_group = [
        list(itertools.combinations(range(g * group_size, (g + 1) * group_size), k))
        for g in range(n_groups)
    ]
    return [
        SubBandMask(tuple(itertools.chain.from_iterable(parts)))
        for parts in itertools.product(*per_group)
    ]


def random_masks(n: int, trials: int, seed: int, n_bands: int = 18, *,
                 distinct: bool = False) -> list[SubBandMask]:
    """``trials`` seeded masks of ``n`` bands each (one full mask when ``n == n_bands``).

    With ``distinct`` set and no more than ``trials`` possible masks, every
    mask is returned exactly once instead, in lexicographic order.
    """
    if not 1 <= n <= n_bands:
        raise PreprocessError(f"n must lie in [1, {n_bands}], got {n}")
    if trials < 1:
        raise PreprocessError("trials must be >= 1")
    if n == n_bands:
        return [SubBandMask.full(n_bands)]
    if distinct and comb(n_bands, n) <= trials:
        return [SubBandMask(c) for c in itertools.combinations(range(n_bands), n)]
    rng = np.random.default_rng([seed, n])
    return [SubBandMask(tuple(rng.choice(n_bands, size=n, replace=False))) for _ in range(trials)]


def sensor_subsets(sensors: Sequence[str], size: int, cap: int | None = None,
                   seed: int = 0) -> list[tuple[str, ...]]:
    """All ``size``-subsets in canonical order, or a seeded sample of ``cap`` of them."""
    if not 1 <= size <= len(sensors):
        raise PreprocessError(f"subset size must lie in [1, {len(sensors)}]")
    total = comb(len(sensors), size)
    if cap is None or total <= cap:
        return list(itertools.combinations(sensors, size))
    rng = np.random.default_rng([seed, size])
    picks = sorted(rng.choice(total, size=cap, replace=False).tolist())
    out, wanted = [], iter(picks)
    target = next(wanted)
    for i, combo in enumerate(itertools.combinations(sensors, size)):
        if i == target:
            out.append(combo)
            target = next(wanted, None)
            if target is None:
                break
    return out


@dataclass(frozen=True)
class Preprocessing:
    """How a fingerprint is turned into a flat feature vector.

    ``mode`` is ``"spectral"`` (masked bands per sensor) or ``"intensity"``
    (one summed value per sensor). ``scope`` sets the min/max range used by
    normalization: the whole sample vector or each sensor separately.
    """

    sensors: tuple[str, ...]
    mask: SubBandMask | None = None
    normalized: bool = True
    mode: str = "spectral"
    scope: str = "sample"

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise PreprocessError("sensor list is empty")
        if len(set(self.sensors)) != len(self.sensors):
            raise PreprocessError("sensor list has duplicates")
        if self.mode not in ("spectral", "intensity"):
            raise PreprocessError(f"mode must be 'spectral' or 'intensity', got {self.mode!r}")
        if self.scope not in ("sample", "sensor"):
            raise PreprocessError(f"scope must be 'sample' or 'sensor', got {self.scope!r}")
        if self.mode == "intensity" and self.scope == "sensor" and self.normalized:
            raise PreprocessError("per-sensor normalization is undefined in intensity mode")

    def input_length(self, n_bands: int) -> int:
        if self.mode == "intensity":
            return len(self.sensors)
        return len(self.sensors) * (len(self.mask) if self.mask is not None else n_bands)

    def to_dict(self) -> dict:
        return {
            "sensors": list(self.sensors),
            "mask": list(self.mask.selected) if self.mask is not None else None,
            "normalized": self.normalized,
            "mode": self.mode,
            "scope": self.scope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessing":
        mask = SubBandMask(tuple(d["mask"])) if d.get("mask") is not None else None
        return cls(tuple(d["sensors"]), mask, bool(d["normalized"]), d["mode"], d.get("scope", "sample"))


def assemble_array(raw: np.ndarray, sensor_index: Sequence[int], prep: Preprocessing) -> tuple[np.ndarray, np.ndarray]:
    """Batch assembly from a raw ``(n, M_all, N)`` tensor.

    Returns ``(features, degenerate_flags)`` with features ``(n, L)`` in
    sensor-major order.
    """
    sel = raw[:, list(sensor_index), :]
    if prep.mode == "intensity":
        feats = sel.sum(axis=2)
    else:
        if prep.mask is not None:
            prep.mask.check(raw.shape[2])
            sel = sel[:, :, list(prep.mask.selected)]
        if prep.normalized and prep.scope == "sensor":
            scaled, flags = normalize_rows(sel)
            return scaled.reshape(len(raw), -1), flags.any(axis=1)
        feats = sel.reshape(len(raw), -1)
    if prep.normalized:
        return normalize_rows(feats)
    return feats, np.zeros(len(raw), dtype=bool)


def _sensor_index(available: Sequence[str], wanted: Sequence[str]) -> list[int]:
    pos = {s: i for i, s in enumerate(available)}
    missing = [s for s in wanted if s not in pos]
    if missing:
        raise PreprocessError(f"unknown sensor label(s): {missing}")
    return [pos[s] for s in wanted]


def assemble(fp: Fingerprint, sensors: Sequence[str], mask: SubBandMask | None,
             normalized: bool = True, mode: str = "spectral", scope: str = "sample") -> ModelInput:
    """Concatenate the chosen bands of the chosen sensors (sensor-major) for one sample.

    ``mask=None`` with ``mode="spectral"`` keeps every band; ``mode="intensity"``
    replaces each sensor's spectrum by its summed energy.
    """
    prep = Preprocessing(tuple(sensors), mask, normalized, mode, scope)
    idx = _sensor_index(fp.sensors, prep.sensors)
    raw = np.stack([s.energy for s in fp.spectra.values()])[None]
    values, flags = assemble_array(raw, idx, prep)
    return ModelInput(values[0], prep.sensors, mask if mode == "spectral" else None,
                      normalized, bool(flags[0]))


def assemble_dataset(d: Dataset, prep: Preprocessing) -> tuple[np.ndarray, np.ndarray]:
    idx = _sensor_index(d.sensors, prep.sensors)
    return assemble_array(_raw_tensor(d), idx, prep)


def _raw_tensor(d: Dataset) -> np.ndarray:
    # per-fingerprint sensor order may differ; realign to the dataset's order
    return d.tensor(d.sensors)
