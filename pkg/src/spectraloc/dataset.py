"""Fingerprint containers, the sensor noise model, CSV logs and grouped splits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from spectraloc.spectral import Spectrum, SubBandLayout

META_COLUMNS = ("day", "condition", "spot_id", "x", "y", "sensor", "timestamp")
GROUP_KEYS = ("day", "condition")


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    """Malformed log content; ``row`` is the 1-based line number (header is line 1)."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class MissingColumnError(ParseError):
    pass


class NonNumericCellError(ParseError):
    pass


class ChannelCountError(ParseError):
    pass


class EmptyLogError(ParseError):
    pass


@dataclass(frozen=True, eq=False)
class Fingerprint:
    spot_id: str
    x: float
    y: float
    spectra: dict[str, Spectrum]
    day: int = 0
    condition: str = "default"
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if not self.spectra:
            raise DatasetError("fingerprint carries no spectra")
        layouts = {s.layout for s in self.spectra.values()}
        if len(layouts) != 1:
            raise DatasetError("all spectra of a fingerprint must share one layout")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DatasetError("fingerprint coordinates must be finite")

    @property
    def layout(self) -> SubBandLayout:
        return next(iter(self.spectra.values())).layout

    @property
    def sensors(self) -> tuple[str, ...]:
        return tuple(self.spectra)

    def group(self, key: str):
        if key not in GROUP_KEYS:
            raise DatasetError(f"group key must be one of {GROUP_KEYS}, got {key!r}")
        return getattr(self, key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return (
            (self.spot_id, self.x, self.y, self.day, self.condition, self.timestamp)
            == (other.spot_id, other.x, other.y, other.day, other.condition, other.timestamp)
            and list(self.spectra.items()) == list(other.spectra.items())
        )


@dataclass(frozen=True)
class NoiseModel:
    """Uniform multiplicative error within +-relative_accuracy, then quantization."""

    relative_accuracy: float = 0.12
    precision_floor: float = 28.6

    def __post_init__(self) -> None:
        if self.relative_accuracy < 0 or self.precision_floor < 0:
            raise DatasetError("noise parameters must be non-negative")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0)


def apply_noise_array(energy: np.ndarray, m: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Vectorised noise over an array of energies of any shape."""
    out = np.asarray(energy, dtype=np.float64)
    if m.relative_accuracy > 0:
        u = rng.uniform(-m.relative_accuracy, m.relative_accuracy, size=out.shape)
        out = out * (1.0 + u)
    if m.precision_floor > 0:
        out = np.round(out / m.precision_floor) * m.precision_floor
    return np.maximum(out, 0.0)


def apply_noise(s: Spectrum, m: NoiseModel, rng: np.random.Generator) -> Spectrum:
    return Spectrum(s.layout, apply_noise_array(s.energy, m, rng))


@dataclass(frozen=True, eq=False)
class Dataset:
    layout: SubBandLayout
    fingerprints: tuple[Fingerprint, ...]
    spots: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        fps = tuple(self.fingerprints)
        object.__setattr__(self, "fingerprints", fps)
        if not fps:
            raise DatasetError("dataset is empty")
        spots = dict(self.spots)
        if not spots:
            for fp in fps:
                spots.setdefault(fp.spot_id, (fp.x, fp.y))
        object.__setattr__(self, "spots", spots)
        sensors = fps[0].sensors
        for fp in fps:
            if fp.layout != self.layout:
                raise DatasetError("fingerprint layout differs from dataset layout")
            if set(fp.sensors) != set(sensors):
                raise DatasetError(
                    f"sensor set {fp.sensors} differs from {sensors} (spot {fp.spot_id})"
                )
            if fp.spot_id not in spots:
                raise DatasetError(f"spot {fp.spot_id!r} missing from spot table")

    def __len__(self) -> int:
        return len(self.fingerprints)

    def __iter__(self):
        return iter(self.fingerprints)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.fingerprints == other.fingerprints
            and self.spots == other.spots
        )

    @property
    def sensors(self) -> tuple[str, ...]:
        return self.fingerprints[0].sensors

    def groups(self, key: str) -> list:
        seen: dict = {}
        for fp in self.fingerprints:
            seen.setdefault(fp.group(key), None)
        return list(seen)

    def tensor(self, sensors: Sequence[str] | None = None) -> np.ndarray:
        """Raw energies as ``(n_fingerprints, n_sensors, n_bands)``."""
        sensors = tuple(sensors) if sensors is not None else self.sensors
        return np.array(
            [[fp.spectra[s].energy for s in sensors] for fp in self.fingerprints],
            dtype=np.float64,
        ).reshape(len(self), len(sensors), self.layout.count)

    def coords(self) -> np.ndarray:
        return np.array([(fp.x, fp.y) for fp in self.fingerprints], dtype=np.float64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.layout, tuple(self.fingerprints[i] for i in indices), self.spots)

    def scaled(self, k: float) -> "Dataset":
        """Every band of every sensor multiplied by ``k`` (global dimming)."""
        fps = tuple(
            Fingerprint(
                fp.spot_id, fp.x, fp.y,
                {lbl: s.scale(k) for lbl, s in fp.spectra.items()},
                fp.day, fp.condition, fp.timestamp,
            )
            for fp in self.fingerprints
        )
        return Dataset(self.layout, fps, self.spots)

    def concat(self, other: "Dataset") -> "Dataset":
        spots = dict(self.spots)
        spots.update(other.spots)
        return Dataset(self.layout, self.fingerprints + other.fingerprints, spots)


def split_leave_one_group_out(d: Dataset, group_key: str, held_out) -> tuple[Dataset, Dataset]:
    """Partition ``d`` into (train, test) where test holds every sample tagged ``held_out``."""
    if group_key not in GROUP_KEYS:
        raise DatasetError(f"group key must be one of {GROUP_KEYS}, got {group_key!r}")
    tags = d.groups(group_key)
    if group_key == "day":
        held_out = int(held_out)
    if held_out not in tags:
        raise DatasetError(f"{group_key}={held_out!r} not present; available: {tags}")
    test_idx = [i for i, fp in enumerate(d) if fp.group(group_key) == held_out]
    train_idx = [i for i, fp in enumerate(d) if fp.group(group_key) != held_out]
    if not train_idx:
        raise DatasetError(f"holding out {group_key}={held_out!r} leaves no training data")
    return d.subset(train_idx), d.subset(test_idx)


# --- CSV log -----------------------------------------------------------------

def _fmt(v: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(v))


def serialize_log(d: Dataset) -> str:
    n = d.layout.count
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(META_COLUMNS) + [f"c{i + 1}" for i in range(n)])
    for fp in d:
        for label, s in fp.spectra.items():
            w.writerow(
                [fp.day, fp.condition, fp.spot_id, _fmt(fp.x), _fmt(fp.y), label, _fmt(fp.timestamp)]
                + [_fmt(e) for e in s.energy]
            )
    return buf.getvalue()


def _number(cell: str, column: str, row: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise NonNumericCellError(f"column {column!r}: {cell!r} is not a number", row) from None
    if not math.isfinite(v):
        raise NonNumericCellError(f"column {column!r}: {cell!r} is not finite", row)
    return v


def parse_log(text: str, layout: SubBandLayout | None = None) -> Dataset:
    """Parse a CSV sensor log.

    Rows sharing ``(day, condition, spot_id, timestamp)`` form one fingerprint;
    each row contributes the spectrum of one sensor. The channel count is taken
    from the header and must agree with ``layout`` when one is given (otherwise
    an AS7265x layout is assumed for 18 channels and a uniform one elsewhere).
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise EmptyLogError("log is empty", 1)
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    for col in META_COLUMNS:
        if col not in header:
            raise MissingColumnError(f"missing column {col!r}", 1)
    channels = [h for h in header if h not in META_COLUMNS]
    expected = [f"c{i + 1}" for i in range(len(channels))]
    if channels != expected or not channels:
        raise ChannelCountError(f"channel columns must be c1..cN, got {channels}", 1)
    n = len(channels)
    if layout is None:
        layout = SubBandLayout.as7265x() if n == 18 else SubBandLayout.uniform(n)
    elif layout.count != n:
        raise ChannelCountError(f"header has {n} channels, layout expects {layout.count}", 1)
    col = {h: i for i, h in enumerate(header)}

    groups: dict[tuple, dict] = {}
    spots: dict[str, tuple[float, float]] = {}
    for row_no, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise ChannelCountError(
                f"expected {len(header)} cells ({n} channels), got {len(cells)}", row_no
            )
        try:
            day = int(cells[col["day"]])
        except ValueError:
            raise NonNumericCellError(f"column 'day': {cells[col['day']]!r} is not an integer", row_no) from None
        condition = cells[col["condition"]]
        spot = cells[col["spot_id"]]
        x = _number(cells[col["x"]], "x", row_no)
        y = _number(cells[col["y"]], "y", row_no)
        ts = _number(cells[col["timestamp"]], "timestamp", row_no)
        energy = [_number(cells[col[c]], c, row_no) for c in channels]
        if any(e < 0 for e in energy):
            raise NonNumericCellError("sub-band energies must be non-negative", row_no)
        if spots.setdefault(spot, (x, y)) != (x, y):
            raise ParseError(f"spot {spot!r} has inconsistent coordinates", row_no)
        key = (day, condition, spot, ts)
        entry = groups.setdefault(key, {"x": x, "y": y, "spectra": {}, "row": row_no})
        sensor = cells[col["sensor"]]
        if sensor in entry["spectra"]:
            raise ParseError(f"duplicate sensor {sensor!r} for one sample", row_no)
        entry["spectra"][sensor] = Spectrum(layout, energy)
    if not groups:
        raise EmptyLogError("log has a header but no data rows", 2)

    fps = []
    sensors = None
    for (day, condition, spot, ts), e in groups.items():
        fp = Fingerprint(spot, e["x"], e["y"], e["spectra"], day, condition, ts)
        if sensors is None:
            sensors = fp.sensors
        elif set(fp.sensors) != set(sensors):
            raise ParseError(f"sensor set {fp.sensors} differs from {sensors}", e["row"])
        fps.append(fp)
    return Dataset(layout, tuple(fps), spots)


def write_log(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(serialize_log(d))


def read_log(path, layout: SubBandLayout | None = None) -> Dataset:
    with open(path, encoding="utf-8") as f:
        return parse_log(f.read(), layout)
