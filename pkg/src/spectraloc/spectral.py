"""Sub-band layouts and per-band spectra.

Everything is expressed in nW/cm^2 per sub-band; there is no unit layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# AS7265x channel centers (nm), three 6-band sub-sensors.
AS7265X_CENTERS = (
    410.0, 435.0, 460.0, 485.0, 510.0, 535.0,
    560.0, 585.0, 610.0, 645.0, 680.0, 705.0,
    730.0, 760.0, 810.0, 860.0, 900.0, 940.0,
)


class SpectralError(ValueError):
    """Invalid spectral value or layout."""


class LayoutMismatchError(SpectralError):
    """Arithmetic attempted between spectra on different layouts."""


@dataclass(frozen=True)
class SubBandLayout:
    centers: tuple[float, ...]
    range_start: float
    range_end: float

    def __post_init__(self) -> None:
        centers = tuple(float(c) for c in self.centers)
        object.__setattr__(self, "centers", centers)
        if len(centers) < 1:
            raise SpectralError("layout needs at least one sub-band")
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise SpectralError("sub-band centers must be strictly ascending")
        if not self.range_start <= centers[0] or not centers[-1] <= self.range_end:
            raise SpectralError(
                f"centers must lie in [{self.range_start}, {self.range_end}] nm"
            )

    @property
    def count(self) -> int:
        return len(self.centers)

    @classmethod
    def as7265x(cls) -> "SubBandLayout":
        return cls(AS7265X_CENTERS, 410.0, 940.0)

    @classmethod
    def uniform(cls, count: int, start: float = 410.0, end: float = 940.0) -> "SubBandLayout":
        """Evenly spaced centers over ``[start, end]``; handy for small test layouts."""
        if count == 1:
            return cls(((start + end) / 2,), start, end)
        return cls(tuple(np.linspace(start, end, count)), start, end)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "centers": list(self.centers),
            "range": [self.range_start, self.range_end],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubBandLayout":
        unknown = set(d) - {"count", "centers", "range"}
        if unknown:
            raise SpectralError(f"unknown layout keys: {sorted(unknown)}")
        lo, hi = d.get("range", (min(d["centers"]), max(d["centers"])))
        layout = cls(tuple(d["centers"]), float(lo), float(hi))
        if "count" in d and int(d["count"]) != layout.count:
            raise SpectralError(
                f"layout count {d['count']} disagrees with {layout.count} centers"
            )
        return layout


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Per-sub-band radiant energy on a fixed layout."""

    layout: SubBandLayout
    energy: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        e = np.array(self.energy, dtype=np.float64).reshape(-1)
        if e.shape[0] != self.layout.count:
            raise SpectralError(
                f"expected {self.layout.count} sub-band energies, got {e.shape[0]}"
            )
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise SpectralError("sub-band energies must be finite and non-negative")
        e.setflags(write=False)
        object.__setattr__(self, "energy", e)

    @classmethod
    def zeros(cls, layout: SubBandLayout) -> "Spectrum":
        return cls(layout, np.zeros(layout.count))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Spectrum):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.energy, other.energy)

    def __hash__(self) -> int:
        return hash((self.layout, self.energy.tobytes()))

    def __add__(self, other: "Spectrum") -> "Spectrum":
        return spectrum_add(self, other)

    def scale(self, k: float) -> "Spectrum":
        if k < 0:
            raise SpectralError("scale factor must be non-negative")
        return Spectrum(self.layout, self.energy * k)

    def __repr__(self) -> str:
        return f"Spectrum(N={self.layout.count}, energy={self.energy.tolist()})"


@dataclass(frozen=True)
class IntensityReading:
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise SpectralError("intensity must be finite and non-negative")


def intensity_of(s: Spectrum) -> IntensityReading:
    """Total energy across all sub-bands (discrete form of the band integral)."""
    return IntensityReading(math.fsum(s.energy.tolist()))


def spectrum_add(a: Spectrum, b: Spectrum) -> Spectrum:
    if a.layout != b.layout:
        raise LayoutMismatchError("cannot add spectra defined on different layouts")
    return Spectrum(a.layout, a.energy + b.energy)


def spectrum_sum(items: Sequence[Spectrum], layout: SubBandLayout) -> Spectrum:
    total = Spectrum.zeros(layout)
    for s in items:
        total = spectrum_add(total, s)
    return total
