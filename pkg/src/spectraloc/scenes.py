"""Source spectra, material reflectances and ready-made synthetic rooms.

Spectra here are scene *data*: smooth parametric stand-ins for the three
bulb families (incandescent, fluorescent, LED) and for common indoor
materials, sampled at the layout's band centers.
"""

from __future__ import annotations

import numpy as np

from spectraloc.lightsim import LightSource, Scene, Spot, Surface
from spectraloc.spectral import Spectrum, SubBandLayout

# body-worn sensor positions relative to the spot on the floor (m)
BODY_OFFSETS: tuple[tuple[str, tuple[float, float, float]], ...] = (
    ("chest", (0.0, 0.12, 1.35)),
    ("back", (0.0, -0.12, 1.35)),
    ("arm-left", (-0.22, 0.0, 1.25)),
    ("arm-right", (0.22, 0.0, 1.25)),
    ("wrist-left", (-0.25, 0.05, 0.9)),
    ("wrist-right", (0.25, 0.05, 0.9)),
    ("leg-front", (-0.1, 0.08, 0.45)),
    ("leg-back", (-0.1, -0.08, 0.45)),
)

_BAND_SIGMA = 20.0 / 2.355  # ~20 nm FWHM channel response


def _centers(layout: SubBandLayout) -> np.ndarray:
    return np.asarray(layout.centers)


def _peaks(layout: SubBandLayout, lines, floor: float = 0.0) -> np.ndarray:
    lam = _centers(layout)
    out = np.full(lam.shape, floor)
    for center, width, weight in lines:
        sigma = np.hypot(width, _BAND_SIGMA)
        out += weight * np.exp(-0.5 * ((lam - center) / sigma) ** 2)
    return out


def incandescent(layout: SubBandLayout, power: float, temperature: float = 2700.0) -> Spectrum:
    """Planck emitter at ``temperature`` K, peak band scaled to ``power``."""
    lam = _centers(layout) * 1e-9
    h, c, k = 6.62607015e-34, 2.99792458e8, 1.380649e-23
    b = 1.0 / (lam**5 * np.expm1(h * c / (lam * k * temperature)))
    return Spectrum(layout, power * b / b.max())


def fluorescent(layout: SubBandLayout, power: float) -> Spectrum:
    """Tri-phosphor tube: mercury lines plus phosphor bands, little IR."""
    lines = [(405, 4, 0.25), (436, 4, 0.6), (487, 10, 0.35), (546, 5, 1.0),
             (580, 8, 0.3), (611, 6, 0.9), (707, 15, 0.08)]
    s = _peaks(layout, lines, floor=0.03)
    return Spectrum(layout, power * s / s.max())


def led(layout: SubBandLayout, power: float, blue_ratio: float = 0.8) -> Spectrum:
    """Blue pump plus broad yellow phosphor."""
    s = _peaks(layout, [(450, 10, blue_ratio), (565, 55, 1.0)], floor=0.005)
    return Spectrum(layout, power * s / s.max())


def _sigmoid(lam, edge, width):
    return 1.0 / (1.0 + np.exp(-(lam - edge) / width))


# saturated finishes for cubicle divider panels
_PANELS = {
    "panel-red": lambda l: 0.03 + 0.9 * _sigmoid(l, 595, 12) * (1 - 0.7 * _sigmoid(l, 760, 20)),
    "panel-blue": lambda l: 0.03 + 0.85 * _gauss(l, 455, 30) + 0.5 * _sigmoid(l, 800, 20),
    "panel-green": lambda l: 0.03 + 0.8 * _gauss(l, 535, 22) + 0.3 * _sigmoid(l, 700, 15),
    "panel-yellow": lambda l: 0.03 + 0.85 * _sigmoid(l, 530, 12) * (1 - 0.8 * _sigmoid(l, 640, 15)),
    "panel-white": lambda l: 0.8 + 0 * l,
    "panel-gray": lambda l: 0.2 + 0.3 * _sigmoid(l, 720, 30),
    "panel-orange": lambda l: 0.03 + 0.85 * _sigmoid(l, 570, 12) * (1 - 0.5 * _sigmoid(l, 720, 20)),
    "panel-cyan": lambda l: 0.05 + 0.8 * _sigmoid(l, 440, 10) * (1 - _sigmoid(l, 560, 12))
    + 0.2 * _sigmoid(l, 760, 20),
    "panel-purple": lambda l: 0.05 + 0.6 * _gauss(l, 430, 25) + 0.7 * _sigmoid(l, 640, 15),
    "panel-brown": lambda l: 0.05 + 0.35 * _sigmoid(l, 600, 50) + 0.3 * _sigmoid(l, 780, 30),
    "panel-teal": lambda l: 0.05 + 0.7 * _gauss(l, 500, 30) + 0.6 * _sigmoid(l, 850, 20),
}
PANEL_MATERIALS = tuple(_PANELS)


def _gauss(lam, center, width):
    return np.exp(-0.5 * ((lam - center) / width) ** 2)


def reflectance(layout: SubBandLayout, material: str) -> np.ndarray:
    """Reflectance of a named material at the layout's band centers."""
    lam = _centers(layout)
    if material in _PANELS:
        r = _PANELS[material](lam)
    elif material == "white-plaster":
        r = 0.78 + 0.08 * _sigmoid(lam, 430, 20)
    elif material == "red-wall":
        r = 0.08 + 0.62 * _sigmoid(lam, 600, 18)
    elif material == "blue-partition":
        r = 0.12 + 0.55 * _gauss(lam, 465, 45) + 0.35 * _sigmoid(lam, 760, 30)
    elif material == "green-panel":
        r = 0.1 + 0.5 * _gauss(lam, 540, 35) + 0.4 * _sigmoid(lam, 720, 20)
    elif material == "wood":
        r = 0.1 + 0.45 * _sigmoid(lam, 590, 60)
    elif material == "metal-cabinet":
        r = 0.45 + 0.0002 * (lam - 400)
    elif material == "gray-carpet":
        r = np.full(lam.shape, 0.18)
    elif material == "gray-tile":
        r = np.full(lam.shape, 0.55)
    else:
        raise ValueError(f"unknown material {material!r}")
    return np.clip(r, 0.0, 1.0)


def metameric_scale(target: np.ndarray, emission: Spectrum, level: float) -> np.ndarray:
    """Rescale ``target`` so it returns the fraction ``level`` of ``emission``'s total energy."""
    e = emission.energy
    out = target * level * float(e.sum()) / float(target @ e)
    if np.any(out > 1):
        raise ValueError("metameric match needs reflectance above 1")
    return out


def cubicle_office(layout: SubBandLayout | None = None, *, seed: int = 3, cols: int = 6,
                   rows: int = 2, pad: int = 6, level: float = 0.25,
                   failed_lights: tuple[int, ...] = (), extra_lamp: bool = False) -> Scene:
    """Open-plan office of 1 m cubicles with ``rows * cols`` spots at the cell centres.

    Every cubicle wall is a divider panel in one of the saturated finishes,
    picked at random (``seed``). All finishes are rescaled to return the same
    fraction ``level`` of the tube light, so the summed energy barely depends
    on which panels surround a spot while the spectrum does. The panel grid
    extends ``pad`` cells past the spots on both ends and each spot row sits
    under a long row of identical tubes, which keeps the direct light almost
    uniform. Panels are modelled as four point reflectors each (two along the
    wall, two heights). The floor is neutral gray tile, four point reflectors
    per cell.

    ``failed_lights`` drops tubes by index (lighting failure); ``extra_lamp``
    adds an incandescent desk lamp beside the spots (interference).
    """
    layout = layout or SubBandLayout.as7265x()
    tube = fluorescent(layout, 6000.0)
    ys = [r - (rows - 1) / 2 for r in range(rows)]
    lights = [LightSource((float(x), y, 2.7), tube) for y in ys for x in range(-2 * pad, 2 * pad + 1)]
    lights = [l for i, l in enumerate(lights) if i not in failed_lights]
    if extra_lamp:
        lights.append(LightSource((cols / 2 - 0.3, rows / 2 + 0.4, 1.1), incandescent(layout, 3000.0)))

    finish = {m: metameric_scale(reflectance(layout, m), tube, level) for m in PANEL_MATERIALS}
    rng = np.random.default_rng(seed)
    pick = lambda: PANEL_MATERIALS[rng.integers(len(PANEL_MATERIALS))]
    x0, y0 = -cols / 2, -rows / 2
    surfaces = []
    # panels across the rows (constant x) then along them (constant y)
    for j in range(rows):
        for i in range(-pad, cols + pad + 1):
            r = finish[pick()]
            surfaces += [Surface((x0 + i, y0 + j + 0.5 + d, z), r) for d in (-0.25, 0.25) for z in (0.9, 1.25)]
    for j in range(rows + 1):
        for i in range(-pad, cols + pad):
            r = finish[pick()]
            surfaces += [Surface((x0 + i + 0.5 + d, y0 + j, z), r) for d in (-0.25, 0.25) for z in (0.9, 1.25)]
    tile = reflectance(layout, "gray-tile")
    for j in range(rows):
        for i in range(-pad, cols + pad):
            surfaces += [Surface((x0 + i + 0.5 + dx, y0 + j + 0.5 + dy, 0.0), tile)
                         for dx in (-0.25, 0.25) for dy in (-0.25, 0.25)]
    spots = [
        Spot(f"s{r * cols + c:02d}", x0 + c + 0.5, y0 + r + 0.5)
        for r in range(rows)
        for c in range(cols)
    ]
    return Scene(layout, tuple(lights), tuple(surfaces), tuple(spots), BODY_OFFSETS)


def two_wall_scene(layout: SubBandLayout | None = None) -> Scene:
    """Two spots facing differently coloured walls of equal reflected energy."""
    layout = layout or SubBandLayout.as7265x()
    tube = fluorescent(layout, 6000.0)
    red = metameric_scale(reflectance(layout, "panel-red"), tube, 0.25)
    blue = metameric_scale(reflectance(layout, "panel-blue"), tube, 0.25)
    surfaces = [Surface((-1.5, y, 1.0), red) for y in (-0.5, 0.5)]
    surfaces += [Surface((1.5, y, 1.0), blue) for y in (-0.5, 0.5)]
    lights = [LightSource((0.0, 0.0, 2.7), tube)]
    return Scene(layout, tuple(lights), tuple(surfaces), (Spot("left", -1.0, 0.0), Spot("right", 1.0, 0.0)),
                 BODY_OFFSETS[:1])
