"""A fitted localization model: preprocessing + predictor + spot table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from spectraloc.dataset import Dataset, Fingerprint
from spectraloc.models.knn import knn_predict_batch
from spectraloc.models.network import NetworkParams, forward
from spectraloc.models.training import History, TrainConfig, train
from spectraloc.preprocess import PreprocessError, Preprocessing, assemble_dataset
from spectraloc.spectral import SubBandLayout

CHECKPOINT_FORMAT = "spectraloc-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigurationError(ValueError):
    """Data does not match the preprocessing a model was trained with."""


@dataclass
class Predictions:
    coords: np.ndarray  # expected coordinate under the spot weights
    spot_index: np.ndarray  # argmax (network) or nearest spot to coords (knn)
    spot_coords: np.ndarray
    degenerate: np.ndarray


@dataclass
class Localizer:
    kind: str  # "network" | "knn"
    layout: SubBandLayout
    preprocessing: Preprocessing
    spot_ids: tuple[str, ...]
    spots_xy: np.ndarray
    train_config: TrainConfig | None = None
    network: NetworkParams | None = None
    knn_k: int = 5
    knn_inputs: np.ndarray | None = None
    knn_coords: np.ndarray | None = None
    history: History | None = None
    notes: list[str] = field(default_factory=list)

    def features(self, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
        if d.layout.count != self.layout.count:
            raise ConfigurationError(
                f"dataset has {d.layout.count} bands, model expects {self.layout.count}"
            )
        try:
            return assemble_dataset(d, self.preprocessing)
        except PreprocessError as exc:
            raise ConfigurationError(str(exc)) from exc

    def predict_features(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "network":
            coords, idx = [], []
            for s in range(0, len(x), 512):
                r = forward(self.network, self.spots_xy, x[s:s + 512], "eval")
                coords.append(r.coords)
                idx.append(r.weights.argmax(axis=1))
            return np.concatenate(coords), np.concatenate(idx)
        coords = knn_predict_batch(self.knn_inputs, self.knn_coords, x, self.knn_k)
        d = ((coords[:, None, :] - self.spots_xy[None]) ** 2).sum(axis=-1)
        return coords, d.argmin(axis=1)

    def predict_dataset(self, d: Dataset) -> Predictions:
        x, flags = self.features(d)
        coords, idx = self.predict_features(x)
        return Predictions(coords, idx, self.spots_xy[idx], flags)

    def predict(self, fp: Fingerprint) -> tuple[float, float, str]:
        """Predicted ``(x, y)`` and the most likely spot id for one fingerprint."""
        missing = [s for s in self.preprocessing.sensors if s not in fp.spectra]
        if missing:
            raise ConfigurationError(f"fingerprint lacks sensors {missing}")
        p = self.predict_dataset(Dataset(fp.layout, (fp,), {fp.spot_id: (fp.x, fp.y)}))
        return float(p.coords[0, 0]), float(p.coords[0, 1]), self.spot_ids[int(p.spot_index[0])]

    # --- checkpoint --------------------------------------------------------

    def to_dict(self) -> dict:
        def tens(arrs):
            return {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in arrs.items()}

        d = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "layout": self.layout.to_dict(),
            "preprocessing": self.preprocessing.to_dict(),
            "spots": [[i, float(x), float(y)] for i, (x, y) in zip(self.spot_ids, self.spots_xy)],
            "train_config": self.train_config.to_dict() if self.train_config else None,
            "notes": list(self.notes),
        }
        if self.kind == "network":
            n = self.network
            d["network"] = {
                "arch": n.arch, "input_length": n.input_length, "n_spots": n.n_spots,
                "hidden": n.hidden, "dropout": n.dropout, "bn_first": n.bn_first,
                "tensors": tens(n.tensors), "buffers": tens(n.buffers),
            }
        else:
            d["knn"] = {"k": self.knn_k, "inputs": tens({"x": self.knn_inputs}),
                        "coords": tens({"xy": self.knn_coords})}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Localizer":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError("not a spectraloc checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {d.get('version')!r}")

        def untens(block):
            return {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in block.items()}

        spots = d["spots"]
        model = cls(
            kind=d["kind"],
            layout=SubBandLayout.from_dict(d["layout"]),
            preprocessing=Preprocessing.from_dict(d["preprocessing"]),
            spot_ids=tuple(str(s[0]) for s in spots),
            spots_xy=np.array([[s[1], s[2]] for s in spots], dtype=np.float64),
            train_config=TrainConfig.from_dict(d["train_config"]) if d.get("train_config") else None,
            notes=list(d.get("notes", [])),
        )
        if model.kind == "network":
            n = d["network"]
            model.network = NetworkParams(
                n["arch"], n["input_length"], n["n_spots"], n["hidden"], n["dropout"],
                n["bn_first"], untens(n["tensors"]), untens(n["buffers"]),
            )
        else:
            k = d["knn"]
            model.knn_k = k["k"]
            model.knn_inputs = untens(k["inputs"])["x"]
            model.knn_coords = untens(k["coords"])["xy"]
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Localizer":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def validation_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, val) index split; at least one sample on each side when n >= 2."""
    if n < 2:
        idx = np.arange(n)
        return idx, idx
    n_val = min(max(1, int(round(n * fraction))), n - 1)
    perm = np.random.default_rng([seed, 0xA11]).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def fit_localizer(d: Dataset, prep: Preprocessing, *, kind: str = "network",
                  train_config: TrainConfig | None = None, val_fraction: float = 0.1,
                  knn_k: int = 5, spots: dict[str, tuple[float, float]] | None = None) -> Localizer:
    """Train a localizer on every fingerprint of ``d``.

    The spot table defaults to ``d.spots``; pass ``spots`` to fix the
    candidate set (e.g. the full scene when a fold misses a spot).
    """
    spots = dict(spots if spots is not None else d.spots)
    ids = tuple(spots)
    xy = np.array([spots[i] for i in ids], dtype=np.float64)
    model = Localizer(kind, d.layout, prep, ids, xy)
    x, flags = assemble_dataset(d, prep)
    y = d.coords()
    if kind == "knn":
        model.knn_k = min(knn_k, len(x))
        model.knn_inputs, model.knn_coords = x, y
        return model
    if kind != "network":
        raise ValueError(f"unknown model kind {kind!r}")
    cfg = train_config or TrainConfig()
    model.train_config = cfg
    tr, va = validation_split(len(x), val_fraction, cfg.seed)
    model.network, model.history = train(cfg, x[tr], y[tr], x[va], y[va], xy)
    if model.network.arch == "mlp":
        model.notes.append(
            f"input length {x.shape[1]} too short for two convolutions; used the fc-only variant"
        )
    if flags.any():
        model.notes.append(f"{int(flags.sum())} degenerate training samples")
    return model
