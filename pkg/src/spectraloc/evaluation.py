"""Error metrics, leave-one-group-out runs, ablations and stress tests."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from spectraloc.dataset import Dataset, split_leave_one_group_out
from spectraloc.models.localizer import Localizer, fit_localizer
from spectraloc.models.training import TrainConfig
from spectraloc.preprocess import (
    Preprocessing,
    SubBandMask,
    assemble_dataset,
    random_masks,
    rgb_restricted_masks,
    sensor_subsets,
)

SUMMARY_QS = (0.5, 0.75, 0.9)
REPORT_FORMAT = "spectraloc-report"


class EvaluationError(ValueError):
    pass


def error_percentiles(errors: Sequence[float], qs: Sequence[float]) -> np.ndarray:
    """Quantiles with linear interpolation between closest ranks.

    The q-quantile sits at position ``(n - 1) * q`` of the sorted errors.
    """
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise EvaluationError("no errors to summarize")
    q = np.asarray(qs, dtype=np.float64)
    if np.any((q < 0) | (q > 1)):
        raise EvaluationError("quantiles must lie in [0, 1]")
    return np.quantile(e, q, method="linear")


def summarize(errors: Sequence[float]) -> dict[str, float]:
    med, p75, p90 = error_percentiles(errors, SUMMARY_QS)
    return {"median": float(med), "p75": float(p75), "p90": float(p90)}


def mean_ci(values: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width ``1.96 * sd / sqrt(n)``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EvaluationError("no values")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to turn a training dataset into a fitted localizer.

    ``sensors=None`` means every sensor of the dataset; ``mask=None`` keeps
    every band.
    """

    sensors: tuple[str, ...] | None = None
    mask: tuple[int, ...] | None = None
    normalized: bool = True
    mode: str = "spectral"
    scope: str = "sample"
    kind: str = "network"
    knn_k: int = 5
    val_fraction: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.sensors is not None:
            object.__setattr__(self, "sensors", tuple(self.sensors))
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple(int(i) for i in self.mask))
        if self.kind not in ("network", "knn"):
            raise EvaluationError(f"kind must be 'network' or 'knn', got {self.kind!r}")

    def preprocessing(self, d: Dataset) -> Preprocessing:
        sensors = self.sensors if self.sensors is not None else d.sensors
        mask = SubBandMask(self.mask) if self.mask is not None else None
        return Preprocessing(sensors, mask, self.normalized, self.mode, self.scope)

    def with_(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensors"] = list(self.sensors) if self.sensors is not None else None
        d["mask"] = list(self.mask) if self.mask is not None else None
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise EvaluationError(f"unknown pipeline keys {sorted(unknown)}")
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        for k in ("sensors", "mask"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean: float
    ci: float
    count: int


@dataclass
class EvalReport:
    """Per-sample records, summary percentiles and optional ablation curves.

    ``errors`` are distances of the expected (weight-averaged) coordinate;
    ``argmax_errors`` use the single most likely spot instead.
    """

    experiment: str
    config: dict
    truth: np.ndarray
    predicted: np.ndarray
    argmax_predicted: np.ndarray
    groups: list[str]
    spot_ids: list[str]
    degenerate: int = 0
    curves: dict[str, list[CurvePoint]] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    variants: dict[str, dict] = field(default_factory=dict)
    folds: list[dict] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.predicted - self.truth, axis=1)

    @property
    def argmax_errors(self) -> np.ndarray:
        return np.linalg.norm(self.argmax_predicted - self.truth, axis=1)

    @property
    def summary(self) -> dict[str, float]:
        return summarize(self.errors)

    @property
    def argmax_summary(self) -> dict[str, float]:
        return summarize(self.argmax_errors)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "experiment": self.experiment,
            "config": self.config,
            "summary": self.summary,
            "argmax_summary": self.argmax_summary,
            "n_samples": int(len(self.truth)),
            "degenerate": int(self.degenerate),
            "folds": self.folds,
            "curves": {k: [asdict(p) for p in v] for k, v in self.curves.items()},
            "tables": self.tables,
            "variants": self.variants,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "spot_id", "x", "y", "pred_x", "pred_y", "argmax_x", "argmax_y",
                    "error", "argmax_error"])
        for i, (g, s) in enumerate(zip(self.groups, self.spot_ids)):
            w.writerow([g, s, *map(repr, map(float, self.truth[i])),
                        *map(repr, map(float, self.predicted[i])),
                        *map(repr, map(float, self.argmax_predicted[i])),
                        repr(float(self.errors[i])), repr(float(self.argmax_errors[i]))])
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["curve", "x", "mean", "ci95", "count"])
        for name, pts in self.curves.items():
            for p in pts:
                w.writerow([name, repr(p.x), repr(p.mean), repr(p.ci), p.count])
        return buf.getvalue()

    def save(self, out_dir, stem: str | None = None) -> list[str]:
        """Write ``<stem>.json``, ``<stem>_samples.csv`` and, if any, ``<stem>_curves.csv``."""
        stem = stem or self.experiment
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for suffix, text in ((".json", self.dumps()), ("_samples.csv", self.samples_csv()),
                             ("_curves.csv", self.curves_csv() if self.curves else None)):
            if text is None:
                continue
            path = os.path.join(out_dir, stem + suffix)
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            written.append(path)
        return written


# --- single train/test cell ---------------------------------------------------

@dataclass
class _Cell:
    truth: np.ndarray
    predicted: np.ndarray
    argmax_predicted: np.ndarray
    spot_ids: list[str]
    degenerate: int

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.predicted - self.truth, axis=1)


def _run_cell(train: Dataset, test: Dataset, cfg: PipelineConfig,
              spots: dict[str, tuple[float, float]]) -> _Cell:
    model = fit_localizer(train, cfg.preprocessing(train), kind=cfg.kind, train_config=cfg.train,
                          val_fraction=cfg.val_fraction, knn_k=cfg.knn_k, spots=spots)
    p = model.predict_dataset(test)
    return _Cell(test.coords(), p.coords, p.spot_coords, [f.spot_id for f in test],
                 int(p.degenerate.sum()))


def _report(name: str, config: dict, cells: list[tuple[str, _Cell]], **extra) -> EvalReport:
    return EvalReport(
        experiment=name,
        config=config,
        truth=np.concatenate([c.truth for _, c in cells]),
        predicted=np.concatenate([c.predicted for _, c in cells]),
        argmax_predicted=np.concatenate([c.argmax_predicted for _, c in cells]),
        groups=[g for g, c in cells for _ in range(len(c.truth))],
        spot_ids=[s for _, c in cells for s in c.spot_ids],
        degenerate=sum(c.degenerate for _, c in cells),
        **extra,
    )


def _holdout_split(d: Dataset, group_key: str, holdout) -> tuple[Dataset, Dataset, str]:
    tags = d.groups(group_key)
    if len(tags) < 2:
        raise EvaluationError(f"need at least two {group_key!r} groups, found {len(tags)}")
    tag = tags[0] if holdout is None else holdout
    train, test = split_leave_one_group_out(d, group_key, tag)
    return train, test, str(tag)


# --- experiments --------------------------------------------------------------

def run_leave_one_out(d: Dataset, group_key: str, cfg: PipelineConfig,
                      name: str = "leave-one-out") -> EvalReport:
    """Train once per held-out group and pool the per-sample errors of all folds.

    Each fold's own percentiles are kept in ``folds`` and their average in
    ``variants["fold_mean"]``.
    """
    tags = d.groups(group_key)
    if len(tags) < 2:
        raise EvaluationError(f"need at least two {group_key!r} groups, found {len(tags)}")
    cells, folds = [], []
    for tag in tags:
        train, test = split_leave_one_group_out(d, group_key, tag)
        cell = _run_cell(train, test, cfg, d.spots)
        cells.append((str(tag), cell))
        folds.append({"held_out": str(tag), "n_test": len(test), **summarize(cell.errors)})
    fold_mean = {k: float(np.mean([f[k] for f in folds])) for k in ("median", "p75", "p90")}
    config = {"group_key": group_key, "pipeline": cfg.to_dict()}
    return _report(name, config, cells, folds=folds, variants={"fold_mean": fold_mean})


def ablate_sensor_count(d: Dataset, cfg: PipelineConfig, *, group_key: str = "day",
                        holdout=None, sizes: Sequence[int] | None = None, cap: int = 500,
                        seed: int = 0, name: str = "sensor-count") -> EvalReport:
    """Mean p90 (with 95% CI) over sensor subsets of every size.

    One group is held out (``holdout``, default the first tag). Sizes with
    more than ``cap`` subsets are sampled. The size-1 cells double as a
    per-sensor table. Per-sample records are those of the full sensor set.
    """
    sensors = cfg.sensors if cfg.sensors is not None else d.sensors
    if len(sensors) < 2:
        raise EvaluationError("sensor-count ablation needs at least two sensors")
    train, test, tag = _holdout_split(d, group_key, holdout)
    sizes = list(sizes) if sizes is not None else list(range(1, len(sensors) + 1))
    curve, per_sensor, full = [], [], None
    for size in sizes:
        p90s = []
        for subset in sensor_subsets(sensors, size, cap, seed):
            cell = _run_cell(train, test, cfg.with_(sensors=subset), d.spots)
            s = summarize(cell.errors)
            p90s.append(s["p90"])
            if size == 1:
                per_sensor.append({"sensor": subset[0], **s})
            if size == len(sensors):
                full = cell
        mean, ci = mean_ci(p90s)
        curve.append(CurvePoint(float(size), mean, ci, len(p90s)))
    if full is None:
        full = _run_cell(train, test, cfg.with_(sensors=tuple(sensors)), d.spots)
    config = {"group_key": group_key, "held_out": tag, "cap": cap, "seed": seed,
              "pipeline": cfg.to_dict()}
    tables = {"per_sensor": per_sensor} if per_sensor else {}
    return _report(name, config, [(tag, full)], curves={"p90_by_sensor_count": curve}, tables=tables)


def ablate_subbands(d: Dataset, cfg: PipelineConfig, policy: str = "random", *,
                    group_key: str = "day", holdout=None, sizes: Sequence[int] | None = None,
                    trials: int = 250, seed: int = 0, include_intensity: bool = True,
                    distinct: bool = True, name: str = "sub-bands") -> EvalReport:
    """Mean p90 (with 95% CI) against the number of selected sub-bands.

    ``policy="random"`` draws ``trials`` masks per size ``n`` (each possible
    mask once when there are at most ``trials`` of them and ``distinct`` is set);
    ``policy="rgb"`` takes ``k`` bands from each color block, so sizes are
    ``3k``, sampling ``trials`` of the masks when there are more.
    ``include_intensity`` adds an intensity-mode reference table.
    """
    n_bands = d.layout.count
    if n_bands < 2:
        raise EvaluationError("sub-band ablation needs at least two bands")
    train, test, tag = _holdout_split(d, group_key, holdout)
    if policy == "random":
        sizes = list(sizes) if sizes is not None else list(range(1, n_bands + 1))
        plan = [(n, random_masks(n, trials, seed, n_bands, distinct=distinct)) for n in sizes]
    elif policy == "rgb":
        ks = list(sizes) if sizes is not None else list(range(1, 7))
        plan = []
        for k in ks:
            masks = rgb_restricted_masks(k)
            if len(masks) > trials:
                rng = np.random.default_rng([seed, k, 0x5B])
                masks = [masks[i] for i in sorted(rng.choice(len(masks), trials, replace=False))]
            plan.append((3 * k, masks))
    else:
        raise EvaluationError(f"policy must be 'random' or 'rgb', got {policy!r}")
    curve, full = [], None
    for n, masks in plan:
        p90s = []
        for m in masks:
            cell = _run_cell(train, test, cfg.with_(mask=m.selected, mode="spectral"), d.spots)
            p90s.append(summarize(cell.errors)["p90"])
            if len(m) == n_bands:
                full = cell
        mean, ci = mean_ci(p90s)
        curve.append(CurvePoint(float(n), mean, ci, len(p90s)))
    if full is None:
        full = _run_cell(train, test, cfg.with_(mask=None, mode="spectral"), d.spots)
    tables = {}
    if include_intensity:
        cell = _run_cell(train, test, cfg.with_(mask=None, mode="intensity", scope="sample"), d.spots)
        tables["intensity"] = [summarize(cell.errors)]
    config = {"group_key": group_key, "held_out": tag, "policy": policy, "trials": trials,
              "seed": seed, "pipeline": cfg.to_dict()}
    return _report(name, config, [(tag, full)], curves={"p90_by_subbands": curve}, tables=tables)


def evaluate_model(model: Localizer, d: Dataset, name: str = "eval") -> EvalReport:
    """Score an already fitted localizer on every fingerprint of ``d``."""
    p = model.predict_dataset(d)
    cell = _Cell(d.coords(), p.coords, p.spot_coords, [f.spot_id for f in d], int(p.degenerate.sum()))
    config = {"model": {"kind": model.kind, "preprocessing": model.preprocessing.to_dict()}}
    return _report(name, config, [("all", cell)])


def stress_test(train: Dataset, test: Dataset, cfg: PipelineConfig,
                name: str = "stress") -> EvalReport:
    """Train on one condition, test on another, once with raw and once with normalized inputs.

    The report's per-sample records come from the variant selected by
    ``cfg.normalized``; both variants' summaries sit in ``variants``.
    """
    if set(train.sensors) != set(test.sensors):
        raise EvaluationError(
            f"sensor sets differ: train {sorted(train.sensors)} vs test {sorted(test.sensors)}"
        )
    if train.layout != test.layout:
        raise EvaluationError("train and test layouts differ")
    spots = {**test.spots, **train.spots}
    cells = {}
    for label, flag in (("raw", False), ("normalized", True)):
        cells[label] = _run_cell(train, test, cfg.with_(normalized=flag), spots)
    variants = {k: {**summarize(c.errors), "degenerate": c.degenerate} for k, c in cells.items()}
    main = cells["normalized" if cfg.normalized else "raw"]
    config = {"pipeline": cfg.to_dict(), "n_train": len(train), "n_test": len(test)}
    return _report(name, config, [("test", main)], variants=variants)


def centroid_separation(features: np.ndarray, labels: Sequence) -> float:
    """Mean Euclidean distance between per-label centroids over all label pairs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = list(labels)
    keys = sorted(set(labels), key=str)
    if len(keys) < 2:
        raise EvaluationError("need at least two spots")
    lab = np.array([keys.index(l) for l in labels])
    cent = np.stack([x[lab == i].mean(axis=0) for i in range(len(keys))])
    return float(np.mean([np.linalg.norm(cent[i] - cent[j]) for i, j in combinations(range(len(keys)), 2)]))


def cluster_separation(d: Dataset, feature: str = "spectral",
                       sensors: Sequence[str] | None = None) -> float:
    """Centroid separation of spots in normalized feature space."""
    if feature not in ("spectral", "intensity"):
        raise EvaluationError(f"feature must be 'spectral' or 'intensity', got {feature!r}")
    if len(d.spots) < 2:
        raise EvaluationError("need at least two spots")
    x, _ = assemble_dataset(d, Preprocessing(tuple(sensors or d.sensors), None, True, feature))
    return centroid_separation(x, [f.spot_id for f in d])


__all__ = [
    "CurvePoint", "EvalReport", "EvaluationError", "PipelineConfig",
    "ablate_subbands", "ablate_sensor_count", "centroid_separation", "cluster_separation",
    "error_percentiles", "evaluate_model", "mean_ci", "run_leave_one_out", "stress_test", "summarize",
]
