"""Shared synthetic-office setup for the experiment scripts."""

from __future__ import annotations

import argparse

from spectraloc.dataset import NoiseModel
from spectraloc.evaluation import PipelineConfig
from spectraloc.lightsim import generate_dataset
from spectraloc.models.training import TrainConfig
from spectraloc.scenes import cubicle_office

# settings used throughout the acceptance suite
EXPERIMENT_TRAIN = TrainConfig(learning_rate=1e-3, max_epochs=100, patience=20, seed=1, loss="ce")


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out-dir", default="results", help="report directory")
    p.add_argument("--seed", type=int, default=7, help="data seed")
    p.add_argument("--samples", type=int, default=10, help="samples per spot and day")
    p.add_argument("--days", type=int, default=5)
    p.add_argument("--epochs", type=int, default=EXPERIMENT_TRAIN.max_epochs)
    return p


def office_data(args, **scene_kw):
    scene = cubicle_office(**scene_kw)
    return scene, generate_dataset(scene, args.samples, NoiseModel(), args.seed, days=args.days,
                                   light_drift=0.1, stray_rate=0.15)


def pipeline(args, **kw) -> PipelineConfig:
    train = TrainConfig(**(EXPERIMENT_TRAIN.to_dict() | {"max_epochs": args.epochs}))
    return PipelineConfig(train=train, **kw)


def show(label: str, summary: dict) -> None:
    print(f"{label:<28} median {summary['median']:.3f}  p75 {summary['p75']:.3f}  p90 {summary['p90']:.3f}")
