"""End-to-end dataset preparation: load, gap-fill, window, split, normalize.

Normalization statistics are fit on the training split only, then applied
to every split.
"""

from __future__ import annotations

from pathlib import Path

from .config import ScenarioConfig
from .data.io import load_dataset
from .data.preprocess import AmplitudeNormalizer, interpolate_missing, window_session
from .data.records import CsiSample, DatasetManifest
from .data.splits import DataSplits, split_scenario


def windowed_samples(manifest_path: str | Path) -> tuple[DatasetManifest, list[CsiSample]]:
    """All unnormalized windowed samples of a dataset, session order
    preserved (chronological within each class)."""
    manifest, sessions = load_dataset(manifest_path)
    samples: list[CsiSample] = []
    for session in sessions:
        samples.extend(window_session(interpolate_missing(session), manifest))
    return manifest, samples


def prepare_splits(
    manifest_path: str | Path, config: ScenarioConfig
) -> tuple[DatasetManifest, DataSplits, AmplitudeNormalizer]:
    manifest, samples = windowed_samples(manifest_path)
    splits = split_scenario(samples, config)
    normalizer = AmplitudeNormalizer().fit(splits.train if splits.train else samples)
    return (
        manifest,
        DataSplits(
            train=normalizer.transform_all(splits.train),
            support=normalizer.transform_all(splits.support),
            test=normalizer.transform_all(splits.test),
        ),
        normalizer,
    )
