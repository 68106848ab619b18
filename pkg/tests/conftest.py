"""Shared fixtures: small deterministic synthetic datasets and helpers."""

import numpy as np
import pytest

from siamfi.config import ScenarioConfig
from siamfi.data.preprocess import AmplitudeNormalizer, interpolate_missing, window_session
from siamfi.data.records import DatasetManifest
from siamfi.data.splits import DataSplits, split_scenario
from siamfi.data.synth import make_domain_specs, synthesize_domain

# Toy geometry small enough for sub-minute training runs.
TOY_D = 16
TOY_T = 32
TOY_SAMPLE_RATE = 32.0
TOY_CLASSES = 4


def build_samples(n_domains, n_per_class=40, noise_std=0.05, seed=1, base_seed=0):
    """Windowed (unnormalized) samples for n_domains synthetic domains."""
    specs = make_domain_specs(
        n_domains, TOY_CLASSES, noise_std=noise_std, sample_rate=TOY_SAMPLE_RATE,
        base_seed=base_seed,
    )
    manifest = DatasetManifest(
        D=TOY_D, t=TOY_T, stride=TOY_T,
        classes=[f"c{i}" for i in range(TOY_CLASSES)],
        domains=[f"d{i}" for i in range(n_domains)],
    )
    samples = []
    for spec in specs:
        for session in synthesize_domain(spec, n_per_class, seed=seed, D=TOY_D, t=TOY_T):
            samples.extend(window_session(interpolate_missing(session), manifest))
    return samples


def prepare(samples, config: ScenarioConfig) -> DataSplits:
    """Split per scenario and normalize with training-split statistics."""
    splits = split_scenario(samples, config)
    norm = AmplitudeNormalizer().fit(splits.train)
    return DataSplits(
        train=norm.transform_all(splits.train),
        support=norm.transform_all(splits.support),
        test=norm.transform_all(splits.test),
    )


@pytest.fixture(scope="session")
def single_domain_samples():
    return build_samples(n_domains=1)


@pytest.fixture(scope="session")
def multi_domain_samples():
    """Four domains (three source, one target) for cross-domain runs."""
    return build_samples(n_domains=4)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
