"""Scenario-specific train/support/test splitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ScenarioConfig
from ..errors import ConfigError, InsufficientSupportError
from .records import CsiSample


@dataclass
class DataSplits:
    train: list[CsiSample] = field(default_factory=list)
    support: list[CsiSample] = field(default_factory=list)
    test: list[CsiSample] = field(default_factory=list)


def _by_class(samples: list[CsiSample]) -> dict[int, list[CsiSample]]:
    out: dict[int, list[CsiSample]] = {}
    for s in samples:
        out.setdefault(s.label, []).append(s)
    return out


def _chronological_split(samples: list[CsiSample], fraction: float) -> tuple[list[CsiSample], list[CsiSample]]:
    """Per class, the first `fraction` of samples (in given order, which is
    chronological within a session) go to the head split."""
    head, tail = [], []
    for _, group in sorted(_by_class(samples).items()):
        cut = int(round(len(group) * fraction))
        head.extend(group[:cut])
        tail.extend(group[cut:])
    return head, tail


def split_scenario(samples: list[CsiSample], config: ScenarioConfig) -> DataSplits:
    """Partition samples into (train, support, test) per the scenario.

    Every eligible sample lands in exactly one split.
    """
    if config.scenario == "in-domain":
        train, test = _chronological_split(samples, config.train_fraction)
        return DataSplits(train=train, support=[], test=test)

    if config.scenario in ("k-shot", "zero-shot"):
        target = config.target_domain
        source = [s for s in samples if s.domain != target]
        target_samples = [s for s in samples if s.domain == target]
        if config.scenario == "zero-shot":
            return DataSplits(train=source, support=[], test=target_samples)
        rng = np.random.default_rng(config.seed)
        support, test = [], []
        for label, group in sorted(_by_class(target_samples).items()):
            if len(group) < config.k:
                raise InsufficientSupportError(
                    f"target class {label} has {len(group)} samples, fewer than k={config.k}"
                )
            chosen = set(rng.choice(len(group), size=config.k, replace=False).tolist())
            for i, s in enumerate(group):
                (support if i in chosen else test).append(s)
        return DataSplits(train=source, support=support, test=test)

    if config.scenario == "new-class":
        new = config.new_class
        old = [s for s in samples if s.label != new]
        held = [s for s in samples if s.label == new]
        if len(held) < config.k:
            raise InsufficientSupportError(
                f"new class {new} has {len(held)} samples, fewer than k={config.k}"
            )
        rng = np.random.default_rng(config.seed)
        chosen = set(rng.choice(len(held), size=config.k, replace=False).tolist())
        support = [s for i, s in enumerate(held) if i in chosen]
        test_new = [s for i, s in enumerate(held) if i not in chosen]
        train, test_old = _chronological_split(old, config.train_fraction)
        return DataSplits(train=train, support=support, test=test_old + test_new)

    raise ConfigError(f"unknown scenario {config.scenario!r}")
