"""Sample-quality scoring and per-class template generation.

A template is a per-class reference tensor shaped like a sample payload.
Strategies:
  * weighted average of a sampled pool, mixed by learned quality scores
    (in-domain and k-shot fine-tuning);
  * per-class best-scored source sample, then best-matching unlabeled
    target sample (zero-shot);
  * the support samples themselves (one-shot) or their weighted average.
"""

from __future__ import annotations

import logging
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data.records import CsiSample
from .errors import CheckpointError, DataError, DimensionError
from .similarity import CsiNet
from .tensors import sample_labels, samples_to_tensor

logger = logging.getLogger(__name__)

TEMPLATE_FORMAT_VERSION = 1

PROV_WEIGHTED = "weighted-average"
PROV_SOURCE = "selected-source-sample"
PROV_TARGET = "selected-target-sample"
PROV_SUPPORT = "support-sample"
PROV_NONE = "uncovered"


class WeightNet(nn.Module):
    """Scores each pooled sample's quality from the pool's self-similarity
    matrix: a small residual conv net over the (zero-padded) k_max x k_max
    matrix, a linear layer of width k_max, and a sigmoid."""

    def __init__(self, k_max: int = 64):
        super().__init__()
        from .encoder import ResidualBlock

        self.k_max = k_max
        self.stem = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1, bias=False), nn.BatchNorm2d(8), nn.ReLU(inplace=True)
        )
        self.block = ResidualBlock(8, 16, stride=2)
        self.pool = nn.AdaptiveAvgPool2d(8)
        self.fc = nn.Linear(16 * 8 * 8, k_max)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionError(f"quality scoring expects a square similarity matrix, got {tuple(s.shape)}")
        k = s.shape[0]
        if k > self.k_max:
            raise DimensionError(f"pool size {k} exceeds configured maximum {self.k_max}")
        padded = s.new_zeros(self.k_max, self.k_max)
        padded[:k, :k] = s
        feats = self.pool(self.block(self.stem(padded[None, None])))
        scores = torch.sigmoid(self.fc(feats.flatten(1)))[0]
        return scores[:k]


def score_sample_quality(s: torch.Tensor, weightnet: WeightNet) -> torch.Tensor:
    """Per-sample quality scores in (0, 1); differentiable through both the
    scorer and the similarity matrix."""
    return weightnet(s)


@dataclass
class TemplateSet:
    """n per-class templates plus per-class provenance and coverage."""

    templates: np.ndarray  # (n, 2, t, D)
    provenance: list[str]
    coverage: np.ndarray  # (n,) bool

    def __post_init__(self):
        self.templates = np.asarray(self.templates, dtype=np.float32)
        self.coverage = np.asarray(self.coverage, dtype=bool)
        if len(self.provenance) != len(self.templates) or len(self.coverage) != len(self.templates):
            raise DimensionError("provenance and coverage must have one entry per class")

    @property
    def n_classes(self) -> int:
        return len(self.templates)

    def as_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.templates).to(dtype)

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": TEMPLATE_FORMAT_VERSION,
            "templates": self.templates,
            "provenance": list(self.provenance),
            "coverage": self.coverage,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=4)

    @classmethod
    def load(cls, path: str | Path) -> "TemplateSet":
        try:
            with open(path, "rb") as fh:
                payload = pickle.load(fh)
        except Exception as exc:
            raise CheckpointError(f"cannot read template set {path}: {exc}") from exc
        if payload.get("format_version") != TEMPLATE_FORMAT_VERSION:
            raise CheckpointError(
                f"template set {path} has format version {payload.get('format_version')}, "
                f"expected {TEMPLATE_FORMAT_VERSION}"
            )
        return cls(payload["templates"], payload["provenance"], payload["coverage"])


def sample_pool(samples: list[CsiSample], k: int, rng: np.random.Generator) -> list[CsiSample]:
    """Seeded sample of k pool items (without replacement when possible)."""
    if not samples:
        raise DataError("cannot sample a template pool from an empty sample list")
    idx = rng.choice(len(samples), size=min(k, len(samples)), replace=False)
    return [samples[i] for i in idx]


def weighted_average_templates(
    pool: torch.Tensor, labels: torch.Tensor, weights: torch.Tensor, n_classes: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-class weighted mean sum(W_i x_i)/sum(W_i); differentiable in both
    pool and weights. Returns (templates (n,2,t,D), coverage (n,) bool);
    uncovered rows are zero."""
    shape = (n_classes,) + tuple(pool.shape[1:])
    acc = pool.new_zeros(shape)
    wsum = pool.new_zeros(n_classes)
    acc = acc.index_add(0, labels, weights.view(-1, *([1] * (pool.ndim - 1))) * pool)
    wsum = wsum.index_add(0, labels, weights)
    coverage = wsum > 0
    denom = torch.where(coverage, wsum, torch.ones_like(wsum))
    return acc / denom.view(-1, *([1] * (pool.ndim - 1))), coverage


def generate_templates_indomain(
    pool: list[CsiSample],
    k: int,
    model: CsiNet,
    weightnet: WeightNet,
    n_classes: int,
    rng: np.random.Generator,
    metric: str = "attention",
    scorer=None,
) -> TemplateSet:
    """Weighted-average templates from a seeded k-sample of the pool.

    `scorer` overrides the quality model (used by tests to inject stub
    weights); it receives the similarity matrix and returns k scores.
    """
    chosen = sample_pool(pool, k, rng)
    x = samples_to_tensor(chosen)
    labels = sample_labels(chosen)
    with torch.no_grad():
        s = model(x, x, metric=metric)
        w = scorer(s) if scorer is not None else score_sample_quality(s, weightnet)
        templates, coverage = weighted_average_templates(x, labels, w, n_classes)
    cov = coverage.numpy()
    for c in range(n_classes):
        if not cov[c]:
            logger.warning("class %d received no contributing sample in the template pool", c)
    provenance = [PROV_WEIGHTED if cov[c] else PROV_NONE for c in range(n_classes)]
    return TemplateSet(templates.numpy(), provenance, cov)


def select_source_templates(
    pool: torch.Tensor,
    labels: torch.Tensor,
    weights: torch.Tensor,
    n_classes: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per class, the single pooled sample with the largest quality score.

    Ties keep the first-encountered sample (strict > against the running
    best, which starts at zero).
    """
    scores = weights.detach()
    best = torch.zeros(n_classes, dtype=scores.dtype)
    templates = pool.new_zeros((n_classes,) + tuple(pool.shape[1:]))
    coverage = torch.zeros(n_classes, dtype=torch.bool)
    for i in range(len(pool)):
        c = int(labels[i])
        if float(scores[i]) > float(best[c]):
            best[c] = scores[i]
            templates[c] = pool[i]
            coverage[c] = True
    return templates, coverage


def generate_templates_zeroshot(
    train_pool: list[CsiSample],
    test_pool: list[CsiSample],
    k: int,
    model: CsiNet,
    weightnet: WeightNet,
    n_classes: int,
    rng: np.random.Generator,
    metric: str = "attention",
) -> tuple[TemplateSet, TemplateSet]:
    """Source templates by best quality score per class; target templates by
    best-matching unlabeled target sample per assigned class.

    Target labels are never read. Classes that no target sample maps to
    fall back to the source template with coverage=False.
    """
    if not train_pool or not test_pool:
        raise DataError("zero-shot template generation requires non-empty train and test pools")
    src = sample_pool(train_pool, k, rng)
    x_s = samples_to_tensor(src)
    labels_s = sample_labels(src)
    with torch.no_grad():
        s_src = model(x_s, x_s, metric=metric)
        w = score_sample_quality(s_src, weightnet)
        t_source, cov_s = select_source_templates(x_s, labels_s, w, n_classes)

        tgt = sample_pool(test_pool, k, rng)
        x_t = samples_to_tensor(tgt)
        s_tgt = model(x_t, t_source, metric=metric)  # (k, n)
        best = torch.zeros(n_classes, dtype=s_tgt.dtype)
        t_target = t_source.clone()
        cov_t = torch.zeros(n_classes, dtype=torch.bool)
        for i in range(len(x_t)):
            y = int(torch.argmax(s_tgt[i]))
            score = s_tgt[i, y]
            if float(score) > float(best[y]):
                best[y] = score
                t_target[y] = x_t[i]
                cov_t[y] = True

    prov_s = [PROV_SOURCE if cov_s[c] else PROV_NONE for c in range(n_classes)]
    prov_t = []
    for c in range(n_classes):
        if cov_t[c]:
            prov_t.append(PROV_TARGET)
        else:
            logger.warning("no target sample mapped to class %d; falling back to the source template", c)
            prov_t.append(PROV_SOURCE if cov_s[c] else PROV_NONE)
    source_set = TemplateSet(t_source.numpy(), prov_s, cov_s.numpy())
    target_set = TemplateSet(t_target.numpy(), prov_t, cov_t.numpy())
    return source_set, target_set


def templates_from_support(
    support: list[CsiSample],
    model: CsiNet,
    weightnet: WeightNet,
    n_classes: int,
    rng: np.random.Generator,
    metric: str = "attention",
    scorer=None,
) -> TemplateSet:
    """Templates from the labeled target-domain support set: the single
    sample per class at one shot, the weighted average above one."""
    if not support:
        raise DataError("support set is empty")
    per_class: dict[int, list[CsiSample]] = {}
    for s in support:
        per_class.setdefault(s.label, []).append(s)
    shots = max(len(v) for v in per_class.values())
    if shots == 1:
        shape = (n_classes,) + support[0].data.shape
        templates = np.zeros(shape, dtype=np.float32)
        coverage = np.zeros(n_classes, dtype=bool)
        for c, group in per_class.items():
            templates[c] = group[0].data
            coverage[c] = True
        provenance = [PROV_SUPPORT if coverage[c] else PROV_NONE for c in range(n_classes)]
        for c in range(n_classes):
            if not coverage[c]:
                logger.warning("support set covers no samples for class %d", c)
        return TemplateSet(templates, provenance, coverage)
    return generate_templates_indomain(
        support, k=len(support), model=model, weightnet=weightnet,
        n_classes=n_classes, rng=rng, metric=metric, scorer=scorer,
    )
