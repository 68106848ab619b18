"""Template-based inference, metrics, baselines, and the ablation grid."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ScenarioConfig
from .data.preprocess import AmplitudeNormalizer
from .data.records import CsiSample
from .data.splits import DataSplits, split_scenario
from .encoder import EncoderConfig, build_encoder
from .errors import CoverageError, DataError
from .similarity import CsiNet
from .templates import PROV_NONE, TemplateSet, WeightNet
from .tensors import sample_labels, samples_to_tensor
from . import training

logger = logging.getLogger(__name__)

TEMPLATE_METHODS = ("weight-net", "plain-average", "random-sample")


@dataclass
class MetricsReport:
    accuracy: float
    per_class_accuracy: list[float]
    confusion: np.ndarray  # (n, n) counts, rows = true class
    scenario: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": np.asarray(self.confusion).tolist(),
            "scenario": self.scenario,
            "seed": self.seed,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        with open(path) as fh:
            d = json.load(fh)
        return cls(
            accuracy=d["accuracy"],
            per_class_accuracy=d["per_class_accuracy"],
            confusion=np.array(d["confusion"]),
            scenario=d.get("scenario", ""),
            seed=d.get("seed"),
        )


def classify(
    samples: list[CsiSample],
    templates: TemplateSet,
    model: CsiNet,
    metric: str = "attention",
) -> np.ndarray:
    """Assign each sample the class of its most similar template; ties break
    to the lowest class index."""
    for c in range(templates.n_classes):
        if templates.provenance[c] == PROV_NONE:
            raise CoverageError(f"class {c} has no template and no fallback")
    model.eval()
    with torch.no_grad():
        s = model(samples_to_tensor(samples), templates.as_tensor(), metric=metric)
    return np.argmax(s.numpy(), axis=1)


def evaluate(
    samples: list[CsiSample],
    templates: TemplateSet,
    model: CsiNet,
    metric: str = "attention",
    scenario: str = "",
    seed: int | None = None,
) -> MetricsReport:
    if not samples:
        raise DataError("cannot evaluate on an empty test split")
    n = templates.n_classes
    preds = classify(samples, templates, model, metric=metric)
    truth = np.array([s.label for s in samples])
    confusion = np.zeros((n, n), dtype=int)
    for t, p in zip(truth, preds):
        confusion[t, p] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    per_class = []
    for c in range(n):
        row = confusion[c]
        per_class.append(float(row[c] / row.sum()) if row.sum() else math.nan)
    return MetricsReport(accuracy, per_class, confusion, scenario=scenario, seed=seed)


class PlainClassifier(torch.nn.Module):
    """The comparison floor: the same encoder with a linear softmax head."""

    def __init__(self, encoder_config: EncoderConfig, n_classes: int):
        super().__init__()
        self.encoder = build_encoder(encoder_config)
        self.head = torch.nn.Linear(encoder_config.d1, n_classes)

    def forward(self, x):
        return self.head(self.encoder(x))


def baseline_classifier(
    train_split: list[CsiSample],
    test_split: list[CsiSample],
    n_classes: int,
    config: ScenarioConfig | None = None,
) -> MetricsReport:
    """Train the plain cross-entropy classifier and evaluate it on the test
    split. Deterministic under the config seed."""
    config = config or ScenarioConfig()
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    enc_cfg = EncoderConfig(variant=config.encoder_variant, d1=config.embedding_dim)
    net = PlainClassifier(enc_cfg, n_classes)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate, weight_decay=config.lr_decay)
    rng = np.random.default_rng(config.seed)
    loss_fn = torch.nn.CrossEntropyLoss()
    iters = max(1, math.ceil(len(train_split) / config.batch_size))
    net.train()
    for _ in range(config.epochs):
        for _ in range(iters):
            idx = rng.choice(len(train_split), size=min(config.batch_size, len(train_split)), replace=False)
            batch = [train_split[i] for i in idx]
            x = samples_to_tensor(batch)
            y = sample_labels(batch)
            opt.zero_grad()
            loss = loss_fn(net(x), y)
            loss.backward()
            opt.step()
    net.eval()
    with torch.no_grad():
        preds = net(samples_to_tensor(test_split)).argmax(dim=1).numpy()
    truth = np.array([s.label for s in test_split])
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(truth, preds):
        confusion[t, p] += 1
    per_class = [
        float(confusion[c, c] / confusion[c].sum()) if confusion[c].sum() else math.nan
        for c in range(n_classes)
    ]
    return MetricsReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class_accuracy=per_class,
        confusion=confusion,
        scenario=f"baseline-{config.scenario}",
        seed=config.seed,
    )


def _retemplate(
    state: training.TrainState,
    splits: DataSplits,
    method: str,
) -> TemplateSet:
    """Recompute final templates with an alternative mixing strategy, for
    the template-method ablation axis."""
    from .templates import generate_templates_indomain

    if method == "weight-net":
        return state.templates
    n = state.n_classes
    cfg = state.config
    pool = splits.support if cfg.scenario in ("k-shot",) else splits.train
    k = min(
        cfg.template_pool_size or 8 * n,
        cfg.weightnet_pool_max,
        len(pool),
    )
    rng = np.random.default_rng(cfg.seed + 1)
    if method == "plain-average":
        stub = lambda s: torch.ones(s.shape[0])
        return generate_templates_indomain(
            pool, k, state.model, state.weightnet, n, rng,
            metric=cfg.resolved_metric, scorer=stub,
        )
    if method == "random-sample":
        per_class: dict[int, list[CsiSample]] = {}
        for s in pool:
            per_class.setdefault(s.label, []).append(s)
        shape = (n,) + pool[0].data.shape
        templates = np.zeros(shape, dtype=np.float32)
        coverage = np.zeros(n, dtype=bool)
        for c, group in per_class.items():
            templates[c] = group[rng.integers(len(group))].data
            coverage[c] = True
        provenance = ["support-sample" if coverage[c] else PROV_NONE for c in range(n)]
        return TemplateSet(templates, provenance, coverage)
    raise ValueError(f"unknown template method {method!r}")


@dataclass
class AblationRow:
    label: str
    scenario: str
    metric: str
    template_method: str
    seed: int
    accuracy: float | None
    shots: int = 0
    error: str = ""


@dataclass
class AblationSpec:
    label: str
    config: ScenarioConfig
    template_method: str = "weight-net"

    def __post_init__(self):
        if self.template_method not in TEMPLATE_METHODS:
            raise ValueError(f"unknown template method {self.template_method!r}")


def run_ablation(
    grid: list[AblationSpec],
    samples: list[CsiSample],
    n_classes: int,
    out_path: str | Path | None = None,
) -> list[AblationRow]:
    """Train/evaluate one row per grid entry; failures become failed rows
    and the grid continues. Rows sharing (config minus template_method)
    reuse nothing; each row is an independent seeded run."""
    rows: list[AblationRow] = []
    for spec in grid:
        cfg = spec.config
        try:
            splits = split_scenario(samples, cfg)
            norm = AmplitudeNormalizer().fit(splits.train)
            splits = DataSplits(
                train=norm.transform_all(splits.train),
                support=norm.transform_all(splits.support),
                test=norm.transform_all(splits.test),
            )
            state, templates = training.train(cfg, splits, n_classes)
            if spec.template_method != "weight-net":
                templates = _retemplate(state, splits, spec.template_method)
            report = evaluate(
                splits.test, templates, state.model,
                metric=cfg.resolved_metric, scenario=cfg.scenario, seed=cfg.seed,
            )
            rows.append(
                AblationRow(spec.label, cfg.scenario, cfg.resolved_metric,
                            spec.template_method, cfg.seed, report.accuracy,
                            shots=cfg.k if cfg.scenario in ("k-shot", "new-class") else 0)
            )
        except Exception as exc:  # grid keeps going past per-run failures
            logger.exception("ablation row %s failed", spec.label)
            rows.append(
                AblationRow(spec.label, cfg.scenario, cfg.resolved_metric,
                            spec.template_method, cfg.seed, None,
                            shots=cfg.k if cfg.scenario in ("k-shot", "new-class") else 0,
                            error=str(exc))
            )
    if out_path is not None:
        write_ablation_table(rows, out_path)
    return rows


def write_ablation_table(rows: list[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "scenario", "metric", "template_method", "seed", "shots", "accuracy", "error"]
        )
        for r in rows:
            writer.writerow(
                [r.label, r.scenario, r.metric, r.template_method, r.seed, r.shots,
                 "" if r.accuracy is None else f"{r.accuracy:.6f}", r.error]
            )


def read_ablation_table(path: str | Path) -> list[AblationRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                AblationRow(
                    rec["label"], rec["scenario"], rec["metric"], rec["template_method"],
                    int(rec["seed"]),
                    float(rec["accuracy"]) if rec["accuracy"] else None,
                    shots=int(rec.get("shots", 0) or 0),
                    error=rec.get("error", ""),
                )
            )
    return rows
