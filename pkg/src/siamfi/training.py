"""Scenario training orchestration.

Every scenario alternates two optimizer steps per iteration, 1:1:
a comparative step (a batch scored against itself, full pair cross
product) and a template step (a fresh template set scored against a
batch). Gradients of the template step reach the quality scorer and the
similarity network both through the classification branch and through
template construction.
"""

from __future__ import annotations

import logging
import math
import pickle
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import LossConfig, ScenarioConfig
from .data.records import CsiSample
from .data.splits import DataSplits
from .encoder import EncoderConfig
from .errors import CheckpointError, ConfigError
from .losses import comparative_loss, mk_mmd, template_loss, warn_on_label_mismatch
from .similarity import CsiNet
from .templates import (
    TemplateSet,
    WeightNet,
    generate_templates_indomain,
    generate_templates_zeroshot,
    sample_pool,
    select_source_templates,
    templates_from_support,
    weighted_average_templates,
)
from .tensors import sample_labels, samples_to_tensor

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


class LabelAccessAudit:
    """Counts reads of test labels. Training must never trigger it."""

    def __init__(self):
        self.labeled_reads = 0


class AuditedSample:
    """CsiSample proxy whose label access is recorded by the audit."""

    __slots__ = ("_sample", "_audit")

    def __init__(self, sample: CsiSample, audit: LabelAccessAudit):
        self._sample = sample
        self._audit = audit

    @property
    def data(self):
        return self._sample.data

    @property
    def domain(self):
        return self._sample.domain

    @property
    def label(self):
        self._audit.labeled_reads += 1
        return self._sample.label


def audited_view(samples: list[CsiSample]) -> tuple[list[AuditedSample], LabelAccessAudit]:
    audit = LabelAccessAudit()
    return [AuditedSample(s, audit) for s in samples], audit


@dataclass
class LossRecord:
    step: int
    kind: str  # "comparative" | "template"
    loss: float
    mmd: float


@dataclass
class TrainState:
    config: ScenarioConfig
    n_classes: int
    model: CsiNet
    weightnet: WeightNet
    optimizer: torch.optim.Optimizer
    rng: np.random.Generator
    step: int = 0
    comparative_steps: int = 0
    template_steps: int = 0
    epochs_done: int = 0
    loss_log: list[LossRecord] = field(default_factory=list)
    templates: TemplateSet | None = None


def init_state(config: ScenarioConfig, n_classes: int) -> TrainState:
    """Build the model pair and optimizer, seeded from config.seed."""
    torch.manual_seed(config.seed)
    enc_cfg = EncoderConfig(variant=config.encoder_variant, d1=config.embedding_dim)
    model = CsiNet(
        enc_cfg, heads=config.heads, head_dim=config.head_dim, temperature=config.temperature
    )
    weightnet = WeightNet(k_max=config.weightnet_pool_max)
    optimizer = torch.optim.Adam(
        list(model.parameters()) + list(weightnet.parameters()),
        lr=config.learning_rate,
        weight_decay=config.lr_decay,
    )
    rng = np.random.default_rng(config.seed)
    return TrainState(
        config=config, n_classes=n_classes, model=model, weightnet=weightnet,
        optimizer=optimizer, rng=rng,
    )


def _draw_batch(samples: list, size: int, rng: np.random.Generator) -> list:
    idx = rng.choice(len(samples), size=min(size, len(samples)), replace=False)
    return [samples[i] for i in idx]


def _unlabeled_tensor(samples: list, size: int, rng: np.random.Generator) -> torch.Tensor:
    batch = _draw_batch(samples, size, rng)
    return torch.from_numpy(np.stack([s.data for s in batch])).float()


def _pool_size(config: ScenarioConfig, n_classes: int) -> int:
    k = config.template_pool_size if config.template_pool_size is not None else 8 * n_classes
    return min(k, config.weightnet_pool_max)


def step_comparative(
    state: TrainState,
    batch: list[CsiSample],
    mmd_target: torch.Tensor | None = None,
) -> float:
    """One optimizer update on the pairwise contrastive loss (batch against
    itself), plus the weighted MK-MMD term when a target batch is given."""
    cfg = state.config
    x = samples_to_tensor(batch)
    labels = sample_labels(batch)
    state.model.train()
    state.weightnet.train()
    state.optimizer.zero_grad()
    emb = state.model.encode(x)
    s = state.model.head(emb, emb, cfg.resolved_metric)
    loss = comparative_loss(s, labels, labels, alpha=cfg.loss.alpha)
    mmd_val = 0.0
    if mmd_target is not None:
        mmd = mk_mmd(emb, state.model.encode(mmd_target), cfg.loss)
        loss = loss + cfg.loss.mmd_weight * mmd
        mmd_val = mmd.item()
    loss.backward()
    state.optimizer.step()
    state.step += 1
    state.comparative_steps += 1
    state.loss_log.append(LossRecord(state.step, "comparative", loss.item(), mmd_val))
    return loss.item()


def _training_templates(
    state: TrainState, pool: list[CsiSample], active_classes: list[int]
) -> tuple[torch.Tensor, torch.Tensor] | None:
    """Differentiable template construction for one template step.

    Returns (templates over active classes, coverage) or None when some
    active class received no pooled sample.
    """
    cfg = state.config
    chosen = sample_pool(pool, _pool_size(cfg, state.n_classes), state.rng)
    x = samples_to_tensor(chosen)
    if cfg.template_pool_noise_std > 0:
        # Quality-diversity augmentation: corrupt a random subset of the
        # pool so the scorer sees samples of varying quality.
        noisy = state.rng.random(len(chosen)) < 0.5
        sigma = state.rng.uniform(0, cfg.template_pool_noise_std, size=len(chosen))
        sigma[~noisy] = 0.0
        noise = state.rng.standard_normal(x.shape).astype(np.float32)
        x = x + torch.from_numpy(sigma.astype(np.float32)).view(-1, 1, 1, 1) * torch.from_numpy(noise)
    remap = {c: i for i, c in enumerate(active_classes)}
    labels = torch.tensor([remap[s.label] for s in chosen], dtype=torch.long)
    s_pool = state.model(x, x, cfg.resolved_metric)
    w = state.weightnet(s_pool)
    if cfg.scenario == "zero-shot":
        # Source half of the zero-shot generator: hard per-class selection
        # of the best-scored sample.
        templates, coverage = select_source_templates(x, labels, w, len(active_classes))
    else:
        templates, coverage = weighted_average_templates(x, labels, w, len(active_classes))
    if not bool(coverage.all()):
        missing = [active_classes[i] for i in range(len(active_classes)) if not coverage[i]]
        logger.warning("template step skipped: classes %s not covered by the pool", missing)
        return None
    return templates, coverage


def step_template(
    state: TrainState,
    batch: list[CsiSample],
    pool: list[CsiSample],
    active_classes: list[int] | None = None,
    mmd_target: torch.Tensor | None = None,
) -> float | None:
    """Regenerate templates from the pool and take one optimizer update on
    the template loss. Returns None when the step was skipped for coverage."""
    cfg = state.config
    if active_classes is None:
        active_classes = list(range(state.n_classes))
    state.model.train()
    state.weightnet.train()
    state.optimizer.zero_grad()
    built = _training_templates(state, pool, active_classes)
    if built is None:
        return None
    templates, _ = built
    x = samples_to_tensor(batch)
    remap = {c: i for i, c in enumerate(active_classes)}
    labels = torch.tensor([remap[s.label] for s in batch], dtype=torch.long)
    emb_q = state.model.encode(x)
    emb_t = state.model.encode(templates)
    s = state.model.head(emb_q, emb_t, cfg.resolved_metric)
    loss = template_loss(s, labels, alpha=cfg.loss.alpha)
    mmd_val = 0.0
    if mmd_target is not None:
        mmd = mk_mmd(emb_q, state.model.encode(mmd_target), cfg.loss)
        loss = loss + cfg.loss.mmd_weight * mmd
        mmd_val = mmd.item()
    loss.backward()
    state.optimizer.step()
    state.step += 1
    state.template_steps += 1
    state.loss_log.append(LossRecord(state.step, "template", loss.item(), mmd_val))
    return loss.item()


def _epoch_iters(n: int, batch_size: int) -> int:
    return max(1, math.ceil(n / batch_size))


def _mmd_source(state: TrainState, splits: DataSplits) -> list | None:
    """Target-side data for the MK-MMD term, chosen per scenario. Zero-shot
    touches the test split only through unlabeled payloads."""
    cfg = state.config
    if not cfg.use_mmd:
        return None
    if cfg.scenario == "k-shot":
        if cfg.use_unlabeled_target and splits.test:
            return splits.test
        return splits.support or None
    if cfg.scenario == "zero-shot":
        return splits.test if (cfg.use_unlabeled_target and splits.test) else None
    if cfg.scenario == "new-class":
        return splits.support or None
    return None


def _check_mmd_labels(state: TrainState, splits: DataSplits) -> None:
    cfg = state.config
    if not cfg.use_mmd or cfg.scenario not in ("k-shot", "new-class") or not splits.support:
        return
    warn_on_label_mismatch(
        {s.label for s in splits.train}, {s.label for s in splits.support}
    )


def _run_epochs(
    state: TrainState,
    data: list[CsiSample],
    epochs: int,
    active_classes: list[int],
    mmd_data: list | None,
) -> None:
    cfg = state.config
    for _ in range(epochs):
        for _ in range(_epoch_iters(len(data), cfg.batch_size)):
            mmd_batch = (
                _unlabeled_tensor(mmd_data, cfg.batch_size, state.rng) if mmd_data else None
            )
            batch = _draw_batch(data, cfg.batch_size, state.rng)
            step_comparative(state, batch, mmd_target=mmd_batch)
            mmd_batch2 = (
                _unlabeled_tensor(mmd_data, cfg.batch_size, state.rng) if mmd_data else None
            )
            batch2 = _draw_batch(data, cfg.batch_size, state.rng)
            step_template(state, batch2, data, active_classes, mmd_target=mmd_batch2)
        state.epochs_done += 1


def _final_templates(state: TrainState, splits: DataSplits) -> TemplateSet:
    cfg = state.config
    n = state.n_classes
    state.model.eval()
    state.weightnet.eval()
    metric = cfg.resolved_metric
    pool_k = _pool_size(cfg, n)
    # Template generation gets its own stream derived from the training
    # position, so it never advances the training RNG: a resumed run and
    # an uninterrupted one then agree bit-for-bit.
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 104729, state.epochs_done]))
    if cfg.scenario == "in-domain":
        return generate_templates_indomain(
            splits.train, pool_k, state.model, state.weightnet, n, rng, metric=metric
        )
    if cfg.scenario == "k-shot":
        return templates_from_support(
            splits.support, state.model, state.weightnet, n, rng, metric=metric
        )
    if cfg.scenario == "zero-shot":
        _, target = generate_templates_zeroshot(
            splits.train, splits.test, pool_k, state.model, state.weightnet, n,
            rng, metric=metric,
        )
        return target
    if cfg.scenario == "new-class":
        base = generate_templates_indomain(
            splits.train, pool_k, state.model, state.weightnet, n, rng, metric=metric
        )
        sup = templates_from_support(
            splits.support, state.model, state.weightnet, n, rng, metric=metric
        )
        templates = base.templates.copy()
        provenance = list(base.provenance)
        coverage = base.coverage.copy()
        for c in range(n):
            if sup.coverage[c]:
                templates[c] = sup.templates[c]
                provenance[c] = sup.provenance[c]
                coverage[c] = True
        return TemplateSet(templates, provenance, coverage)
    raise ConfigError(f"unknown scenario {cfg.scenario!r}")


def train(
    config: ScenarioConfig,
    splits: DataSplits,
    n_classes: int,
    state: TrainState | None = None,
) -> tuple[TrainState, TemplateSet]:
    """Run the scenario's full training schedule and produce the template
    set used for inference. Deterministic under a fixed seed (numeric
    execution is pinned to one thread)."""
    torch.set_num_threads(1)
    if state is None:
        state = init_state(config, n_classes)
    cfg = state.config
    if not splits.train and cfg.scenario != "k-shot":
        raise ConfigError("training split is empty")
    _check_mmd_labels(state, splits)
    mmd_data = _mmd_source(state, splits)
    train_classes = sorted({s.label for s in splits.train})

    if cfg.scenario in ("in-domain", "zero-shot", "new-class"):
        remaining = cfg.epochs - state.epochs_done
        if remaining > 0:
            _run_epochs(state, splits.train, remaining, train_classes, mmd_data)
    elif cfg.scenario == "k-shot":
        if not splits.support:
            raise ConfigError("k-shot scenario requires a non-empty support set")
        shots = max(
            sum(1 for s in splits.support if s.label == c)
            for c in {s.label for s in splits.support}
        )
        pre = cfg.epochs - min(state.epochs_done, cfg.epochs)
        if pre > 0:
            _run_epochs(state, splits.train, pre, train_classes, mmd_data)
        if shots > 1:
            # Fine-tune both step kinds on the support set; one-shot skips
            # fine-tuning entirely (a single sample per class fixes the
            # template regardless of its weight).
            ft_total = max(1, round(cfg.finetune_fraction * cfg.epochs))
            ft_done = max(0, state.epochs_done - cfg.epochs)
            support_classes = sorted({s.label for s in splits.support})
            ft_mmd = splits.train if cfg.use_mmd else None
            if ft_total - ft_done > 0:
                _run_epochs(state, splits.support, ft_total - ft_done, support_classes, ft_mmd)
    else:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")

    state.templates = _final_templates(state, splits)
    return state, state.templates


def _to_numpy_tree(obj):
    if isinstance(obj, torch.Tensor):
        return ("__tensor__", obj.detach().cpu().numpy())
    if isinstance(obj, dict):
        # Interned keys keep repeated strings identical across fresh and
        # reloaded states, so pickle's memoization (and thus the on-disk
        # bytes) is reproducible.
        return {
            (sys.intern(k) if isinstance(k, str) else k): _to_numpy_tree(v)
            for k, v in obj.items()
        }
    if isinstance(obj, (list, tuple)):
        converted = [_to_numpy_tree(v) for v in obj]
        return type(obj)(converted) if isinstance(obj, tuple) else converted
    return obj


def _from_numpy_tree(obj):
    if isinstance(obj, tuple) and len(obj) == 2 and obj[0] == "__tensor__":
        return torch.from_numpy(obj[1].copy())
    if isinstance(obj, dict):
        return {k: _from_numpy_tree(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_numpy_tree(v) for v in obj]
    return obj


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    """Serialize the full training state, including RNG state, so a resumed
    run is bit-identical to an uninterrupted one."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": state.config.to_dict(),
        "n_classes": state.n_classes,
        "model": _to_numpy_tree(state.model.state_dict()),
        "weightnet": _to_numpy_tree(state.weightnet.state_dict()),
        "optimizer": _to_numpy_tree(state.optimizer.state_dict()),
        "rng": state.rng.bit_generator.state,
        "step": state.step,
        "comparative_steps": state.comparative_steps,
        "template_steps": state.template_steps,
        "epochs_done": state.epochs_done,
        "loss_log": [(r.step, r.kind, r.loss, r.mmd) for r in state.loss_log],
        "templates": None
        if state.templates is None
        else {
            "templates": state.templates.templates,
            "provenance": state.templates.provenance,
            "coverage": state.templates.coverage,
        },
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=4)


def load_checkpoint(path: str | Path) -> TrainState:
    try:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    config = ScenarioConfig.from_dict(payload["config"])
    state = init_state(config, payload["n_classes"])
    state.model.load_state_dict(_from_numpy_tree(payload["model"]))
    state.weightnet.load_state_dict(_from_numpy_tree(payload["weightnet"]))
    state.optimizer.load_state_dict(_from_numpy_tree(payload["optimizer"]))
    state.rng.bit_generator.state = payload["rng"]
    state.step = payload["step"]
    state.comparative_steps = payload["comparative_steps"]
    state.template_steps = payload["template_steps"]
    state.epochs_done = payload["epochs_done"]
    state.loss_log = [LossRecord(*r) for r in payload["loss_log"]]
    if payload["templates"] is not None:
        t = payload["templates"]
        state.templates = TemplateSet(t["templates"], t["provenance"], t["coverage"])
    return state
