"""Run configuration types shared by splitting, training, and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .errors import ConfigError

SCENARIOS = ("in-domain", "k-shot", "zero-shot", "new-class")
METRICS = ("attention", "gaussian", "cosine")

# Paper-faithful head defaults per scenario: the learned attention head
# everywhere except the few-shot cross-domain setting, where plain
# Gaussian distance transfers better.
DEFAULT_METRIC = {
    "in-domain": "attention",
    "k-shot": "gaussian",
    "zero-shot": "attention",
    "new-class": "attention",
}


@dataclass
class LossConfig:
    """Knobs for the contrastive and MK-MMD objectives.

    alpha: positive-pair weight; "auto" balances per batch as
    (#negative pairs)/(#positive pairs) clamped to [1, 100].
    beta: kernel mixture weights, must be non-negative and sum to 1;
    None means uniform over kernel_count kernels.
    """

    alpha: float | str = "auto"
    mmd_weight: float = 1.0
    kernel_count: int = 5
    beta: tuple[float, ...] | None = None

    def __post_init__(self):
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ConfigError(f"alpha must be a positive number or 'auto', got {self.alpha!r}")
        elif self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.kernel_count < 1:
            raise ConfigError("kernel_count must be >= 1")
        if self.beta is not None:
            if len(self.beta) != self.kernel_count:
                raise ConfigError("beta length must equal kernel_count")
            if any(b < 0 for b in self.beta):
                raise ConfigError("beta entries must be >= 0")
            if abs(sum(self.beta) - 1.0) > 1e-9:
                raise ConfigError("beta must sum to 1")

    def resolved_beta(self) -> tuple[float, ...]:
        if self.beta is not None:
            return tuple(self.beta)
        return tuple(1.0 / self.kernel_count for _ in range(self.kernel_count))


@dataclass
class ScenarioConfig:
    """Declarative description of one experiment run."""

    scenario: str = "in-domain"
    k: int = 1
    metric: str | None = None  # None -> scenario default
    use_mmd: bool = False
    use_unlabeled_target: bool = False
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 5e-5
    lr_decay: float = 0.01  # applied as weight decay
    seed: int = 0
    target_domain: int | None = None
    new_class: int | None = None
    train_fraction: float = 0.9  # chronological per-class train share
    template_pool_size: int | None = None  # None -> 8 * n_classes
    template_pool_noise_std: float = 0.0  # quality-diversity augmentation for pool sampling
    encoder_variant: str = "tiny-residual"
    embedding_dim: int | None = None  # None -> variant default
    heads: int = 4
    head_dim: int = 64
    temperature: float | None = None  # None -> sqrt(head_dim)
    weightnet_pool_max: int = 64
    finetune_fraction: float = 0.2  # fine-tune epochs as share of pre-train epochs
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.metric is not None and self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.scenario in ("k-shot", "new-class") and self.k < 1:
            raise ConfigError(f"scenario {self.scenario!r} requires k >= 1, got {self.k}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.scenario in ("k-shot", "zero-shot") and self.target_domain is None:
            raise ConfigError(f"scenario {self.scenario!r} requires target_domain")
        if self.scenario == "new-class" and self.new_class is None:
            raise ConfigError("scenario 'new-class' requires new_class")

    @property
    def resolved_metric(self) -> str:
        return self.metric if self.metric is not None else DEFAULT_METRIC[self.scenario]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        loss = d.pop("loss", None)
        if isinstance(loss, dict):
            if loss.get("beta") is not None:
                loss["beta"] = tuple(loss["beta"])
            loss = LossConfig(**loss)
        elif loss is None:
            loss = LossConfig()
        return cls(loss=loss, **d)
