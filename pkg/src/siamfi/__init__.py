"""Cross-domain few-shot/zero-shot CSI classification toolkit.

A siamese similarity network (shared twin encoder with a learned
multi-head attention score, plus Gaussian and cosine heads), an adaptive
per-class template generator driven by a learned sample-quality scorer,
scenario training loops (in-domain, k-shot, zero-shot, new-class), an
MK-MMD alignment loss, a synthetic multi-domain CSI generator, and an
experiment harness.
"""

from .config import LossConfig, ScenarioConfig
from .encoder import EncoderConfig, PaperResNet18Encoder, TinyResidualEncoder, build_encoder
from .similarity import (
    AttentionHead,
    CsiNet,
    attention_similarity,
    cosine_similarity,
    gaussian_similarity,
)
from .templates import (
    TemplateSet,
    WeightNet,
    generate_templates_indomain,
    generate_templates_zeroshot,
    score_sample_quality,
    templates_from_support,
)
from .losses import comparative_loss, mk_mmd, template_loss
from .training import (
    TrainState,
    audited_view,
    init_state,
    load_checkpoint,
    save_checkpoint,
    step_comparative,
    step_template,
    train,
)
from .evaluation import (
    AblationSpec,
    MetricsReport,
    baseline_classifier,
    classify,
    evaluate,
    run_ablation,
)

__version__ = "0.1.0"
