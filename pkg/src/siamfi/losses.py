"""Training objectives: pairwise contrastive loss, template loss, MK-MMD.

Both contrastive losses sum alpha * 1{same}(1 - S_ij)^2 + 1{diff} S_ij^2
over all pairs (a sum, not a mean; the learning rate absorbs the scale).
The MK-MMD alignment term is a beta-weighted mixture of biased (V-statistic)
squared-MMD estimates under Gaussian kernels, so it is non-negative by
construction.
"""

from __future__ import annotations

import logging

import torch

from .config import LossConfig
from .errors import DataError, DimensionError

logger = logging.getLogger(__name__)

ALPHA_CLAMP = (1.0, 100.0)


def resolve_alpha(alpha, same: torch.Tensor) -> float:
    """'auto' balances the long-tail pair imbalance per batch:
    (#negative pairs)/(#positive pairs), clamped to [1, 100]."""
    if alpha != "auto":
        return float(alpha)
    n_pos = int(same.sum())
    n_neg = same.numel() - n_pos
    if n_pos == 0:
        return ALPHA_CLAMP[0]
    return float(min(max(n_neg / n_pos, ALPHA_CLAMP[0]), ALPHA_CLAMP[1]))


def comparative_loss(
    s: torch.Tensor,
    labels_q: torch.Tensor,
    labels_k: torch.Tensor,
    alpha: float | str = 1.0,
) -> torch.Tensor:
    """Pairwise contrastive loss over a (b1, b2) score matrix."""
    if s.shape != (len(labels_q), len(labels_k)):
        raise DimensionError(
            f"score matrix {tuple(s.shape)} does not match label lengths ({len(labels_q)}, {len(labels_k)})"
        )
    same = labels_q[:, None] == labels_k[None, :]
    a = resolve_alpha(alpha, same)
    pos = torch.where(same, (1 - s).pow(2), torch.zeros_like(s))
    neg = torch.where(same, torch.zeros_like(s), s.pow(2))
    return a * pos.sum() + neg.sum()


def template_loss(s: torch.Tensor, labels: torch.Tensor, alpha: float | str = 1.0) -> torch.Tensor:
    """Contrastive loss of a (b, n) sample-vs-class-template score matrix."""
    b, n = s.shape
    if len(labels) != b:
        raise DimensionError(f"score matrix has {b} rows but {len(labels)} labels given")
    if bool((labels < 0).any()) or bool((labels >= n).any()):
        raise DimensionError(f"labels must lie in [0, {n})")
    class_ids = torch.arange(n, device=s.device)
    return comparative_loss(s, labels, class_ids, alpha=alpha)


def _pairwise_sq_dists(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a[:, None, :] - b[None, :, :]).pow(2).sum(-1)


def mmd_bandwidths(emb_s: torch.Tensor, emb_t: torch.Tensor, kernel_count: int) -> list[float]:
    """Gaussian kernel bandwidths: median pairwise distance of the joint
    batch times 2^i for i centered on zero; floored at 1e-8."""
    joint = torch.cat([emb_s, emb_t], dim=0).detach()
    d = torch.sqrt(_pairwise_sq_dists(joint, joint).clamp_min(0))
    mask = ~torch.eye(len(joint), dtype=torch.bool, device=d.device)
    off = d[mask]
    median = float(off.median()) if off.numel() else 0.0
    median = max(median, 1e-8)
    lo = -(kernel_count // 2)
    return [max(median * 2.0 ** (lo + i), 1e-8) for i in range(kernel_count)]


def gaussian_kernel(a: torch.Tensor, b: torch.Tensor, sigma: float) -> torch.Tensor:
    """k(x, y) = exp(-||x - y||^2 / (2 sigma^2))."""
    return torch.exp(-_pairwise_sq_dists(a, b) / (2 * sigma**2))


def mk_mmd(
    emb_s: torch.Tensor,
    emb_t: torch.Tensor,
    config: LossConfig | None = None,
    bandwidths: list[float] | None = None,
) -> torch.Tensor:
    """Multi-kernel squared MMD between two embedding sets.

    Biased estimate per kernel: mean within-source + mean within-target
    - 2 * mean cross. Explicit bandwidths override the median heuristic.
    """
    config = config or LossConfig()
    if emb_s.numel() == 0 or emb_t.numel() == 0:
        raise DataError("MK-MMD requires two non-empty embedding sets")
    if emb_s.shape[-1] != emb_t.shape[-1]:
        raise DimensionError(f"embedding dims differ: {emb_s.shape[-1]} vs {emb_t.shape[-1]}")
    if bandwidths is None:
        bandwidths = mmd_bandwidths(emb_s, emb_t, config.kernel_count)
    beta = config.resolved_beta()
    if len(bandwidths) != len(beta):
        raise DimensionError("bandwidth list length must equal kernel_count")
    total = emb_s.new_zeros(())
    for b_j, sigma in zip(beta, bandwidths):
        mmd_sq = (
            gaussian_kernel(emb_s, emb_s, sigma).mean()
            + gaussian_kernel(emb_t, emb_t, sigma).mean()
            - 2 * gaussian_kernel(emb_s, emb_t, sigma).mean()
        )
        total = total + b_j * mmd_sq
    return total


def warn_on_label_mismatch(labels_s: set[int], labels_t: set[int]) -> None:
    """MK-MMD only helps when the two domains share a similar label
    distribution; warn when the label sets differ."""
    if labels_s != labels_t:
        logger.warning(
            "MK-MMD enabled but source labels %s differ from target labels %s; "
            "alignment may hurt accuracy",
            sorted(labels_s),
            sorted(labels_t),
        )
