"""Small helpers for moving samples between numpy and torch."""

from __future__ import annotations

import numpy as np
import torch

from .data.records import CsiSample


def samples_to_tensor(samples: list[CsiSample], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack samples into a (b, 2, t, D) batch tensor."""
    return torch.from_numpy(np.stack([s.data for s in samples])).to(dtype)


def sample_labels(samples: list[CsiSample]) -> torch.Tensor:
    return torch.tensor([s.label for s in samples], dtype=torch.long)
