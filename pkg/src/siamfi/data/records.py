"""Core data model: raw CSI records, preprocessed samples, and manifests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, SchemaError


@dataclass
class RawCsiRecord:
    """One packet slot of a recording session.

    csi holds D complex values (one per subcarrier across all antennas);
    a missing packet slot carries present=False and an empty csi array.
    """

    timestamp_ms: int
    label: int
    domain: int
    csi: np.ndarray
    present: bool = True

    def __post_init__(self):
        self.csi = np.asarray(self.csi, dtype=np.complex128)


@dataclass
class CsiSample:
    """One preprocessed sensing sample.

    data: float array of shape (2, t, D); channel 0 is amplitude,
    channel 1 is the cosine of the phase (always in [-1, 1]).
    """

    data: np.ndarray
    label: int
    domain: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise DimensionError(f"sample data must have shape (2, t, D), got {self.data.shape}")


@dataclass
class SessionMeta:
    path: str
    domain: int
    label: int


@dataclass
class DatasetManifest:
    """Declares the dataset layout: dimensions, class/domain names, sessions."""

    D: int
    t: int
    stride: int
    classes: list[str]
    domains: list[str]
    sessions: list[SessionMeta] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            raise SchemaError("manifest field 'classes' must be non-empty")
        if self.stride < 1:
            raise SchemaError(f"manifest field 'stride' must be >= 1, got {self.stride}")
        if self.t < 1:
            raise SchemaError(f"manifest field 't' must be >= 1, got {self.t}")
        if self.D < 1:
            raise SchemaError(f"manifest field 'D' must be >= 1, got {self.D}")


@dataclass
class MotionProfile:
    """Class-specific dynamic-channel parameters."""

    frequency_hz: float
    amplitude: float


@dataclass
class SyntheticDomainSpec:
    """Parameters of one synthetic domain.

    The static multipath response is fixed per domain (static_seed); the
    dynamic component follows per-class sinusoidal motion profiles.
    """

    n_paths: int
    static_seed: int
    class_motion_profiles: list[MotionProfile]
    noise_std: float
    sample_rate: float
    domain_id: int = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise SchemaError(f"noise_std must be >= 0, got {self.noise_std}")
        if not self.class_motion_profiles:
            raise SchemaError("class_motion_profiles must contain one profile per class")
