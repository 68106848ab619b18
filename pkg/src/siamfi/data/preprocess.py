"""Gap interpolation, amplitude normalization, and sample windowing."""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DimensionError, UninitializedNormalizerError
from .records import CsiSample, DatasetManifest, RawCsiRecord


def interpolate_missing(session: list[RawCsiRecord]) -> list[RawCsiRecord]:
    """Fill missing packet slots by per-subcarrier linear interpolation.

    Real and imaginary parts are interpolated independently between the
    nearest present neighbors; leading/trailing gaps hold the nearest
    edge value. Present records are returned bit-unchanged.
    """
    present_idx = [i for i, r in enumerate(session) if r.present]
    if not present_idx:
        raise DataError("session has no present records")
    if len(present_idx) == len(session):
        return list(session)
    D = len(session[present_idx[0]].csi)
    xs = np.array(present_idx, dtype=np.float64)
    stack = np.stack([session[i].csi for i in present_idx])  # (n_present, D)
    out: list[RawCsiRecord] = []
    missing = np.array([i for i, r in enumerate(session) if not r.present], dtype=np.float64)
    re = np.empty((len(missing), D))
    im = np.empty((len(missing), D))
    for d in range(D):
        re[:, d] = np.interp(missing, xs, stack[:, d].real)
        im[:, d] = np.interp(missing, xs, stack[:, d].imag)
    fill = {int(i): re[j] + 1j * im[j] for j, i in enumerate(missing)}
    for i, rec in enumerate(session):
        if rec.present:
            out.append(rec)
        else:
            out.append(
                RawCsiRecord(
                    timestamp_ms=rec.timestamp_ms,
                    label=rec.label,
                    domain=rec.domain,
                    csi=fill[i],
                    present=True,
                )
            )
    return out


class AmplitudeNormalizer:
    """Per-subcarrier standardization of the amplitude channel.

    Statistics must be fit on the training split only; the std is floored
    at 1e-8 to keep constant subcarriers finite.
    """

    STD_FLOOR = 1e-8

    def __init__(self):
        self.mean: np.ndarray | None = None
        self.std: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.mean is not None

    def fit(self, samples: list[CsiSample]) -> "AmplitudeNormalizer":
        if not samples:
            raise DataError("cannot fit normalizer on an empty sample list")
        amps = np.concatenate([s.data[0] for s in samples], axis=0)  # (sum_t, D)
        self.mean = amps.mean(axis=0)
        self.std = np.maximum(amps.std(axis=0), self.STD_FLOOR)
        return self

    def transform(self, sample: CsiSample) -> CsiSample:
        if not self.fitted:
            raise UninitializedNormalizerError("normalizer statistics requested before fit()")
        data = sample.data.copy()
        data[0] = (data[0] - self.mean) / self.std
        return CsiSample(data=data, label=sample.label, domain=sample.domain)

    def transform_all(self, samples: list[CsiSample]) -> list[CsiSample]:
        return [self.transform(s) for s in samples]


def window_session(session: list[RawCsiRecord], manifest: DatasetManifest) -> list[CsiSample]:
    """Slide windows of length t with the manifest stride over a gap-filled
    session, producing unnormalized (2, t, D) samples.

    Channel 0 is |csi|, channel 1 is cos(arg(csi)). Windows spanning a
    label change are discarded. A session shorter than t yields nothing.
    """
    n = len(session)
    t, stride, D = manifest.t, manifest.stride, manifest.D
    if n < t:
        return []
    for rec in session:
        if not rec.present:
            raise DataError("session must be gap-filled before windowing")
        if len(rec.csi) != D:
            raise DimensionError(f"record has {len(rec.csi)} subcarriers, manifest declares {D}")
    csi = np.stack([r.csi for r in session])  # (n, D)
    amp = np.abs(csi)
    cph = np.cos(np.angle(csi))
    labels = np.array([r.label for r in session])
    samples = []
    for start in range(0, n - t + 1, stride):
        w = slice(start, start + t)
        if not (labels[w] == labels[start]).all():
            continue
        data = np.stack([amp[w], cph[w]]).astype(np.float32)
        samples.append(CsiSample(data=data, label=int(labels[start]), domain=session[start].domain))
    return samples


def preprocess(
    session: list[RawCsiRecord],
    manifest: DatasetManifest,
    normalizer: AmplitudeNormalizer,
) -> list[CsiSample]:
    """Window a gap-filled session and standardize its amplitude channel
    with the (already fit) normalizer."""
    if not normalizer.fitted:
        raise UninitializedNormalizerError("normalizer statistics requested before fit()")
    return normalizer.transform_all(window_session(session, manifest))
