from .records import (
    CsiSample,
    DatasetManifest,
    MotionProfile,
    RawCsiRecord,
    SessionMeta,
    SyntheticDomainSpec,
)
from .io import (
    convert_wigesture,
    load_dataset,
    materialize_gaps,
    read_manifest,
    read_session,
    write_manifest,
    write_session,
)
from .preprocess import AmplitudeNormalizer, interpolate_missing, preprocess, window_session
from .splits import DataSplits, split_scenario
from .synth import make_domain_specs, synthesize_domain, write_synthetic_dataset

__all__ = [
    "CsiSample",
    "DatasetManifest",
    "MotionProfile",
    "RawCsiRecord",
    "SessionMeta",
    "SyntheticDomainSpec",
    "convert_wigesture",
    "load_dataset",
    "materialize_gaps",
    "read_manifest",
    "read_session",
    "write_manifest",
    "write_session",
    "AmplitudeNormalizer",
    "interpolate_missing",
    "preprocess",
    "window_session",
    "DataSplits",
    "split_scenario",
    "make_domain_specs",
    "synthesize_domain",
    "write_synthetic_dataset",
]
