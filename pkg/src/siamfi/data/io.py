"""Dataset manifest and session file I/O.

Manifest: YAML with keys D, t, stride, classes, domains, sessions (each
session entry has path, domain, label). Session file: CSV with header
``timestamp_ms,label,domain,present`` followed per row by D real/imaginary
pairs; missing slots carry present=0 and empty CSI columns.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
import yaml

from ..errors import DataError, DimensionError, SchemaError
from .records import DatasetManifest, RawCsiRecord, SessionMeta

SESSION_HEADER = ["timestamp_ms", "label", "domain", "present"]


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "D": manifest.D,
        "t": manifest.t,
        "stride": manifest.stride,
        "classes": list(manifest.classes),
        "domains": list(manifest.domains),
        "sessions": [
            {"path": s.path, "domain": s.domain, "label": s.label} for s in manifest.sessions
        ],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def read_manifest(path: str | Path) -> DatasetManifest:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SchemaError(f"manifest is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("manifest must be a mapping")
    for key in ("D", "t", "stride", "classes", "domains", "sessions"):
        if key not in doc:
            raise SchemaError(f"manifest field {key!r} is missing")
    for key in ("D", "t", "stride"):
        if not isinstance(doc[key], int):
            raise SchemaError(f"manifest field {key!r} must be an integer")
    if not isinstance(doc["classes"], list):
        raise SchemaError("manifest field 'classes' must be a list")
    if not isinstance(doc["domains"], list):
        raise SchemaError("manifest field 'domains' must be a list")
    sessions = []
    for i, entry in enumerate(doc["sessions"]):
        if not isinstance(entry, dict) or not {"path", "domain", "label"} <= set(entry):
            raise SchemaError(f"manifest field 'sessions[{i}]' must have path, domain, label")
        sessions.append(SessionMeta(path=entry["path"], domain=int(entry["domain"]), label=int(entry["label"])))
    return DatasetManifest(
        D=doc["D"],
        t=doc["t"],
        stride=doc["stride"],
        classes=[str(c) for c in doc["classes"]],
        domains=[str(d) for d in doc["domains"]],
        sessions=sessions,
    )


def write_session(records: list[RawCsiRecord], path: str | Path, D: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSION_HEADER)
        for rec in records:
            row = [rec.timestamp_ms, rec.label, rec.domain, int(rec.present)]
            if rec.present:
                if len(rec.csi) != D:
                    raise DimensionError(
                        f"record at t={rec.timestamp_ms} has {len(rec.csi)} subcarriers, manifest declares {D}"
                    )
                for v in rec.csi:
                    row.extend([repr(float(v.real)), repr(float(v.imag))])
            writer.writerow(row)


def read_session(path: str | Path, D: int) -> list[RawCsiRecord]:
    records: list[RawCsiRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != SESSION_HEADER:
            raise SchemaError(f"session file {path} has a bad header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            ts, label, domain, present = int(row[0]), int(row[1]), int(row[2]), bool(int(row[3]))
            if present:
                vals = row[4:]
                if len(vals) != 2 * D:
                    raise DimensionError(
                        f"{path}:{lineno}: expected {2 * D} CSI columns for D={D}, got {len(vals)}"
                    )
                re = np.array([float(v) for v in vals[0::2]])
                im = np.array([float(v) for v in vals[1::2]])
                csi = re + 1j * im
            else:
                csi = np.zeros(0, dtype=np.complex128)
            records.append(RawCsiRecord(timestamp_ms=ts, label=label, domain=domain, csi=csi, present=present))
    _check_monotone(records, path)
    return records


def _check_monotone(records: list[RawCsiRecord], path) -> None:
    for a, b in zip(records, records[1:]):
        if b.timestamp_ms <= a.timestamp_ms:
            raise DataError(f"{path}: timestamps not strictly increasing at t={b.timestamp_ms}")


def materialize_gaps(records: list[RawCsiRecord]) -> list[RawCsiRecord]:
    """Insert present=False records where the timestamp grid skips slots.

    The nominal packet period is the median of consecutive timestamp
    differences; a jump of ~m periods yields m-1 missing slots.
    """
    present = [r for r in records if r.present]
    if len(records) < 3 or len(present) < 2:
        return list(records)
    diffs = np.diff([r.timestamp_ms for r in records])
    period = float(np.median(diffs))
    if period <= 0:
        return list(records)
    out: list[RawCsiRecord] = [records[0]]
    for prev, cur in zip(records, records[1:]):
        gap = cur.timestamp_ms - prev.timestamp_ms
        n_missing = int(round(gap / period)) - 1
        for m in range(1, n_missing + 1):
            ts = prev.timestamp_ms + int(round(m * period))
            out.append(
                RawCsiRecord(
                    timestamp_ms=ts,
                    label=prev.label,
                    domain=prev.domain,
                    csi=np.zeros(0, dtype=np.complex128),
                    present=False,
                )
            )
        out.append(cur)
    return out


def load_dataset(manifest_path: str | Path) -> tuple[DatasetManifest, list[list[RawCsiRecord]]]:
    """Load every session named by the manifest, in manifest order.

    Timestamp gaps are materialized as present=False records so that a
    session is a dense packet grid.
    """
    manifest = read_manifest(manifest_path)
    base = Path(manifest_path).parent
    sessions = []
    for meta in manifest.sessions:
        p = Path(meta.path)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise DataError(f"session file does not exist: {p}")
        sessions.append(materialize_gaps(read_session(p, manifest.D)))
    return manifest, sessions


def convert_wigesture(src_dir: str | Path, out_dir: str | Path, D: int | None = None) -> Path:
    """Best-effort converter from the public WiGesture CSV layout.

    Expects files named ``<gesture>-<person>.csv`` (or with those ids in
    any two leading dash-separated fields) whose rows carry a timestamp
    column followed by interleaved real/imaginary CSI integers. Emits the
    package's session format plus a manifest, and returns the manifest path.
    """
    src_dir, out_dir = Path(src_dir), Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    files = sorted(src_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no CSV files found in {src_dir}")
    sessions: list[SessionMeta] = []
    labels_seen: set[int] = set()
    domains_seen: set[int] = set()
    inferred_D = D
    for f in files:
        parts = f.stem.replace("_", "-").split("-")
        try:
            label, domain = int(parts[0]), int(parts[1])
        except (ValueError, IndexError) as exc:
            raise DataError(f"cannot infer (gesture, person) ids from file name {f.name}") from exc
        records = []
        with open(f, newline="") as fh:
            reader = csv.reader(fh)
            for row in reader:
                vals = [v for v in row if v.strip() != ""]
                if not vals:
                    continue
                try:
                    nums = [float(v) for v in vals]
                except ValueError:
                    continue  # header or annotation row
                ts = int(nums[0])
                iq = nums[1:]
                if len(iq) % 2:
                    iq = iq[:-1]
                if inferred_D is None:
                    inferred_D = len(iq) // 2
                if len(iq) != 2 * inferred_D:
                    continue  # truncated row
                csi = np.array(iq[0::2]) + 1j * np.array(iq[1::2])
                if records and ts <= records[-1].timestamp_ms:
                    ts = records[-1].timestamp_ms + 1
                records.append(RawCsiRecord(ts, label, domain, csi, True))
        if not records:
            continue
        name = f"session_{label}_{domain}.csv"
        write_session(records, out_dir / name, inferred_D)
        sessions.append(SessionMeta(path=name, domain=domain, label=label))
        labels_seen.add(label)
        domains_seen.add(domain)
    if inferred_D is None or not sessions:
        raise DataError(f"no convertible CSV content found in {src_dir}")
    manifest = DatasetManifest(
        D=inferred_D,
        t=100,
        stride=100,
        classes=[str(c) for c in sorted(labels_seen)],
        domains=[str(d) for d in sorted(domains_seen)],
        sessions=sessions,
    )
    manifest_path = out_dir / "manifest.yaml"
    write_manifest(manifest, manifest_path)
    return manifest_path
