"""Runtime packaging: verifiable tarball plus fail-fast startup checks.

Archives are byte-reproducible: members are added in lexicographic path
order with zeroed metadata, the gzip header carries no timestamp, and the
manifest pins a SHA-256 per member. Startup checks load every mandatory
artifact in a fixed order and stop at the first fatal problem with a
machine-readable code.
"""

from __future__ import annotations

import gzip
import io
import json
import os
import tarfile
from dataclasses import dataclass, field

from .common import RoadRiskError, dump_json, sha256_bytes
from .features import ContextMissingError, load_context
from .model import (BundleCorruptError, BundleVersionError, ModelMissingError,
                    load_bundle)
from .overlay import OverlayError, load_overlay
from .segments import SegmentError, load_segments

TOOL_VERSION = "rrm-bundle-v1"
MANIFEST_NAME = "manifest.json"

# category name -> workspace-relative path; directories are walked
DEFAULT_INCLUDE = {
    "config": "config.json",
    "models": "models",
    "segments": "work/segments.json",
    "context": "work/context.json",
    "overlay": "overlay",
    "forecast": "forecast/forecast.json",
    "tiles": "tiles",
    "reports": "reports",
    "static": "static",
    "docs": "README.md",
}


class PackagingError(RoadRiskError):
    def __init__(self, message: str, code: str = "BUNDLE_CORRUPT"):
        super().__init__(message, code)


@dataclass
class BundleManifest:
    created_at: str
    entries: list
    skipped: list
    tool_version: str = TOOL_VERSION

    def to_json(self) -> dict:
        return {"created_at": self.created_at, "entries": self.entries,
                "skipped": self.skipped, "tool_version": self.tool_version}


def _collect_files(source_root: str, include_rules: dict):
    """(relative path, absolute path) pairs plus skipped categories."""
    files = []
    skipped = []
    for category in sorted(include_rules):
        rel = include_rules[category]
        abs_path = os.path.join(source_root, rel)
        if not os.path.exists(abs_path):
            skipped.append({"path": rel, "reason": "missing"})
            continue
        if os.path.isdir(abs_path):
            found_any = False
            for dirpath, dirnames, filenames in os.walk(abs_path):
                dirnames.sort()
                for name in sorted(filenames):
                    full = os.path.join(dirpath, name)
                    files.append((os.path.relpath(full, source_root), full))
                    found_any = True
            if not found_any:
                skipped.append({"path": rel, "reason": "empty"})
        else:
            files.append((rel, abs_path))
    files.sort(key=lambda pair: pair[0])
    return files, skipped


def build_runtime_bundle(source_root: str, out_path: str,
                         include_rules: dict | None = None) -> BundleManifest:
    """Deterministic tar.gz with manifest.json at the archive root.

    Categories whose path is absent are itemized under `skipped`, never
    fatal. Identical trees produce byte-identical archives.
    """
    if not os.path.isdir(source_root):
        raise PackagingError(f"source root not a directory: {source_root}")
    rules = DEFAULT_INCLUDE if include_rules is None else include_rules
    files, skipped = _collect_files(source_root, rules)

    entries = []
    blobs = []
    for rel, full in files:
        with open(full, "rb") as fh:
            blob = fh.read()
        entries.append({"path": rel.replace(os.sep, "/"), "size": len(blob),
                        "sha256": sha256_bytes(blob)})
        blobs.append(blob)
    # zeroed so identical trees give identical bytes; see module docstring
    manifest = BundleManifest("1970-01-01T00:00:00Z", entries, skipped)
    manifest_blob = (dump_json(manifest.to_json(), indent=1) + "\n").encode()

    def member(name: str, size: int) -> tarfile.TarInfo:
        info = tarfile.TarInfo(name)
        info.size = size
        info.mtime = 0
        info.uid = info.gid = 0
        info.uname = info.gname = ""
        info.mode = 0o644
        return info

    try:
        with open(out_path, "wb") as raw:
            # filename="" keeps the gzip FNAME header empty so the output
            # path never leaks into the bytes
            with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0,
                               compresslevel=6, filename="") as gz:
                with tarfile.open(fileobj=gz, mode="w",
                                  format=tarfile.GNU_FORMAT) as tar:
                    tar.addfile(member(MANIFEST_NAME, len(manifest_blob)),
                                io.BytesIO(manifest_blob))
                    for (rel, _), blob in zip(files, blobs):
                        tar.addfile(member(rel.replace(os.sep, "/"), len(blob)),
                                    io.BytesIO(blob))
    except OSError as e:
        raise PackagingError(f"cannot write bundle {out_path}: {e}") from e
    return manifest


def verify_bundle(path: str) -> list:
    """Recompute every member digest; [] means the bundle checks out.

    Violations are {path, problem} rows: digest mismatches, manifest
    entries missing from the archive, and archive files the manifest
    does not list.
    """
    try:
        with tarfile.open(path, mode="r:gz") as tar:
            members = {m.name: tar.extractfile(m).read()
                       for m in tar.getmembers() if m.isfile()}
    except (OSError, tarfile.TarError, EOFError) as e:
        raise PackagingError(f"unreadable bundle {path}: {e}") from e
    if MANIFEST_NAME not in members:
        raise PackagingError(f"{path}: no {MANIFEST_NAME} at archive root")
    try:
        manifest = json.loads(members[MANIFEST_NAME])
        entries = {e["path"]: e for e in manifest["entries"]}
    except (ValueError, KeyError, TypeError) as e:
        raise PackagingError(f"{path}: malformed manifest: {e}") from e

    violations = []
    for rel, entry in sorted(entries.items()):
        blob = members.get(rel)
        if blob is None:
            violations.append({"path": rel, "problem": "missing"})
            continue
        if sha256_bytes(blob) != entry["sha256"]:
            violations.append({"path": rel, "problem": "digest_mismatch"})
        elif len(blob) != entry["size"]:
            violations.append({"path": rel, "problem": "size_mismatch"})
    for name in sorted(members):
        if name != MANIFEST_NAME and name not in entries:
            violations.append({"path": name, "problem": "unlisted"})
    return violations


@dataclass
class StartupReport:
    ok: bool
    code: str | None = None
    message: str | None = None
    warnings: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)


def startup_check(workspace, service_config) -> StartupReport:
    """Ordered, side-effect-free artifact checks before the port binds.

    Stops at the first fatal failure: baseline model, segment model, the
    segments store, and the pipeline context are mandatory; overlay and
    pre-rendered tiles only warn. Loaded artifacts ride along so the
    caller does not read everything twice.
    """
    report = StartupReport(ok=True)

    def fatal(code: str, message: str) -> StartupReport:
        return StartupReport(ok=False, code=code, message=message,
                             warnings=report.warnings)

    try:
        baseline = load_bundle(workspace.baseline_bundle_path)
    except ModelMissingError as e:
        return fatal("MODEL_MISSING", str(e))
    except (BundleCorruptError, BundleVersionError) as e:
        return fatal("MODEL_CORRUPT", str(e))
    if baseline.meta.get("layer") != "baseline":
        return fatal("MODEL_CORRUPT",
                     f"{workspace.baseline_bundle_path}: not a baseline-layer model")

    try:
        segment_model = load_bundle(workspace.segment_bundle_path)
    except ModelMissingError as e:
        return fatal("MODEL_MISSING", str(e))
    except (BundleCorruptError, BundleVersionError) as e:
        return fatal("MODEL_CORRUPT", str(e))
    if segment_model.meta.get("layer") != "segment":
        return fatal("MODEL_CORRUPT",
                     f"{workspace.segment_bundle_path}: not a segment-layer model")

    try:
        segments, segments_doc = load_segments(workspace.segments_path)
    except (SegmentError, OSError) as e:
        return fatal("SEGMENTS_MISSING", str(e))

    try:
        context = load_context(workspace.context_path)
    except ContextMissingError as e:
        return fatal("CONTEXT_MISSING", str(e))

    overlay = None
    try:
        overlay = load_overlay(workspace.overlay_path)
    except OverlayError as e:
        report.warnings.append(f"overlay unavailable: {e}")

    if not os.path.isdir(workspace.tiles_dir):
        report.warnings.append("no pre-rendered tile directory")

    if service_config.smtp is None:
        log_dir = os.path.dirname(workspace.contact_log_path) or "."
        if not os.path.isdir(log_dir):
            return fatal("CONFIG_INVALID",
                         f"contact log directory missing: {log_dir}")

    report.artifacts = {
        "baseline": baseline,
        "segment": segment_model,
        "segments": segments,
        "segments_doc": segments_doc,
        "context": context,
        "overlay": overlay,
    }
    return report
