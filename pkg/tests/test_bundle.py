"""Runtime bundle build/verify and the ordered startup checks."""

import gzip
import io
import json
import os
import tarfile

import pytest

from roadrisk.bundle import (PackagingError, build_runtime_bundle,
                             startup_check, verify_bundle)
from roadrisk.common import sha256_file
from roadrisk.config import ServiceConfig, Workspace
from roadrisk.model import save_bundle

from conftest import toy_model


def repack(src, dst, mutate):
    """Rewrite a tar.gz with the member list passed through `mutate`."""
    with tarfile.open(src, "r:gz") as tar:
        members = [(m.name, tar.extractfile(m).read())
                   for m in tar.getmembers() if m.isfile()]
    members = mutate(members)
    with open(dst, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            with tarfile.open(fileobj=gz, mode="w") as tar:
                for name, blob in members:
                    info = tarfile.TarInfo(name)
                    info.size = len(blob)
                    tar.addfile(info, io.BytesIO(blob))


def test_build_manifest_matches_tree(deployment, tmp_path):
    out = str(tmp_path / "bundle.tar.gz")
    manifest = build_runtime_bundle(deployment.ws.root, out)
    assert os.path.exists(out)
    paths = [e["path"] for e in manifest.entries]
    assert paths == sorted(paths)
    assert "models/baseline.json" in paths
    assert "work/segments.json" in paths
    assert "work/context.json" in paths
    assert "overlay/overlay.bin" in paths
    for entry in manifest.entries:
        on_disk = os.path.join(deployment.ws.root, entry["path"])
        assert sha256_file(on_disk) == entry["sha256"]
        assert os.path.getsize(on_disk) == entry["size"]
    skipped_paths = {s["path"] for s in manifest.skipped}
    assert "tiles" in skipped_paths  # never rendered in this fixture
    assert "forecast/forecast.json" in skipped_paths


def test_build_is_deterministic(deployment, tmp_path):
    a = str(tmp_path / "a.tar.gz")
    b = str(tmp_path / "b.tar.gz")
    m1 = build_runtime_bundle(deployment.ws.root, a)
    m2 = build_runtime_bundle(deployment.ws.root, b)
    assert m1.entries == m2.entries
    assert m1.skipped == m2.skipped
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_verify_clean_bundle(deployment, tmp_path):
    out = str(tmp_path / "bundle.tar.gz")
    build_runtime_bundle(deployment.ws.root, out)
    assert verify_bundle(out) == []


def test_verify_detects_single_byte_tamper(deployment, tmp_path):
    out = str(tmp_path / "bundle.tar.gz")
    build_runtime_bundle(deployment.ws.root, out)
    tampered = str(tmp_path / "tampered.tar.gz")

    def flip(members):
        fixed = []
        for name, blob in members:
            if name == "models/baseline.json":
                blob = bytes([blob[0] ^ 0x01]) + blob[1:]
            fixed.append((name, blob))
        return fixed

    repack(out, tampered, flip)
    violations = verify_bundle(tampered)
    assert violations == [{"path": "models/baseline.json",
                           "problem": "digest_mismatch"}]


def test_verify_detects_missing_member(deployment, tmp_path):
    out = str(tmp_path / "bundle.tar.gz")
    build_runtime_bundle(deployment.ws.root, out)
    gutted = str(tmp_path / "gutted.tar.gz")
    repack(out, gutted,
           lambda members: [m for m in members
                            if m[0] != "work/context.json"])
    violations = verify_bundle(gutted)
    assert {"path": "work/context.json", "problem": "missing"} in violations


def test_verify_detects_unlisted_member(deployment, tmp_path):
    out = str(tmp_path / "bundle.tar.gz")
    build_runtime_bundle(deployment.ws.root, out)
    padded = str(tmp_path / "padded.tar.gz")
    repack(out, padded,
           lambda members: members + [("smuggled.txt", b"hello")])
    violations = verify_bundle(padded)
    assert {"path": "smuggled.txt", "problem": "unlisted"} in violations


def test_verify_unreadable_archive_is_fatal(tmp_path):
    junk = tmp_path / "junk.tar.gz"
    junk.write_bytes(b"definitely not a tarball")
    with pytest.raises(PackagingError):
        verify_bundle(str(junk))
    with pytest.raises(PackagingError):
        build_runtime_bundle(str(tmp_path / "nope"), str(tmp_path / "o.tar.gz"))


def test_startup_check_complete_deployment(deployment):
    report = startup_check(deployment.ws, ServiceConfig())
    assert report.ok
    assert report.code is None
    assert report.artifacts["baseline"].meta["layer"] == "baseline"
    assert report.artifacts["segment"].meta["layer"] == "segment"
    assert len(report.artifacts["segments"]) == len(deployment.segments)
    assert report.artifacts["context"].eval_year == 2020
    assert report.artifacts["overlay"] is not None
    # tiles were never rendered, so at most a warning
    assert all("tile" in w for w in report.warnings)


def test_startup_check_missing_baseline(deployment):
    os.remove(deployment.ws.baseline_bundle_path)
    report = startup_check(deployment.ws, ServiceConfig())
    assert not report.ok
    assert report.code == "MODEL_MISSING"


def test_startup_check_corrupt_baseline(deployment):
    with open(deployment.ws.baseline_bundle_path, "w") as fh:
        fh.write("{ half a document")
    report = startup_check(deployment.ws, ServiceConfig())
    assert not report.ok
    assert report.code == "MODEL_CORRUPT"


def test_startup_check_wrong_layer(deployment):
    save_bundle(toy_model("segment"), deployment.ws.baseline_bundle_path)
    report = startup_check(deployment.ws, ServiceConfig())
    assert not report.ok
    assert report.code == "MODEL_CORRUPT"


def test_startup_check_missing_segments(deployment):
    os.remove(deployment.ws.segments_path)
    report = startup_check(deployment.ws, ServiceConfig())
    assert not report.ok
    assert report.code == "SEGMENTS_MISSING"


def test_startup_check_missing_context(deployment):
    os.remove(deployment.ws.context_path)
    report = startup_check(deployment.ws, ServiceConfig())
    assert not report.ok
    assert report.code == "CONTEXT_MISSING"


def test_startup_check_overlay_optional(deployment):
    os.remove(deployment.ws.overlay_path)
    report = startup_check(deployment.ws, ServiceConfig())
    assert report.ok
    assert report.artifacts["overlay"] is None
    assert any("overlay" in w for w in report.warnings)
