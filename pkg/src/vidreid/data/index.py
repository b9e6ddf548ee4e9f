"""Tracklet catalog, on-disk layout and manifest parsing.

Layout: ``root/<identity>/<camera>/<tracklet>/<frame####>.png``. An optional
``manifest.csv`` in the root lists one tracklet per line as
``identity,camera,tracklet,split,relative_path_glob``.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DataError

log = logging.getLogger(__name__)

MANIFEST = "manifest.csv"
MANIFEST_HEADER = "identity,camera,tracklet,split,relative_path_glob"
SPLITS = ("train", "query", "gallery")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class TrackletRecord:
    identity: str
    camera: str
    tracklet: str
    split: str
    frames: tuple
    pattern: str = ""

    @property
    def key(self):
        return (self.identity, self.camera, self.tracklet)


@dataclass
class LoadReport:
    dropped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def warn(self, msg):
        log.warning(msg)
        self.warnings.append(msg)

    def __str__(self):
        lines = [f"dropped {len(self.dropped)} tracklet(s), {len(self.warnings)} warning(s)"]
        lines += [f"  - {w}" for w in self.warnings]
        return "\n".join(lines)


@dataclass
class TrackletIndex:
    root: Path
    records: list
    report: LoadReport = field(default_factory=LoadReport)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.key)
        seen = set()
        for r in self.records:
            if r.key in seen:
                raise DataError(f"duplicate tracklet {r.key}")
            if not r.frames:
                raise DataError(f"tracklet {r.key} has no frames")
            seen.add(r.key)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def train_identities(self) -> list:
        return sorted({r.identity for r in self.split("train")})

    def label_map(self) -> dict:
        return {pid: i for i, pid in enumerate(self.train_identities())}

    def cameras_by_identity(self, split="train") -> dict:
        cams = defaultdict(set)
        for r in self.split(split):
            cams[r.identity].add(r.camera)
        return cams

    def single_camera_identities(self) -> list:
        return sorted(pid for pid, cams in self.cameras_by_identity().items() if len(cams) < 2)

    def manifest_lines(self) -> list:
        return [",".join((r.identity, r.camera, r.tracklet, r.split, r.pattern)) for r in self.records]

    def write_manifest(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST
        path.write_text("\n".join([MANIFEST_HEADER] + self.manifest_lines()) + "\n")
        return path


def _frames_in(folder: Path) -> tuple:
    return tuple(sorted(p for p in folder.iterdir()
                        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES))


def default_split(keys) -> dict:
    """Assign train/query/gallery to ``(identity, camera, tracklet)`` keys.

    The first half of the sorted identities train. For the rest, tracklets
    from each identity's first camera are queries and the others gallery.
    """
    ids = sorted({k[0] for k in keys})
    train = set(ids[: (len(ids) + 1) // 2])
    first_cam = {}
    for pid, cam, _ in sorted(keys):
        first_cam.setdefault(pid, cam)
    out = {}
    for key in keys:
        pid, cam, _ = key
        if pid in train:
            out[key] = "train"
        else:
            out[key] = "query" if cam == first_cam[pid] else "gallery"
    return out


def _scan_generic(root: Path, report: LoadReport) -> dict:
    found = {}
    for id_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for cam_dir in sorted(p for p in id_dir.iterdir() if p.is_dir()):
            for trk_dir in sorted(p for p in cam_dir.iterdir() if p.is_dir()):
                key = (id_dir.name, cam_dir.name, trk_dir.name)
                frames = _frames_in(trk_dir)
                if not frames:
                    report.warn(f"empty tracklet {'/'.join(key)} dropped")
                    report.dropped.append(key)
                    continue
                rel = trk_dir.relative_to(root).as_posix()
                found[key] = (frames, f"{rel}/*{frames[0].suffix}")
    return found


def _read_manifest(root: Path, path: Path, report: LoadReport) -> list:
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line == MANIFEST_HEADER:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            report.warn(f"{path.name}:{lineno}: expected 5 fields, got {len(parts)}")
            continue
        pid, cam, trk, split, pattern = parts
        if split not in SPLITS:
            report.warn(f"{path.name}:{lineno}: unknown split {split!r}")
            continue
        frames = tuple(sorted(p for p in root.glob(pattern) if p.is_file()))
        if not frames:
            report.warn(f"{path.name}:{lineno}: no frames match {pattern!r}; dropped")
            report.dropped.append((pid, cam, trk))
            continue
        records.append(TrackletRecord(pid, cam, trk, split, frames, pattern))
    return records


def load_dataset_index(root, layout: str = "auto") -> TrackletIndex:
    """Build a :class:`TrackletIndex` from a dataset directory.

    ``layout`` is 'manifest', 'generic' or 'auto' (manifest when present).
    Problems are collected in ``index.report``; only an unusable train
    split raises.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    report = LoadReport()
    manifest = root / MANIFEST
    if layout == "auto":
        layout = "manifest" if manifest.exists() else "generic"
    if layout == "manifest":
        if not manifest.exists():
            raise DataError(f"no {MANIFEST} in {root}")
        records = _read_manifest(root, manifest, report)
    elif layout == "generic":
        found = _scan_generic(root, report)
        splits = default_split(list(found))
        records = [TrackletRecord(*key, splits[key], frames, pattern)
                   for key, (frames, pattern) in found.items()]
    else:
        raise DataError(f"unknown layout {layout!r}")

    index = TrackletIndex(root, records, report)
    for pid in index.single_camera_identities():
        report.warn(f"training identity {pid} appears under a single camera")
    usable = [pid for pid, cams in index.cameras_by_identity().items() if len(cams) >= 2]
    if not usable:
        raise DataError(f"train split in {root} has no identity seen by two cameras\n{report}")
    return index
