"""Episode manifests, training-pair sampling, dataset statistics and score aggregation.

File formats
------------
* Episode manifests and training pairs: JSON Lines, one record per line, with
  the field names of :class:`EpisodeManifest` / :class:`TrainingPair`.
* Frames: binary PPM (``P6``) files ``frame_000000.ppm`` ... inside the
  manifest's ``frames_dir`` (relative to the manifest file).
* Foresight score records: CSV with header ``image_id,split,fidelity,quality``.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import Image

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifests.jsonl"


class ManifestError(ValueError):
    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class OffsetPolicy(enum.Enum):
    HALF_LENGTH = "half"
    FINAL_STATE = "final"


@dataclass(frozen=True)
class SubtaskSegment:
    start_frame: int
    end_frame: int  # inclusive
    instruction: str


@dataclass(frozen=True)
class EpisodeManifest:
    episode_id: str
    fps: float
    frames_dir: str
    frame_count: int
    source: str
    subtasks: tuple[SubtaskSegment, ...]

    def validate(self) -> None:
        if not self.episode_id:
            raise ManifestError("episode_id", "must be nonempty")
        if not (isinstance(self.fps, (int, float)) and math.isfinite(self.fps) and self.fps > 0):
            raise ManifestError("fps", f"must be positive, got {self.fps!r}")
        if self.frame_count < 0:
            raise ManifestError("frame_count", "must be nonnegative")
        prev_end = -1
        for i, seg in enumerate(self.subtasks):
            if not 0 <= seg.start_frame <= seg.end_frame:
                raise ManifestError(f"subtasks[{i}].start_frame", f"bad bounds {seg.start_frame}..{seg.end_frame}")
            if seg.end_frame >= self.frame_count:
                raise ManifestError(f"subtasks[{i}].end_frame", f"{seg.end_frame} >= frame_count {self.frame_count}")
            if seg.start_frame <= prev_end:
                raise ManifestError(f"subtasks[{i}].start_frame", "segments overlap or are out of order")
            prev_end = seg.end_frame

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subtasks"] = [asdict(s) for s in self.subtasks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeManifest":
        for key in ("episode_id", "fps", "frames_dir", "frame_count", "source", "subtasks"):
            if key not in d:
                raise ManifestError(key, "missing")
        try:
            segments = tuple(
                SubtaskSegment(int(s["start_frame"]), int(s["end_frame"]), str(s["instruction"]))
                for s in d["subtasks"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError("subtasks", repr(exc)) from exc
        m = cls(str(d["episode_id"]), d["fps"], str(d["frames_dir"]), int(d["frame_count"]),
                str(d["source"]), segments)
        m.validate()
        return m


@dataclass(frozen=True)
class TrainingPair:
    episode_id: str
    subtask_index: int
    cond_frame: int
    future_frame: int
    instruction: str
    offset_policy: str


def condition_frames(start: int, end: int, fps: float) -> list[int]:
    """Frames at whole-second marks from ``start``: start + ceil(i * fps), i = 0, 1, ..."""
    rate = Fraction(fps).limit_denominator(10**6) if isinstance(fps, float) else Fraction(fps)
    out = []
    i = 0
    while (c := start + math.ceil(i * rate)) <= end:
        out.append(c)
        i += 1
    return out


def sample_pairs(manifest: EpisodeManifest, offset_policy: OffsetPolicy | str) -> list[TrainingPair]:
    manifest.validate()
    policy = OffsetPolicy(offset_policy)
    pairs = []
    for idx, seg in enumerate(manifest.subtasks):
        s, e = seg.start_frame, seg.end_frame
        for c in condition_frames(s, e, manifest.fps):
            if policy is OffsetPolicy.HALF_LENGTH:
                future = min(c + (e - s) // 2, e)
            else:
                future = e
            if future == c:
                continue
            pairs.append(TrainingPair(manifest.episode_id, idx, c, future, seg.instruction, policy.value))
    return pairs


def sample_all(manifests: Iterable[EpisodeManifest], offset_policy) -> list[TrainingPair]:
    pairs = [p for m in manifests for p in sample_pairs(m, offset_policy)]
    pairs.sort(key=lambda p: (p.episode_id, p.subtask_index, p.cond_frame))
    return pairs


def dataset_stats(manifests: Sequence[EpisodeManifest]) -> dict:
    per_source: Counter = Counter()
    pairs = {p.value: 0 for p in OffsetPolicy}
    for m in manifests:
        m.validate()
        per_source[m.source] += len(m.subtasks)
        for p in OffsetPolicy:
            pairs[p.value] += len(sample_pairs(m, p))
    return {
        "episodes": len(manifests),
        "subtasks_per_source": dict(sorted(per_source.items())),
        "total_subtasks": sum(per_source.values()),
        "pairs_per_policy": pairs,
    }


# -- score aggregation --------------------------------------------------------

SPLITS = ("InDist", "OOD")


@dataclass(frozen=True)
class ScoreRecord:
    image_id: str
    split: str
    fidelity: int
    quality: int

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.fidelity not in (0, 1) or self.quality not in (0, 1):
            raise ValueError("fidelity and quality scores are binary")


@dataclass(frozen=True)
class ScoreRow:
    split: str
    count: int
    fidelity: float | None
    quality: float | None

    def render(self) -> str:
        if self.count == 0:
            return f"{self.split},0,n/a,n/a  # warning: no records"
        return f"{self.split},{self.count},{self.fidelity:.2f},{self.quality:.2f}"


def aggregate_scores(records: Iterable[ScoreRecord]) -> list[ScoreRow]:
    by_split = {s: [] for s in SPLITS}
    for r in records:
        by_split[r.split].append(r)
    rows = []
    for split, recs in by_split.items():
        if not recs:
            log.warning("no score records for split %s", split)
            rows.append(ScoreRow(split, 0, None, None))
            continue
        n = len(recs)
        rows.append(ScoreRow(split, n, sum(r.fidelity for r in recs) / n, sum(r.quality for r in recs) / n))
    return rows


def format_score_table(rows: Sequence[ScoreRow]) -> str:
    return "\n".join(["split,n,fidelity,quality"] + [r.render() for r in rows]) + "\n"


def read_score_csv(path) -> list[ScoreRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"image_id", "split", "fidelity", "quality"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"score file is missing columns {sorted(missing)}")
        return [ScoreRecord(row["image_id"], row["split"], int(row["fidelity"]), int(row["quality"]))
                for row in reader]


# -- file IO ------------------------------------------------------------------

def write_jsonl(records: Iterable, path) -> None:
    with open(path, "w") as f:
        for r in records:
            d = r.to_dict() if hasattr(r, "to_dict") else asdict(r)
            f.write(json.dumps(d, sort_keys=True) + "\n")


def read_manifests(path) -> list[EpisodeManifest]:
    """Read a manifest file, or every ``*.jsonl`` manifest file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    out = []
    for file in files:
        for lineno, line in enumerate(file.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{file.name}:{lineno}", str(exc)) from exc
            out.append(EpisodeManifest.from_dict(d))
    return out


def write_ppm(image: Image, path) -> None:
    with open(path, "wb") as f:
        f.write(f"P6\n{image.width} {image.height}\n255\n".encode())
        f.write(image.data)


def read_ppm(path) -> Image:
    raw = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", raw)
    if m is None:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    width, height = int(m[1]), int(m[2])
    return Image(width, height, raw[m.end(): m.end() + width * height * 3])


def write_episode(frames: Sequence[Image], manifest: EpisodeManifest, root) -> Path:
    """Write frames under ``root/<frames_dir>`` and append the manifest line."""
    root = Path(root)
    frame_dir = root / manifest.frames_dir
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_ppm(frame, frame_dir / f"frame_{i:06d}.ppm")
    with open(root / MANIFEST_FILE, "a") as f:
        f.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    return frame_dir


def iter_frames(manifest: EpisodeManifest, root) -> Iterator[np.ndarray]:
    frame_dir = Path(root) / manifest.frames_dir
    for i in range(manifest.frame_count):
        yield read_ppm(frame_dir / f"frame_{i:06d}.ppm").to_array()
