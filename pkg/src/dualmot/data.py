"""Sequence metadata, annotation files, validation, and corpus statistics.

On-disk layout per sequence::

    <seq>/
        seqinfo.ini        MOT-style metadata, [Sequence] section
        visible/NNNNNN.jpg paired frame images, 1-based 6-digit names
        infrared/NNNNNN.jpg
        gt/gt.txt          9-column annotations (see AnnotationRecord)
        gt/gt1.txt         optional class-collapsed copy of gt.txt
        det/det.txt        optional 8-column detections (see Detection)

Annotation rows are ``frame,track_id,x,y,w,h,valid,category,reserved``.
Detection rows are ``frame,x,y,w,h,score,category,modality``.

Serialization is canonical: ``\\n`` line endings, newline-terminated, no
padding, integer-valued reals printed without a decimal point and other
reals with ``repr`` (shortest round-trip form). Parsing a canonical file
and serializing the result is byte-identical.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from bisect import bisect_left

from .assignment import Box

PLATFORMS = ("UAV", "surveillance", "handheld", "unknown")
# acquisition platforms in reporting order; "unknown" tags untagged data
GROUPABLE_PLATFORMS = ("handheld", "surveillance", "UAV")
MODALITIES = ("V", "T", "F")

# right-closed area bin edges: (0,11^2], (11^2,22^2], ... (96^2, inf)
SCALE_EDGES = (121.0, 484.0, 1024.0, 4096.0, 9216.0)

FRAME_EXT = ".jpg"


class FormatError(ValueError):
    """A sequence file violates the on-disk contract.

    ``code`` is one of MissingKey, InvalidValue, ColumnCount, InvalidClass,
    DuplicateTrack, FrameOutOfRange. ``line`` is the 1-based offending line
    when the error is positional.
    """

    def __init__(self, code: str, message: str, line: int | None = None):
        self.code = code
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{code}: {prefix}{message}")


@dataclass(frozen=True)
class SequenceMeta:
    """Parsed seqinfo.ini for one visible/infrared sequence pair."""

    name: str
    frame_rate: float
    seq_length: int
    visible_dir: str
    infrared_dir: str
    visible_width: int
    visible_height: int
    infrared_width: int
    infrared_height: int
    platform: str = "unknown"

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise FormatError("InvalidValue", "frame rate must be positive")
        if self.seq_length < 1:
            raise FormatError("InvalidValue", "sequence length must be >= 1")
        for d in (self.visible_width, self.visible_height,
                  self.infrared_width, self.infrared_height):
            if d <= 0:
                raise FormatError("InvalidValue", "image dimensions must be positive")
        if self.platform not in PLATFORMS:
            raise FormatError("InvalidValue", f"unknown platform {self.platform!r}")


@dataclass(frozen=True)
class AnnotationRecord:
    """One ground-truth box: 9 columns, MOT-style.

    ``valid`` is 1 for boxes that count as evaluation ground truth and 0
    for annotated-but-excluded ones; both are kept when parsing.
    ``category`` is 1 or 2; ``reserved`` is the fixed ninth column.
    """

    frame: int
    track_id: int
    x: float
    y: float
    w: float
    h: float
    valid: int
    category: int
    reserved: int = 1

    def __post_init__(self):
        if self.frame < 1:
            raise FormatError("InvalidValue", "frame index must be >= 1")
        if self.track_id < 1:
            raise FormatError("InvalidValue", "track id must be >= 1")
        if self.w <= 0 or self.h <= 0:
            raise FormatError("InvalidValue", "box width/height must be positive")
        if self.valid not in (0, 1):
            raise FormatError("InvalidValue", "valid flag must be 0 or 1")
        if self.category not in (1, 2):
            raise FormatError("InvalidClass", f"category must be 1 or 2, got {self.category}")
        if self.reserved != 1:
            raise FormatError("InvalidValue", "reserved column must be 1")

    @property
    def box(self) -> Box:
        return Box(self.x, self.y, self.w, self.h)


class AnnotationSet:
    """Immutable annotation collection, sorted by (frame, track_id).

    A track id appears at most once per frame; duplicates raise
    FormatError(DuplicateTrack).
    """

    def __init__(self, records):
        recs = sorted(records, key=lambda r: (r.frame, r.track_id))
        for a, b in zip(recs, recs[1:]):
            if a.frame == b.frame and a.track_id == b.track_id:
                raise FormatError(
                    "DuplicateTrack",
                    f"track {b.track_id} appears twice in frame {b.frame}")
        self.records: tuple[AnnotationRecord, ...] = tuple(recs)
        by_frame: dict[int, list[AnnotationRecord]] = {}
        for r in self.records:
            by_frame.setdefault(r.frame, []).append(r)
        self._by_frame = {f: tuple(rs) for f, rs in by_frame.items()}

    def frame(self, frame: int) -> tuple[AnnotationRecord, ...]:
        return self._by_frame.get(frame, ())

    def frames(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_frame))

    def track_ids(self) -> tuple[int, ...]:
        return tuple(sorted({r.track_id for r in self.records}))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, AnnotationSet) and self.records == other.records

    def __hash__(self):
        return hash(self.records)

    def __repr__(self) -> str:
        return f"AnnotationSet({len(self.records)} records)"


@dataclass(frozen=True)
class Detection:
    """One detector output box for a frame, with confidence and modality.

    ``modality`` is V (visible), T (thermal) or F (fused, i.e. confirmed by
    both sensors).
    """

    frame: int
    box: Box
    score: float
    category: int
    modality: str

    def __post_init__(self):
        if self.frame < 1:
            raise FormatError("InvalidValue", "frame index must be >= 1")
        if self.box.w <= 0 or self.box.h <= 0:
            raise FormatError("InvalidValue", "box width/height must be positive")
        if self.category not in (1, 2):
            raise FormatError("InvalidClass", f"category must be 1 or 2, got {self.category}")
        if self.modality not in MODALITIES:
            raise FormatError("InvalidValue", f"modality must be one of {MODALITIES}")


# ---------------------------------------------------------------------------
# seqinfo.ini

_REQUIRED_KEYS = ("name", "imDir", "frameRate", "seqLength", "imWidth",
                  "imHeight", "imDirIr", "imWidthIr", "imHeightIr")


def parse_seqinfo(text: str) -> SequenceMeta:
    """Parse seqinfo.ini text. Unknown keys are ignored; platform defaults
    to "unknown" when the key is absent."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # seqinfo keys are camelCase
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise FormatError("InvalidValue", f"unparseable seqinfo: {e}") from e
    if not cp.has_section("Sequence"):
        raise FormatError("MissingKey", "missing [Sequence] section")
    sec = cp["Sequence"]
    for key in _REQUIRED_KEYS:
        if key not in sec:
            raise FormatError("MissingKey", f"missing required key {key!r}")

    def intval(key: str) -> int:
        try:
            return int(sec[key])
        except ValueError:
            raise FormatError("InvalidValue", f"{key} must be an integer, got {sec[key]!r}") from None

    def floatval(key: str) -> float:
        try:
            return float(sec[key])
        except ValueError:
            raise FormatError("InvalidValue", f"{key} must be numeric, got {sec[key]!r}") from None

    return SequenceMeta(
        name=sec["name"],
        frame_rate=floatval("frameRate"),
        seq_length=intval("seqLength"),
        visible_dir=sec["imDir"],
        infrared_dir=sec["imDirIr"],
        visible_width=intval("imWidth"),
        visible_height=intval("imHeight"),
        infrared_width=intval("imWidthIr"),
        infrared_height=intval("imHeightIr"),
        platform=sec.get("platform", "unknown"),
    )


def serialize_seqinfo(meta: SequenceMeta) -> str:
    """Canonical seqinfo.ini text for a metadata record."""
    out = io.StringIO()
    out.write("[Sequence]\n")
    out.write(f"name={meta.name}\n")
    out.write(f"imDir={meta.visible_dir}\n")
    out.write(f"frameRate={_fmt_real(meta.frame_rate)}\n")
    out.write(f"seqLength={meta.seq_length}\n")
    out.write(f"imWidth={meta.visible_width}\n")
    out.write(f"imHeight={meta.visible_height}\n")
    out.write(f"imExt={FRAME_EXT}\n")
    out.write(f"imDirIr={meta.infrared_dir}\n")
    out.write(f"imWidthIr={meta.infrared_width}\n")
    out.write(f"imHeightIr={meta.infrared_height}\n")
    out.write(f"platform={meta.platform}\n")
    return out.getvalue()


def frame_filename(index: int) -> str:
    return f"{index:06d}{FRAME_EXT}"


# ---------------------------------------------------------------------------
# annotation text

def _fmt_real(v: float) -> str:
    # integer-valued reals print without a decimal point; repr otherwise
    # (shortest round-trip decimal), so serialization is canonical
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError("InvalidValue", f"{what} must be an integer, got {token!r}",
                          line=lineno) from None


def _parse_real(token: str, what: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise FormatError("InvalidValue", f"{what} must be numeric, got {token!r}",
                          line=lineno) from None
    if v != v or v in (float("inf"), float("-inf")):
        raise FormatError("InvalidValue", f"{what} must be finite", line=lineno)
    return v


def _parse_annotation_line(line: str, lineno: int,
                           seq_length: int | None) -> AnnotationRecord:
    parts = line.split(",")
    if len(parts) != 9:
        raise FormatError("ColumnCount",
                          f"expected 9 columns, got {len(parts)}", line=lineno)
    frame = _parse_int(parts[0], "frame", lineno)
    track_id = _parse_int(parts[1], "track id", lineno)
    x = _parse_real(parts[2], "x", lineno)
    y = _parse_real(parts[3], "y", lineno)
    w = _parse_real(parts[4], "w", lineno)
    h = _parse_real(parts[5], "h", lineno)
    valid = _parse_int(parts[6], "valid flag", lineno)
    category = _parse_int(parts[7], "category", lineno)
    reserved = _parse_int(parts[8], "reserved", lineno)
    try:
        rec = AnnotationRecord(frame, track_id, x, y, w, h, valid, category, reserved)
    except FormatError as e:
        raise FormatError(e.code, e.args[0].split(": ", 1)[-1], line=lineno) from None
    if seq_length is not None and rec.frame > seq_length:
        raise FormatError("FrameOutOfRange",
                          f"frame {rec.frame} exceeds sequence length {seq_length}",
                          line=lineno)
    return rec


def parse_annotations(text: str, seq_length: int | None = None) -> AnnotationSet:
    """Parse 9-column annotation text, raising on the first violation."""
    records = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip("\r")
        if not line:
            continue
        rec = _parse_annotation_line(line, lineno, seq_length)
        key = (rec.frame, rec.track_id)
        if key in seen:
            raise FormatError("DuplicateTrack",
                              f"track {rec.track_id} appears twice in frame {rec.frame}",
                              line=lineno)
        seen.add(key)
        records.append(rec)
    return AnnotationSet(records)


def scan_annotations(text: str, seq_length: int | None = None
                     ) -> tuple[AnnotationSet, list[FormatError]]:
    """Lenient parse: collect every violation, keep the conforming records.

    Used by the validator; offending lines (including duplicates after the
    first occurrence) are dropped from the returned set.
    """
    records = []
    issues: list[FormatError] = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip("\r")
        if not line:
            continue
        try:
            rec = _parse_annotation_line(line, lineno, seq_length)
        except FormatError as e:
            issues.append(e)
            continue
        key = (rec.frame, rec.track_id)
        if key in seen:
            issues.append(FormatError(
                "DuplicateTrack",
                f"track {rec.track_id} appears twice in frame {rec.frame}",
                line=lineno))
            continue
        seen.add(key)
        records.append(rec)
    return AnnotationSet(records), issues


def serialize_annotations(ann: AnnotationSet) -> str:
    """Canonical text for an annotation set (newline-terminated lines)."""
    out = io.StringIO()
    for r in ann.records:
        out.write(f"{r.frame},{r.track_id},{_fmt_real(r.x)},{_fmt_real(r.y)},"
                  f"{_fmt_real(r.w)},{_fmt_real(r.h)},{r.valid},{r.category},"
                  f"{r.reserved}\n")
    return out.getvalue()


def collapse_classes(ann: AnnotationSet) -> AnnotationSet:
    """Set every category label to 1 (single-class evaluation semantics)."""
    return AnnotationSet(replace(r, category=1) for r in ann.records)


# ---------------------------------------------------------------------------
# detection text

def parse_detections(text: str) -> tuple[Detection, ...]:
    """Parse 8-column detection text (frame,x,y,w,h,score,category,modality)."""
    dets = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip("\r")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise FormatError("ColumnCount",
                              f"expected 8 columns, got {len(parts)}", line=lineno)
        frame = _parse_int(parts[0], "frame", lineno)
        x = _parse_real(parts[1], "x", lineno)
        y = _parse_real(parts[2], "y", lineno)
        w = _parse_real(parts[3], "w", lineno)
        h = _parse_real(parts[4], "h", lineno)
        score = _parse_real(parts[5], "score", lineno)
        category = _parse_int(parts[6], "category", lineno)
        modality = parts[7]
        try:
            dets.append(Detection(frame, Box(x, y, w, h), score, category, modality))
        except FormatError as e:
            raise FormatError(e.code, e.args[0].split(": ", 1)[-1], line=lineno) from None
    dets.sort(key=lambda d: d.frame)
    return tuple(dets)


def serialize_detections(dets) -> str:
    out = io.StringIO()
    for d in sorted(dets, key=lambda d: d.frame):
        out.write(f"{d.frame},{_fmt_real(d.box.x)},{_fmt_real(d.box.y)},"
                  f"{_fmt_real(d.box.w)},{_fmt_real(d.box.h)},{_fmt_real(d.score)},"
                  f"{d.category},{d.modality}\n")
    return out.getvalue()


def detections_by_frame(dets, n_frames: int) -> list[list[Detection]]:
    """Bucket detections into per-frame lists, index 0 = frame 1."""
    frames: list[list[Detection]] = [[] for _ in range(n_frames)]
    for d in dets:
        if d.frame > n_frames:
            raise FormatError("FrameOutOfRange",
                              f"detection frame {d.frame} exceeds sequence length {n_frames}")
        frames[d.frame - 1].append(d)
    return frames


# ---------------------------------------------------------------------------
# trajectories

class TrajectorySet:
    """Per-track box samples: track_id -> ordered (frame, box) pairs.

    At most one box per track per frame. This is the shape both the
    metrics and the tracker speak; ground truth and results meet here.
    """

    def __init__(self, samples: dict[int, list[tuple[int, Box]]]):
        tracks: dict[int, tuple[tuple[int, Box], ...]] = {}
        by_frame: dict[int, list[tuple[int, Box]]] = {}
        for tid in sorted(samples):
            if tid < 1:
                raise ValueError(f"track id must be >= 1, got {tid}")
            entries = sorted(samples[tid], key=lambda fb: fb[0])
            for (f1, _), (f2, _) in zip(entries, entries[1:]):
                if f1 == f2:
                    raise ValueError(f"track {tid} has two boxes in frame {f1}")
            tracks[tid] = tuple(entries)
            for f, b in entries:
                by_frame.setdefault(f, []).append((tid, b))
        self._tracks = tracks
        self._by_frame = {f: tuple(sorted(v, key=lambda tb: tb[0]))
                          for f, v in by_frame.items()}

    @classmethod
    def from_annotations(cls, ann: AnnotationSet,
                         include_invalid: bool = False) -> "TrajectorySet":
        samples: dict[int, list[tuple[int, Box]]] = {}
        for r in ann.records:
            if not include_invalid and r.valid != 1:
                continue
            samples.setdefault(r.track_id, []).append((r.frame, r.box))
        return cls(samples)

    def at(self, frame: int) -> tuple[tuple[int, Box], ...]:
        """(track_id, box) pairs present in a frame, sorted by id."""
        return self._by_frame.get(frame, ())

    def track(self, track_id: int) -> tuple[tuple[int, Box], ...]:
        return self._tracks[track_id]

    def ids(self) -> tuple[int, ...]:
        return tuple(self._tracks)

    def max_frame(self) -> int:
        return max(self._by_frame, default=0)

    def n_boxes(self) -> int:
        return sum(len(t) for t in self._tracks.values())

    def __len__(self) -> int:
        return len(self._tracks)

    def __eq__(self, other) -> bool:
        return isinstance(other, TrajectorySet) and self._tracks == other._tracks


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class DatasetStats:
    """Corpus-level counts and the ratios derived from them.

    ``density`` is boxes per frame; ``avg_length_s`` is the mean sequence
    duration in seconds. Both are None when the corpus is empty. Box counts
    include valid=0 records (they describe the files, not the benchmark).
    ``scale_histogram`` buckets box areas into six right-closed bins with
    edges 11^2, 22^2, 32^2, 64^2, 96^2.
    """

    n_videos: int
    n_frames: int
    n_tracks: int
    n_boxes: int
    density: float | None
    avg_length_s: float | None
    scale_histogram: tuple[int, int, int, int, int, int]
    class_tracks: tuple[int, int]
    class_boxes: tuple[int, int]

    @classmethod
    def from_counts(cls, n_videos: int, n_frames: int, n_boxes: int,
                    frame_rate: float, n_tracks: int = 0,
                    scale_histogram=(0, 0, 0, 0, 0, 0),
                    class_tracks=(0, 0), class_boxes=(0, 0)) -> "DatasetStats":
        """Build stats from already-aggregated counts (uniform frame rate)."""
        density = n_boxes / n_frames if n_frames > 0 else None
        avg = (n_frames / frame_rate / n_videos) if n_videos > 0 else None
        return cls(n_videos, n_frames, n_tracks, n_boxes, density, avg,
                   tuple(scale_histogram), tuple(class_tracks), tuple(class_boxes))


def scale_bin(area: float) -> int:
    """Right-closed area bin in 1..6; e.g. an area of exactly 32^2 is bin 3."""
    return bisect_left(SCALE_EDGES, area) + 1


def dataset_stats(items) -> DatasetStats:
    """Aggregate (SequenceMeta, AnnotationSet) pairs into corpus statistics."""
    n_videos = 0
    n_frames = 0
    n_tracks = 0
    n_boxes = 0
    seconds = 0.0
    hist = [0] * 6
    class_tracks = [0, 0]
    class_boxes = [0, 0]
    for meta, ann in items:
        n_videos += 1
        n_frames += meta.seq_length
        seconds += meta.seq_length / meta.frame_rate
        n_tracks += len(ann.track_ids())
        n_boxes += len(ann)
        track_class: set[tuple[int, int]] = set()
        for r in ann.records:
            hist[scale_bin(r.w * r.h) - 1] += 1
            class_boxes[r.category - 1] += 1
            track_class.add((r.track_id, r.category))
        for _, cat in track_class:
            class_tracks[cat - 1] += 1
    density = n_boxes / n_frames if n_frames > 0 else None
    avg = seconds / n_videos if n_videos > 0 else None
    return DatasetStats(n_videos, n_frames, n_tracks, n_boxes, density, avg,
                        tuple(hist), tuple(class_tracks), tuple(class_boxes))
