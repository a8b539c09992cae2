"""Filesystem access for sequence trees: loading, validation, atomic writes."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

from .data import (
    AnnotationSet,
    Detection,
    FormatError,
    SequenceMeta,
    collapse_classes,
    frame_filename,
    parse_annotations,
    parse_detections,
    parse_seqinfo,
    scan_annotations,
    serialize_annotations,
)

GT_FILE = os.path.join("gt", "gt.txt")
GT1_FILE = os.path.join("gt", "gt1.txt")
DET_FILE = os.path.join("det", "det.txt")


def write_text_atomic(path: str, text: str) -> None:
    """Write via a temp file in the target directory, then rename over."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def list_sequences(dataset_dir: str) -> tuple[str, ...]:
    """Names of subdirectories that look like sequences (have seqinfo.ini)."""
    if not os.path.isdir(dataset_dir):
        raise FileNotFoundError(f"not a directory: {dataset_dir}")
    names = [n for n in os.listdir(dataset_dir)
             if os.path.isfile(os.path.join(dataset_dir, n, "seqinfo.ini"))]
    return tuple(sorted(names))


def load_sequence_meta(seq_dir: str) -> SequenceMeta:
    path = os.path.join(seq_dir, "seqinfo.ini")
    with open(path, encoding="utf-8") as f:
        return parse_seqinfo(f.read())


def load_annotations(seq_dir: str, meta: SequenceMeta | None = None,
                     collapsed: bool = False) -> AnnotationSet:
    """Read gt/gt.txt (optionally applying single-class collapse)."""
    path = os.path.join(seq_dir, GT_FILE)
    with open(path, encoding="utf-8") as f:
        ann = parse_annotations(f.read(),
                                seq_length=meta.seq_length if meta else None)
    return collapse_classes(ann) if collapsed else ann


def load_detections(seq_dir: str) -> tuple[Detection, ...]:
    path = os.path.join(seq_dir, DET_FILE)
    with open(path, encoding="utf-8") as f:
        return parse_detections(f.read())


def write_sequence_tree(seq_dir: str, meta: SequenceMeta, ann: AnnotationSet,
                        detections=None) -> None:
    """Materialize a full sequence directory.

    Frame images are zero-byte placeholders with the correct names; image
    payloads are out of scope here. gt1.txt is always written alongside
    gt.txt as its class-collapsed copy.
    """
    from .data import serialize_detections, serialize_seqinfo

    os.makedirs(seq_dir, exist_ok=True)
    write_text_atomic(os.path.join(seq_dir, "seqinfo.ini"), serialize_seqinfo(meta))
    for sub in (meta.visible_dir, meta.infrared_dir):
        d = os.path.join(seq_dir, sub)
        os.makedirs(d, exist_ok=True)
        for i in range(1, meta.seq_length + 1):
            with open(os.path.join(d, frame_filename(i)), "wb"):
                pass
    write_text_atomic(os.path.join(seq_dir, GT_FILE), serialize_annotations(ann))
    write_text_atomic(os.path.join(seq_dir, GT1_FILE),
                      serialize_annotations(collapse_classes(ann)))
    if detections is not None:
        write_text_atomic(os.path.join(seq_dir, DET_FILE),
                          serialize_detections(detections))


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    location: str  # file or directory the issue is about
    message: str


@dataclass(frozen=True)
class ValidationReport:
    sequence: str
    issues: tuple[ValidationIssue, ...]

    @property
    def is_valid(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "is_valid": self.is_valid,
            "issues": [
                {"severity": i.severity, "location": i.location, "message": i.message}
                for i in self.issues
            ],
        }


def _check_frame_dir(seq_dir: str, subdir: str, seq_length: int,
                     issues: list[ValidationIssue]) -> set[str] | None:
    d = os.path.join(seq_dir, subdir)
    if not os.path.isdir(d):
        issues.append(ValidationIssue("error", subdir, "image directory missing"))
        return None
    names = set(os.listdir(d))
    expected = {frame_filename(i) for i in range(1, seq_length + 1)}
    if len(names) != seq_length:
        issues.append(ValidationIssue(
            "error", subdir,
            f"frame count mismatch: seqinfo says {seq_length}, found {len(names)}"))
    missing = sorted(expected - names)
    extra = sorted(names - expected)
    if missing:
        issues.append(ValidationIssue(
            "error", subdir,
            f"missing frames: {', '.join(missing[:3])}"
            + (f" and {len(missing) - 3} more" if len(missing) > 3 else "")))
    if extra:
        issues.append(ValidationIssue(
            "error", subdir,
            f"unexpected files: {', '.join(extra[:3])}"
            + (f" and {len(extra) - 3} more" if len(extra) > 3 else "")))
    return names


def validate_sequence(seq_dir: str) -> ValidationReport:
    """Check one sequence tree against the on-disk contract.

    Collects every problem it can find as an issue entry; it never raises
    for bad input, only for a missing directory argument.
    """
    seq_name = os.path.basename(os.path.normpath(seq_dir))
    issues: list[ValidationIssue] = []
    if not os.path.isdir(seq_dir):
        return ValidationReport(seq_name, (
            ValidationIssue("error", seq_dir, "sequence directory missing"),))

    meta = None
    info_path = os.path.join(seq_dir, "seqinfo.ini")
    try:
        with open(info_path, encoding="utf-8") as f:
            meta = parse_seqinfo(f.read())
    except OSError as e:
        issues.append(ValidationIssue("error", "seqinfo.ini", f"unreadable: {e}"))
    except FormatError as e:
        issues.append(ValidationIssue("error", "seqinfo.ini", str(e)))

    if meta is not None:
        if meta.name != seq_name:
            issues.append(ValidationIssue(
                "warning", "seqinfo.ini",
                f"name {meta.name!r} differs from directory name {seq_name!r}"))
        vis = _check_frame_dir(seq_dir, meta.visible_dir, meta.seq_length, issues)
        ir = _check_frame_dir(seq_dir, meta.infrared_dir, meta.seq_length, issues)
        if vis is not None and ir is not None and vis != ir:
            only_vis = sorted(vis - ir)[:3]
            only_ir = sorted(ir - vis)[:3]
            issues.append(ValidationIssue(
                "error", "visible/infrared",
                "paired frame filenames differ between modalities"
                f" (visible-only: {only_vis}, infrared-only: {only_ir})"))

    gt_path = os.path.join(seq_dir, GT_FILE)
    ann = None
    try:
        with open(gt_path, encoding="utf-8") as f:
            gt_text = f.read()
    except OSError as e:
        issues.append(ValidationIssue("error", GT_FILE, f"unreadable: {e}"))
    else:
        ann, format_issues = scan_annotations(
            gt_text, seq_length=meta.seq_length if meta else None)
        for fe in format_issues:
            issues.append(ValidationIssue("error", GT_FILE, str(fe)))
        if len(ann) == 0 and not format_issues:
            issues.append(ValidationIssue("warning", GT_FILE, "no annotations"))

    gt1_path = os.path.join(seq_dir, GT1_FILE)
    if ann is not None and os.path.isfile(gt1_path):
        try:
            with open(gt1_path, encoding="utf-8") as f:
                gt1_text = f.read()
        except OSError as e:
            issues.append(ValidationIssue("error", GT1_FILE, f"unreadable: {e}"))
        else:
            if gt1_text != serialize_annotations(collapse_classes(ann)):
                issues.append(ValidationIssue(
                    "error", GT1_FILE,
                    "not the canonical class-collapsed copy of gt.txt"))

    det_path = os.path.join(seq_dir, DET_FILE)
    if os.path.isfile(det_path):
        try:
            with open(det_path, encoding="utf-8") as f:
                parse_detections(f.read())
        except OSError as e:
            issues.append(ValidationIssue("error", DET_FILE, f"unreadable: {e}"))
        except FormatError as e:
            issues.append(ValidationIssue("error", DET_FILE, str(e)))

    return ValidationReport(seq_name, tuple(issues))
