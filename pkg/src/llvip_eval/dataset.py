"""Paired visible/infrared dataset scanning and annotation/prediction formats.

Default layout (relative to the dataset root)::

    visible/{train,test}/<id>.jpg
    infrared/{train,test}/<id>.jpg
    Annotations/<id>.xml

A layout file (INI syntax, one section per split with ``visible``,
``infrared`` and ``annotations`` keys) overrides it.
"""

from __future__ import annotations

import configparser
import logging
import math
import xml.etree.ElementTree as ET
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .detection import Box, Detection, GroundTruthBox
from .errors import (DatasetValidationError, DimensionMismatch, DuplicateImageId, EvalError, InvalidBox,
                     InvalidConfidence, MissingAnnotation, MissingCandidate, MissingPair, OutOfRange, ParseError,
                     UnknownImage)
from .image import Image, image_size, is_image_file, read_image, to_grayscale

log = logging.getLogger(__name__)

ANNOTATION_FORMATS = ("voc", "yolo")


@dataclass(frozen=True)
class SplitLayout:
    visible: str
    infrared: str
    annotations: str
    annotation_format: str = "voc"


DEFAULT_LAYOUT = {
    "train": SplitLayout("visible/train", "infrared/train", "Annotations"),
    "test": SplitLayout("visible/test", "infrared/test", "Annotations"),
}


@dataclass
class LayoutConfig:
    splits: dict[str, SplitLayout] = field(default_factory=lambda: dict(DEFAULT_LAYOUT))
    class_names: list[str] = field(default_factory=lambda: ["person"])
    is_default: bool = True


def load_layout(path) -> LayoutConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ParseError(f"cannot read layout config: {exc}", source=path) from exc
    splits = {}
    names = ["person"]
    for section in parser.sections():
        sec = parser[section]
        if section == "classes":
            names = [n.strip() for n in sec.get("names", "person").split(",") if n.strip()]
            continue
        missing = [k for k in ("visible", "infrared", "annotations") if k not in sec]
        if missing:
            raise ParseError(f"split [{section}] lacks key(s) {', '.join(missing)}", source=path)
        fmt = sec.get("annotation_format", "voc")
        if fmt not in ANNOTATION_FORMATS:
            raise ParseError(f"split [{section}]: unknown annotation_format {fmt!r}", source=path)
        splits[section] = SplitLayout(sec["visible"], sec["infrared"], sec["annotations"], fmt)
    if not splits:
        raise ParseError("layout config defines no splits", source=path)
    return LayoutConfig(splits, names, is_default=False)


@dataclass
class IndexEntry:
    image_id: str
    split: str
    visible_path: Path
    infrared_path: Path
    annotation_path: Path
    width: int
    height: int
    objects: list[GroundTruthBox] = field(default_factory=list)


@dataclass
class DatasetIndex:
    root: Path
    entries: list[IndexEntry]
    split_counts: dict[str, int]
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    def select(self, split: str | None = None) -> list[IndexEntry]:
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]

    def ground_truth(self, split: str | None = None) -> list[GroundTruthBox]:
        return [g for e in self.select(split) for g in e.objects]

    def dimension_stats(self) -> dict[str, int]:
        return dict(sorted(Counter(f"{e.width}x{e.height}" for e in self.entries).items()))


# --- annotation formats ----------------------------------------------------

def _number(node, tag, source, index):
    el = node.find(tag)
    if el is None or el.text is None:
        raise ParseError(f"object {index}: missing <{tag}>", source=source)
    try:
        value = float(el.text.strip())
    except ValueError:
        raise ParseError(f"object {index}: <{tag}> is not a number: {el.text!r}", source=source) from None
    if not math.isfinite(value):
        raise ParseError(f"object {index}: <{tag}> is not finite", source=source)
    return value


def parse_voc_annotation(data: bytes, image_id: str = "", source=None) -> list[GroundTruthBox]:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ParseError(f"malformed annotation markup: {exc}", source=source) from exc
    boxes = []
    for k, obj in enumerate(root.iter("object")):
        name = obj.findtext("name")
        if name is None or not name.strip():
            raise ParseError(f"object {k}: missing <name>", source=source)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise ParseError(f"object {k}: missing <bndbox>", source=source)
        x1, y1, x2, y2 = (_number(bnd, t, source, k) for t in ("xmin", "ymin", "xmax", "ymax"))
        if not (x2 > x1 and y2 > y1):
            raise InvalidBox(f"object {k}: degenerate box ({x1:g}, {y1:g}, {x2:g}, {y2:g})", source=source)
        boxes.append(GroundTruthBox(image_id, name.strip(), Box(x1, y1, x2, y2)))
    return boxes


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def write_voc_annotation(boxes: Sequence[GroundTruthBox], filename: str = "", width: int | None = None,
                         height: int | None = None) -> bytes:
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = filename
    if width is not None and height is not None:
        size = ET.SubElement(root, "size")
        ET.SubElement(size, "width").text = str(width)
        ET.SubElement(size, "height").text = str(height)
        ET.SubElement(size, "depth").text = "1"
    for g in boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = g.class_label
        bnd = ET.SubElement(obj, "bndbox")
        for tag, v in zip(("xmin", "ymin", "xmax", "ymax"), g.box.as_tuple()):
            ET.SubElement(bnd, tag).text = _fmt(v)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def parse_yolo_labels(data: bytes, img_w: int, img_h: int, class_names: Sequence[str] = ("person",),
                      image_id: str = "", source=None) -> list[GroundTruthBox]:
    """Normalised ``class cx cy w h`` lines to corner boxes in pixels."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", source=source) from exc
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", source=source, line=lineno)
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", source=source, line=lineno) from None
        if not 0 <= cls < len(class_names):
            raise OutOfRange(f"class index {cls} not in name table of {len(class_names)}",
                             source=source, line=lineno)
        for label, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not 0.0 <= v <= 1.0:
                raise OutOfRange(f"{label}={v} outside [0, 1]", source=source, line=lineno)
        x1, x2 = (cx - w / 2) * img_w, (cx + w / 2) * img_w
        y1, y2 = (cy - h / 2) * img_h, (cy + h / 2) * img_h
        if not (x2 > x1 and y2 > y1):
            raise InvalidBox(f"zero-area box in {line!r}", source=source, line=lineno)
        boxes.append(GroundTruthBox(image_id, class_names[cls], Box(x1, y1, x2, y2)))
    return boxes


def write_yolo_labels(boxes: Sequence[GroundTruthBox], img_w: int, img_h: int,
                      class_names: Sequence[str] = ("person",)) -> bytes:
    lines = []
    for g in boxes:
        b = g.box
        cx = (b.x1 + b.x2) / 2 / img_w
        cy = (b.y1 + b.y2) / 2 / img_h
        lines.append(f"{class_names.index(g.class_label)} {cx!r} {cy!r} "
                     f"{(b.x2 - b.x1) / img_w!r} {(b.y2 - b.y1) / img_h!r}")
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


# --- predictions -----------------------------------------------------------

@dataclass
class PredictionSet:
    run_name: str = ""
    detections: dict[str, list[Detection]] = field(default_factory=dict)
    epoch: int | None = None

    def all(self) -> list[Detection]:
        return [d for image_id in sorted(self.detections) for d in self.detections[image_id]]

    def __len__(self):
        return sum(len(v) for v in self.detections.values())


def parse_predictions(data: bytes, run_name: str = "", source=None) -> PredictionSet:
    """One ``<image_id> <class> <confidence> <x1> <y1> <x2> <y2>`` record per line.

    Fields are separated by single spaces; blank lines and lines starting
    with ``#`` are skipped.  A ``# epoch=N`` comment sets the epoch tag.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", source=source) from exc
    preds = PredictionSet(run_name)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            tag = line[1:].strip()
            if tag.startswith("epoch="):
                try:
                    preds.epoch = int(tag[len("epoch="):])
                except ValueError:
                    raise ParseError(f"bad epoch tag {tag!r}", source=source, line=lineno) from None
            continue
        parts = line.split(" ")
        if len(parts) != 7 or not all(parts):
            raise ParseError(f"expected 7 single-space separated fields, got {line!r}", source=source, line=lineno)
        image_id, label = parts[0], parts[1]
        try:
            conf, x1, y1, x2, y2 = (float(p) for p in parts[2:])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", source=source, line=lineno) from None
        if not (0.0 <= conf <= 1.0):
            raise InvalidConfidence(f"confidence {parts[2]} outside [0, 1]", source=source, line=lineno)
        if not all(math.isfinite(v) for v in (x1, y1, x2, y2)) or not (x2 > x1 and y2 > y1):
            raise InvalidBox(f"degenerate box ({parts[3]}, {parts[4]}, {parts[5]}, {parts[6]})",
                             source=source, line=lineno)
        preds.detections.setdefault(image_id, []).append(Detection(image_id, label, conf, Box(x1, y1, x2, y2)))
    return preds


def format_predictions(dets: Sequence[Detection]) -> bytes:
    lines = [f"{d.image_id} {d.class_label} {d.confidence!r} " + " ".join(_fmt(v) for v in d.box.as_tuple())
             for d in dets]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def check_prediction_ids(preds: PredictionSet, known_ids, lenient: bool = False) -> list[str]:
    """Drop (lenient) or reject predictions for images outside ``known_ids``."""
    known = set(known_ids)
    unknown = sorted(set(preds.detections) - known)
    if not unknown:
        return []
    if not lenient:
        raise DatasetValidationError([UnknownImage(f"prediction for unknown image {i!r}") for i in unknown])
    for i in unknown:
        del preds.detections[i]
    return [f"UnknownImage: dropped predictions for unknown image {i!r}" for i in unknown]


# --- dataset scanning ------------------------------------------------------

def _images_by_stem(directory: Path, problems: list) -> dict[str, Path]:
    found = {}
    for p in sorted(directory.iterdir()):
        if not is_image_file(p):
            continue
        if p.stem in found:
            problems.append(DuplicateImageId(f"{directory}: two images share the id {p.stem!r}"))
            continue
        found[p.stem] = p
    return found


def _inspect(item, class_names):
    """Header dimensions and parsed annotation for one candidate entry."""
    image_id, vis, ir, ann, fmt = item
    problems = []
    try:
        vsize = image_size(vis)
        isize = image_size(ir)
    except EvalError as exc:
        return None, [exc]
    if vsize != isize:
        problems.append(DimensionMismatch(
            f"{image_id}: visible {vsize[0]}x{vsize[1]} ({vis}) vs infrared {isize[0]}x{isize[1]} ({ir})"))
    objects = []
    if not ann.is_file():
        problems.append(MissingAnnotation(f"{image_id}: annotation {ann} not found"))
    else:
        try:
            if fmt == "yolo":
                objects = parse_yolo_labels(ann.read_bytes(), isize[0], isize[1], class_names, image_id, ann)
            else:
                objects = parse_voc_annotation(ann.read_bytes(), image_id, ann)
        except ParseError as exc:
            problems.append(exc)
    return (vsize, objects), problems


def scan_dataset(root, layout: LayoutConfig | None = None, lenient: bool = False, jobs: int = 1) -> DatasetIndex:
    """Index every visible/infrared pair under ``root``.

    All problems are collected before raising :class:`DatasetValidationError`.
    With ``lenient`` unpaired images only produce warnings and are skipped.
    """
    root = Path(root)
    layout = layout or LayoutConfig()
    if not root.is_dir():
        raise DatasetValidationError([MissingPair(f"dataset root {root} is not a directory")])
    problems, warnings, todo = [], [], []
    split_counts = {}
    for split, spec in layout.splits.items():
        vis_dir, ir_dir = root / spec.visible, root / spec.infrared
        if layout.is_default and not vis_dir.is_dir() and not ir_dir.is_dir():
            continue
        for d in (vis_dir, ir_dir):
            if not d.is_dir():
                problems.append(MissingPair(f"split {split}: directory {d} does not exist"))
        if not (vis_dir.is_dir() and ir_dir.is_dir()):
            continue
        vis = _images_by_stem(vis_dir, problems)
        ir = _images_by_stem(ir_dir, problems)
        for stem in sorted(set(vis) ^ set(ir)):
            have, lack = (vis[stem], "infrared") if stem in vis else (ir[stem], "visible")
            err = MissingPair(f"{stem}: {have} has no {lack} counterpart")
            if lenient:
                warnings.append(f"MissingPair: {err}")
            else:
                problems.append(err)
        suffix = ".txt" if spec.annotation_format == "yolo" else ".xml"
        stems = sorted(set(vis) & set(ir))
        split_counts[split] = len(stems)
        todo.extend((stem, vis[stem], ir[stem], root / spec.annotations / (stem + suffix),
                     spec.annotation_format, split) for stem in stems)
    if not split_counts and not problems:
        problems.append(MissingPair(f"{root}: no split directories found"))

    def work(item):
        return _inspect(item[:5], layout.class_names)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, todo))
    else:
        results = [work(item) for item in todo]

    entries = []
    seen = defaultdict(list)
    for item, (info, errs) in zip(todo, results):
        stem, vis_path, ir_path, ann, _, split = item
        seen[stem].append(split)
        problems.extend(errs)
        if info is None or errs:
            continue
        (w, h), objects = info
        entries.append(IndexEntry(stem, split, vis_path, ir_path, ann, w, h, objects))
    for stem, splits in sorted(seen.items()):
        if len(splits) > 1:
            problems.append(DuplicateImageId(f"{stem}: present in splits {', '.join(splits)}"))
    if problems:
        raise DatasetValidationError(problems)
    entries.sort(key=lambda e: e.image_id)
    return DatasetIndex(root, entries, split_counts, warnings)


def load_ground_truth_dir(directory, fmt: str = "voc", img_size: tuple[int, int] | None = None,
                          class_names: Sequence[str] = ("person",), sizes: dict | None = None):
    """Read every annotation file in ``directory``; image ids are file stems.

    Returns ``(boxes, image_ids)``.  YOLO labels need pixel sizes, taken from
    ``sizes[image_id]`` when present, else ``img_size``.
    """
    directory = Path(directory)
    if fmt not in ANNOTATION_FORMATS:
        raise ValueError(f"annotation format must be one of {ANNOTATION_FORMATS}")
    if not directory.is_dir():
        raise ParseError("ground-truth directory not found", source=directory)
    suffix = ".xml" if fmt == "voc" else ".txt"
    boxes, ids = [], []
    for path in sorted(directory.glob("*" + suffix)):
        ids.append(path.stem)
        if fmt == "voc":
            boxes.extend(parse_voc_annotation(path.read_bytes(), path.stem, path))
        else:
            size = (sizes or {}).get(path.stem, img_size)
            if size is None:
                raise ParseError("image size unknown for YOLO labels", source=path)
            boxes.extend(parse_yolo_labels(path.read_bytes(), size[0], size[1], class_names, path.stem, path))
    return boxes, ids


# --- translated image pairing ----------------------------------------------

def find_candidates(index: DatasetIndex, candidate_dir, split: str | None = None, lenient: bool = False):
    """Match index entries to candidate images by id.

    Returns ``(matches, warnings)`` where ``matches`` holds
    ``(entry, candidate_path)`` in image-id order.
    """
    candidate_dir = Path(candidate_dir)
    if not candidate_dir.is_dir():
        raise DatasetValidationError([MissingCandidate(f"candidate directory {candidate_dir} not found")])
    available = _images_by_stem(candidate_dir, [])
    matches, missing = [], []
    for e in index.select(split):
        if e.image_id in available:
            matches.append((e, available[e.image_id]))
        else:
            missing.append(e.image_id)
    warnings = []
    if missing:
        if not lenient:
            raise DatasetValidationError([MissingCandidate(f"{candidate_dir}: no candidate for {i!r}")
                                          for i in missing])
        warnings = [f"MissingCandidate: no candidate for {i!r}, skipped" for i in missing]
    return matches, warnings


def load_pair(truth_path, candidate_path, image_id: str = "", preprocess=None) -> tuple[Image, Image]:
    truth = to_grayscale(read_image(truth_path))
    if preprocess is not None:
        truth = preprocess(truth)
    cand = to_grayscale(read_image(candidate_path))
    if truth.size != cand.size:
        raise DimensionMismatch(f"{image_id or candidate_path}: truth is {truth.width}x{truth.height}, "
                                f"candidate {candidate_path} is {cand.width}x{cand.height}")
    return truth, cand


def pair_images(index: DatasetIndex, candidate_dir, split: str | None = None, lenient: bool = False,
                preprocess=None) -> list[tuple[Image, Image]]:
    """Load grayscale (truth infrared, candidate) pairs in image-id order.

    Candidates must already have the truth's resolution; nothing is resized
    unless an explicit ``preprocess`` callable is given for the truth side.
    """
    matches, warnings = find_candidates(index, candidate_dir, split, lenient)
    for w in warnings:
        log.warning(w)
    return [load_pair(e.infrared_path, c, e.image_id, preprocess) for e, c in matches]
