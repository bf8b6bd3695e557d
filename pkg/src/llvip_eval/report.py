"""Report serialisation (JSON, CSV) and per-epoch run series."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .detection import DetectionEvalResult
from .errors import EmptySeries, ParseError
from .pyramid import PyramidLoss
from .quality import QualityResult, psnr_from_mse

TOOL_NAME = "llvip-eval"

# Published translation results for the pyramid pix2pix model on the LLVIP
# test split, kept for side-by-side display only.
REFERENCE_TRANSLATION = {"mse": 0.1734, "psnr": 12.0739, "ssim": 0.2591}


def jsonable(value):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {str(k) if not isinstance(k, float) else threshold_key(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def threshold_key(t: float) -> str:
    return f"{t:.2f}" if round(t, 2) == t else repr(t)


@dataclass
class Report:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    timestamp: str | None = None

    def to_dict(self) -> dict:
        return {
            "tool": TOOL_NAME,
            "tool_version": __version__,
            "command": self.command,
            "timestamp": self.timestamp,
            "config": self.config,
            "inputs": self.inputs,
            "metrics": self.metrics,
            "warnings": self.warnings,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def now_timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def quality_dict(q: QualityResult) -> dict:
    return {"mse": q.mse, "psnr": q.psnr, "ssim": q.ssim, "n_pairs": q.n_pairs, "psnr_excluded": q.psnr_excluded}


def pyramid_dict(p: PyramidLoss) -> dict:
    return {
        "per_scale": [{"octave": i, "loss": s} for i, s in p.per_scale],
        "weights": list(p.weights),
        "total": p.total,
    }


def reference_comparison(q: QualityResult) -> dict:
    ref = REFERENCE_TRANSLATION
    return {
        "published": dict(ref),
        "measured": {"mse": q.mse, "psnr": q.psnr, "ssim": q.ssim},
        # the published PSNR does not follow from the published MSE at peak 1
        "psnr_implied_by_published_mse": psnr_from_mse(ref["mse"]),
        "note": "published MSE and PSNR are inconsistent under PSNR = -10 log10(MSE) with peak 1; "
                "this tool uses intensities in [0, 1] and peak 1",
    }


def detection_dict(r: DetectionEvalResult, include_curves: bool = True) -> dict:
    out = {
        "map_50": r.map_50,
        "map_50_95": r.map_50_95,
        "map_per_threshold": dict(r.map_per_threshold),
        "precision": r.precision,
        "recall": r.recall,
        "conf_threshold": r.conf_threshold,
        "interpolation": r.interpolation,
        "iou_thresholds": list(r.thresholds),
        "per_class_ap": {c: dict(v) for c, v in r.per_class_ap.items()},
        "gt_counts": dict(r.gt_counts),
        "det_counts": dict(r.det_counts),
        "classes_without_gt": list(r.classes_without_gt),
    }
    if include_curves:
        out["pr_curves"] = {
            c: {t: {"recall": cv.recall, "precision": cv.precision, "confidence": cv.confidence}
                for t, cv in per_t.items()}
            for c, per_t in r.pr_curves.items()
        }
    return out


def _csv_value(v):
    if isinstance(v, float):
        return jsonable(v) if not math.isfinite(v) else repr(v)
    return v


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_value(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def pr_curve_rows(r: DetectionEvalResult):
    for c, per_t in r.pr_curves.items():
        for t, cv in per_t.items():
            for rank, (rec, prec, conf) in enumerate(zip(cv.recall, cv.precision, cv.confidence)):
                yield [c, threshold_key(t), rank, conf, rec, prec]


def ap_table_rows(r: DetectionEvalResult):
    for c, per_t in r.per_class_ap.items():
        for t, ap in per_t.items():
            yield [c, threshold_key(t), ap]


# --- run series ------------------------------------------------------------

@dataclass
class RunSeries:
    run_name: str
    points: list[tuple[int, str, float]]

    def metrics(self) -> list[str]:
        seen = []
        for _, m, _ in self.points:
            if m not in seen:
                seen.append(m)
        return seen

    def metric(self, name: str) -> tuple[list[int], list[float]]:
        xs = [e for e, m, _ in self.points if m == name]
        ys = [v for _, m, v in self.points if m == name]
        return xs, ys


def parse_series(data: bytes, run_name: str, source=None) -> RunSeries:
    """CSV with header ``epoch,metric,value``; epochs strictly increase per metric."""
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", source=source) from exc
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(n, r) for n, r in enumerate(rows, start=1) if any(c.strip() for c in r)]
    if not rows:
        raise EmptySeries(f"{source or run_name}: series file is empty")
    n, header = rows[0]
    if [h.strip() for h in header] != ["epoch", "metric", "value"]:
        raise ParseError(f"expected header 'epoch,metric,value', got {','.join(header)!r}", source=source, line=n)
    points = []
    last = {}
    for n, row in rows[1:]:
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", source=source, line=n)
        try:
            epoch = int(row[0])
            value = float(row[2])
        except ValueError:
            raise ParseError(f"bad epoch or value in {','.join(row)!r}", source=source, line=n) from None
        metric = row[1].strip()
        if not metric:
            raise ParseError("empty metric name", source=source, line=n)
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {row[2]!r}", source=source, line=n)
        if metric in last and epoch <= last[metric]:
            raise ParseError(f"epoch {epoch} for {metric!r} does not increase", source=source, line=n)
        last[metric] = epoch
        points.append((epoch, metric, value))
    if not points:
        raise EmptySeries(f"{source or run_name}: series file has no records")
    return RunSeries(run_name, points)


def load_series(path) -> RunSeries:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read series file: {exc.strerror}", source=path) from exc
    return parse_series(data, path.stem, source=path)
