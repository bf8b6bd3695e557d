"""Command line entry point: ``validate``, ``translate-eval``, ``detect-eval``, ``curves``.

Option values resolve as command-line flag, then config file (INI; a
``[DEFAULT]`` section plus one section per subcommand), then the built-in
default.  The resolved values are echoed into every report.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .dataset import (check_prediction_ids, find_candidates, load_ground_truth_dir, load_layout, load_pair,
                      parse_predictions, scan_dataset)
from .detection import evaluate, nms_all, parse_thresholds
from .errors import DatasetValidationError, EmptyDataset, EvalError, ParseError
from .image import parse_size, preprocess_pair
from .plots import pr_panels, render_svg, series_panels
from .pyramid import PyramidParams, combine_scale_losses, scale_losses
from .quality import SSIMParams, combine_quality, compare
from .report import (Report, ap_table_rows, detection_dict, load_series, now_timestamp, pr_curve_rows,
                     pyramid_dict, quality_dict, reference_comparison, write_csv)

log = logging.getLogger("llvip_eval")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _weights(text):
    return [float(w) for w in str(text).split(",") if w.strip()]


# name -> (converter, default); None defaults mean "unset"
SHARED = {
    "dataset": (str, None),
    "layout": (str, None),
    "out": (str, None),
    "csv": (str, None),
    "lenient": (_bool, False),
    "jobs": (int, 1),
    "no_timestamp": (_bool, False),
}
COMMAND_OPTIONS = {
    "validate": {},
    "translate-eval": {
        "candidates": (str, None),
        "split": (str, "test"),
        "octaves": (int, 3),
        "layers": (int, 5),
        "sigma": (float, 1.0),
        "pyramid_weights": (_weights, None),
        "ssim_window": (int, 11),
        "ssim_sigma": (float, 1.5),
        "ssim_k1": (float, 0.01),
        "ssim_k2": (float, 0.03),
        "preprocess": (_bool, False),
        "load_size": (str, "320x256"),
        "crop": (int, 256),
    },
    "detect-eval": {
        "gt": (str, None),
        "gt_format": (str, "voc"),
        "img_size": (str, None),
        "names": (str, "person"),
        "pred": (str, None),
        "split": (str, None),
        "nms": (float, None),
        "iou_thresholds": (str, "0.5:0.95:0.05"),
        "conf": (float, 0.25),
        "interpolation": (str, "coco101"),
        "plot": (str, None),
    },
    "curves": {},
}
# options that only choose where output goes or how fast; kept out of the
# config echo so reports stay byte-identical across them
NOT_ECHOED = {"out", "csv", "jobs", "no_timestamp", "plot"}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("shared options")
    g.add_argument("--config", help="INI config file ([DEFAULT] and per-command sections)")
    g.add_argument("--dataset", help="dataset root directory")
    g.add_argument("--layout", help="layout config file mapping splits to directories")
    g.add_argument("--out", help="report file to write")
    g.add_argument("--csv", metavar="DIR", help="directory for CSV exports")
    g.add_argument("--lenient", action="store_const", const=True, default=None,
                   help="downgrade missing pairs/candidates to warnings")
    g.add_argument("--jobs", type=int, metavar="N", help="worker threads (default 1)")
    g.add_argument("--no-timestamp", action="store_const", const=True, default=None,
                   help="omit the timestamp from reports")

    parser = argparse.ArgumentParser(prog="llvip-eval",
                                     description="Evaluate visible-to-infrared translation and pedestrian detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[shared], help="check dataset pairing and annotations")

    p = sub.add_parser("translate-eval", parents=[shared], help="score translated images against infrared truth")
    p.add_argument("--candidates", metavar="DIR", help="directory of translated images named by image id")
    p.add_argument("--split", help="split to evaluate, or 'all' (default test)")
    p.add_argument("--octaves", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--pyramid-weights", type=_weights, metavar="W0,W1,...")
    p.add_argument("--ssim-window", type=int)
    p.add_argument("--ssim-sigma", type=float)
    p.add_argument("--ssim-k1", type=float)
    p.add_argument("--ssim-k2", type=float)
    p.add_argument("--preprocess", action="store_const", const=True, default=None,
                   help="resize and centre-crop the truth images before comparison")
    p.add_argument("--load-size", metavar="WxH")
    p.add_argument("--crop", type=int)

    p = sub.add_parser("detect-eval", parents=[shared], help="compute AP/mAP for a prediction file")
    p.add_argument("--gt", metavar="DIR", help="annotation directory (else taken from --dataset)")
    p.add_argument("--gt-format", choices=("voc", "yolo"))
    p.add_argument("--img-size", metavar="WxH", help="image size for YOLO labels without --dataset")
    p.add_argument("--names", help="comma separated class names for YOLO indices")
    p.add_argument("--pred", metavar="FILE")
    p.add_argument("--split", help="dataset split supplying ground truth (default all)")
    p.add_argument("--nms", type=float, metavar="T", help="apply NMS at IoU T before evaluating")
    p.add_argument("--iou-thresholds", metavar="A:B:STEP")
    p.add_argument("--conf", type=float, help="confidence cutoff for headline precision/recall")
    p.add_argument("--interpolation", choices=("coco101", "allpoint"))
    p.add_argument("--plot", metavar="SVG", help="write PR curves as SVG")

    p = sub.add_parser("curves", parents=[shared], help="plot per-epoch series files as SVG")
    p.add_argument("series", nargs="+", help="CSV files with header epoch,metric,value")
    return parser


def resolve_options(args) -> dict:
    """Merge flags over config-file values over defaults."""
    table = dict(SHARED)
    table.update(COMMAND_OPTIONS[args.command])
    file_values = {}
    if args.config:
        cp = configparser.ConfigParser()
        try:
            with open(args.config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ParseError(f"cannot read config: {exc}", source=args.config) from exc
        section = cp[args.command] if cp.has_section(args.command) else cp.defaults()
        for key, raw in section.items():
            name = key.replace("-", "_")
            if name not in table:
                if key in cp.defaults():
                    continue
                raise ParseError(f"unknown option {key!r} in [{args.command}]", source=args.config)
            try:
                file_values[name] = table[name][0](raw)
            except ValueError as exc:
                raise ParseError(f"bad value for {key}: {exc}", source=args.config) from None
    opts = {}
    for name, (_, default) in table.items():
        flag = getattr(args, name, None)
        if flag is not None:
            opts[name] = flag
        elif name in file_values:
            opts[name] = file_values[name]
        else:
            opts[name] = default
    if opts["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return opts


def echo(opts: dict) -> dict:
    return {k: v for k, v in sorted(opts.items()) if k not in NOT_ECHOED}


def _timestamp(opts):
    return None if opts["no_timestamp"] else now_timestamp()


def _layout(opts):
    return load_layout(opts["layout"]) if opts["layout"] else None


def _need(opts, name, flag):
    if not opts.get(name):
        raise UsageError(f"{flag} is required")
    return opts[name]


def _finish(report: Report, opts) -> None:
    if opts["out"]:
        report.write(opts["out"])
        print(f"report written to {opts['out']}")


def cmd_validate(opts) -> int:
    root = _need(opts, "dataset", "--dataset")
    report = Report("validate", echo(opts), inputs={"dataset": root}, timestamp=_timestamp(opts))
    try:
        index = scan_dataset(root, _layout(opts), lenient=opts["lenient"], jobs=opts["jobs"])
    except DatasetValidationError as exc:
        for p in exc.problems:
            line = f"{type(p).__name__}: {p}"
            print(line, file=sys.stderr)
            report.errors.append(line)
        print(f"validation failed with {len(exc.problems)} error(s)", file=sys.stderr)
        _finish(report, opts)
        return EXIT_FAIL
    n_boxes = sum(len(e.objects) for e in index.entries)
    print(f"{len(index)} pairs")
    for split, n in index.split_counts.items():
        print(f"  {split}: {n}")
    for dims, n in index.dimension_stats().items():
        print(f"  {dims}: {n} pairs")
    print(f"  {n_boxes} annotated boxes")
    for w in index.warnings:
        print(f"warning: {w}", file=sys.stderr)
    report.warnings = list(index.warnings)
    report.metrics = {
        "pairs": len(index),
        "split_counts": dict(index.split_counts),
        "dimensions": index.dimension_stats(),
        "boxes": n_boxes,
    }
    report.inputs["image_ids"] = index.ids()
    _finish(report, opts)
    return EXIT_OK


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_translate_eval(opts) -> int:
    root = _need(opts, "dataset", "--dataset")
    cand_dir = _need(opts, "candidates", "--candidates")
    try:
        pyr = PyramidParams(opts["octaves"], opts["layers"], opts["sigma"])
        ssim_params = SSIMParams(opts["ssim_window"], opts["ssim_sigma"], opts["ssim_k1"], opts["ssim_k2"])
    except (ValueError, EvalError) as exc:
        raise UsageError(str(exc)) from None
    weights = opts["pyramid_weights"] or [1.0] * pyr.octaves
    if len(weights) != pyr.octaves or any(w < 0 for w in weights):
        raise UsageError(f"--pyramid-weights needs {pyr.octaves} non-negative values")
    opts["pyramid_weights"] = weights
    preprocess = None
    if opts["preprocess"]:
        w, h = parse_size(opts["load_size"])
        crop = opts["crop"]
        preprocess = lambda img: preprocess_pair(img, w, h, crop)  # noqa: E731

    split = None if opts["split"] in (None, "all") else opts["split"]
    index = scan_dataset(root, _layout(opts), lenient=opts["lenient"], jobs=opts["jobs"])
    matches, warnings = find_candidates(index, cand_dir, split, lenient=opts["lenient"])
    if not matches:
        raise EmptyDataset(f"no image pairs to evaluate (split {opts['split']!r})")

    def work(match):
        entry, cand_path = match
        truth, cand = load_pair(entry.infrared_path, cand_path, entry.image_id, preprocess)
        return compare(truth, cand, ssim_params), scale_losses(truth, cand, pyr)

    results = _map(work, matches, opts["jobs"])
    quality = combine_quality([q for q, _ in results])
    pyramid = combine_scale_losses([s for _, s in results], weights)

    per_image = []
    for (entry, cand_path), (q, s) in zip(matches, results):
        per_image.append({"image_id": entry.image_id, "mse": q.mse, "psnr": q.psnr, "ssim": q.ssim,
                          "scale_losses": s})
    report = Report("translate-eval", echo(opts), timestamp=_timestamp(opts), warnings=index.warnings + warnings)
    report.inputs = {"dataset": root, "candidates": cand_dir, "image_ids": [e.image_id for e, _ in matches]}
    report.metrics = {
        "quality": quality_dict(quality),
        "pyramid": pyramid_dict(pyramid),
        "per_image": per_image,
        "reference": reference_comparison(quality),
    }
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)

    print(f"{quality.n_pairs} pairs")
    print(f"  MSE   {quality.mse:.6f}")
    psnr_text = "inf" if quality.psnr_is_infinite else f"{quality.psnr:.4f} dB"
    print(f"  PSNR  {psnr_text}  ({quality.psnr_excluded} identical pair(s) excluded)")
    print(f"  SSIM  {quality.ssim:.6f}")
    for i, s in pyramid.per_scale:
        print(f"  S_{i}   {s:.6f}")
    print(f"  pyramid total {pyramid.total:.6f}")

    if opts["csv"]:
        out_dir = Path(opts["csv"])
        out_dir.mkdir(parents=True, exist_ok=True)
        header = ["image_id", "mse", "psnr", "ssim"] + [f"s{i}" for i in range(pyr.octaves)]
        rows = [[r["image_id"], r["mse"], r["psnr"], r["ssim"], *r["scale_losses"]] for r in per_image]
        write_csv(out_dir / "per_image.csv", header, rows)
    _finish(report, opts)
    return EXIT_OK


def cmd_detect_eval(opts) -> int:
    pred_path = Path(_need(opts, "pred", "--pred"))
    try:
        thresholds = parse_thresholds(opts["iou_thresholds"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if opts["nms"] is not None and not 0 <= opts["nms"] <= 1:
        raise UsageError("--nms must lie in [0, 1]")
    if not 0 <= opts["conf"] <= 1:
        raise UsageError("--conf must lie in [0, 1]")
    names = [n.strip() for n in opts["names"].split(",") if n.strip()]
    warnings = []
    split = None if opts["split"] in (None, "all") else opts["split"]
    index = None
    if opts["dataset"]:
        index = scan_dataset(opts["dataset"], _layout(opts), lenient=opts["lenient"], jobs=opts["jobs"])
        warnings.extend(index.warnings)
    if opts["gt"]:
        sizes = {e.image_id: (e.width, e.height) for e in index.entries} if index else None
        img_size = parse_size(opts["img_size"]) if opts["img_size"] else None
        gts, known = load_ground_truth_dir(opts["gt"], opts["gt_format"], img_size, names, sizes)
    elif index is not None:
        gts = index.ground_truth(split)
        known = [e.image_id for e in index.select(split)]
    else:
        raise UsageError("either --gt or --dataset is required")

    try:
        data = pred_path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read predictions: {exc.strerror}", source=pred_path) from exc
    preds = parse_predictions(data, run_name=pred_path.stem, source=pred_path)
    warnings.extend(check_prediction_ids(preds, known, lenient=opts["lenient"]))
    dets = preds.all()
    n_raw = len(dets)
    if opts["nms"] is not None:
        dets = nms_all(dets, opts["nms"])

    result = evaluate(dets, gts, thresholds, conf_threshold=opts["conf"], interpolation=opts["interpolation"])
    report = Report("detect-eval", echo(opts), timestamp=_timestamp(opts), warnings=warnings)
    report.inputs = {"predictions": str(pred_path), "run_name": preds.run_name, "epoch": preds.epoch,
                     "gt_source": opts["gt"] or opts["dataset"], "image_ids": sorted(known),
                     "detections": n_raw, "detections_after_nms": len(dets), "gt_boxes": len(gts)}
    report.metrics = detection_dict(result)
    for c in result.classes_without_gt:
        report.warnings.append(f"class {c!r} has detections but no ground truth; excluded from mAP")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)

    print(f"{len(gts)} ground-truth boxes, {len(dets)} detections")
    print(f"  {'class':<16}{'AP@0.5':>10}{'AP@.5:.95':>12}")
    for c, per_t in result.per_class_ap.items():
        ap50 = per_t.get(0.5, float("nan"))
        ap_mean = sum(per_t[t] for t in thresholds) / len(thresholds)
        print(f"  {c:<16}{ap50:>10.4f}{ap_mean:>12.4f}")
    print(f"  mAP@0.5       {result.map_50:.4f}")
    print(f"  mAP@0.5:0.95  {result.map_50_95:.4f}")
    print(f"  precision     {result.precision:.4f}  recall {result.recall:.4f}  (conf >= {result.conf_threshold})")

    if opts["csv"]:
        out_dir = Path(opts["csv"])
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "ap_table.csv", ["class", "iou", "ap"], ap_table_rows(result))
        write_csv(out_dir / "pr_curves.csv", ["class", "iou", "rank", "confidence", "recall", "precision"],
                  pr_curve_rows(result))
    if opts["plot"]:
        Path(opts["plot"]).write_text(render_svg(pr_panels(result)), encoding="utf-8")
    _finish(report, opts)
    return EXIT_OK


def cmd_curves(opts, series_paths) -> int:
    out = _need(opts, "out", "--out")
    series = [load_series(p) for p in series_paths]
    panels = series_panels(series)
    Path(out).write_text(render_svg(panels), encoding="utf-8")
    print(f"{len(panels)} chart(s), {len(series)} run(s) written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        opts = resolve_options(args)
        if args.command == "validate":
            return cmd_validate(opts)
        if args.command == "translate-eval":
            return cmd_translate_eval(opts)
        if args.command == "detect-eval":
            return cmd_detect_eval(opts)
        return cmd_curves(opts, args.series)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"llvip-eval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetValidationError as exc:
        for p in exc.problems:
            print(f"{type(p).__name__}: {p}", file=sys.stderr)
        return EXIT_FAIL
    except EvalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
