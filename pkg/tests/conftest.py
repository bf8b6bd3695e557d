import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from llvip_eval.dataset import write_voc_annotation  # noqa: E402
from llvip_eval.detection import Box, GroundTruthBox  # noqa: E402
from llvip_eval.image import Image, write_image  # noqa: E402


def make_dataset(root, n_train=2, n_test=3, size=(64, 48), seed=0, boxes_per_image=2):
    """Write a small LLVIP-style tree; returns {image_id: [GroundTruthBox]}."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    w, h = size
    truth = {}
    for split, n, start in (("train", n_train, 1), ("test", n_test, 1000)):
        if n == 0:
            continue
        (root / "visible" / split).mkdir(parents=True, exist_ok=True)
        (root / "infrared" / split).mkdir(parents=True, exist_ok=True)
        (root / "Annotations").mkdir(parents=True, exist_ok=True)
        for k in range(n):
            image_id = f"{start + k:06d}"
            vis = Image(rng.random((h, w, 3)))
            ir = Image(rng.random((h, w)))
            write_image(vis, root / "visible" / split / f"{image_id}.png")
            write_image(ir, root / "infrared" / split / f"{image_id}.png")
            boxes = []
            for j in range(boxes_per_image):
                x1 = int(rng.integers(0, w // 2))
                y1 = int(rng.integers(0, h // 2))
                bw = int(rng.integers(4, w // 2))
                bh = int(rng.integers(4, h // 2))
                boxes.append(GroundTruthBox(image_id, "person", Box(x1, y1, x1 + bw, y1 + bh)))
            (root / "Annotations" / f"{image_id}.xml").write_bytes(
                write_voc_annotation(boxes, f"{image_id}.png", w, h))
            truth[image_id] = boxes
    return truth


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "llvip"
    truth = make_dataset(root)
    return root, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_cli(argv, capsys):
    """Invoke the CLI in-process; returns (exit code, stdout, stderr)."""
    from llvip_eval.cli import main

    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def write_predictions_from_truth(path, truth, confidence=1.0):
    lines = []
    for image_id in sorted(truth):
        for g in truth[image_id]:
            b = g.box
            lines.append(f"{image_id} {g.class_label} {confidence} {b.x1!r} {b.y1!r} {b.x2!r} {b.y2!r}")
    Path(path).write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
