import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import make_dataset, run_cli, write_predictions_from_truth
from llvip_eval.image import Image, read_image, write_image
from llvip_eval.report import load_series, parse_series
from llvip_eval.errors import EmptySeries, ParseError


def load_report(path):
    def reject(name):
        raise ValueError(f"non-standard JSON constant {name}")

    return json.loads(path.read_text(), parse_constant=reject)


class TestValidate:
    def test_intact(self, dataset, tmp_path, capsys):
        root, _ = dataset
        code, out, _ = run_cli(["validate", "--dataset", root, "--out", tmp_path / "v.json"], capsys)
        assert code == 0
        assert "5 pairs" in out and "train: 2" in out and "test: 3" in out
        rep = load_report(tmp_path / "v.json")
        assert rep["metrics"]["split_counts"] == {"test": 3, "train": 2}
        assert rep["errors"] == []

    def test_orphan(self, dataset, tmp_path, capsys):
        root, _ = dataset
        write_image(Image.filled(64, 48, 0.1, 3), root / "visible" / "test" / "999999.png")
        code, _, err = run_cli(["validate", "--dataset", root, "--out", tmp_path / "v.json"], capsys)
        assert code == 1
        assert "MissingPair" in err and "999999" in err
        assert load_report(tmp_path / "v.json")["errors"]
        code, out, err = run_cli(["validate", "--dataset", root, "--lenient"], capsys)
        assert code == 0 and "5 pairs" in out and "warning" in err

    def test_requires_dataset(self, capsys):
        code, _, err = run_cli(["validate"], capsys)
        assert code == 2 and "--dataset" in err

    def test_bad_layout_file(self, dataset, tmp_path, capsys):
        root, _ = dataset
        cfg = tmp_path / "layout.ini"
        cfg.write_text("[train]\nvisible = x\n")
        code, _, err = run_cli(["validate", "--dataset", root, "--layout", cfg], capsys)
        assert code == 1 and "layout.ini" in err


class TestTranslateEval:
    def test_self_comparison(self, dataset, tmp_path, capsys):
        root, _ = dataset
        out = tmp_path / "t.json"
        code, stdout, _ = run_cli(["translate-eval", "--dataset", root, "--candidates", root / "infrared" / "test",
                                   "--out", out, "--csv", tmp_path / "csv"], capsys)
        assert code == 0, stdout
        m = load_report(out)["metrics"]
        assert m["quality"]["mse"] == 0 and m["quality"]["ssim"] == 1 and m["quality"]["psnr"] == "inf"
        assert [s["loss"] for s in m["pyramid"]["per_scale"]] == [0, 0, 0]
        rows = list(csv.DictReader(open(tmp_path / "csv" / "per_image.csv")))
        assert len(rows) == 3 and rows[0]["psnr"] == "inf"

    def test_black_candidates(self, tmp_path, capsys):
        make_dataset(tmp_path / "d", n_train=0, n_test=2)
        cand = tmp_path / "black"
        cand.mkdir()
        truths = []
        for p in sorted((tmp_path / "d" / "infrared" / "test").iterdir()):
            truths.append(read_image(p))
            write_image(Image.filled(64, 48, 0.0), cand / p.name)
        code, _, _ = run_cli(["translate-eval", "--dataset", tmp_path / "d", "--candidates", cand,
                              "--out", tmp_path / "t.json"], capsys)
        assert code == 0
        expected = np.mean([np.mean(t.pixels ** 2) for t in truths])
        assert load_report(tmp_path / "t.json")["metrics"]["quality"]["mse"] == pytest.approx(expected, rel=1e-12)

    def test_flags_and_config(self, dataset, tmp_path, capsys):
        root, _ = dataset
        cfg = tmp_path / "cfg.ini"
        cfg.write_text("[translate-eval]\noctaves = 2\nsigma = 0.8\nssim_window = 7\n")
        code, _, _ = run_cli(["translate-eval", "--dataset", root, "--candidates", root / "infrared" / "test",
                              "--config", cfg, "--sigma", "1.2", "--pyramid-weights", "1,0.5",
                              "--out", tmp_path / "t.json"], capsys)
        assert code == 0
        rep = load_report(tmp_path / "t.json")
        assert rep["config"]["octaves"] == 2
        assert rep["config"]["sigma"] == 1.2
        assert rep["config"]["ssim_window"] == 7
        assert rep["metrics"]["pyramid"]["weights"] == [1.0, 0.5]

    def test_bad_weights_is_usage_error(self, dataset, capsys):
        root, _ = dataset
        code, _, err = run_cli(["translate-eval", "--dataset", root, "--candidates", root,
                                "--pyramid-weights", "1,2"], capsys)
        assert code == 2 and "pyramid-weights" in err

    def test_missing_candidate(self, dataset, tmp_path, capsys):
        root, _ = dataset
        cand = tmp_path / "cand"
        cand.mkdir()
        src = sorted((root / "infrared" / "test").iterdir())
        for p in src[1:]:
            (cand / p.name).write_bytes(p.read_bytes())
        code, _, err = run_cli(["translate-eval", "--dataset", root, "--candidates", cand], capsys)
        assert code == 1 and "MissingCandidate" in err and src[0].stem in err
        code, _, err = run_cli(["translate-eval", "--dataset", root, "--candidates", cand, "--lenient"], capsys)
        assert code == 0 and "warning" in err

    def test_preprocess(self, tmp_path, capsys):
        root = tmp_path / "d"
        (root / "visible" / "test").mkdir(parents=True)
        (root / "infrared" / "test").mkdir(parents=True)
        (root / "Annotations").mkdir()
        rng = np.random.default_rng(1)
        write_image(Image(rng.random((96, 120, 3))), root / "visible" / "test" / "a.png")
        write_image(Image(rng.random((96, 120))), root / "infrared" / "test" / "a.png")
        (root / "Annotations" / "a.xml").write_text("<annotation/>")
        cand = tmp_path / "c"
        cand.mkdir()
        write_image(Image.filled(32, 32, 0.5), cand / "a.png")
        args = ["translate-eval", "--dataset", root, "--candidates", cand, "--octaves", "2"]
        code, _, err = run_cli(args, capsys)
        assert code == 1 and "DimensionMismatch" in err
        code, _, err = run_cli(args + ["--preprocess", "--load-size", "40x32", "--crop", "32"], capsys)
        assert code == 0, err


class TestDetectEval:
    def test_perfect(self, dataset, tmp_path, capsys):
        root, truth = dataset
        pred = tmp_path / "pred.txt"
        write_predictions_from_truth(pred, truth)
        code, out, _ = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", pred,
                                "--out", tmp_path / "d.json", "--csv", tmp_path / "csv",
                                "--plot", tmp_path / "pr.svg"], capsys)
        assert code == 0
        m = load_report(tmp_path / "d.json")["metrics"]
        assert m["map_50"] == 1.0 and m["map_50_95"] == 1.0
        assert list(m["per_class_ap"]["person"]) == [f"{0.5 + 0.05 * k:.2f}" for k in range(10)]
        assert (tmp_path / "csv" / "ap_table.csv").exists() and (tmp_path / "csv" / "pr_curves.csv").exists()
        ET.parse(tmp_path / "pr.svg")

    def test_dataset_as_gt_source(self, dataset, tmp_path, capsys):
        root, truth = dataset
        pred = tmp_path / "pred.txt"
        write_predictions_from_truth(pred, {k: v for k, v in truth.items() if k.startswith("001")})
        code, _, _ = run_cli(["detect-eval", "--dataset", root, "--split", "test", "--pred", pred,
                              "--out", tmp_path / "d.json"], capsys)
        assert code == 0
        assert load_report(tmp_path / "d.json")["metrics"]["map_50"] == 1.0

    def test_empty_predictions(self, dataset, tmp_path, capsys):
        root, _ = dataset
        pred = tmp_path / "pred.txt"
        pred.write_text("")
        code, _, _ = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", pred,
                              "--out", tmp_path / "d.json"], capsys)
        assert code == 0
        m = load_report(tmp_path / "d.json")["metrics"]
        assert m["map_50"] == 0 and m["map_50_95"] == 0
        assert all(v == 0 for v in m["per_class_ap"]["person"].values())
        assert (m["precision"], m["recall"]) == (1.0, 0.0)

    def test_hand_fixture(self, tmp_path, capsys):
        gt = tmp_path / "gt"
        gt.mkdir()
        (gt / "img.xml").write_text(
            "<annotation><object><name>person</name><bndbox><xmin>0</xmin><ymin>0</ymin><xmax>10</xmax>"
            "<ymax>10</ymax></bndbox></object><object><name>person</name><bndbox><xmin>20</xmin><ymin>0</ymin>"
            "<xmax>30</xmax><ymax>10</ymax></bndbox></object></annotation>")
        pred = tmp_path / "pred.txt"
        pred.write_text("img person 0.9 0 0 10 10\nimg person 0.8 50 50 60 60\nimg person 0.7 20 0 30 10\n")
        code, out, _ = run_cli(["detect-eval", "--gt", gt, "--pred", pred, "--iou-thresholds", "0.5:0.5:0.05",
                                "--out", tmp_path / "d.json"], capsys)
        assert code == 0
        assert load_report(tmp_path / "d.json")["metrics"]["map_50"] == pytest.approx((51 + 50 * 2 / 3) / 101,
                                                                                       abs=1e-9)

    def test_nms_flag(self, tmp_path, capsys):
        gt = tmp_path / "gt"
        gt.mkdir()
        (gt / "img.xml").write_text("<annotation><object><name>person</name><bndbox><xmin>0</xmin><ymin>0</ymin>"
                                    "<xmax>10</xmax><ymax>10</ymax></bndbox></object></annotation>")
        pred = tmp_path / "pred.txt"
        pred.write_text("img person 0.9 0 0 10 10\nimg person 0.8 1 1 11 11\n")
        run_cli(["detect-eval", "--gt", gt, "--pred", pred, "--out", tmp_path / "a.json"], capsys)
        run_cli(["detect-eval", "--gt", gt, "--pred", pred, "--nms", "0.5", "--out", tmp_path / "b.json"], capsys)
        a, b = load_report(tmp_path / "a.json"), load_report(tmp_path / "b.json")
        assert a["inputs"]["detections_after_nms"] == 2 and b["inputs"]["detections_after_nms"] == 1
        assert a["metrics"]["precision"] == 0.5 and b["metrics"]["precision"] == 1.0

    def test_yolo_gt(self, tmp_path, capsys):
        gt = tmp_path / "labels"
        gt.mkdir()
        (gt / "img.txt").write_text("0 0.5 0.5 0.2 0.2\n")
        pred = tmp_path / "pred.txt"
        pred.write_text("img person 0.9 40 40 60 60\n")
        code, _, err = run_cli(["detect-eval", "--gt", gt, "--gt-format", "yolo", "--img-size", "100x100",
                                "--pred", pred, "--out", tmp_path / "d.json"], capsys)
        assert code == 0, err
        assert load_report(tmp_path / "d.json")["metrics"]["map_50"] == 1.0

    def test_bad_prediction_line(self, dataset, tmp_path, capsys):
        root, _ = dataset
        pred = tmp_path / "pred.txt"
        pred.write_text("000001 person 0.5 0 0 1 1\n000001 person 1.7 0 0 1 1\n")
        code, _, err = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", pred], capsys)
        assert code == 1 and "pred.txt:2" in err

    def test_unknown_image(self, dataset, tmp_path, capsys):
        root, _ = dataset
        pred = tmp_path / "pred.txt"
        pred.write_text("nope person 0.5 0 0 1 1\n")
        code, _, err = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", pred], capsys)
        assert code == 1 and "nope" in err

    def test_bad_thresholds(self, dataset, tmp_path, capsys):
        root, _ = dataset
        pred = tmp_path / "pred.txt"
        pred.write_text("")
        code, _, _ = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", pred,
                              "--iou-thresholds", "0.9:0.5:0.1"], capsys)
        assert code == 2

    def test_missing_pred_file(self, dataset, tmp_path, capsys):
        root, _ = dataset
        code, _, err = run_cli(["detect-eval", "--gt", root / "Annotations", "--pred", tmp_path / "x.txt"], capsys)
        assert code == 1 and "x.txt" in err


class TestCurves:
    def write_run(self, path, metrics, epochs, seed=0):
        rng = np.random.default_rng(seed)
        lines = ["epoch,metric,value"]
        for m in metrics:
            for e in range(epochs):
                lines.append(f"{e},{m},{rng.random():.6f}")
        path.write_text("\n".join(lines) + "\n")

    def test_figure_shape(self, tmp_path, capsys):
        metrics = ["precision", "recall", "mAP@0.5", "mAP@0.5:0.95"]
        self.write_run(tmp_path / "infrared.csv", metrics, 100, 1)
        self.write_run(tmp_path / "visible.csv", metrics, 100, 2)
        out = tmp_path / "fig.svg"
        code, _, _ = run_cli(["curves", tmp_path / "infrared.csv", tmp_path / "visible.csv", "--out", out], capsys)
        assert code == 0
        root = ET.parse(out).getroot()
        ns = "{http://www.w3.org/2000/svg}"
        panels = root.findall(f"{ns}svg")
        assert [p.get("data-metric") for p in panels] == metrics
        for p in panels:
            series = p.findall(f"{ns}g")
            assert [s.get("data-run") for s in series] == ["infrared", "visible"]
            for s in series:
                assert len(s.find(f"{ns}polyline").get("points").split()) == 100
            assert p.get("width") == "800" and p.get("height") == "500"

    def test_single_point(self, tmp_path, capsys):
        (tmp_path / "run.csv").write_text("epoch,metric,value\n0,loss,0.5\n")
        code, _, _ = run_cli(["curves", tmp_path / "run.csv", "--out", tmp_path / "o.svg"], capsys)
        assert code == 0
        root = ET.parse(tmp_path / "o.svg").getroot()
        assert len(root.findall("{http://www.w3.org/2000/svg}svg")) == 1
        assert root.find(".//{http://www.w3.org/2000/svg}circle") is not None

    def test_empty(self, tmp_path, capsys):
        (tmp_path / "run.csv").write_text("")
        code, _, err = run_cli(["curves", tmp_path / "run.csv", "--out", tmp_path / "o.svg"], capsys)
        assert code == 1 and "EmptySeries" in err
        with pytest.raises(EmptySeries):
            parse_series(b"epoch,metric,value\n", "r")

    def test_deterministic(self, tmp_path, capsys):
        self.write_run(tmp_path / "a.csv", ["m"], 10)
        run_cli(["curves", tmp_path / "a.csv", "--out", tmp_path / "1.svg"], capsys)
        run_cli(["curves", tmp_path / "a.csv", "--out", tmp_path / "2.svg"], capsys)
        assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()

    def test_escaping(self, tmp_path, capsys):
        (tmp_path / "a&b.csv").write_text('epoch,metric,value\n0,"x<y",1\n1,"x<y",2\n')
        code, _, _ = run_cli(["curves", tmp_path / "a&b.csv", "--out", tmp_path / "o.svg"], capsys)
        assert code == 0
        ET.parse(tmp_path / "o.svg")

    @pytest.mark.parametrize("body,msg", [
        ("epoch,value\n1,2\n", "header"),
        ("epoch,metric,value\n1,m,2\n1,m,3\n", "does not increase"),
        ("epoch,metric,value\n1,m,inf\n", "non-finite"),
        ("epoch,metric,value\nx,m,1\n", r"r\.csv:2"),
    ])
    def test_parse_errors(self, tmp_path, body, msg):
        (tmp_path / "r.csv").write_text(body)
        with pytest.raises(ParseError, match=msg):
            load_series(tmp_path / "r.csv")


def test_usage_errors(capsys):
    assert run_cli([], capsys)[0] == 2
    assert run_cli(["frobnicate"], capsys)[0] == 2
    assert run_cli(["curves", "--out", "x.svg"], capsys)[0] == 2
