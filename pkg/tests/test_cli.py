import json

import numpy as np
import pytest
from PIL import Image

from seamweld import cli
from seamweld.imaging import make_pair, write_image
from seamweld.synthetic import shifted_block_pair, smooth_texture, write_pair


def strip_pair_files(directory, stem, h=60, w=90, identical=True, seed=0):
    rng = np.random.default_rng(seed)
    t = smooth_texture(h, w, rng, 2.0)
    r = t if identical else smooth_texture(h, w, rng, 2.0)
    cols = np.arange(w)
    pair = make_pair(t, r, np.broadcast_to(cols < 60, (h, w)), np.broadcast_to(cols >= 30, (h, w)))
    return write_pair(pair, directory, stem)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def shift_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("shift")
    return write_pair(shifted_block_pair(0).pair, d, "fx")


def test_identical_pair_no_lpam(tmp_path, capsys):
    t, r = strip_pair_files(tmp_path, "same")
    code, _, err = run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png",
                       "--no-lpam", "--metrics", tmp_path / "met.json")
    assert code == 0, err
    met = json.loads((tmp_path / "met.json").read_text())
    assert met["rmse"] == 0.0 and met["ssim"] == 1.0
    mosaic = np.asarray(Image.open(tmp_path / "m.png"))
    assert mosaic.shape == (60, 90, 3) and mosaic.dtype == np.uint8


def test_beta_validation(tmp_path, capsys):
    t, r = strip_pair_files(tmp_path, "same")
    code, _, err = run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png",
                       "--beta", "0")
    assert code == 2 and "beta must be > 0" in err
    assert len(err.strip().splitlines()) == 1
    assert not (tmp_path / "m.png").exists()


def test_input_errors_map_to_exit_codes(tmp_path, capsys):
    t, r = strip_pair_files(tmp_path, "a")
    code, _, err = run(capsys, "stitch", "--target", t, "--reference", tmp_path / "nope.png", "--out", tmp_path / "m.png")
    assert code == 2 and "nope.png" in err
    img = np.zeros((10, 10, 3))
    left = np.zeros((10, 10), bool)
    left[:, :5] = True
    write_image(img, tmp_path / "l.png", alpha=left)
    write_image(img, tmp_path / "r.png", alpha=~left)
    code, _, err = run(capsys, "stitch", "--target", tmp_path / "l.png", "--reference", tmp_path / "r.png",
                       "--out", tmp_path / "m.png")
    assert code == 3 and "overlap" in err
    write_image(np.zeros((11, 10, 3)), tmp_path / "big.png", alpha=np.ones((11, 10), bool))
    code, _, _ = run(capsys, "stitch", "--target", tmp_path / "l.png", "--reference", tmp_path / "big.png",
                     "--out", tmp_path / "m.png")
    assert code == 2


def test_full_alpha_pair_is_unanchored(tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_image(rng.random((20, 20, 3)), tmp_path / "a.png", alpha=np.ones((20, 20), bool))
    write_image(rng.random((20, 20, 3)), tmp_path / "b.png", alpha=np.ones((20, 20), bool))
    code, _, err = run(capsys, "stitch", "--target", tmp_path / "a.png", "--reference", tmp_path / "b.png",
                       "--out", tmp_path / "m.png")
    assert code == 2 and "anchor" in err


def test_internal_failure_exit_code(tmp_path, capsys, monkeypatch):
    t, r = strip_pair_files(tmp_path, "a")

    def broken(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "estimate_seam", broken)
    code, _, err = run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png")
    assert code == 4 and "kaboom" in err


def test_evaluate_schema_and_empty_seam(tmp_path, capsys):
    t, r = strip_pair_files(tmp_path, "d", identical=False)
    run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png", "--no-lpam",
        "--labels", tmp_path / "lab.png", "--metrics", tmp_path / "met.json")
    code, out, _ = run(capsys, "evaluate", "--target", t, "--reference", r, "--labels", tmp_path / "lab.png",
                       "--out", tmp_path / "ev.json")
    assert code == 0
    metrics = json.loads(out)
    assert set(metrics) == {"rmse", "psnr", "ssim", "zncc", "seam_length", "window"}
    # round trip: the mask written by stitch reproduces stitch's metrics exactly
    assert (tmp_path / "ev.json").read_text() == (tmp_path / "met.json").read_text()

    Image.fromarray(np.zeros((60, 90), np.uint8), "L").save(tmp_path / "zeros.png")
    code, _, err = run(capsys, "evaluate", "--target", t, "--reference", r, "--labels", tmp_path / "zeros.png")
    assert code == 2 and "empty seam" in err
    Image.fromarray(np.zeros((5, 5), np.uint8), "L").save(tmp_path / "small.png")
    code, _, _ = run(capsys, "evaluate", "--target", t, "--reference", r, "--labels", tmp_path / "small.png")
    assert code == 2


def test_no_lpam_mosaic_ignores_lpam_flags(tmp_path, capsys, shift_files):
    t, r = shift_files
    run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "a.png", "--no-lpam")
    run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "b.png", "--no-lpam",
        "--beta", "2", "--margin", "5")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_stitch_with_lpam_improves_and_round_trips(tmp_path, capsys, shift_files):
    t, r = shift_files
    args = ["stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png", "--metrics",
            tmp_path / "met.json", "--report", tmp_path / "rep.json", "--labels", tmp_path / "lab.png",
            "--realigned", tmp_path / "re.png", "--seam-vis", tmp_path / "vis.png", "--flow-dir", tmp_path / "flows"]
    code, _, err = run(capsys, *args)
    assert code == 0, err
    met = json.loads((tmp_path / "met.json").read_text())
    pre, post = met["pre"], met["post"]
    assert post["rmse"] < pre["rmse"] and post["zncc"] < pre["zncc"] and post["ssim"] > pre["ssim"]
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["plausible"] is False and rep["components"]
    assert {"range", "pre_mean_q", "post_mean_q", "skipped", "reason"} <= set(rep["components"][0])
    assert "total" in rep["elapsed_ms"]
    assert (tmp_path / "vis.png").exists()
    assert (tmp_path / "flows" / "flow_000.png").exists()
    flow = np.load(tmp_path / "flows" / "flow_000.npy")
    assert flow.ndim == 3 and flow.shape[2] == 2
    # evaluating the realigned target against the final mask reproduces the post metrics
    # up to the 8-bit quantisation of the realigned PNG
    code, out, _ = run(capsys, "evaluate", "--target", tmp_path / "re.png", "--reference", r,
                       "--labels", tmp_path / "lab.png")
    ev = json.loads(out)
    assert ev["seam_length"] == post["seam_length"]
    for k in ("rmse", "ssim", "zncc"):
        assert ev[k] == pytest.approx(post[k], abs=2e-3)

    # same inputs and flags give byte-identical metrics
    args[args.index("--metrics") + 1] = tmp_path / "met2.json"
    run(capsys, *args)
    assert (tmp_path / "met.json").read_bytes() == (tmp_path / "met2.json").read_bytes()


def test_visualize(tmp_path, capsys):
    t, r = strip_pair_files(tmp_path, "v", identical=False)
    run(capsys, "stitch", "--target", t, "--reference", r, "--out", tmp_path / "m.png", "--no-lpam",
        "--labels", tmp_path / "lab.png")
    code, _, _ = run(capsys, "visualize", "--target", t, "--reference", r, "--labels", tmp_path / "lab.png",
                     "--out", tmp_path / "vis.png")
    assert code == 0
    assert np.asarray(Image.open(tmp_path / "vis.png")).shape == (60, 90, 3)


def test_batch_identical_pairs_and_failures(tmp_path, capsys):
    names = []
    for i in range(2):
        t, r = strip_pair_files(tmp_path, f"p{i}")
        names.append({"name": f"p{i}", "target": t.split("/")[-1], "reference": r.split("/")[-1]})
    names.append({"name": "broken", "target": "missing.png", "reference": "missing.png"})
    (tmp_path / "manifest.json").write_text(json.dumps(names))
    code, out, _ = run(capsys, "batch", "--manifest", tmp_path / "manifest.json", "--out-dir", tmp_path / "out")
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert [row["method"] for row in summary["rows"]] == ["Baseline", "+LPAM"]
    for row in summary["rows"]:
        assert row["rmse"] == 0.0 and row["ssim"] == 1.0
    assert summary["n_pairs"] == 2 and [f["name"] for f in summary["failed"]] == ["broken"]
    assert "| Method | RMSE" in out and "| +LPAM |" in out
    for name in ("p0", "p1"):
        for f in ("mosaic_baseline.png", "mosaic_lpam.png", "labels_lpam.png", "metrics.json", "report.json"):
            assert (tmp_path / "out" / name / f).exists()


def test_batch_means_are_recomputable(tmp_path, capsys):
    entries = []
    for i in range(2):
        t, r = strip_pair_files(tmp_path, f"q{i}", identical=False, seed=i)
        entries.append({"name": f"q{i}", "target": t, "reference": r})
    (tmp_path / "m.json").write_text(json.dumps(entries))
    assert run(capsys, "batch", "--manifest", tmp_path / "m.json", "--out-dir", tmp_path / "o")[0] == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    per = [json.loads((tmp_path / "o" / e["name"] / "metrics.json").read_text()) for e in entries]
    for row, key in zip(summary["rows"], ("baseline", "lpam")):
        for m in ("rmse", "psnr", "ssim", "zncc"):
            assert row[m] == pytest.approx(np.mean([p[key][m] for p in per]), abs=1e-15)


def test_batch_bad_manifest(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    code, _, err = run(capsys, "batch", "--manifest", tmp_path / "bad.json", "--out-dir", tmp_path / "o")
    assert code == 2 and "manifest" in err
    code, _, _ = run(capsys, "batch", "--manifest", tmp_path / "absent.json", "--out-dir", tmp_path / "o")
    assert code == 2
    (tmp_path / "dup.json").write_text(json.dumps([{"name": "a", "target": "x", "reference": "y"}] * 2))
    assert run(capsys, "batch", "--manifest", tmp_path / "dup.json", "--out-dir", tmp_path / "o")[0] == 2


def test_json_writer_is_deterministic(tmp_path):
    cli.write_json({"b": np.float64(0.5), "a": [np.int64(1), 2]}, tmp_path / "x.json")
    assert (tmp_path / "x.json").read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 0.5\n}\n'
    assert list(tmp_path.iterdir()) == [tmp_path / "x.json"]
