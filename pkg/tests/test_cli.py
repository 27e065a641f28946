"""CLI tests: exit codes, artifacts, identity properties, bench CSV."""

import csv
import os

import numpy as np
import pytest

from implut import dataio
from implut.checkpoint import save_checkpoint
from implut.cli import main, parse_w
from implut.image import ImageBuf
from implut.predictor import ParamPredictor
from implut.transform import DEFAULT_FILTER_NAMES, MlpFilter


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ckpt = root / "m.ckpt"
    save_checkpoint(ckpt, MlpFilter(hidden=8, seed=5),
                    ParamPredictor(hidden=8, seed=5))
    img = root / "x.png"
    rng = np.random.default_rng(0)
    dataio.write_image(img, ImageBuf(rng.random((24, 32, 3))))
    return root, str(ckpt), str(img)


def test_parse_w_positional_and_named():
    w = parse_w("0.1,0,-0.3,0,1", DEFAULT_FILTER_NAMES)
    assert w.values[2] == pytest.approx(-0.3)
    w = parse_w("Exposure=0.5,Tint correction=-0.1", DEFAULT_FILTER_NAMES)
    assert w.values[0] == pytest.approx(0.5)
    assert w.values[4] == pytest.approx(-0.1)
    assert np.all(w.values[1:4] == 0)


def test_parse_w_rejects_malformed():
    import click
    for bad in ("0,0", "a,b,c,d,e", "Nope=1", "2,0,0,0,0"):
        with pytest.raises(click.BadParameter):
            parse_w(bad, DEFAULT_FILTER_NAMES)


def test_exit_codes(workspace):
    root, ckpt, img = workspace
    assert main(["--help"]) == 0
    assert main(["enhance", "--bogus-flag"]) == 1
    assert main(["enhance", "--checkpoint", "missing.ckpt", "--in", img,
                 "--out", str(root / "o.png"), "--w", "0,0,0,0,0"]) == 1
    # runtime failure: checkpoint exists but is not a checkpoint
    bad = root / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert main(["enhance", "--checkpoint", str(bad), "--in", img,
                 "--out", str(root / "o.png"), "--w", "0,0,0,0,0"]) == 2


def test_enhance_identity_at_zero(workspace):
    root, ckpt, img = workspace
    out = root / "y.png"
    assert main(["enhance", "--checkpoint", ckpt, "--in", img,
                 "--out", str(out), "--w", "0,0,0,0,0"]) == 0
    assert np.array_equal(dataio.read_image(out).pixels,
                          dataio.read_image(img).pixels)


def test_enhance_bypass_matches_direct(workspace):
    root, ckpt, img = workspace
    fast, slow = root / "fast.png", root / "slow.png"
    args = ["enhance", "--checkpoint", ckpt, "--in", img, "--w",
            "0.4,-0.2,0.1,0,0.3"]
    assert main(args + ["--out", str(fast)]) == 0
    assert main(args + ["--out", str(slow), "--no-bypass"]) == 0
    a = dataio.read_image(fast).pixels
    b = dataio.read_image(slow).pixels
    assert np.max(np.abs(a - b)) <= 5e-2  # bypass tolerance + quantization


def test_sweep_zero_value_equals_input(workspace):
    root, ckpt, img = workspace
    out_dir = root / "sweep"
    assert main(["sweep", "--checkpoint", ckpt, "--in", img, "--filter",
                 "Exposure", "--values", "-1,-0.5,0,0.5,1",
                 "--out-dir", str(out_dir)]) == 0
    files = sorted(os.listdir(out_dir))
    assert len(files) == 5
    zero = dataio.read_image(out_dir / "exposure_+0.00.png")
    assert np.array_equal(zero.pixels, dataio.read_image(img).pixels)


def test_sweep_unknown_filter_is_usage_error(workspace):
    root, ckpt, img = workspace
    assert main(["sweep", "--checkpoint", ckpt, "--in", img, "--filter",
                 "Vibrance", "--out-dir", str(root / "s2")]) == 1


def test_gen_data_deterministic(workspace):
    root, _, _ = workspace
    for name in ("d1", "d2"):
        assert main(["gen-data", "--out", str(root / name), "--count", "2",
                     "--size", "8x8", "--seed", "3"]) == 0
    a = (root / "d1" / "x_0000.png").read_bytes()
    b = (root / "d2" / "x_0000.png").read_bytes()
    assert a == b
    assert (root / "d1" / "params.csv").exists()


def test_export_lut_identity(workspace):
    root, ckpt, _ = workspace
    out = root / "i.cube"
    assert main(["export-lut", "--checkpoint", ckpt, "--w", "0,0,0,0,0",
                 "--out", str(out), "--n", "5"]) == 0
    from implut.lut import lattice_coords, parse_cube
    lut = parse_cube(out.read_bytes())
    assert np.max(np.abs(lut.table - lattice_coords(5))) <= 1e-6


def test_bench_csv_eval_counts(workspace):
    root, ckpt, _ = workspace
    out = root / "bench.csv"
    assert main(["bench", "--checkpoint", ckpt, "--sizes", "32,64",
                 "--bypass", "both", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    bypassed = [r for r in rows if r["path"] == "bypass"]
    direct = [r for r in rows if r["path"] == "direct"]
    assert all(int(r["mlp_evals"]) == 35_937 for r in bypassed)
    assert [int(r["mlp_evals"]) for r in direct] == [32 * 32, 64 * 64]


def test_train_and_eval_round_trip(workspace, tmp_path):
    root, _, _ = workspace
    data = root / "d1"  # written by test_gen_data_deterministic
    if not data.exists():
        assert main(["gen-data", "--out", str(data), "--count", "2",
                     "--size", "8x8", "--seed", "3"]) == 0
    cfg = tmp_path / "fast.toml"
    cfg.write_text("""
[training]
resolution = 8
stage1_steps = 2
stage2_steps = 2
stage3_steps = 2
stage2_batch = 2
stage3_batch = 2
[guidance]
sample_count = 1
""")
    ckpt_out = tmp_path / "trained.ckpt"
    assert main(["train", "--data", str(data), "--out", str(ckpt_out),
                 "--config", str(cfg), "--trace",
                 str(tmp_path / "trace.csv")]) == 0
    assert ckpt_out.exists() and (tmp_path / "trace.csv").exists()
    assert main(["eval", "--checkpoint", str(ckpt_out), "--data", str(data),
                 "--out", str(tmp_path / "eval.csv")]) == 0
    text = (tmp_path / "eval.csv").read_text().splitlines()
    assert text[0] == "index,psnr_input,psnr_enhanced,gain_db"
    assert text[-1].startswith("mean,")
