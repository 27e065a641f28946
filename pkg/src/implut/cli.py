"""Command-line entry point for the full workflow.

Exit codes: 0 success, 1 usage error (unknown flag, missing file),
2 runtime failure.
"""

import csv
import sys
import time

import click
import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import dataio, lut
from .image import ImageBuf
from .predictor import ParamPredictor, predict
from .train import LossTrace, psnr, stage1, stage2, stage3
from .transform import (DEFAULT_FILTER_NAMES, FilterParams, MlpFilter,
                        apply_direct)


def _load_config(path):
    return cfgmod.load(path) if path else cfgmod.RunConfig()


def parse_w(text, names):
    """Parse '--w' values: '0.1,0,-0.3,...' or named 'Exposure=0.5,Tint correction=-0.1'.

    Named entries default unnamed filters to 0.  Raises click.BadParameter
    on malformed input.
    """
    text = text.strip()
    if "=" in text:
        values = dict.fromkeys(names, 0.0)
        for chunk in text.split(","):
            name, _, val = chunk.partition("=")
            name = name.strip()
            if name not in values:
                raise click.BadParameter("unknown filter name %r" % name)
            try:
                values[name] = float(val)
            except ValueError:
                raise click.BadParameter("bad value for %r: %r" % (name, val))
        arr = [values[n] for n in names]
    else:
        try:
            arr = [float(v) for v in text.split(",")]
        except ValueError:
            raise click.BadParameter("w must be comma-separated numbers")
        if len(arr) != len(names):
            raise click.BadParameter(
                "w needs %d values, got %d" % (len(names), len(arr)))
    if any(abs(v) > 1.0 for v in arr):
        raise click.BadParameter("w values must lie in [-1, 1]")
    return FilterParams(arr, names)


def _load_checkpoint(path):
    return ckpt.load_checkpoint(path)


def _read_pairs(data_dir):
    """Read x_*/t_* image pairs written by gen-data."""
    import pathlib

    root = pathlib.Path(data_dir)
    xs = sorted(root.glob("x_*.png"))
    params = {}
    csv_path = root / "params.csv"
    if csv_path.exists():
        with open(csv_path) as fh:
            reader = csv.DictReader(fh)
            cols = [c for c in reader.fieldnames if c != "index"]
            for row in reader:
                params[int(row["index"])] = np.array(
                    [float(row[c]) for c in cols])
    pairs = []
    for xp in xs:
        tp = root / xp.name.replace("x_", "t_", 1)
        if not tp.exists():
            raise click.ClickException("missing target for %s" % xp.name)
        idx = int(xp.stem.split("_")[1])
        pairs.append(dataio.DatasetPair(
            dataio.read_image(xp), dataio.read_image(tp),
            params.get(idx, np.zeros(len(DEFAULT_FILTER_NAMES)))))
    if not pairs:
        raise click.ClickException("no x_*.png images in %s" % data_dir)
    return pairs


@click.group()
def cli():
    """Interpretable image enhancement: train, apply, export, serve."""


@cli.command("gen-data")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False))
@click.option("--count", type=int, default=None, help="number of pairs")
@click.option("--seed", type=int, default=None)
@click.option("--size", default=None, help="HxW, e.g. 64x64")
@click.option("--config", "config_path", type=click.Path(exists=True))
def gen_data(out_dir, count, seed, size, config_path):
    """Generate synthetic input/target training pairs."""
    import pathlib

    cfg = _load_config(config_path)
    if count is None:
        count = cfg.data_count
    if seed is None:
        seed = cfg.seed
    if size is not None:
        try:
            h, w = (int(v) for v in size.lower().split("x"))
        except ValueError:
            raise click.BadParameter("size must look like 64x64")
    else:
        h, w = cfg.data_size
    spec = dataio.GenSpec(count=count, size=(h, w), seed=seed)
    root = pathlib.Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "params.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"p{i+1}" for i in range(5)])
        for i in range(count):
            pair = dataio.generate_pair(spec, i)
            dataio.write_image(root / f"x_{i:04d}.png", pair.x)
            dataio.write_image(root / f"t_{i:04d}.png", pair.t)
            writer.writerow([i] + ["%.6f" % p for p in pair.params])
    click.echo("wrote %d pairs to %s" % (count, out_dir))


@cli.command()
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--stages", default="1,2,3", help="subset of 1,2,3 to run")
@click.option("--trace", "trace_path", type=click.Path(),
              help="write per-step losses as CSV")
@click.option("--resume", "resume_path", type=click.Path(exists=True),
              help="checkpoint to continue from")
def train(data_dir, out_path, config_path, seed, stages, trace_path,
          resume_path):
    """Run training stages and save a checkpoint."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    try:
        wanted = sorted({int(s) for s in stages.split(",")})
    except ValueError:
        raise click.BadParameter("stages must be like 1,2,3")
    if not wanted or any(s not in (1, 2, 3) for s in wanted):
        raise click.BadParameter("stages must be a subset of 1,2,3")

    pairs = _read_pairs(data_dir)
    images = [p.x for p in pairs]
    if resume_path:
        loaded = _load_checkpoint(resume_path)
        model, predictor = loaded.model, loaded.predictor
    else:
        model = MlpFilter(cfg.filter_names, seed=cfg.seed)
        predictor = None
    trace = LossTrace()

    t0 = time.monotonic()
    if 1 in wanted:
        stage1(model, images, cfg.train, trace=trace)
        click.echo("stage 1 done (%.1fs)" % (time.monotonic() - t0))
    if 2 in wanted:
        stage2(model, pairs, cfg.train, trace=trace)
        click.echo("stage 2 done (%.1fs)" % (time.monotonic() - t0))
    if 3 in wanted:
        if predictor is None:
            predictor = ParamPredictor(cfg.filter_names, seed=cfg.seed)
        stage3(predictor, model, pairs, cfg.train, trace=trace)
        click.echo("stage 3 done (%.1fs)" % (time.monotonic() - t0))

    ckpt.save_checkpoint(out_path, model, predictor,
                         config_fingerprint=cfg.fingerprint())
    if trace_path:
        trace.write_csv(trace_path)
    click.echo("saved checkpoint to %s" % out_path)


@cli.command()
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--w", "w_text", default=None,
              help='strengths: "0,0,0,0,0" or "Exposure=0.5"')
@click.option("--predict", "use_predictor", is_flag=True,
              help="use the checkpoint's predictor instead of --w")
@click.option("--no-bypass", is_flag=True,
              help="evaluate the network per pixel instead of via the LUT")
@click.option("--lut-n", type=int, default=33, show_default=True)
def enhance(ckpt_path, in_path, out_path, w_text, use_predictor, no_bypass,
            lut_n):
    """Apply the learned filters to one image."""
    loaded = _load_checkpoint(ckpt_path)
    model = loaded.model
    img = dataio.read_image(in_path)
    if use_predictor:
        if loaded.predictor is None:
            raise click.ClickException("checkpoint has no predictor")
        w = predict(loaded.predictor, img)
        click.echo("predicted w: %s" % w.as_dict())
    else:
        if w_text is None:
            raise click.BadParameter("provide --w or --predict")
        w = parse_w(w_text, model.filter_names)
    if no_bypass:
        out = apply_direct(model, img, w)
    else:
        out = lut.lookup(lut.bypass(model, w, n=lut_n), img)
    dataio.write_image(out_path, out)
    click.echo("wrote %s" % out_path)


@cli.command("export-lut")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_text", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--n", type=int, default=33, show_default=True)
@click.option("--title", default=None)
def export_lut(ckpt_path, w_text, out_path, n, title):
    """Distill the network at fixed strengths into a .cube 3D LUT."""
    model = _load_checkpoint(ckpt_path).model
    w = parse_w(w_text, model.filter_names)
    data = lut.write_cube(lut.bypass(model, w, n=n), title=title)
    with open(out_path, "wb") as fh:
        fh.write(data)
    click.echo("wrote %s (%d^3 entries)" % (out_path, n))


@cli.command()
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--filter", "filter_name", required=True)
@click.option("--values", default="-1,-0.5,0,0.5,1", show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def sweep(ckpt_path, in_path, filter_name, values, out_dir):
    """Vary one filter while holding the others at zero."""
    import pathlib

    model = _load_checkpoint(ckpt_path).model
    if filter_name not in model.filter_names:
        raise click.BadParameter("unknown filter %r; have: %s"
                                 % (filter_name,
                                    ", ".join(model.filter_names)))
    try:
        vals = [float(v) for v in values.split(",")]
    except ValueError:
        raise click.BadParameter("values must be comma-separated numbers")
    if any(abs(v) > 1.0 for v in vals):
        raise click.BadParameter("values must lie in [-1, 1]")
    img = dataio.read_image(in_path)
    root = pathlib.Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    j = model.filter_names.index(filter_name)
    slug = filter_name.lower().replace(" ", "-")
    for v in vals:
        w = np.zeros(len(model.filter_names))
        w[j] = v
        out = lut.lookup(lut.bypass(model, FilterParams(w, model.filter_names)),
                         img)
        path = root / ("%s_%+.2f.png" % (slug, v))
        dataio.write_image(path, out)
        click.echo("wrote %s" % path)


@cli.command()
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sizes", default="256,512,1024", show_default=True,
              help="square image sizes to benchmark")
@click.option("--bypass", "mode", default="both", show_default=True,
              type=click.Choice(["on", "off", "both"]))
@click.option("--out", "out_path", type=click.Path(),
              help="write the CSV here instead of stdout")
@click.option("--lut-n", type=int, default=33, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def bench(ckpt_path, sizes, mode, out_path, lut_n, seed):
    """Time direct vs LUT-bypassed application; CSV of size, path, ms, evals."""
    model = _load_checkpoint(ckpt_path).model
    try:
        dims = [int(s) for s in sizes.split(",")]
    except ValueError:
        raise click.BadParameter("sizes must be comma-separated integers")
    rng = np.random.default_rng(seed)
    w = FilterParams(rng.uniform(-0.5, 0.5, len(model.filter_names)),
                     model.filter_names)
    rows = [["size", "pixels", "path", "ms", "mlp_evals"]]
    for dim in dims:
        img = ImageBuf(rng.random((dim, dim, 3)))
        if mode in ("off", "both"):
            model.eval_count = 0
            t0 = time.perf_counter()
            apply_direct(model, img, w)
            ms = 1e3 * (time.perf_counter() - t0)
            rows.append([dim, dim * dim, "direct", "%.2f" % ms,
                         model.eval_count])
        if mode in ("on", "both"):
            model.eval_count = 0
            t0 = time.perf_counter()
            lut.lookup(lut.bypass(model, w, n=lut_n), img)
            ms = 1e3 * (time.perf_counter() - t0)
            rows.append([dim, dim * dim, "bypass", "%.2f" % ms,
                         model.eval_count])
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@cli.command("eval")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(),
              help="write the CSV here instead of stdout")
def eval_cmd(ckpt_path, data_dir, out_path):
    """PSNR of predicted enhancement vs targets on a generated dataset."""
    loaded = _load_checkpoint(ckpt_path)
    if loaded.predictor is None:
        raise click.ClickException("checkpoint has no predictor")
    pairs = _read_pairs(data_dir)
    rows = [["index", "psnr_input", "psnr_enhanced", "gain_db"]]
    gains = []
    for i, pair in enumerate(pairs):
        x, t = pair.x, pair.t
        w = predict(loaded.predictor, x)
        y = lut.lookup(lut.bypass(loaded.model, w), x)
        p_in, p_out = psnr(x, t), psnr(y, t)
        gains.append(p_out - p_in)
        rows.append([i, "%.3f" % p_in, "%.3f" % p_out,
                     "%.3f" % (p_out - p_in)])
    rows.append(["mean", "", "", "%.3f" % float(np.mean(gains))])
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--checkpoint", "ckpt_path",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(ckpt_path, config_path, host, port):
    """Run the HTTP service for the companion UI."""
    import uvicorn

    from .service import create_app

    cfg = _load_config(config_path)
    app = create_app(checkpoint_path=ckpt_path, run_config=cfg)
    uvicorn.run(app, host=host or cfg.service.host,
                port=port if port is not None else cfg.service.port)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:  # e.g. --help
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        click.echo("error: %s" % exc.format_message(), err=True)
        ctx = exc.ctx
        if ctx is not None:
            click.echo(ctx.get_help(), err=True)
        return 1
    except click.ClickException as exc:
        click.echo("error: %s" % exc.format_message(), err=True)
        return 2
    except Exception as exc:  # runtime failure of any kind
        click.echo("error: %s" % exc, err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
