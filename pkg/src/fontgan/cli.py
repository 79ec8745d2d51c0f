"""
Command-line entry point: ``fontgan <command> [flags]``.

Fatal errors print a single line ``error: <kind>: <message>`` on stderr and
exit non-zero (1 for runtime failures, 2 for usage errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

DATA_ROOT_ENV = "FONTGAN_DATA_ROOT"


class UsageError(Exception):
    pass


class CommandError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _data_root(value):
    root = value or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise UsageError(f"--data is required (or set {DATA_ROOT_ENV})")
    return Path(root)


def _load_config(args, **overrides):
    from .training import TrainConfig

    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    updates = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**updates) if updates else config


# --------------------------------------------------------------------------
# image helpers
# --------------------------------------------------------------------------

def read_glyph_image(path) -> np.ndarray:
    from .glyphdata import IMAGE_SIZE, to_float

    with Image.open(path) as im:
        im = im.convert("L")
        if im.size != (IMAGE_SIZE, IMAGE_SIZE):
            im = im.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
        return to_float(np.array(im, dtype=np.uint8))


def write_grid(path, rows: list[list[np.ndarray | None]]) -> tuple[int, int]:
    """Tile [-1, 1] glyphs into a PNG; ``None`` cells stay white. Returns (rows, cols)."""
    from .glyphdata import IMAGE_SIZE, to_uint8

    n_rows, n_cols = len(rows), max(len(r) for r in rows)
    canvas = np.full((n_rows * IMAGE_SIZE, n_cols * IMAGE_SIZE), 255, np.uint8)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            if cell is not None:
                canvas[i * IMAGE_SIZE:(i + 1) * IMAGE_SIZE, j * IMAGE_SIZE:(j + 1) * IMAGE_SIZE] = to_uint8(cell)
    Image.fromarray(canvas, mode="L").save(path)
    return n_rows, n_cols


def _inputs(args) -> tuple[list[str], np.ndarray]:
    """(names, glyphs) from --text/--font or --inputs."""
    from .glyphdata import charset_from_text, render_font

    if args.text:
        if not args.font:
            raise UsageError("--text needs --font")
        specs = charset_from_text(args.text)
        glyphs = render_font(args.font, specs)
        return [s.glyph_id for s in specs], np.stack([g.pixels for g in glyphs])
    if args.inputs:
        return [Path(p).stem for p in args.inputs], np.stack([read_glyph_image(p) for p in args.inputs])
    raise UsageError("give --text with --font, or --inputs")


def _known_labels(meta) -> dict[int, str]:
    return {f["label"]: f["name"] for f in meta.get("fonts", [])}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_build_dataset(args):
    from .glyphdata import DEMO_CHARSET, FontLabel, build_dataset, charset_from_text

    fonts = []
    for i, spec in enumerate(args.font):
        name, sep, path = spec.partition("=")
        if not sep:
            raise UsageError(f"--font expects NAME=PATH, got {spec!r}")
        fonts.append((path, FontLabel(i, name)))
    if len(fonts) < 2:
        raise UsageError("need at least two --font entries (the first is the standard font)")
    text = Path(args.charset_file).read_text(encoding="utf-8") if args.charset_file else (args.charset or DEMO_CHARSET)
    root = _data_root(args.out)
    manifest = build_dataset(fonts, charset_from_text(text), root, args.split_ratio, args.seed or 0)
    print(f"wrote {len(manifest.fonts)} fonts x {len(manifest.charset)} characters to {root} "
          f"(train {len(manifest.train)}, test {len(manifest.test)}, excluded {len(manifest.excluded)})")


def cmd_pretrain_cpm(args):
    from .training import pretrain_cpm

    config = _load_config(args, seed=args.seed, epochs=args.epochs, checkpoint_dir=args.out,
                          dataset=str(_data_root(args.data)))
    artifact = pretrain_cpm(config.dataset, config, resume=not args.fresh)
    print(f"content prior written to {Path(config.checkpoint_dir) / 'cpm.pt'} "
          f"(final pixel {artifact.meta.get('final_pixel')})")


def cmd_train(args):
    from .training import train

    config = _load_config(args, seed=args.seed, epochs=args.epochs, checkpoint_dir=args.out,
                          dataset=str(_data_root(args.data)), cpm_path=args.cpm,
                          use_fcm=False if args.no_fcm else None, use_cpm=False if args.no_cpm else None)
    if not config.checkpoint_dir:
        raise UsageError("--out (checkpoint directory) is required")
    result = train(config.dataset, config, resume=not args.fresh)
    print(f"checkpoint {result.checkpoint}, loss log {result.log_path}")


def cmd_finetune(args):
    from .training import finetune

    config = _load_config(args, seed=args.seed, epochs=args.epochs or 5, checkpoint_dir=args.out,
                          dataset=str(_data_root(args.data)), cpm_path=args.cpm,
                          use_cpm=False if args.no_cpm else None)
    if not config.checkpoint_dir:
        raise UsageError("--out (checkpoint directory) is required")
    result = finetune(args.checkpoint, config.dataset, config, new_font=args.new_font)
    print(f"checkpoint {result.checkpoint}")


def cmd_stylize(args):
    from .glyphdata import charset_from_text, render_font, save_glyph
    from .inference import prior_style, reference_style, stylize
    from .networks import load_checkpoint

    model, meta = load_checkpoint(args.checkpoint)
    names, glyphs = _inputs(args)
    if args.mode == "encode":
        if not args.reference:
            raise UsageError("encode mode needs --reference IMAGE")
        style = reference_style(model, read_glyph_image(args.reference))
    else:
        if args.label is None:
            raise UsageError("sample mode needs --label")
        known = _known_labels(meta)
        if args.label not in known:
            raise CommandError(f"unknown font label {args.label}; known labels: "
                               + ", ".join(f"{y}={n}" for y, n in sorted(known.items())))
        style = prior_style(args.label, 1, args.seed or 0)
    outputs = stylize(model, glyphs, style)

    refs = [None] * len(names)
    if args.reference_font and args.text:
        refs = [g.pixels for g in render_font(args.reference_font, charset_from_text(args.text))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(names, outputs):
        save_glyph(out / f"{name}.png", img)
    shape = write_grid(out / "grid.png", [[g, o, r] for g, o, r in zip(glyphs, outputs, refs)])
    print(f"wrote {len(names)} glyphs and a {shape[0]}x{shape[1]} grid to {out}")


def cmd_destylize(args):
    from .glyphdata import save_glyph
    from .inference import destylize
    from .metrics.ocr import OcrProxy
    from .networks import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    names, glyphs = _inputs(args)
    outputs = destylize(model, glyphs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(names, outputs):
        save_glyph(out / f"{name}.png", img)
    write_grid(out / "grid.png", [[g, o, None] for g, o in zip(glyphs, outputs)])
    if args.ocr:
        ocr = OcrProxy.load(args.ocr)
        acc = ocr.accuracy(outputs, names)
        report = {"ocr_acc": acc, "n": len(names), "predictions": dict(zip(names, ocr.predict(outputs)))}
        (out / "ocr.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"ocr_acc {acc:.4f} over {len(names)} glyphs")
    print(f"wrote {len(names)} de-stylized glyphs to {out}")


def cmd_sample_styles(args):
    from .inference import prior_style, stylize
    from .networks import load_checkpoint

    model, meta = load_checkpoint(args.checkpoint)
    known = _known_labels(meta)
    labels = args.labels or sorted(y for y in known if y > 0)
    for y in labels:
        if y not in known:
            raise CommandError(f"unknown font label {y}; known labels: "
                               + ", ".join(f"{k}={n}" for k, n in sorted(known.items())))
    names, glyphs = _inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, glyph in zip(names, glyphs):
        rows = []
        for i, y in enumerate(labels):
            styles = prior_style(y, args.samples, (args.seed or 0) + i)
            rows.append([glyph] + list(stylize(model, np.repeat(glyph[None], args.samples, 0), styles)))
        write_grid(out / f"{name}_samples.png", rows)
    print(f"wrote style samples for {len(names)} glyphs, labels {labels}, to {out}")


def cmd_evaluate(args):
    from .glyphdata import GlyphDataset
    from .metrics.evaluation import evaluate
    from .metrics.ocr import OcrConfig, OcrProxy, train_ocr_proxy

    dataset = GlyphDataset.load(_data_root(args.data))
    ocr = None
    if args.ocr:
        if Path(args.ocr).exists():
            ocr = OcrProxy.load(args.ocr)
        else:
            ocr = train_ocr_proxy(dataset, OcrConfig(seed=args.seed or 0))
            ocr.save(args.ocr)
    report = evaluate(args.checkpoint, dataset, split=args.split, ocr=ocr)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        report.save(args.out)
    print(report.table("stylization"))
    print()
    print(report.table("destylization"))
    if ocr is not None:
        print(f"\nnote: {report.note}")


def plot_losses(records, weights=None):
    """Figure with one labelled curve per logged loss term, plus the recomputed total_G."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .losses import recompute_total_G

    skip = {"step", "epoch", "lr"}
    terms = sorted({k for r in records for k, v in r.items() if k not in skip and isinstance(v, (int, float))})
    steps = [r["step"] for r in records]
    fig, (ax, ax_check) = plt.subplots(2, 1, figsize=(9, 8), sharex=True)
    for t in terms:
        ax.plot([r["step"] for r in records if t in r], [r[t] for r in records if t in r], label=t)
    ax.set_yscale("symlog", linthresh=1e-2)
    ax.set_ylabel("loss")
    ax.legend(fontsize="small", ncol=3)
    ax_check.plot(steps, [r.get("total_G", np.nan) for r in records], label="total_G (logged)")
    ax_check.plot(steps, [recompute_total_G(r, weights) for r in records], "--", label="total_G (recomputed)")
    ax_check.set_xlabel("step")
    ax_check.legend(fontsize="small")
    fig.tight_layout()
    return fig, terms


def cmd_losses_plot(args):
    records, bad = [], 0
    for line in Path(args.log).read_text().splitlines():
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict) or "step" not in rec:
                raise ValueError
            records.append(rec)
        except ValueError:
            bad += 1
    if bad:
        print(f"skipped {bad} malformed log line(s)", file=sys.stderr)
    if not records:
        raise CommandError(f"empty loss log {args.log}: nothing to plot")
    weights = None
    if args.config:
        weights = _load_config(args).weights
    fig, terms = plot_losses(records, weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig.savefig(out / "losses.png", dpi=100)
    print(f"plotted {len(terms)} terms over {len(records)} steps to {out / 'losses.png'}")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fontgan", description="Glyph stylization / de-stylization pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, checkpoint=False, data=False):
        sp.add_argument("--config", help="JSON training config")
        sp.add_argument("--seed", type=int, help="RNG seed (default: the config's, else 0)")
        sp.add_argument("--out", help="output directory or file")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)
        if data:
            sp.add_argument("--data", help=f"dataset directory (default: ${DATA_ROOT_ENV})")

    def glyph_inputs(sp):
        sp.add_argument("--text", help="characters to render as input")
        sp.add_argument("--font", help="font file for --text")
        sp.add_argument("--inputs", nargs="+", help="glyph image files (name = glyph id)")

    sp = sub.add_parser("build-dataset", help="render fonts into a dataset directory")
    common(sp)
    sp.add_argument("--font", action="append", default=[], required=True,
                    help="NAME=PATH; repeat, the first is the standard font (label 0)")
    sp.add_argument("--charset", help="characters to render (default: built-in demo set)")
    sp.add_argument("--charset-file")
    sp.add_argument("--split-ratio", type=float, default=0.8)
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("pretrain-cpm", help="train the content prior on two simple fonts")
    common(sp, data=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--fresh", action="store_true", help="ignore an existing checkpoint")
    sp.set_defaults(func=cmd_pretrain_cpm)

    sp = sub.add_parser("train", help="main training")
    common(sp, data=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--cpm", help="content prior artifact")
    sp.add_argument("--no-fcm", action="store_true", help="ablation: drop KL terms and the sampled path")
    sp.add_argument("--no-cpm", action="store_true", help="ablation: drop the content prior term")
    sp.add_argument("--fresh", action="store_true", help="ignore an existing checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("finetune", help="adapt a checkpoint to a new font")
    common(sp, checkpoint=True, data=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--cpm")
    sp.add_argument("--no-cpm", action="store_true")
    sp.add_argument("--new-font", help="name of the new font in the dataset")
    sp.set_defaults(func=cmd_finetune)

    sp = sub.add_parser("stylize", help="standard font -> target font")
    common(sp, checkpoint=True)
    glyph_inputs(sp)
    sp.add_argument("--mode", choices=("encode", "sample"), default="encode")
    sp.add_argument("--reference", help="reference glyph image of the target font (encode mode)")
    sp.add_argument("--label", type=int, help="target font label (sample mode)")
    sp.add_argument("--reference-font", help="target font file for the ground-truth column")
    sp.set_defaults(func=cmd_stylize)

    sp = sub.add_parser("destylize", help="any font -> standard font")
    common(sp, checkpoint=True)
    glyph_inputs(sp)
    sp.add_argument("--ocr", help="OCR proxy artifact; file names must be glyph ids")
    sp.set_defaults(func=cmd_destylize)

    sp = sub.add_parser("sample-styles", help="stylize with codes drawn from font priors")
    common(sp, checkpoint=True)
    glyph_inputs(sp)
    sp.add_argument("--labels", type=int, nargs="+")
    sp.add_argument("--samples", type=int, default=8)
    sp.set_defaults(func=cmd_sample_styles)

    sp = sub.add_parser("evaluate", help="metrics on a dataset split")
    common(sp, checkpoint=True, data=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--ocr", help="OCR proxy artifact; trained and written here if missing")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("losses-plot", help="plot a loss log")
    common(sp)
    sp.add_argument("--log", required=True)
    sp.set_defaults(func=cmd_losses_plot)
    return p


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "out", None) is None and args.command not in ("build-dataset", "evaluate"):
            raise UsageError("--out is required")
        args.func(args)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every fatal error gets one parsable line
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
