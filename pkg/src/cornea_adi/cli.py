"""Command line: render, run, study and report."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .errors import ConfigInvalid
from .geometry import Ellipse2D
from .harness import RunConfig, load_config, read_csv, run_pipeline, run_study, summary_table, write_csv
from .simulator import DEVICE_DIMS, SceneConfig, downscale, load_png, render, save_png

log = logging.getLogger("cornea_adi")


def _scales(text):
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}") from None
    if not vals or any(not (0 < v <= 1) for v in vals):
        raise argparse.ArgumentTypeError("scales must lie in (0, 1]")
    return vals


def _common(p, out_default="out"):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--mode", choices=sorted(DEVICE_DIMS))
    p.add_argument("--scales", type=_scales, help="comma separated scale factors, e.g. 1,0.5,0.25,0.125")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None, help=f"output directory (default: {out_default})")
    p.add_argument("--oracle-ellipse", action="store_true", help="inject the true limbus ellipse")
    p.add_argument("--dump-debug", action="store_true", help="write PNG debug overlays")


def build_parser():
    ap = argparse.ArgumentParser(prog="cornea-adi", description="Corneal-reflection around-device interaction pipeline")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a synthetic frame with ground truth")
    _common(p)
    p.add_argument("--scene", help="key = value scene file")
    p.add_argument("--target", type=float, nargs=2, metavar=("X", "Y"), help="pointer position on the plane (mm)")

    p = sub.add_parser("run", help="run the pipeline on one PNG image")
    _common(p)
    p.add_argument("image")
    p.add_argument("--truth", help="JSON-lines ground truth written by render")

    p = sub.add_parser("study", help="run the synthetic evaluation protocol")
    _common(p)
    p.add_argument("--participants", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="re-aggregate a results CSV")
    p.add_argument("csv")
    p.add_argument("--out", default=None)
    return ap


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    kw = {}
    for name in ("mode", "scales", "seed", "participants", "repetitions", "workers"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if getattr(args, "oracle_ellipse", False):
        kw["oracle_ellipse"] = True
    if getattr(args, "dump_debug", False):
        kw["dump_debug"] = True
    if args.out is not None:
        kw["out_dir"] = args.out
    return replace(cfg, **kw)


def cmd_render(args):
    cfg = _run_config(args)
    if args.scene:
        with open(args.scene, encoding="utf-8") as fh:
            scene = SceneConfig.from_text(fh.read())
    else:
        scene = SceneConfig(mode=cfg.mode, device_dims=DEVICE_DIMS[cfg.mode], pointer="marker" if cfg.mode == "RECT" else "finger")
    if args.target:
        scene = replace(scene, target=tuple(args.target))
    os.makedirs(cfg.out_dir, exist_ok=True)
    image, gt = render(scene)
    with open(os.path.join(cfg.out_dir, "scene.txt"), "w", encoding="utf-8") as fh:
        fh.write(scene.to_text())
    with open(os.path.join(cfg.out_dir, "truth.jsonl"), "w", encoding="utf-8") as fh:
        for s in cfg.scales:
            name = f"frame_s{s:g}.png"
            save_png(os.path.join(cfg.out_dir, name), image if s == 1.0 else downscale(image, s))
            d = gt.scaled(s).to_dict()
            d.update(image=name, scale=s)
            fh.write(json.dumps(d, sort_keys=True) + "\n")
    print(f"wrote {len(cfg.scales)} frame(s) to {cfg.out_dir}")
    return 0


def _truth_for(path, image_path):
    name = os.path.basename(image_path)
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    for r in rows:
        if r.get("image") == name:
            return r
    if len(rows) == 1:
        return rows[0]
    raise ConfigInvalid(f"no ground-truth line for {name}")


def cmd_run(args):
    cfg = _run_config(args)
    image = load_png(args.image)
    truth = _truth_for(args.truth, args.image) if args.truth else None
    if cfg.oracle_ellipse and truth is None:
        raise ConfigInvalid("--oracle-ellipse needs --truth")
    oracle = None
    if cfg.oracle_ellipse:
        oracle = Ellipse2D(tuple(truth["limbus_center_px"]), truth["limbus_a_px"], truth["limbus_b_px"], truth["limbus_rotation_rad"])
    target = (truth["target_x_mm"], truth["target_y_mm"]) if truth else (float("nan"), float("nan"))
    scale = float(truth.get("scale", 1.0)) if truth else 1.0
    res = run_pipeline(image, cfg, sample_id=os.path.basename(args.image), scale=scale, target=target, oracle_ellipse=oracle)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.dump_debug:
        from .plotting import write_debug_overlays

        write_debug_overlays(res, os.path.join(cfg.out_dir, "debug"))
    res.debug = None
    write_csv([res], os.path.join(cfg.out_dir, "results.csv"))
    if res.detected:
        print(f"pointer at x={res.estimate[0]:.2f} mm, y={res.estimate[1]:.2f} mm")
    else:
        print(f"failed: {res.failure}")
    return 0 if res.detected else 1


def _report(results, out_dir):
    from .plotting import plot_error_vs_resolution, plot_scatter

    os.makedirs(out_dir, exist_ok=True)
    table = summary_table(results)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    for mode in sorted({r.mode for r in results}):
        sel = [r for r in results if r.mode == mode]
        plot_scatter(sel, os.path.join(out_dir, f"scatter_{mode}.png"), mode)
        plot_error_vs_resolution(sel, os.path.join(out_dir, f"errors_{mode}.png"))
    return table


def cmd_study(args):
    cfg = _run_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    debug_dir = os.path.join(cfg.out_dir, "debug") if cfg.dump_debug else None
    results = run_study(cfg, debug_dir=debug_dir)
    write_csv(results, os.path.join(cfg.out_dir, "results.csv"))
    print(_report(results, cfg.out_dir), end="")
    return 0


def cmd_report(args):
    results = read_csv(args.csv)
    out = args.out or os.path.dirname(os.path.abspath(args.csv))
    print(_report(results, out), end="")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"render": cmd_render, "run": cmd_run, "study": cmd_study, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigInvalid, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
