"""Command-line entry point: ``segment``, ``evaluate``, ``synth`` and ``render``.

File naming: ``synth`` writes ``<name>.depth.pgm`` (+ ``.depth.txt``
sidecar) and ``<name>.gt.pgm``; ``segment`` writes ``<name>.seg.pgm``,
``<name>.planes.json``, ``<name>.mixture.json``, ``<name>.kept.rle``,
``<name>.fit.log`` and optionally ``<name>.render.ppm``. ``evaluate``
pairs machine and GT label maps by ``<name>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import imageio, serialize
from .config import PRESETS, RunConfig
from .errors import InputError, RPLGMRError, UnreadableInput
from .evaluate import aggregate, evaluate, format_table
from .geometry import Segmentation, render_scene, scale_factor, to_samples
from .pipeline import segment_depth

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_INPUT = 2
EXIT_NO_INPUTS = 3
EXIT_USAGE = 64

_SUFFIXES = (".depth", ".seg", ".gt", ".labels")


def image_key(path) -> str:
    """Pairing key of a file: its name without ``.pgm`` and the role suffix."""
    stem = Path(path).name
    if stem.endswith(".pgm"):
        stem = stem[:-4]
    for suf in _SUFFIXES:
        if stem.endswith(suf):
            return stem[: -len(suf)]
    return stem


def _error(code: str, message: str, **extra) -> None:
    print(json.dumps({"error": code, "message": message, **extra}), flush=True)


def _run_config(args) -> RunConfig:
    file_values = {}
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text())
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a flat JSON object")
    overrides = {
        "preset": args.preset,
        "k": args.k,
        "alpha": args.alpha,
        "t_mse": args.t_mse,
        "t_proj": args.t_proj,
        "t_rho": args.t_rho,
        "c_dm": args.c_dm,
        "epsilon": args.epsilon,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "render": True if args.render else None,
        "verbose": True if args.verbose else None,
        "threshold": getattr(args, "threshold", None),
    }
    return RunConfig.resolve(file_values, overrides)


def _depth_inputs(paths):
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("*.depth.pgm")) or sorted(
                q for q in p.glob("*.pgm") if image_key(q) == q.name[:-4])
            out.extend(found)
        else:
            out.append(p)
    return out


def cmd_segment(cfg: RunConfig, inputs) -> int:
    paths = _depth_inputs(inputs)
    if not paths:
        _error("no_inputs", "no depth images given")
        return EXIT_NO_INPUTS
    out_dir = Path(cfg.out_dir)
    status = EXIT_OK
    for path in paths:
        key = image_key(path)
        log_lines = []

        def _cb(it, ll, ntrim, live):
            log_lines.append(f"iter={it} L={ll:.10g} trimmed={ntrim} live={live}")

        try:
            depth, s = imageio.load_depth(path)
            if s is None:
                s = scale_factor(depth)
            res = segment_depth(depth, cfg.fit_config(), cfg.fusion_config(), s=s,
                                callback=_cb)
        except InputError as exc:
            _error(exc.code, str(exc), input=str(path))
            status = max(status, EXIT_INPUT)
            continue
        except RPLGMRError as exc:
            _error(exc.code, str(exc), input=str(path))
            status = max(status, EXIT_PIPELINE)
            continue

        fit = res.fit
        log_lines.append(f"converged={fit.converged} iterations={fit.iter} "
                         f"components={fit.mixture.k} planes={res.merge.n_planes} "
                         f"removed={fit.removed_components}")
        labels = res.segmentation.labels
        if labels.max(initial=0) > 65535:
            _error("pipeline_error", "more than 65535 labels", input=str(path))
            status = max(status, EXIT_PIPELINE)
            continue
        outputs = {
            f"{key}.seg.pgm": imageio.pgm_bytes(labels),
            f"{key}.planes.json": json.dumps(serialize.planes_to_dict(res.segmentation, s),
                                             indent=1),
            f"{key}.mixture.json": serialize.mixture_json(fit.mixture),
            f"{key}.kept.rle": serialize.rle_encode(fit.table.kept),
            f"{key}.fit.log": "\n".join(log_lines) + "\n",
        }
        if cfg.render:
            outputs[f"{key}.render.ppm"] = imageio.ppm_bytes(imageio.render_labels(labels))
        for name, data in outputs.items():
            imageio.atomic_write(out_dir / name, data)
        logging.getLogger(__name__).info("%s: %d planes", key, res.merge.n_planes)
    return status


def _label_files(directory, suffix):
    d = Path(directory)
    if not d.is_dir():
        return {}
    files = sorted(d.glob(f"*{suffix}.pgm")) or sorted(d.glob("*.pgm"))
    return {image_key(p): p for p in files}


def _load_labels(path) -> Segmentation:
    arr = imageio.read_pnm(path)
    if arr.ndim != 2:
        raise UnreadableInput(f"{path}: label map must be greyscale")
    seg = Segmentation(labels=arr)
    planes_path = Path(path).with_name(image_key(path) + ".planes.json")
    if planes_path.exists():
        seg.planes = serialize.planes_from_dict(json.loads(planes_path.read_text()))
    return seg


def _samples_for(depth_dir, key):
    if depth_dir is None:
        return None
    for cand in (Path(depth_dir) / f"{key}.depth.pgm", Path(depth_dir) / f"{key}.pgm"):
        if cand.exists():
            depth, s = imageio.load_depth(cand)
            return to_samples(depth, s if s is not None else scale_factor(depth))
    return None


def cmd_evaluate(cfg: RunConfig, machine_dir, gt_dir, depth_dir=None) -> int:
    machine = _label_files(machine_dir, ".seg")
    gt = _label_files(gt_dir, ".gt")
    if not machine or not gt:
        _error("no_inputs", "machine or ground-truth directory holds no label maps")
        return EXIT_NO_INPUTS
    missing = sorted(set(machine) ^ set(gt))
    for key in missing:
        _error("missing_pair", f"no counterpart for {key}", key=key)
    reports = []
    for key in sorted(set(machine) & set(gt)):
        try:
            m = _load_labels(machine[key])
            g = Segmentation(labels=imageio.read_pnm(gt[key]))
            samples = _samples_for(depth_dir, key)
            reports.append(evaluate(m, g, samples, t=cfg.threshold, name=key))
        except RPLGMRError as exc:
            _error(exc.code, str(exc), key=key)
            missing.append(key)
    if not reports:
        _error("no_inputs", "no matching machine/GT pairs")
        return EXIT_NO_INPUTS
    avg = aggregate(reports)
    doc = {"threshold": cfg.threshold, "images": [r.to_dict() for r in reports],
           "average": avg.to_dict(), "skipped": missing}
    out = Path(cfg.out_dir)
    imageio.atomic_write(out / "report.json", json.dumps(doc, indent=1))
    table = format_table(reports, avg)
    imageio.atomic_write(out / "report.txt", table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_synth(cfg: RunConfig, scene_path) -> int:
    try:
        scenes = serialize.load_scenes(Path(scene_path).read_text())
        rendered = []
        for name, scene, w, h, seed in scenes:
            depth, gt = render_scene(scene, w, h, seed=seed)
            zmax = float(depth.depth[depth.valid].max()) if depth.valid.any() else 1.0
            units = zmax / 60000.0
            rendered.append((name, depth, gt, units))
    except OSError as exc:
        _error("input_error", str(exc))
        return EXIT_INPUT
    except (InputError, json.JSONDecodeError) as exc:
        _error(getattr(exc, "code", "input_error"), str(exc))
        return EXIT_INPUT
    out = Path(cfg.out_dir)
    for name, depth, gt, units in rendered:
        imageio.atomic_write(out / f"{name}.depth.pgm",
                             imageio.pgm_bytes(imageio.depth_to_counts(depth, units)))
        imageio.atomic_write(out / f"{name}.depth.txt", imageio.write_sidecar_text(units))
        imageio.atomic_write(out / f"{name}.gt.pgm", imageio.pgm_bytes(gt.labels))
    return EXIT_OK


def cmd_render(cfg: RunConfig, inputs, output=None) -> int:
    if not inputs:
        _error("no_inputs", "no label maps given")
        return EXIT_NO_INPUTS
    status = EXIT_OK
    for path in map(Path, inputs):
        try:
            labels = imageio.read_pnm(path)
            if labels.ndim != 2:
                raise UnreadableInput(f"{path}: label map must be greyscale")
        except UnreadableInput as exc:
            _error(exc.code, str(exc), input=str(path))
            status = EXIT_INPUT
            continue
        dest = Path(output) if output and len(inputs) == 1 else (
            Path(cfg.out_dir) / f"{image_key(path)}.render.ppm")
        imageio.atomic_write(dest, imageio.ppm_bytes(imageio.render_labels(labels)))
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--config", help="flat JSON file of run settings")
    common.add_argument("--k", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--t-mse", dest="t_mse", type=float)
    common.add_argument("--t-proj", dest="t_proj", type=float)
    common.add_argument("--t-rho", dest="t_rho", type=float)
    common.add_argument("--c-dm", dest="c_dm", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--render", action="store_true")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="rplgmr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="segment depth images")
    p.add_argument("inputs", nargs="*", help="depth PGM files or directories")

    p = sub.add_parser("evaluate", parents=[common], help="score label maps against GT")
    p.add_argument("--machine-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--depth-dir", help="depth images for orientation deviation")
    p.add_argument("--threshold", type=float, help="pixel-overlap threshold (default 0.8)")

    p = sub.add_parser("synth", parents=[common], help="render synthetic scenes from JSON")
    p.add_argument("scene", help="scene JSON document")

    p = sub.add_parser("render", parents=[common], help="colourise label maps")
    p.add_argument("inputs", nargs="*", help="label PGM files")
    p.add_argument("--output", "-o", help="output PPM (single input only)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _run_config(args)
    except (ValueError, OSError) as exc:
        _error("config_error", str(exc))
        return EXIT_USAGE
    if cfg.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    if args.command == "segment":
        return cmd_segment(cfg, args.inputs)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.machine_dir, args.gt_dir, args.depth_dir)
    if args.command == "synth":
        return cmd_synth(cfg, args.scene)
    return cmd_render(cfg, args.inputs, args.output)


if __name__ == "__main__":
    sys.exit(main())
