"""Run a dataset preset over a directory of converted benchmark images.

The directory must hold ``<name>.depth.pgm`` (16-bit depth counts, with an
optional ``<name>.depth.txt`` sidecar giving ``depth_units_per_count`` and
``s``) and ``<name>.gt.pgm`` ground-truth label maps.

Example:
    python scripts/run_segcomp.py data/abw_test --preset abw --out-dir runs/abw
"""

import argparse
import json
import sys
import time
from pathlib import Path

from rplgmr import imageio
from rplgmr.config import PRESETS, RunConfig
from rplgmr.evaluate import aggregate, evaluate, format_table
from rplgmr.geometry import Segmentation
from rplgmr.pipeline import segment_depth


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data_dir")
    ap.add_argument("--preset", choices=sorted(PRESETS), default="abw")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--limit", type=int, default=None, help="only the first N images")
    ap.add_argument("--threshold", type=float, default=0.8)
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args(argv)

    data = Path(args.data_dir)
    paths = sorted(data.glob("*.depth.pgm"))[: args.limit]
    if not paths:
        print(f"no *.depth.pgm files in {data}", file=sys.stderr)
        return 3
    cfg = RunConfig.resolve({}, {"preset": args.preset, "seed": args.seed})
    out = Path(args.out_dir) if args.out_dir else None
    reports = []
    for path in paths:
        key = path.name[: -len(".depth.pgm")]
        t0 = time.perf_counter()
        depth, s = imageio.load_depth(path)
        res = segment_depth(depth, cfg.fit_config(), cfg.fusion_config(), s=s)
        gt = Segmentation(labels=imageio.read_pnm(data / f"{key}.gt.pgm"))
        rep = evaluate(res.segmentation, gt, res.samples, t=args.threshold, name=key)
        reports.append(rep)
        print(f"{key}: {rep.correct}/{rep.gt_regions} correct, "
              f"{time.perf_counter() - t0:.1f} s", file=sys.stderr)
        if out is not None:
            imageio.atomic_write(out / f"{key}.seg.pgm", imageio.pgm_bytes(res.segmentation.labels))
    avg = aggregate(reports)
    table = format_table(reports, avg)
    print(table, end="")
    if out is not None:
        doc = {"config": cfg.to_dict(), "images": [r.to_dict() for r in reports],
               "average": avg.to_dict()}
        imageio.atomic_write(out / "report.json", json.dumps(doc, indent=1))
        imageio.atomic_write(out / "report.txt", table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
