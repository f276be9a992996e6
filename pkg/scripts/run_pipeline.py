"""Train the small configuration on the synthetic sphere and print the metrics report.

    python scripts/run_pipeline.py --steps 2000 --out runs/sphere
"""

import argparse
import json
import logging
from dataclasses import replace

from nrf_mvps.experiments import run_experiment, small_config


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--specular", type=float, nargs=2, metavar=("KS", "EXP"))
    p.add_argument("--per-view-lights", action="store_true")
    p.add_argument("--no-normals", action="store_true")
    p.add_argument("--background-normal", choices=["zero", "view"])
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="directory for model.bin, mesh.ply and report.json")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    overrides = dict(batch_rays=args.batch, lr=args.lr, use_normals=not args.no_normals, threads=args.threads)
    if args.background_normal:
        overrides["background_normal"] = args.background_normal
    cfg = small_config(args.seed, args.steps, **overrides)
    cfg = replace(cfg, per_view_lights=args.per_view_lights,
                  scene=replace(cfg.scene, specular=tuple(args.specular) if args.specular else None))
    print(json.dumps(run_experiment(cfg, args.out), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
