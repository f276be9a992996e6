"""Normals on/off comparison on the specular sphere, single light or one light per view.

    python scripts/run_ablation.py --seeds 0 1 2 --out runs/ablation
    python scripts/run_ablation.py --per-view-lights --out runs/multilight
"""

import argparse
import json
import logging
from dataclasses import replace

from nrf_mvps.experiments import run_ablation, small_config


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--specular", type=float, nargs=2, default=[0.5, 30.0], metavar=("KS", "EXP"))
    p.add_argument("--per-view-lights", action="store_true")
    p.add_argument("--variants", nargs="+", default=["ours", "no_normals"])
    p.add_argument("--out")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = small_config(steps=args.steps, batch_rays=args.batch)
    base = replace(base, per_view_lights=args.per_view_lights,
                   scene=replace(base.scene, specular=tuple(args.specular)))
    res = run_ablation(base, args.seeds, args.variants, args.out)
    print(json.dumps(res["summary"], indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
