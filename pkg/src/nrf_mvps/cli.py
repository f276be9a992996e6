"""Command-line entry point: ``nrf-mvps <command> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Every command takes
``--config FILE.json`` whose keys are flag destinations; explicit flags win.
Flag help marks each default as either a *published setting* (the value used
for the full-scale method) or an *artifact choice* (picked for this package).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .trainer import TrainConfig

DEFAULT_BACKGROUND = TrainConfig.background_normal

log = logging.getLogger("nrf_mvps")

PUB = "published setting"
ART = "artifact choice"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _d(value, source):
    return f"[default {value}; {source}]"


def _common() -> argparse.ArgumentParser:
    p = Parser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="JSON file of flag values (flags given here override it)")
    p.add_argument("--threads", type=int, metavar="N",
                   help=f"worker threads; results do not depend on N {_d('$NRF_MVPS_THREADS or all cores', ART)}")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help=_d("INFO", ART))
    return p


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> Parser:
    common = _common()
    parser = Parser(prog="nrf-mvps", description="Neural radiance fields for multi-view photometric stereo.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    g = sub.add_parser("gen", parents=[common], help="render a synthetic scene bundle")
    g.add_argument("out", help="output bundle directory")
    g.add_argument("--shape", default="sphere", choices=["sphere", "torus", "blend"], help=_d("sphere", ART))
    g.add_argument("--views", type=int, default=8, help=_d(8, ART))
    g.add_argument("--lights", type=int, default=16, help=_d(16, ART))
    g.add_argument("--size", type=int, default=64, help=f"image width and height {_d(64, ART)}")
    g.add_argument("--seed", type=int, default=0, help=_d(0, ART))
    g.add_argument("--albedo", type=float, default=0.8, help=_d(0.8, ART))
    g.add_argument("--texture", choices=["checker", "stripes"], help=f"albedo pattern {_d('none', ART)}")
    g.add_argument("--specular", type=float, nargs=2, metavar=("KS", "EXP"),
                   help=f"Blinn-Phong strength and exponent {_d('off (Lambertian)', ART)}")
    g.add_argument("--light-polar", type=float, nargs="+", default=[25.0, 45.0], metavar="DEG",
                   help=f"light ring angles from the camera axis; light i sits on ring i mod #rings "
                        f"{_d('25 45', ART)}")
    g.add_argument("--light-intensity", type=float, default=3.0, help=_d(3.0, ART))
    g.add_argument("--intensity-jitter", type=float, default=0.0, help=_d(0.0, ART))
    g.add_argument("--noise", type=float, default=0.0, help=f"Gaussian noise std {_d(0.0, ART)}")
    g.add_argument("--cast-shadows", action="store_true", help=f"trace cast shadows {_d('off', ART)}")
    g.add_argument("--mesh-res", type=int, default=128, help=f"reference mesh lattice {_d(128, ART)}")

    s = sub.add_parser("ps", parents=[common], help="estimate per-view normal maps")
    s.add_argument("bundle")
    s.add_argument("out", help="output directory for normal_XXX.pfm")
    s.add_argument("--method", default="woodham", choices=["woodham", "trimmed", "regressor"],
                   help=_d("woodham", ART))
    s.add_argument("--trim", type=float, default=0.25, help=f"darkest fraction dropped by 'trimmed' {_d(0.25, ART)}")
    s.add_argument("--rotations", type=int, default=10, help=f"rotation-averaging count K {_d(10, PUB)}")
    s.add_argument("--regressor", metavar="FILE", help="load trained regressor weights (.npz)")
    s.add_argument("--train-regressor", action="store_true",
                   help="train the regressor first on a separate synthetic scene (or --regressor-data)")
    s.add_argument("--regressor-data", metavar="BUNDLE", help="bundle with ground-truth normals for training")
    s.add_argument("--regressor-epochs", type=int, default=10, help=_d(10, PUB))
    s.add_argument("--regressor-lr", type=float, default=1e-3, help=_d(1e-3, PUB))
    s.add_argument("--save-regressor", metavar="FILE")
    s.add_argument("--integrate", action="store_true", help="also integrate normals to depth (Horn-Brooks)")
    s.add_argument("--seed", type=int, default=0, help=_d(0, ART))

    t = sub.add_parser("train", parents=[common], help="fit coarse and fine fields")
    t.add_argument("bundle")
    t.add_argument("normals", help="directory written by 'ps'")
    t.add_argument("out", help="output directory for checkpoint.bin and train_log.csv")
    t.add_argument("--no-normals", action="store_true", help=f"drop normal conditioning {_d('conditioned', PUB)}")
    t.add_argument("--no-viewdir", action="store_true", help=f"drop view-direction input {_d('used', PUB)}")
    t.add_argument("--light-index", type=int, default=3, help=f"training image per view, zero-based {_d('3 (4th light)', PUB)}")
    t.add_argument("--per-view-lights", action="store_true", help="a different random light per view")
    t.add_argument("--nc", type=int, default=64, help=f"coarse samples per ray {_d(64, PUB)}")
    t.add_argument("--nf", type=int, default=128, help=f"fine samples per ray {_d(128, PUB)}")
    t.add_argument("--epochs", type=int, default=30, help=_d(30, PUB))
    t.add_argument("--steps", type=int, help="fixed step count, overrides --epochs")
    t.add_argument("--batch", type=int, default=1024, help=f"rays per step {_d(1024, PUB)}")
    t.add_argument("--lr", type=float, default=1e-4, help=f"Adam learning rate {_d(1e-4, PUB)}")
    t.add_argument("--seed", type=int, default=0, help=_d(0, ART))
    t.add_argument("--depth", type=int, default=8, help=f"trunk layers {_d(8, PUB)}")
    t.add_argument("--width", type=int, default=256, help=f"trunk channels {_d(256, PUB)}")
    t.add_argument("--l-pos", type=int, default=10, help=f"position octaves {_d(10, PUB)}")
    t.add_argument("--l-dir", type=int, default=4, help=f"direction octaves {_d(4, PUB)}")
    t.add_argument("--l-normal", type=int, default=4, help=f"normal octaves {_d(4, PUB)}")
    t.add_argument("--object-fraction", type=float, default=0.5, help=f"mask pixels per batch {_d(0.5, ART)}")
    t.add_argument("--holdout", type=_int_list, default=[], metavar="V,V", help="views excluded from training")
    t.add_argument("--chunk-rays", type=int, default=64, help=f"rays per deterministic work unit {_d(64, ART)}")
    t.add_argument("--background-normal", default=DEFAULT_BACKGROUND, choices=["zero", "view"],
                   help=f"conditioning normal of rays off the object mask {_d(DEFAULT_BACKGROUND, ART)}")

    r = sub.add_parser("render", parents=[common], help="render one view from a checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("bundle")
    r.add_argument("out", help="image path; .pfm writes linear floats, anything else sRGB PNG")
    r.add_argument("--view", type=int, default=0)
    r.add_argument("--normals", metavar="DIR", help="normal maps for conditioning (from 'ps')")
    r.add_argument("--nc", type=int, help="coarse samples [default: value used in training]")
    r.add_argument("--nf", type=int, help="fine samples [default: value used in training]")
    r.add_argument("--depth-out", metavar="FILE", help="also write the expected depth as PFM")
    r.add_argument("--seed", type=int, default=0, help=_d(0, ART))

    m = sub.add_parser("mesh", parents=[common], help="extract an isosurface from a checkpoint")
    m.add_argument("checkpoint")
    m.add_argument("out", help="PLY path (with --iso-sweep, one file per iso: <stem>_iso<v>.ply)")
    m.add_argument("--res", type=int, default=128, help=f"lattice per axis {_d('128 (512 published)', ART)}")
    m.add_argument("--iso", type=float, default=10.0, help=f"density threshold {_d(10, PUB)}")
    m.add_argument("--iso-sweep", action="store_true", help="extract at 1, 5, 10, 20, 50, 100")
    m.add_argument("--bounds", type=float, nargs=6, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"),
                   help="box to sample [default: box stored with the checkpoint]")
    m.add_argument("--grid-out", metavar="FILE", help="also dump the density grid (raw + .json)")

    e = sub.add_parser("eval", parents=[common], help="score meshes, renders and normals into a JSON report")
    e.add_argument("out", help="report path (.json)")
    e.add_argument("--bundle", help="scene bundle supplying targets and ground truth")
    e.add_argument("--mesh", help="predicted mesh (PLY)")
    e.add_argument("--ref", help="reference mesh [default: the bundle's ground-truth mesh]")
    e.add_argument("--chamfer-points", type=int, default=100_000, help=_d(100000, ART))
    e.add_argument("--checkpoint", help="trained fields, scored by held-out PSNR and depth L1")
    e.add_argument("--views", type=_int_list, metavar="V,V", help="views to render for --checkpoint")
    e.add_argument("--light-index", type=int, default=3, help=f"target image per view {_d(3, PUB)}")
    e.add_argument("--normals", metavar="DIR", help="normal maps (from 'ps'), scored against ground truth")
    e.add_argument("--seed", type=int, default=0, help=_d(0, ART))

    a = sub.add_parser("ablate", parents=[common], help="run normal/view-direction/multi-light comparisons")
    a.add_argument("out", help="output directory; ablation.json holds the combined report")
    a.add_argument("--study", default="normals", choices=["normals", "viewdir", "multilight", "all"],
                   help=_d("normals", ART))
    a.add_argument("--seeds", type=_int_list, default=[0, 1, 2], metavar="S,S", help=_d("0,1,2", ART))
    a.add_argument("--steps", type=int, default=2000, help=f"steps per run {_d(2000, ART)}")
    a.add_argument("--batch", type=int, default=512, help=_d(512, ART))
    a.add_argument("--lr", type=float, default=1e-3, help=_d(1e-3, ART))
    a.add_argument("--nc", type=int, default=32, help=_d(32, ART))
    a.add_argument("--nf", type=int, default=64, help=_d(64, ART))
    a.add_argument("--depth", type=int, default=4, help=_d(4, ART))
    a.add_argument("--width", type=int, default=64, help=_d(64, ART))
    a.add_argument("--shape", default="sphere", choices=["sphere", "torus", "blend"], help=_d("sphere", ART))
    a.add_argument("--specular", type=float, nargs=2, default=[0.5, 30.0], metavar=("KS", "EXP"),
                   help=_d("0.5 30", ART))
    a.add_argument("--scene-seed", type=int, default=7, help=_d(7, ART))
    a.add_argument("--mesh-res", type=int, default=96, help=_d(96, ART))
    a.add_argument("--background-normal", default="view", choices=["zero", "view"],
                   help=f"conditioning normal of rays off the object mask {_d('view', ART)}")
    return parser


# ---------------------------------------------------------------------------
# argument handling


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("--config must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown keys in --config: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _normal_paths(directory, n_views):
    d = Path(directory)
    return [d / f"normal_{v:03d}.pfm" for v in range(n_views)]


def _load_normals(directory, bundle):
    from .scene_data import NormalMap

    maps = []
    for p in _normal_paths(directory, len(bundle.views)):
        if not p.is_file():
            raise FileNotFoundError(f"{p}: normal map missing (run 'nrf-mvps ps' first)")
        maps.append(NormalMap.load(p))
    return maps


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    from .scene_data import SyntheticSceneConfig, generate_synthetic_scene, save_bundle

    cfg = SyntheticSceneConfig(shape=args.shape, albedo=args.albedo, texture=args.texture,
                               specular=tuple(args.specular) if args.specular else None, n_views=args.views,
                               n_lights=args.lights, size=args.size, light_polar_deg=tuple(args.light_polar),
                               light_intensity=args.light_intensity,
                               intensity_jitter=args.intensity_jitter, noise_std=args.noise,
                               cast_shadows=args.cast_shadows, mesh_res=args.mesh_res, seed=args.seed)
    save_bundle(generate_synthetic_scene(cfg), args.out)
    log.info("wrote bundle to %s", args.out)


def _regressor(args):
    from .photometric_stereo import PSRegressorParams, PSTrainConfig, train_ps_regressor
    from .scene_data import SyntheticSceneConfig, generate_synthetic_scene, load_bundle

    if args.regressor and not args.train_regressor:
        return PSRegressorParams.load(args.regressor)
    if not args.train_regressor:
        raise UsageError("--method regressor needs --regressor FILE or --train-regressor")
    if args.regressor_data:
        data = load_bundle(args.regressor_data)
    else:
        # a differently shaped scene so the evaluated bundle never supplies its own labels
        data = generate_synthetic_scene(SyntheticSceneConfig(shape="blend", n_views=4, seed=args.seed + 1000,
                                                             specular=(0.3, 20.0), mesh_res=32))
    if data.ground_truth is None or data.ground_truth.normals is None:
        raise ValueError("regressor training data needs ground-truth normals")
    params = train_ps_regressor(data, PSTrainConfig(epochs=args.regressor_epochs, lr=args.regressor_lr,
                                                    seed=args.seed))
    if args.save_regressor:
        params.save(args.save_regressor)
    return params


def cmd_ps(args):
    from .evaluation import angular_error, depth_l1, write_report
    from .photometric_stereo import estimate_normal_map, integrate_normals_horn_brooks, write_angular_error_csv
    from .scene_data import load_bundle

    bundle = load_bundle(args.bundle)
    out = io.ensure_dir(args.out)
    regressor = _regressor(args) if args.method == "regressor" else None
    gt = bundle.ground_truth
    report = {"method": args.method, "views": {}}
    for v, path in enumerate(_normal_paths(out, len(bundle.views))):
        nm = estimate_normal_map(bundle, v, args.method, regressor, args.trim, args.rotations)
        nm.save(path)
        entry = {"valid_pixels": int(nm.valid.sum())}
        if gt is not None and gt.normals is not None:
            mean, median = angular_error(nm, gt.normals[v])
            entry.update(mean_angular_error_deg=mean, median_angular_error_deg=median)
            write_angular_error_csv(out / f"angular_error_{v:03d}.csv", nm, gt.normals[v])
        if args.integrate:
            depth = integrate_normals_horn_brooks(nm, nm.valid, rescale=True)
            depth.save(out / f"depth_{v:03d}.pfm")
            if gt is not None and gt.depths is not None:
                entry["depth_l1"] = depth_l1(depth, gt.depths[v], nm.valid & gt.depths[v].valid)
        report["views"][str(v)] = entry
    write_report(out / "ps_report.json", report)
    log.info("wrote %d normal maps to %s", len(bundle.views), out)


def cmd_train(args):
    from .neural_field import save_checkpoint
    from .scene_data import load_bundle
    from .trainer import TrainConfig, checkpoint_meta, random_light_assignment, train

    bundle = load_bundle(args.bundle)
    normals = _load_normals(args.normals, bundle)
    lights = random_light_assignment(bundle, args.seed) if args.per_view_lights else args.light_index
    views = [v for v in range(len(bundle.views)) if v not in set(args.holdout)]
    if not views:
        raise UsageError("every view is held out")
    cfg = TrainConfig(batch_rays=args.batch, epochs=args.epochs, max_steps=args.steps, lr=args.lr,
                      n_coarse=args.nc, n_fine=args.nf, seed=args.seed, use_view_dir=not args.no_viewdir,
                      use_normals=not args.no_normals, object_fraction=args.object_fraction, light_index=lights,
                      train_views=views, depth=args.depth, width=args.width, L_pos=args.l_pos, L_dir=args.l_dir,
                      L_normal=args.l_normal, chunk_rays=args.chunk_rays, threads=args.threads,
                      background_normal=args.background_normal)
    res = train(bundle, normals, cfg, out_dir=args.out)
    meta = checkpoint_meta(cfg, len(res.log))
    meta.update(bbox_min=bundle.bbox_min.tolist(), bbox_max=bundle.bbox_max.tolist(),
                light_index=lights, train_views=views)
    save_checkpoint(Path(args.out) / "checkpoint.bin", {"coarse": res.coarse, "fine": res.fine}, meta)
    log.info("trained %d steps; checkpoint in %s", len(res.log), args.out)


def _load_fields(path):
    from .neural_field import load_checkpoint

    nets, meta = load_checkpoint(path)
    if "fine" not in nets or "coarse" not in nets:
        raise ValueError(f"{path}: checkpoint lacks coarse/fine networks")
    return nets["coarse"], nets["fine"], meta


def cmd_render(args):
    from .evaluation import render_view
    from .scene_data import load_bundle
    from .volume_renderer import RenderConfig

    coarse, fine, meta = _load_fields(args.checkpoint)
    bundle = load_bundle(args.bundle)
    if not 0 <= args.view < len(bundle.views):
        raise UsageError(f"--view {args.view} out of range (bundle has {len(bundle.views)} views)")
    normals = _load_normals(args.normals, bundle)[args.view] if args.normals else None
    if normals is None and coarse.arch.use_normals:
        log.warning("rendering a normal-conditioned model without --normals; using zero normals")
    cfg = RenderConfig(args.nc or meta.get("n_coarse", 64), args.nf or meta.get("n_fine", 128), perturb=False)
    rv = render_view(coarse, fine, bundle, args.view, normals, cfg, seed=args.seed, threads=args.threads,
                     background=meta.get("background_normal", "zero"))
    if str(args.out).lower().endswith(".pfm"):
        io.write_pfm(args.out, rv.image.astype(np.float32))
    else:
        io.write_png(args.out, rv.image)
    if args.depth_out:
        io.write_pfm(args.depth_out, np.where(rv.opacity > 0.5, rv.depth, np.inf).astype(np.float32))


def cmd_mesh(args):
    from .surface_extraction import ISO_SWEEP, iso_sweep, marching_cubes, sample_density_grid

    _, fine, meta = _load_fields(args.checkpoint)
    if args.bounds:
        lo, hi = np.array(args.bounds[:3]), np.array(args.bounds[3:])
    elif "bbox_min" in meta:
        lo, hi = np.array(meta["bbox_min"]), np.array(meta["bbox_max"])
    else:
        raise UsageError("checkpoint stores no bounds; pass --bounds")
    grid = sample_density_grid(fine, lo, hi, args.res)
    if args.grid_out:
        grid.save(args.grid_out)
    out = Path(args.out)
    if args.iso_sweep:
        for iso, mesh in iso_sweep(grid, ISO_SWEEP).items():
            path = out.with_name(f"{out.stem}_iso{iso:g}{out.suffix or '.ply'}")
            mesh.save(path)
            log.info("iso %g: %d triangles -> %s", iso, len(mesh.triangles), path)
    else:
        mesh = marching_cubes(grid, args.iso)
        if mesh.is_empty:
            log.warning("no density reaches iso %g (max %.3g); writing an empty mesh", args.iso,
                        float(grid.values.max()))
        mesh.save(out)


def cmd_eval(args):
    from .evaluation import chamfer_l1, depth_l1, angular_error, projected_depth, psnr, render_view, write_report
    from .scene_data import load_bundle
    from .surface_extraction import Mesh
    from .volume_renderer import RenderConfig

    bundle = load_bundle(args.bundle) if args.bundle else None
    gt = None if bundle is None else bundle.ground_truth
    report = {}
    if args.mesh:
        if args.ref:
            ref = Mesh.load(args.ref)
        elif gt is not None and gt.mesh is not None:
            ref = gt.mesh
        else:
            raise UsageError("--mesh needs --ref or a bundle with a ground-truth mesh")
        report["chamfer_l1"] = chamfer_l1(Mesh.load(args.mesh), ref, args.chamfer_points, args.seed)
    normals = _load_normals(args.normals, bundle) if (args.normals and bundle is not None) else None
    if args.normals and bundle is None:
        raise UsageError("--normals needs --bundle")
    if normals is not None and gt is not None and gt.normals is not None:
        errs = [angular_error(n, g) for n, g in zip(normals, gt.normals)]
        report["normal_mean_angular_error_deg"] = float(np.mean([e[0] for e in errs]))
        report["normal_median_angular_error_deg"] = float(np.mean([e[1] for e in errs]))
    if args.checkpoint:
        if bundle is None:
            raise UsageError("--checkpoint needs --bundle")
        coarse, fine, meta = _load_fields(args.checkpoint)
        views = args.views if args.views is not None else list(range(len(bundle.views)))
        lights = meta.get("light_index", args.light_index)
        if not isinstance(lights, list):
            lights = [lights] * len(bundle.views)
        cfg = RenderConfig(meta.get("n_coarse", 64), meta.get("n_fine", 128), perturb=False)
        per_view = {}
        for v in views:
            nm = None if normals is None else normals[v]
            rv = render_view(coarse, fine, bundle, v, nm, cfg, seed=args.seed, threads=args.threads,
                             background=meta.get("background_normal", "zero"))
            entry = {"psnr": psnr(rv.image, bundle.views[v].images[lights[v]])}
            if gt is not None and gt.depths is not None:
                mask = bundle.views[v].mask & gt.depths[v].valid
                if mask.any():
                    entry["depth_l1"] = depth_l1(rv.depth, gt.depths[v], mask)
            per_view[str(v)] = entry
        report["views"] = per_view
        report["mean_psnr"] = float(np.mean([e["psnr"] for e in per_view.values()]))
    if not report:
        raise UsageError("nothing to evaluate: give --mesh, --normals or --checkpoint")
    write_report(args.out, report)


def cmd_ablate(args):
    from .experiments import run_ablation, small_config

    base = small_config(steps=args.steps, batch_rays=args.batch, lr=args.lr, n_coarse=args.nc, n_fine=args.nf,
                        depth=args.depth, width=args.width, threads=args.threads,
                        background_normal=args.background_normal)
    base = replace(base, mesh_res=args.mesh_res,
                   scene=replace(base.scene, shape=args.shape, seed=args.scene_seed,
                                 specular=tuple(args.specular) if args.specular else None))
    studies = {"normals": (False, ("ours", "no_normals")),
               "viewdir": (False, ("ours", "no_view_dir")),
               "multilight": (True, ("ours", "no_normals"))}
    chosen = list(studies) if args.study == "all" else [args.study]
    out = io.ensure_dir(args.out)
    combined = {}
    for name in chosen:
        per_view, variants = studies[name]
        res = run_ablation(replace(base, per_view_lights=per_view), args.seeds, variants, out / name)
        combined[name] = res["summary"]
    from .evaluation import write_report

    write_report(out / "ablation.json", combined)


COMMANDS = {"gen": cmd_gen, "ps": cmd_ps, "train": cmd_train, "render": cmd_render, "mesh": cmd_mesh,
            "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if args.threads is not None and args.threads < 1:
        print("nrf-mvps: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nrf-mvps {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, FloatingPointError, IndexError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
