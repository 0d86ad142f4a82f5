"""``aos-sim`` command line.

Exit codes: 0 success, 1 runtime error (missing file, geometry failure),
2 invalid configuration or usage, 3 sweep finished with failed rows.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import RunConfig
from .errors import AOSError, ConfigError
from .forest import Density, Forest, forest_stats, generate_forest
from .geometry import Rect
from .imaging import (CameraPose, binary_to_gray, ground_sample_distance, ortho_occupancy, render_aerial,
                      white_ratio, write_pgm)
from .integration import GroundGrid, aperture_for_roi, integrate, plan_flight, roi_for_plan, visibility
from .oracle import mean_abs_difference, oracle_integral
from .sampling import ForestStats, SensorConfig, ground_coverage, optimal_fov, samples_per_point
from .scene import build_scene
from .sweep import plot_results, run_sweep, write_manifest, write_results

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("aos_sim")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=["desk", "paper"], help="parameter preset (default: paper)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set sensor.fov_deg=60 (repeatable)")
    p.add_argument("--out", help="output directory (config key: out)")
    p.add_argument("--workers", type=int, help="concurrency cap (config key: workers)")
    p.add_argument("--seed", type=int, help="forest seed (config key: seed)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = _Parser(prog="aos-sim", description="Airborne optical sectioning simulator.")
    ap.add_argument("--version", action="version", version=f"aos-sim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("forest", help="generate forests, write JSON and ortho occupancy PGMs")
    _common(p)

    p = sub.add_parser("render", help="render one binary aerial image")
    _common(p)
    p.add_argument("--forest", help="forest JSON (default: generate from config)")
    p.add_argument("--x", type=float, help="camera x (default: patch center)")
    p.add_argument("--y", type=float, help="camera y (default: patch center)")
    p.add_argument("--h", type=float, help="camera altitude (default: flight.altitude_m)")

    p = sub.add_parser("integrate", help="fly a plan and write the integral image")
    _common(p)
    p.add_argument("--forest", help="forest JSON (default: generate from config)")

    p = sub.add_parser("sweep", help="factorial visibility sweep: results.csv, plots")
    _common(p)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("predict", help="optimal FOV from forest statistics, plus a c/n table")
    _common(p)
    p.add_argument("--forest", help="forest JSON; stats are measured from it")
    p.add_argument("--h-t", type=float, help="mean trunk length h_t [m]")
    p.add_argument("--d-t", type=float, help="mean nearest-neighbor tree distance d_t [m]")

    p = sub.add_parser("oracle", help="compare integrate against the brute-force oracle")
    _common(p)
    p.add_argument("--forest", help="forest JSON (default: generate from config)")
    p.add_argument("--fixture", choices=["single-trunk"], help="use a hand-built scene instead of a forest")
    return ap


def _load_config(args) -> RunConfig:
    overrides = list(args.overrides)
    for flag, key in (("out", "out"), ("workers", "workers"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides.append(f"{key}={json.dumps(v)}")
    return RunConfig.load(args.config, args.preset, overrides)


def _outdir(cfg, *parts):
    path = os.path.join(cfg.get("out"), *parts)
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(cfg, outdir, command, **extra):
    payload = {"command": command, "config": cfg.data, "seed": cfg.get("seed")}
    payload.update(extra)
    write_manifest(os.path.join(outdir, "manifest.json"), payload)


def _forest(cfg, args, density=None):
    if getattr(args, "forest", None):
        if not os.path.exists(args.forest):
            raise FileNotFoundError(f"forest file not found: {args.forest}")
        return Forest.load(args.forest)
    dens = density if density is not None else cfg.densities()[0]
    return generate_forest(int(cfg.get("seed")), dens, cfg.extent(), cfg.tree_params(),
                           float(cfg.get("forest.min_spacing_m")))


def _flight(cfg, center, sensor):
    h = float(cfg.get("flight.altitude_m"))
    d = float(cfg.get("flight.sample_dist_m"))
    mode = cfg.get("flight.mode")
    c = ground_coverage(h, sensor.fov_deg)
    plan = plan_flight(aperture_for_roi(center, float(cfg.get("grid.roi_m")), c, mode), d, h, mode)
    roi = roi_for_plan(plan, sensor)
    cell = min(float(cfg.get("grid.cell_m")), ground_sample_distance(h, sensor))
    return plan, roi, GroundGrid.covering(roi, cell)


# --------------------------------------------------------------------------
# subcommands

def cmd_forest(cfg, args):
    out = _outdir(cfg)
    files = []
    for dens in cfg.densities():
        forest = _forest(cfg, argparse.Namespace(), dens)
        label = Density.parse(dens).label()
        stem = os.path.join(out, f"forest_{label}_seed{cfg.get('seed')}")
        forest.save(stem + ".json")
        occ = ortho_occupancy(build_scene(forest, float(cfg.get("scene.voxel_m"))), forest.extent,
                              int(cfg.get("ortho.resolution_px")))
        write_pgm(stem + "_ortho.pgm", binary_to_gray(occ))
        ratio = white_ratio(occ)
        files.append({"density": label, "trees": len(forest.trees), "forest": stem + ".json",
                      "ortho": stem + "_ortho.pgm", "white_ratio": ratio})
        print(f"{label}: {len(forest.trees)} trees, occupancy white ratio {ratio:.4f}")
    _manifest(cfg, out, "forest", artifacts=files)
    return EXIT_OK


def cmd_render(cfg, args):
    forest = _forest(cfg, args)
    scene = build_scene(forest, float(cfg.get("scene.voxel_m")))
    cx, cy = forest.extent.center
    x = args.x if args.x is not None else (cfg.get("render.x") if cfg.get("render.x") is not None else cx)
    y = args.y if args.y is not None else (cfg.get("render.y") if cfg.get("render.y") is not None else cy)
    h = args.h if args.h is not None else float(cfg.get("flight.altitude_m"))
    pose = CameraPose(float(x), float(y), float(h))
    img = render_aerial(scene, pose, cfg.sensor())
    out = _outdir(cfg)
    path = os.path.join(out, "render.pgm")
    write_pgm(path, binary_to_gray(img.pixels))
    _manifest(cfg, out, "render", pose=list(pose.position), forest_file=getattr(args, "forest", None))
    print(f"wrote {path}; white ratio {white_ratio(img.pixels):.4f}")
    return EXIT_OK


def cmd_integrate(cfg, args):
    forest = _forest(cfg, args)
    scene = build_scene(forest, float(cfg.get("scene.voxel_m")))
    sensor = cfg.sensor()
    plan, roi, grid = _flight(cfg, forest.extent.center, sensor)
    if not forest.extent.contains_rect(plan.aperture_extent):
        raise AOSError("footprint_exceeds_extent: flight aperture leaves the forest patch")
    integral = integrate(scene, plan, sensor, grid, {"seed": forest.seed, "roi": roi.to_list()})
    out = _outdir(cfg)
    integral.save(os.path.join(out, "integral"))
    vis = visibility(integral, roi)
    _manifest(cfg, out, "integrate", visibility=vis, forest_file=getattr(args, "forest", None))
    print(f"poses {len(plan)}, ROI {roi.width:g} x {roi.height:g} m, visibility {vis:.4f}")
    return EXIT_OK


def cmd_sweep(cfg, args):
    sc = cfg.sweep_config()
    records = run_sweep(sc)
    out = _outdir(cfg)
    write_results(records, out, sc)
    _manifest(cfg, out, "sweep", sweep=sc.to_dict())
    if not args.no_plots:
        plot_results(records, out)
    failed = [r for r in records if not r.ok]
    print(f"{len(records)} rows, {len(failed)} failed; results in {os.path.join(out, 'results.csv')}")
    if failed:
        print(f"failed rows: {len(failed)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_predict(cfg, args):
    if args.forest:
        if not os.path.exists(args.forest):
            raise FileNotFoundError(f"forest file not found: {args.forest}")
        stats = forest_stats(Forest.load(args.forest))
        source = args.forest
    else:
        if args.h_t is None or args.d_t is None:
            raise _UsageError("predict needs --forest or both --h-t and --d-t")
        stats = ForestStats(args.h_t, args.d_t, float("nan"))
        source = "command line"
    fov = optimal_fov(stats.d_t_m, stats.h_t_m)
    print(f"h_t = {stats.h_t_m:.3f} m, d_t = {stats.d_t_m:.3f} m ({source})")
    print(f"optimal FOV = {fov:.2f} deg")
    h = float(cfg.get("flight.altitude_m"))
    d = float(cfg.get("flight.sample_dist_m"))
    print(f"{'fov_deg':>8} {'c_m':>9} {'n':>9}   (h = {h:g} m, d = {d:g} m)")
    for f in sorted(set(float(v) for v in cfg.get("sweep.fovs_deg")) | {round(fov, 2)}):
        c = ground_coverage(h, f)
        print(f"{f:8.2f} {c:9.3f} {samples_per_point(c, d):9.2f}")
    return EXIT_OK


def cmd_oracle(cfg, args):
    sensor = cfg.sensor()
    if args.fixture == "single-trunk":
        from .fixtures import single_trunk_scene, trunk_line_plan
        scene = single_trunk_scene(voxel_m=float(cfg.get("scene.voxel_m")))
        plan = trunk_line_plan(float(cfg.get("flight.altitude_m")))
        cell = min(float(cfg.get("grid.cell_m")), ground_sample_distance(plan.altitude_m, sensor))
        roi = Rect.centered(0.0, 0.0, float(cfg.get("grid.roi_m")))
        grid = GroundGrid.covering(roi, cell)
        source = "fixture:single-trunk"
    else:
        forest = _forest(cfg, args)
        scene = build_scene(forest, float(cfg.get("scene.voxel_m")))
        plan, roi, grid = _flight(cfg, forest.extent.center, sensor)
        source = getattr(args, "forest", None) or "generated"
    a = integrate(scene, plan, sensor, grid)
    b = oracle_integral(scene, plan, sensor, grid)
    mad = mean_abs_difference(a, b)
    out = _outdir(cfg)
    a.save(os.path.join(out, "integral"))
    b.save(os.path.join(out, "oracle"))
    _manifest(cfg, out, "oracle", mean_abs_difference=mad, scene=source)
    print(f"mean absolute difference (integrate vs oracle): {mad:.4f}")
    return EXIT_OK


COMMANDS = {"forest": cmd_forest, "render": cmd_render, "integrate": cmd_integrate,
            "sweep": cmd_sweep, "predict": cmd_predict, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"aos-sim: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, _UsageError) as e:
        print(f"aos-sim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (AOSError, OSError) as e:
        print(f"aos-sim: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
