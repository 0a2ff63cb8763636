"""Command line front end.

Subcommands: ``serve`` (TCP control server for a scenario), ``render``
(offline scenario playback to image files plus the frame log), ``dof-table``
(depth-of-field table for a lens/filmback pairing), ``presets`` (catalog
listing).

Exit codes: 0 success, 2 invalid input (bad scenario, unknown preset,
validation failure, bad usage), 3 cannot bind the server port, 4 output I/O
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

from . import optics
from .control import load_scenario, run_scenario
from .errors import BindError, CinelensError
from .server import DEFAULT_PORT, PORT_ENV_VAR, SimSession, serve

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BIND = 3
EXIT_IO = 4

# Full photographic stop series; rows clip to the lens's actual range.
F_STOP_SERIES = (1.0, 1.4, 2.0, 2.8, 4.0, 5.6, 8.0, 11.0, 16.0, 22.0, 32.0, 45.0, 64.0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cinelens",
        description="Cinematic thin-lens drone camera simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the TCP control server")
    p_serve.add_argument("--scenario", required=True, help="scenario JSON file")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument(
        "--port",
        type=int,
        default=None,
        help=f"TCP port (default: ${PORT_ENV_VAR} or {DEFAULT_PORT})",
    )

    p_render = sub.add_parser("render", help="play a scenario to image files")
    p_render.add_argument("--scenario", required=True, help="scenario JSON file")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.add_argument(
        "--passes",
        default=None,
        help="comma-separated subset of rgb,depth,segmentation (default: scenario)",
    )
    p_render.add_argument("--format", choices=("png", "ppm"), default="png")
    p_render.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p_dof = sub.add_parser("dof-table", help="print depth-of-field limits")
    p_dof.add_argument("--lens", required=True, help="lens preset name")
    p_dof.add_argument("--filmback", required=True, help="filmback preset name")
    p_dof.add_argument(
        "--focus",
        required=True,
        help="comma-separated focus distances in cm",
    )
    p_dof.add_argument(
        "--coc",
        type=float,
        default=None,
        help="blur-circle limit in mm (default: sensor width / 1500)",
    )
    p_dof.add_argument("--json", action="store_true", dest="as_json")

    p_presets = sub.add_parser("presets", help="list the preset catalogs")
    p_presets.add_argument("--json", action="store_true", dest="as_json")

    return parser


def _cmd_serve(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        session = SimSession.from_scenario(scenario)
    except CinelensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        server = serve(session, host=args.host, port=args.port)
    except BindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BIND
    except CinelensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"listening on {args.host}:{server.bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _cmd_render(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except CinelensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.seed is not None:
            scenario = replace(
                scenario, render=replace(scenario.render, rng_seed=args.seed)
            )
        passes = None
        if args.passes:
            # "seg" is accepted as shorthand for the segmentation pass
            passes = [
                "segmentation" if p.strip() == "seg" else p.strip()
                for p in args.passes.split(",")
                if p.strip()
            ]
        records = run_scenario(
            scenario, args.out, passes=passes, image_format=args.format
        )
    except CinelensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(records)} frames to {args.out}")
    return EXIT_OK


def _dof_rows(lens, filmback, focus_list_cm, coc_mm):
    focals = sorted({lens.min_focal_length_mm, lens.max_focal_length_mm})
    stops = sorted(
        {s for s in F_STOP_SERIES if lens.min_fstop <= s <= lens.max_fstop}
        | {lens.min_fstop, lens.max_fstop}
    )
    rows = []
    for focal in focals:
        for stop in stops:
            for focus_cm in focus_list_cm:
                near_mm, far_mm = optics.dof_limits(
                    focal, stop, focus_cm * optics.MM_PER_CM, coc_mm
                )
                rows.append(
                    {
                        "focal_mm": focal,
                        "fstop": stop,
                        "focus_cm": focus_cm,
                        "near_cm": near_mm / optics.MM_PER_CM,
                        "far_cm": None if math.isinf(far_mm) else far_mm / optics.MM_PER_CM,
                        "hyperfocal_cm": optics.hyperfocal_distance(focal, stop, coc_mm)
                        / optics.MM_PER_CM,
                    }
                )
    return rows


def _cmd_dof_table(args) -> int:
    try:
        lens = optics.lens_preset(args.lens)
        filmback = optics.filmback_preset(args.filmback)
        focus_list = [float(v) for v in args.focus.split(",") if v.strip()]
        if not focus_list:
            raise CinelensError("--focus needs at least one distance")
        coc_mm = args.coc if args.coc is not None else optics.default_coc_limit(filmback)
        if not coc_mm > 0:
            raise CinelensError("--coc must be > 0")
        for focus_cm in focus_list:
            if not focus_cm >= lens.min_focus_distance_cm:
                raise CinelensError(
                    f"focus {focus_cm} cm is below the lens minimum "
                    f"{lens.min_focus_distance_cm} cm"
                )
        rows = _dof_rows(lens, filmback, focus_list, coc_mm)
    except (CinelensError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.as_json:
        print(json.dumps({"coc_limit_mm": coc_mm, "rows": rows}, indent=2))
        return EXIT_OK
    header = f"{'focal_mm':>9} {'fstop':>6} {'focus_cm':>10} {'near_cm':>10} {'far_cm':>10} {'hyperfocal_cm':>14}"
    print(header)
    for row in rows:
        far = "inf" if row["far_cm"] is None else f"{row['far_cm']:.1f}"
        print(
            f"{row['focal_mm']:>9.1f} {row['fstop']:>6.1f} {row['focus_cm']:>10.1f} "
            f"{row['near_cm']:>10.1f} {far:>10} {row['hyperfocal_cm']:>14.1f}"
        )
    return EXIT_OK


def _cmd_presets(args) -> int:
    filmbacks, lenses = optics._default_catalog()
    if args.as_json:
        payload = {
            "filmbacks": [
                {
                    "name": fb.name,
                    "sensor_width_mm": fb.sensor_width_mm,
                    "sensor_height_mm": fb.sensor_height_mm,
                }
                for fb in filmbacks.values()
            ],
            "lenses": [
                {
                    "name": lens.name,
                    "min_focal_length_mm": lens.min_focal_length_mm,
                    "max_focal_length_mm": lens.max_focal_length_mm,
                    "min_fstop": lens.min_fstop,
                    "max_fstop": lens.max_fstop,
                    "min_focus_distance_cm": lens.min_focus_distance_cm,
                    "diaphragm_blade_count": lens.diaphragm_blade_count,
                }
                for lens in lenses.values()
            ],
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    print("filmbacks:")
    for fb in filmbacks.values():
        print(f"  {fb.name}: {fb.sensor_width_mm} x {fb.sensor_height_mm} mm")
    print("lenses:")
    for lens in lenses.values():
        focal = (
            f"{lens.min_focal_length_mm:g}mm"
            if lens.is_prime
            else f"{lens.min_focal_length_mm:g}-{lens.max_focal_length_mm:g}mm"
        )
        blades = "circular" if lens.diaphragm_blade_count == 0 else f"{lens.diaphragm_blade_count} blades"
        print(
            f"  {lens.name}: {focal}, f/{lens.min_fstop:g}-f/{lens.max_fstop:g}, "
            f"min focus {lens.min_focus_distance_cm:g} cm, {blades}"
        )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "render":
        return _cmd_render(args)
    if args.command == "dof-table":
        return _cmd_dof_table(args)
    return _cmd_presets(args)


if __name__ == "__main__":
    sys.exit(main())
