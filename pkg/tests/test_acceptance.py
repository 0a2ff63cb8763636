"""Whole-system checks.

Each test prints one PASS/FAIL line on the real stdout (around pytest's
capture) so a full run reads as a checklist.  Everything goes through the
public surface: the optics formulas, the renderer, scenario playback, the
CLI and the TCP protocol.  Renders are 160x90 except where a measurement
needs a different sensor-to-pixel scale, and every test finishes well under
a minute of CPU.
"""

import copy
import json
import math
import threading
from dataclasses import replace

import numpy as np
import pytest

from cinelens import optics
from cinelens.cli import EXIT_OK, main
from cinelens.control import read_frame_log, run_scenario, scenario_from_dict
from cinelens.optics import Filmback, Lens, clamp_camera_state
from cinelens.render import (
    RenderSettings,
    decode_image,
    gradient_energy,
    overlay_focus_plane,
    render_pass,
)
from cinelens.scene import Material, PointLight, Quad, Scene, SceneObject, Sphere
from cinelens.server import serve
from cinelens.vehicle import Pose

from oracles import sensor_spot_diameter
from test_server import WireClient, make_session

ORIGIN = Pose(position=(0.0, 0.0, 0.0))
DSLR = optics.filmback_preset("16:9 DSLR")


@pytest.fixture
def announce(capfd):
    """One checklist line per criterion, pushed past pytest's fd capture so
    it shows up in a plain ``pytest -v`` run."""

    def _announce(label: str, ok: bool, detail: str = "") -> None:
        line = f"[acceptance] {label}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        with capfd.disabled():
            print(line, flush=True)
        assert ok, line

    return _announce


def erode(mask: np.ndarray) -> np.ndarray:
    core = mask.copy()
    core[1:] &= mask[:-1]
    core[:-1] &= mask[1:]
    core[:, 1:] &= mask[:, :-1]
    core[:, :-1] &= mask[:, 1:]
    return core


def test_blur_circle_formula_matches_sampled_lens_oracle(announce):
    # 50 parameter points spanning the catalog's focal lengths and a wide
    # aperture range; the oracle knows nothing of the closed form, it just
    # traces rays from a pupil-sampled lens to the sensor.
    focals = (12.0, 50.0, 85.0, 200.0, 300.0, 800.0)
    stops = (1.2, 2.8, 5.0, 22.0)
    object_factors = (0.5, 1.6, 3.5)
    points = []
    for i, f in enumerate(focals):
        for j, n in enumerate(stops):
            focus = (60.0 if (i + j) % 2 == 0 else 200.0) * f
            for k in range(2):
                factor = object_factors[(i + j + k) % 3]
                points.append((f, n, focus, factor * focus))
    points = points[:48] + [(50.0, 1.2, 3000.0, 1200.0), (85.0, 2.8, 5100.0, 17850.0)]
    assert len(points) == 50

    worst = 0.0
    for f, n, focus_mm, object_mm in points:
        predicted = optics.coc_diameter(f, n, focus_mm, object_mm)
        sampled = sensor_spot_diameter(f, n, focus_mm, object_mm, samples=100_000, seed=11)
        worst = max(worst, abs(predicted - sampled) / sampled)
    announce(
        "blur-circle formula vs sampled-lens oracle",
        worst <= 0.02,
        f"max rel err {worst:.3%} over 50 points",
    )


def _bright_spot(lens: Lens, filmback: Filmback, width, height, focus_cm, source_radius_m):
    """Render a clamped-bright small sphere at 4 m; every pixel that catches
    at least one lens sample saturates, so the thresholded mask is the spot."""
    state = clamp_camera_state(
        lens, filmback, focal_length_mm=50.0, focus_distance_cm=focus_cm, fstop=1.2
    )
    scene = Scene(
        objects=(
            SceneObject(
                id=1,
                shape=Sphere(center=(4.0, 0.0, 0.0), radius=source_radius_m),
                material=Material(albedo=(1.0, 1.0, 1.0)),
            ),
        ),
        light=PointLight(position=(0.0, 0.0, 0.0), intensity=1e7),
        ambient=0.0,
    )
    settings = RenderSettings(width=width, height=height, samples_per_pixel=256, rng_seed=3)
    buf = render_pass(scene, ORIGIN, state, settings, "rgb")
    return buf.data[..., 0] >= 128


def test_point_source_spot_size_and_bokeh_shape(announce):
    # spot diameter: small sensor so one CoC spans many pixels
    fb = Filmback("spot bench", 5.79, 1.4475)
    px_per_mm = 256 / fb.sensor_width_mm
    circular = Lens("bench 50 circular", 50.0, 50.0, 1.2, 22.0, 45.0, 0)
    source_r = 0.002  # 2 mm ball, images to ~2.2 px
    bright = _bright_spot(circular, fb, 256, 64, 250.0, source_r)
    source_px = 2.0 * source_r * 1000.0 * (50.0 / 4000.0) * px_per_mm
    measured_px = 2.0 * math.sqrt(bright.sum() / math.pi) - source_px
    predicted_px = optics.coc_diameter(50.0, 1.2, 2500.0, 4000.0) * px_per_mm
    size_err = abs(measured_px - predicted_px) / predicted_px
    size_ok = size_err <= 0.15

    # bokeh shape: six blades, bigger blur so sector statistics are stable
    hexed = Lens("bench 50 hex", 50.0, 50.0, 1.2, 22.0, 45.0, 6)
    square = Filmback("bokeh bench", 2.8953, 2.8953)
    bright6 = _bright_spot(hexed, square, 128, 128, 100.0, 0.0109)
    ys, xs = np.nonzero(bright6)
    cy, cx = ys.mean(), xs.mean()
    radii = np.hypot(ys - cy, xs - cx)
    angles = np.arctan2(ys - cy, xs - cx) % (2.0 * math.pi)
    sector = np.floor(angles / (math.pi / 3.0)).astype(int) % 6
    counts = np.bincount(sector, minlength=6).astype(float)
    mean_radius = np.array([radii[sector == s].mean() for s in range(6)])
    count_cv = counts.std() / counts.mean()
    radius_cv = mean_radius.std() / mean_radius.mean()
    # hexagon, not a disc: area over the circumscribed circle
    fill = bright6.sum() / (math.pi * radii.max() ** 2)
    shape_ok = count_cv <= 0.05 and radius_cv <= 0.05 and 0.78 <= fill <= 0.92

    announce(
        "point-source spot size and bokeh shape",
        size_ok and shape_ok,
        f"spot err {size_err:.1%}, sector cv {count_cv:.1%}/{radius_cv:.1%}, fill {fill:.2f}",
    )


def test_thin_lens_converges_to_pinhole_as_aperture_narrows(announce):
    lens = Lens("bench 50 sweep", 50.0, 50.0, 1.2, 32.0, 45.0, 0)
    scene = Scene(
        objects=(
            SceneObject(
                id=1,
                shape=Sphere(center=(2.2, -0.6, 0.0), radius=0.3),
                material=Material(albedo=(0.8, 0.25, 0.2)),
            ),
            SceneObject(
                id=2,
                shape=Sphere(center=(3.0, 0.0, 0.1), radius=0.3),
                material=Material(albedo=(0.2, 0.75, 0.3)),
            ),
            SceneObject(
                id=3,
                shape=Sphere(center=(4.5, 0.7, -0.2), radius=0.3),
                material=Material(albedo=(0.25, 0.35, 0.85)),
            ),
        ),
        light=PointLight(position=(0.0, 3.0, 8.0), intensity=400.0),
        ambient=0.15,
        background=(0.06, 0.07, 0.10),
    )
    # every surface sits inside the f/32 depth of field around the 3 m focus
    near_mm, far_mm = optics.dof_limits(50.0, 32.0, 3000.0, optics.default_coc_limit(DSLR))
    for obj in scene.objects:
        lo = (obj.shape.center[0] - obj.shape.radius) * 1000.0
        hi = (obj.shape.center[0] + obj.shape.radius) * 1000.0
        assert near_mm < lo and hi < far_mm

    settings = RenderSettings(width=160, height=90, samples_per_pixel=64, rng_seed=9)
    pin = render_pass(
        scene,
        ORIGIN,
        clamp_camera_state(lens, DSLR, focal_length_mm=50.0, focus_distance_cm=300.0, fstop=2.0),
        replace(settings, mode="pinhole"),
        "rgb",
    ).data.astype(np.float64)

    mads = []
    for stop in (2.0, 8.0, 32.0):
        state = clamp_camera_state(
            lens, DSLR, focal_length_mm=50.0, focus_distance_cm=300.0, fstop=stop
        )
        thin = render_pass(scene, ORIGIN, state, settings, "rgb").data.astype(np.float64)
        mads.append(float(np.abs(thin - pin).mean()))
    monotone = mads[0] > mads[1] > mads[2]
    tight = mads[2] <= 1.0  # one 8-bit step per channel
    announce(
        "thin lens converges to pinhole as the aperture narrows",
        monotone and tight,
        f"mean abs diff {mads[0]:.2f} > {mads[1]:.2f} > {mads[2]:.3f} u8 steps",
    )


def test_sphere_extent_tracks_focal_length(announce):
    # silhouette of a 1 m sphere at 20 m, measured on the segmentation pass;
    # the sensor scales with f so the long lenses keep the sphere in frame
    radius, distance = 1.0, 20.0
    results = []
    ok = True
    for f in (12.0, 300.0, 800.0):
        fb = Filmback(f"fov bench {f:g}", f / 4.0, f * 0.140625)  # square pixels
        lens = Lens(f"fov lens {f:g}", f, f, 2.8, 22.0, max(30.0, f / 8.0 + 1.0), 0)
        state = clamp_camera_state(
            lens, fb, focal_length_mm=f, focus_distance_cm=2000.0, fstop=8.0
        )
        scene = Scene(
            objects=(
                SceneObject(
                    id=3, shape=Sphere(center=(distance, 0.0, 0.0), radius=radius)
                ),
            ),
            light=PointLight(position=(0.0, 0.0, 10.0), intensity=100.0),
        )
        settings = RenderSettings(width=160, height=90, samples_per_pixel=1)
        seg = render_pass(scene, ORIGIN, state, settings, "segmentation")
        measured = int((seg.data == 3).sum(axis=1).max())
        tan_half = fb.sensor_width_mm / (2.0 * f)
        predicted = 160.0 * math.tan(math.asin(radius / distance)) / tan_half
        results.append(f"f={f:g}: {measured} vs {predicted:.1f}")
        ok = ok and abs(measured - predicted) <= 2.0

    # doubling f halves the field-of-view tangent, bit-exactly
    analytic = True
    for f in (12.5, 50.0, 85.0, 400.0):
        t1 = math.tan(math.radians(optics.horizontal_fov(DSLR, f) / 2.0))
        t2 = math.tan(math.radians(optics.horizontal_fov(DSLR, 2.0 * f) / 2.0))
        analytic = analytic and abs(t1 - 2.0 * t2) <= 1e-12
    announce(
        "sphere pixel extent tracks focal length",
        ok and analytic,
        "; ".join(results),
    )


def test_filmback_aspect_controls_fov_and_default_resolution(tmp_path, announce):
    ratios_ok = True
    for name in ("16:9 DSLR", "IMAX 70mm"):
        fb = optics.filmback_preset(name)
        tan_h = math.tan(math.radians(optics.horizontal_fov(fb, 50.0) / 2.0))
        tan_v = math.tan(math.radians(optics.vertical_fov(fb, 50.0) / 2.0))
        ratios_ok = ratios_ok and abs(tan_h / tan_v - fb.aspect_ratio) <= 1e-12

    heights = {}
    for name in ("16:9 DSLR", "IMAX 70mm"):
        scenario = {
            "scene": {
                "objects": [
                    {
                        "id": 1,
                        "shape": {"type": "sphere", "center": [5.0, 0.0, 0.0], "radius": 1.0},
                    }
                ],
                "light": {"position": [0.0, 0.0, 3.0], "intensity": 50.0},
            },
            "vehicle": {"keyframes": [{"t": 0.0, "position": [0.0, 0.0, 0.0]}]},
            "camera": {"lens": "50mm Prime f/1.2", "filmback": name, "focus_distance_cm": 500.0},
            "duration_s": 0.0,
            "frame_rate_hz": 10.0,
            "passes": ["segmentation"],
            "render": {"width": 160, "samples_per_pixel": 1},
        }
        path = tmp_path / f"{name.replace(' ', '_').replace(':', '')}.json"
        path.write_text(json.dumps(scenario), encoding="utf-8")
        out = tmp_path / (path.stem + "_out")
        assert main(["render", "--scenario", str(path), "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        heights[name] = manifest["height"]

    res_ok = True
    details = []
    for name, height in heights.items():
        fb = optics.filmback_preset(name)
        ideal = 160.0 / fb.aspect_ratio
        details.append(f"{name}: {height} px (ideal {ideal:.1f})")
        res_ok = res_ok and abs(height - ideal) <= 1.0
    announce(
        "filmback aspect drives FOV ratio and default resolution",
        ratios_ok and res_ok,
        "; ".join(details),
    )


def _ramp_scenario_dict():
    return {
        "scene": {
            "objects": [
                {
                    "id": 1,
                    "shape": {"type": "sphere", "center": [25.0, 0.0, 0.0], "radius": 2.0},
                    "material": {"albedo": [0.7, 0.5, 0.3], "checker_scale": 0.8},
                },
                {
                    "id": 2,
                    "shape": {
                        "type": "plane",
                        "point": [0.0, 0.0, -3.0],
                        "normal": [0.0, 0.0, 1.0],
                    },
                    "material": {"albedo": [0.5, 0.5, 0.55], "checker_scale": 2.0},
                },
            ],
            "light": {"position": [5.0, 8.0, 12.0], "intensity": 900.0},
            "ambient": 0.2,
            "background": [0.05, 0.06, 0.09],
        },
        "vehicle": {"keyframes": [{"t": 0.0, "position": [0.0, 0.0, 0.0]}]},
        "camera": {
            "lens": "300-800mm Zoom f/4",
            "filmback": "16:9 DSLR",
            "focal_length_mm": 300.0,
            "focus_distance_cm": 2000.0,
            "fstop": 4.0,
        },
        "tracks": [
            {"parameter": "focus_distance_cm", "keyframes": [[0.0, 2000.0], [5.0, 3400.0]]},
            {"parameter": "fstop", "keyframes": [[0.0, 4.0], [5.0, 6.0]]},
        ],
        "duration_s": 5.0,
        "frame_rate_hz": 10.0,
        "render": {"width": 160, "height": 90, "samples_per_pixel": 4},
        "seed": 5,
    }


def test_open_loop_ramp_playback_is_exact_and_reproducible(tmp_path, announce):
    scenario = scenario_from_dict(_ramp_scenario_dict())
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_scenario(scenario, out_a)
    run_scenario(scenario, out_b)

    records = read_frame_log(out_a / "frames.csv")
    assert len(records) == 51
    worst = 0.0
    for rec in records:
        t = rec.frame / 10.0
        focus_want = 2000.0 + (3400.0 - 2000.0) * (t / 5.0)
        fstop_want = 4.0 + (6.0 - 4.0) * (t / 5.0)
        worst = max(
            worst,
            abs(rec.focus_distance_cm - focus_want),
            abs(rec.fstop - fstop_want),
            abs(rec.focal_length_mm - 300.0),
        )
    exact = worst <= 1e-9

    identical = all(
        (out_a / f"frame_{k:04d}_rgb.png").read_bytes()
        == (out_b / f"frame_{k:04d}_rgb.png").read_bytes()
        for k in range(51)
    )
    announce(
        "open-loop focus/f-stop ramps play back exactly and reproducibly",
        exact and identical,
        f"51 frames, max track deviation {worst:.2e}, bit-identical reruns: {identical}",
    )


def test_autofocus_keeps_target_sharp_during_approach(tmp_path, announce):
    base = {
        "scene": {
            "objects": [
                {
                    "id": 7,
                    "shape": {
                        "type": "quad",
                        "corner": [55.0, -1.0, -1.0],
                        "edge_u": [0.0, 2.0, 0.0],
                        "edge_v": [0.0, 0.0, 2.0],
                    },
                    "material": {"albedo": [0.85, 0.85, 0.85], "checker_scale": 0.5},
                }
            ],
            "light": {"position": [30.0, 0.0, 30.0], "intensity": 2000.0},
            "ambient": 0.3,
            "background": [0.04, 0.04, 0.06],
            "focus_target": 7,
        },
        "vehicle": {
            "keyframes": [
                {"t": 0.0, "position": [5.0, 0.0, 0.0]},
                {"t": 2.0, "position": [50.0, 0.0, 0.0]},
            ]
        },
        "camera": {
            "lens": "50mm Prime f/1.2",
            "filmback": "16:9 DSLR",
            "focus_distance_cm": 5000.0,
            "fstop": 1.2,
        },
        "autofocus": {"enabled": True},
        "duration_s": 2.0,
        "frame_rate_hz": 10.0,
        "passes": ["rgb", "segmentation"],
        "render": {"width": 160, "height": 90, "samples_per_pixel": 16},
        "seed": 4,
    }
    pinhole = copy.deepcopy(base)
    pinhole["render"]["mode"] = "pinhole"
    out_thin = tmp_path / "thin"
    out_pin = tmp_path / "pin"
    records = run_scenario(scenario_from_dict(base), out_thin)
    run_scenario(scenario_from_dict(pinhole), out_pin)

    c_limit = optics.default_coc_limit(DSLR)
    focus_err = 0.0
    coc_worst = 0.0
    ratio_floor = math.inf
    for rec in records:
        true_cm = 100.0 * (50.0 - 22.5 * rec.t)
        focus_err = max(focus_err, abs(rec.focus_distance_cm - true_cm))
        coc_worst = max(
            coc_worst,
            optics.coc_diameter(50.0, rec.fstop, rec.focus_distance_cm * 10.0, true_cm * 10.0),
        )
        name = f"frame_{rec.frame:04d}"
        thin = decode_image((out_thin / f"{name}_rgb.png").read_bytes())
        pin = decode_image((out_pin / f"{name}_rgb.png").read_bytes())
        seg = decode_image((out_thin / f"{name}_segmentation.png").read_bytes())
        mask = erode(seg.data == 7)
        pin_energy = gradient_energy(pin, mask)
        assert pin_energy > 0.0, "target texture must register in the pinhole render"
        ratio_floor = min(ratio_floor, gradient_energy(thin, mask) / pin_energy)

    ok = focus_err <= 1.0 and coc_worst <= c_limit and ratio_floor >= 0.9
    announce(
        "autofocus keeps the approached target sharp",
        ok,
        f"max focus err {focus_err:.2e} cm, max CoC {coc_worst:.1e} mm, "
        f"sharpness floor {ratio_floor:.3f}",
    )


def test_focus_plane_overlay_highlights_exact_distance(announce):
    near_wall = SceneObject(
        id=1,
        shape=Quad(corner=(5.0, 0.05, -6.0), edge_u=(0.0, 8.0, 0.0), edge_v=(0.0, 0.0, 12.0)),
        material=Material(albedo=(0.6, 0.6, 0.6)),
    )
    far_wall = SceneObject(
        id=2,
        shape=Quad(corner=(7.0, -8.05, -6.0), edge_u=(0.0, 8.0, 0.0), edge_v=(0.0, 0.0, 12.0)),
        material=Material(albedo=(0.55, 0.6, 0.65)),
    )
    scene = Scene(
        objects=(near_wall, far_wall),
        light=PointLight(position=(0.0, 0.0, 2.0), intensity=80.0),
        ambient=0.3,
    )
    lens = optics.lens_preset("50mm Prime f/1.2")
    state = clamp_camera_state(
        lens, DSLR, focal_length_mm=50.0, focus_distance_cm=500.0, fstop=2.0
    )
    settings = RenderSettings(width=160, height=90, samples_per_pixel=4, rng_seed=2)
    rgb = render_pass(scene, ORIGIN, state, settings, "rgb")
    depth = render_pass(scene, ORIGIN, state, settings, "depth")
    seg = render_pass(scene, ORIGIN, state, settings, "segmentation")
    out = overlay_focus_plane(rgb, depth, 5.0, 0.1)

    changed = (out.data != rgb.data).any(axis=2)
    on_near = seg.data == 1
    on_far = seg.data == 2
    assert on_near.sum() > 500 and on_far.sum() > 500
    near_frac = changed[on_near].mean()
    far_frac = changed[on_far].mean()
    announce(
        "focus-plane overlay highlights the focus distance only",
        near_frac == 1.0 and far_frac == 0.0,
        f"wall at 5 m: {near_frac:.0%} highlighted, wall at 7 m: {far_frac:.0%}",
    )


def test_control_protocol_conformance(announce):
    covered = set()
    server = serve(make_session(), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    bare_server = serve(make_session(with_target=False), port=0)
    bare_thread = threading.Thread(target=bare_server.serve_forever, daemon=True)
    bare_thread.start()
    problems = []

    def check(condition, label):
        if not condition:
            problems.append(label)

    try:
        wire = WireClient(server.bound_port)

        def call(method, params=None):
            covered.add(method)
            return wire.call(method, params)

        def result(method, params=None):
            covered.add(method)
            return wire.result(method, params)

        info = result("getCameraInfo")
        check(info["lens"] == "50mm Prime f/1.2", "initial camera info")

        check(
            result("setLensPreset", {"name": "12mm Prime f/2.8"})["focal_length_mm"] == 12.0,
            "lens preset swap",
        )
        check(result("setFocalLength", {"value_mm": 800.0}) == 12.0, "focal clamps down to 12")
        check(result("setFocusDistance", {"value_cm": 10.0}) == 30.0, "focus clamps up to 30")
        check(result("setFocusDistance", {"value_cm": 1050.0}) == 1050.0, "focus round trip")
        check(result("setFocusDistance", {"value_cm": None}) is None, "focus at infinity is null")
        check(result("setFocusAperture", {"value": 2.8}) == 2.8, "aperture round trip")
        fb = result("setFilmback", {"name": "Super 35mm"})
        check(fb["sensor_width_mm"] == 24.89, "filmback preset")
        check(result("enableManualFocus", {"enabled": True}) is True, "manual focus toggle")
        check(result("setFocusPlane", {"enabled": False}) is False, "focus plane toggle")

        pose = result(
            "setVehiclePose",
            {"position": [1.0, 0.0, 0.0], "quaternion": [2.0, 0.0, 0.0, 0.0]},
        )
        check(pose["quaternion"] == [1.0, 0.0, 0.0, 0.0], "pose quaternion normalized")
        check(abs(result("getDistanceToTarget") - 5.0) < 1e-9, "distance to target")
        check(result("simTick", {"dt_s": 0.125}) == 0.125, "clock tick")

        image_params = {"pass": "rgb", "width": 32, "height": 18, "spp": 4}
        first = result("getImage", image_params)
        second = result("getImage", image_params)
        check(first == second, "getImage bit-stable")
        decoded = decode_image(__import__("base64").b64decode(first))
        check((decoded.width, decoded.height) == (32, 18), "getImage decodes")

        check(call("warpDrive")["error"]["code"] == -1, "unknown method code")
        check(
            call("setFocalLength", {"value_mm": "fifty"})["error"]["code"] == -2,
            "malformed param code",
        )
        check(
            call("setFilmback", {"name": "Медиум Format"})["error"]["code"] == -3,
            "unknown preset code",
        )
        wire.send_raw(b"}{ not json\n")
        broken = wire.read_response()
        check(broken["id"] == 0 and broken["error"]["code"] == -2, "malformed line answered")
        check(result("getCameraInfo")["clock_s"] == 0.125, "connection survives bad line")

        bare = WireClient(bare_server.bound_port)
        covered.add("getDistanceToTarget")
        check(
            bare.call("getDistanceToTarget")["error"]["code"] == -4,
            "no-target code",
        )
        bare.close()
        wire.close()
    finally:
        server.stop()
        bare_server.stop()
        thread.join(timeout=5)
        bare_thread.join(timeout=5)

    all_methods = {
        "getCameraInfo",
        "setFocalLength",
        "setFocusDistance",
        "setFocusAperture",
        "setFilmback",
        "setLensPreset",
        "enableManualFocus",
        "setFocusPlane",
        "getImage",
        "setVehiclePose",
        "getDistanceToTarget",
        "simTick",
    }
    missing = all_methods - covered
    check(not missing, f"methods not exercised: {sorted(missing)}")
    announce(
        "control protocol conformance",
        not problems,
        "12 methods, clamp round-trips, codes -1..-4, stable images"
        if not problems
        else "; ".join(problems),
    )
