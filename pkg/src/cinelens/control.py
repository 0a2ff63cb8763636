"""Scripted shots: scenario files, scalar parameter tracks, the ground-truth
autofocus law, frame-by-frame playback, and the per-frame log.

A scenario bundles a scene, a vehicle flight path, a camera configuration and
optional time-varying parameter tracks.  Playback steps a fixed frame clock
(``frame k`` at ``t = k / frame_rate_hz``), interpolates pose and parameters,
clamps them into the lens limits, renders the requested passes and appends one
log record per frame.  Replaying a log's applied values as an open-loop
scenario reproduces the original images bit for bit.

Autofocus, when enabled, measures the true Euclidean distance from the camera
to the scene's focus target and applies it (in centimeters) as the focus
distance, re-measuring every ``update_period_s`` (default: every frame).
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import optics
from .errors import EmptyTrackError, ValidationError
from .optics import CameraState, Filmback, Lens, clamp_camera_state
from .render import (
    ImageBuffer,
    RenderSettings,
    default_resolution,
    export_image,
    overlay_focus_plane,
    render_pass,
)
from .scene import Scene, scene_from_dict, target_position
from .vehicle import (
    CameraMount,
    Pose,
    PoseKeyframe,
    camera_world_pose,
    interpolate_pose,
    keyframes_from_list,
    mount_from_dict,
)

TRACK_PARAMETERS = ("focal_length_mm", "focus_distance_cm", "fstop")

FRAME_CSV_NAME = "frames.csv"
MANIFEST_NAME = "manifest.json"
FRAME_CSV_COLUMNS = (
    "frame",
    "t",
    "px",
    "py",
    "pz",
    "qw",
    "qx",
    "qy",
    "qz",
    "focal_mm",
    "focus_cm",
    "fstop",
    "af_dist_cm",
)

DEFAULT_OVERLAY_BAND_M = 0.1


@dataclass(frozen=True)
class ScalarTrack:
    """Piecewise-linear schedule for one camera parameter."""

    parameter: str
    keyframes: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.parameter not in TRACK_PARAMETERS:
            raise ValidationError(
                f"unknown track parameter {self.parameter!r}; expected one of "
                f"{TRACK_PARAMETERS}"
            )
        frames = tuple((float(t), float(v)) for t, v in self.keyframes)
        object.__setattr__(self, "keyframes", frames)
        times = [t for t, _ in frames]
        if any(not (math.isfinite(t) and t >= 0.0) for t in times):
            raise ValidationError("track times must be finite and >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("track times must be strictly increasing")
        if any(not (math.isfinite(v) and v > 0.0) for _, v in frames):
            raise ValidationError("track values must be finite and > 0")


def evaluate_track(track: ScalarTrack, t: float) -> float:
    """Value at time ``t``; exact at keyframes, clamped outside the range."""
    frames = track.keyframes
    if not frames:
        raise EmptyTrackError(f"track {track.parameter!r} has no keyframes")
    times = [kf[0] for kf in frames]
    if t <= times[0]:
        return frames[0][1]
    if t >= times[-1]:
        return frames[-1][1]
    hi = bisect_right(times, t)
    t0, v0 = frames[hi - 1]
    t1, v1 = frames[hi]
    if t == t0:
        return v0
    u = (t - t0) / (t1 - t0)
    return v0 + u * (v1 - v0)


def autofocus_step(camera_pose: Pose, target_position_m) -> float:
    """Ground-truth autofocus: straight-line camera-to-target distance,
    returned in centimeters."""
    offset = np.asarray(target_position_m, dtype=np.float64) - camera_pose.position
    return float(np.linalg.norm(offset)) * optics.CM_PER_M


@dataclass(frozen=True)
class AutofocusSettings:
    update_period_s: float | None = None

    def __post_init__(self) -> None:
        period = self.update_period_s
        if period is not None and not (math.isfinite(period) and period > 0.0):
            raise ValidationError("autofocus update_period_s must be finite and > 0")


@dataclass(frozen=True, eq=False)
class Scenario:
    scene: Scene
    keyframes: tuple[PoseKeyframe, ...]
    mount: CameraMount
    camera: CameraState
    duration_s: float
    frame_rate_hz: float
    render: RenderSettings
    tracks: tuple[ScalarTrack, ...] = ()
    autofocus: AutofocusSettings | None = None
    passes: tuple[str, ...] = ("rgb",)
    overlay_band_m: float = DEFAULT_OVERLAY_BAND_M

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration_s) and self.duration_s >= 0.0):
            raise ValidationError("duration_s must be finite and >= 0")
        if not (math.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0.0):
            raise ValidationError("frame_rate_hz must be finite and > 0")
        if not self.keyframes:
            raise EmptyTrackError("scenario needs at least one pose keyframe")
        params = [track.parameter for track in self.tracks]
        if len(set(params)) != len(params):
            raise ValidationError("at most one track per camera parameter")
        if not self.passes:
            raise ValidationError("at least one render pass is required")
        for name in self.passes:
            if name not in ("rgb", "depth", "segmentation"):
                raise ValidationError(f"unknown render pass {name!r}")
        if not (math.isfinite(self.overlay_band_m) and self.overlay_band_m >= 0.0):
            raise ValidationError("overlay_band_m must be finite and >= 0")
        if self.autofocus is not None:
            if self.scene.focus_target is None:
                raise ValidationError("autofocus requires the scene to set focus_target")
            if "focus_distance_cm" in params:
                raise ValidationError(
                    "autofocus and a focus_distance_cm track are mutually exclusive"
                )


def frame_count(duration_s: float, frame_rate_hz: float) -> int:
    """Number of frames on the fixed clock: both endpoints inclusive."""
    return int(math.floor(duration_s * frame_rate_hz + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame: int
    t: float
    vehicle_pose: Pose
    focal_length_mm: float
    focus_distance_cm: float
    fstop: float
    autofocus_distance_cm: float | None = None
    images: dict = field(default_factory=dict)


def write_frame_log(
    records: Sequence[FrameRecord], out_dir, manifest_extra: dict | None = None
) -> None:
    """Write ``frames.csv`` (one row per frame, floats via repr so replay sees
    the exact applied values) plus a ``manifest.json`` sidecar."""
    out = Path(out_dir)
    with open(out / FRAME_CSV_NAME, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(FRAME_CSV_COLUMNS)
        for rec in records:
            pos = rec.vehicle_pose.position
            quat = rec.vehicle_pose.orientation
            writer.writerow(
                [
                    rec.frame,
                    repr(rec.t),
                    repr(float(pos[0])),
                    repr(float(pos[1])),
                    repr(float(pos[2])),
                    repr(float(quat[0])),
                    repr(float(quat[1])),
                    repr(float(quat[2])),
                    repr(float(quat[3])),
                    repr(rec.focal_length_mm),
                    repr(rec.focus_distance_cm),
                    repr(rec.fstop),
                    "" if rec.autofocus_distance_cm is None else repr(rec.autofocus_distance_cm),
                ]
            )
    manifest = {
        "frame_count": len(records),
        "csv": FRAME_CSV_NAME,
        "images": [rec.images for rec in records],
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_frame_log(csv_path) -> list[FrameRecord]:
    records: list[FrameRecord] = []
    with open(csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != list(FRAME_CSV_COLUMNS):
            raise ValidationError(
                f"unexpected frame log columns: {reader.fieldnames!r}"
            )
        for row in reader:
            pose = Pose(
                position=[float(row["px"]), float(row["py"]), float(row["pz"])],
                orientation=[
                    float(row["qw"]),
                    float(row["qx"]),
                    float(row["qy"]),
                    float(row["qz"]),
                ],
            )
            af = row["af_dist_cm"]
            records.append(
                FrameRecord(
                    frame=int(row["frame"]),
                    t=float(row["t"]),
                    vehicle_pose=pose,
                    focal_length_mm=float(row["focal_mm"]),
                    focus_distance_cm=float(row["focus_cm"]),
                    fstop=float(row["fstop"]),
                    autofocus_distance_cm=float(af) if af else None,
                )
            )
    return records


_PASS_SUFFIX = {"rgb": None, "depth": "raw", "segmentation": "png"}


def _frame_filename(index: int, pass_name: str, rgb_format: str) -> str:
    ext = rgb_format if pass_name == "rgb" else _PASS_SUFFIX[pass_name]
    return f"frame_{index:04d}_{pass_name}.{ext}"


def run_scenario(
    scenario: Scenario,
    out_dir,
    *,
    passes: Sequence[str] | None = None,
    image_format: str = "png",
) -> list[FrameRecord]:
    """Play a scenario, writing one image per (frame, pass) plus the frame
    log, and return the records.  ``passes`` overrides the scenario's list."""
    if image_format not in ("png", "ppm"):
        raise ValidationError(f"image_format must be 'png' or 'ppm', got {image_format!r}")
    active_passes = tuple(passes) if passes is not None else scenario.passes
    if passes is not None:
        scenario = replace(scenario, passes=active_passes)  # re-validate names
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    base = scenario.camera
    rate = scenario.frame_rate_hz
    total = frame_count(scenario.duration_s, rate)
    af_period = None
    if scenario.autofocus is not None:
        af_period = scenario.autofocus.update_period_s or 1.0 / rate
        target_m = target_position(scenario.scene)
    next_af_t = 0.0
    held_af_cm: float | None = None

    records: list[FrameRecord] = []
    for index in range(total):
        t = index / rate
        vehicle_pose = interpolate_pose(scenario.keyframes, t)
        cam_pose = camera_world_pose(vehicle_pose, scenario.mount)

        focal = base.focal_length_mm
        focus = base.focus_distance_cm
        stop = base.fstop
        for track in scenario.tracks:
            value = evaluate_track(track, t)
            if track.parameter == "focal_length_mm":
                focal = value
            elif track.parameter == "focus_distance_cm":
                focus = value
            else:
                stop = value
        af_cm = None
        if af_period is not None:
            if held_af_cm is None or t >= next_af_t - 1e-9:
                held_af_cm = autofocus_step(cam_pose, target_m)
                while next_af_t <= t + 1e-9:
                    next_af_t += af_period
            af_cm = held_af_cm
            focus = af_cm

        state = clamp_camera_state(
            base.lens,
            base.filmback,
            focal_length_mm=focal,
            focus_distance_cm=focus,
            fstop=stop,
            manual_focus_enabled=base.manual_focus_enabled,
            focus_plane_debug=base.focus_plane_debug,
        )

        buffers: dict[str, ImageBuffer] = {}
        for pass_name in active_passes:
            buffers[pass_name] = render_pass(
                scenario.scene, cam_pose, state, scenario.render, pass_name
            )
        if state.focus_plane_debug and "rgb" in buffers:
            depth = buffers.get("depth") or render_pass(
                scenario.scene, cam_pose, state, scenario.render, "depth"
            )
            buffers["rgb"] = overlay_focus_plane(
                buffers["rgb"],
                depth,
                state.focus_distance_cm / optics.CM_PER_M,
                scenario.overlay_band_m,
            )

        images: dict[str, str] = {}
        for pass_name in active_passes:
            filename = _frame_filename(index, pass_name, image_format)
            fmt = image_format if pass_name == "rgb" else None
            export_image(buffers[pass_name], out / filename, fmt)
            images[pass_name] = filename

        records.append(
            FrameRecord(
                frame=index,
                t=t,
                vehicle_pose=vehicle_pose,
                focal_length_mm=state.focal_length_mm,
                focus_distance_cm=state.focus_distance_cm,
                fstop=state.fstop,
                autofocus_distance_cm=af_cm,
                images=images,
            )
        )

    write_frame_log(
        records,
        out,
        manifest_extra={
            "duration_s": scenario.duration_s,
            "frame_rate_hz": rate,
            "passes": list(active_passes),
            "image_format": image_format,
            "rng_seed": scenario.render.rng_seed,
            "width": scenario.render.width,
            "height": scenario.render.height,
            "samples_per_pixel": scenario.render.samples_per_pixel,
        },
    )
    return records


def build_replay_scenario(
    scenario: Scenario, records: Sequence[FrameRecord]
) -> Scenario:
    """Open-loop twin of a finished run: the logged vehicle poses and applied
    camera values become explicit keyframes, autofocus turns off.  Playing it
    back renders bit-identical frames."""
    if not records:
        raise EmptyTrackError("cannot replay an empty frame log")
    keyframes = tuple(
        PoseKeyframe(t=rec.t, pose=rec.vehicle_pose) for rec in records
    )
    tracks = tuple(
        ScalarTrack(
            parameter=parameter,
            keyframes=tuple((rec.t, getattr(rec, attr)) for rec in records),
        )
        for parameter, attr in (
            ("focal_length_mm", "focal_length_mm"),
            ("focus_distance_cm", "focus_distance_cm"),
            ("fstop", "fstop"),
        )
    )
    return replace(scenario, keyframes=keyframes, tracks=tracks, autofocus=None)


def _camera_from_dict(data: dict) -> CameraState:
    unknown = set(data) - {
        "lens",
        "filmback",
        "focal_length_mm",
        "focus_distance_cm",
        "fstop",
        "manual_focus",
        "focus_plane_debug",
    }
    if unknown:
        raise ValidationError(f"camera: unknown fields {sorted(unknown)}")

    lens_value = data.get("lens")
    if isinstance(lens_value, str):
        lens = optics.lens_preset(lens_value)
    elif isinstance(lens_value, dict):
        _, lenses = optics.parse_catalog([lens_value])
        if len(lenses) != 1:
            raise ValidationError("camera.lens record does not describe a lens")
        lens = next(iter(lenses.values()))
    else:
        raise ValidationError("camera.lens must be a preset name or a lens record")

    fb_value = data.get("filmback")
    if isinstance(fb_value, str):
        filmback = optics.filmback_preset(fb_value)
    elif isinstance(fb_value, dict):
        filmbacks, _ = optics.parse_catalog([fb_value])
        if len(filmbacks) != 1:
            raise ValidationError("camera.filmback record does not describe a filmback")
        filmback = next(iter(filmbacks.values()))
    else:
        raise ValidationError("camera.filmback must be a preset name or a filmback record")

    return clamp_camera_state(
        lens,
        filmback,
        focal_length_mm=float(data.get("focal_length_mm", lens.min_focal_length_mm)),
        focus_distance_cm=float(
            data.get("focus_distance_cm", lens.min_focus_distance_cm)
        ),
        fstop=float(data.get("fstop", lens.min_fstop)),
        manual_focus_enabled=bool(data.get("manual_focus", True)),
        focus_plane_debug=bool(data.get("focus_plane_debug", False)),
    )


def scenario_from_dict(data: dict) -> Scenario:
    unknown = set(data) - {
        "scene",
        "vehicle",
        "camera",
        "tracks",
        "autofocus",
        "duration_s",
        "frame_rate_hz",
        "render",
        "passes",
        "overlay_band_m",
        "seed",
    }
    if unknown:
        raise ValidationError(f"scenario: unknown fields {sorted(unknown)}")
    for required in ("scene", "vehicle", "camera", "duration_s", "frame_rate_hz"):
        if required not in data:
            raise ValidationError(f"scenario: missing field {required!r}")

    scene = scene_from_dict(data["scene"])

    vehicle_data = data["vehicle"]
    unknown = set(vehicle_data) - {"keyframes", "mount"}
    if unknown:
        raise ValidationError(f"vehicle: unknown fields {sorted(unknown)}")
    if "keyframes" not in vehicle_data:
        raise ValidationError("vehicle: missing field 'keyframes'")
    keyframes = keyframes_from_list(vehicle_data["keyframes"])
    mount = mount_from_dict(vehicle_data.get("mount", {}))

    camera = _camera_from_dict(data["camera"])

    tracks = []
    for entry in data.get("tracks", ()):
        unknown = set(entry) - {"parameter", "keyframes"}
        if unknown:
            raise ValidationError(f"track: unknown fields {sorted(unknown)}")
        if "parameter" not in entry or "keyframes" not in entry:
            raise ValidationError("track: needs 'parameter' and 'keyframes'")
        tracks.append(
            ScalarTrack(
                parameter=entry["parameter"],
                keyframes=tuple((kf[0], kf[1]) for kf in entry["keyframes"]),
            )
        )

    autofocus = None
    af_data = data.get("autofocus")
    if af_data is not None:
        unknown = set(af_data) - {"enabled", "update_period_s"}
        if unknown:
            raise ValidationError(f"autofocus: unknown fields {sorted(unknown)}")
        if af_data.get("enabled", True):
            period = af_data.get("update_period_s")
            autofocus = AutofocusSettings(
                update_period_s=float(period) if period is not None else None
            )

    render_data = dict(data.get("render", {}))
    unknown = set(render_data) - {"width", "height", "samples_per_pixel", "mode"}
    if unknown:
        raise ValidationError(f"render: unknown fields {sorted(unknown)}")
    width = int(render_data.get("width", 160))
    if "height" in render_data and render_data["height"] is not None:
        height = int(render_data["height"])
    else:
        _, height = default_resolution(camera.filmback, width)
    settings = RenderSettings(
        width=width,
        height=height,
        samples_per_pixel=int(render_data.get("samples_per_pixel", 16)),
        rng_seed=int(data.get("seed", 0)),
        mode=str(render_data.get("mode", "thin_lens")),
    )

    return Scenario(
        scene=scene,
        keyframes=keyframes,
        mount=mount,
        camera=camera,
        duration_s=float(data["duration_s"]),
        frame_rate_hz=float(data["frame_rate_hz"]),
        render=settings,
        tracks=tuple(tracks),
        autofocus=autofocus,
        passes=tuple(data.get("passes", ("rgb",))),
        overlay_band_m=float(data.get("overlay_band_m", DEFAULT_OVERLAY_BAND_M)),
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"scenario {path}: top level must be a JSON object")
    return scenario_from_dict(data)
