"""Newline-delimited JSON control plane over TCP.

Wire format: UTF-8, one JSON object per line.  Requests look like
``{"id": 1, "method": "setFocalLength", "params": {"value_mm": 50.0}}`` and
responses echo the id with either ``"result"`` or ``"error": {"code", "message"}``.

Error codes: ``-1`` unknown method, ``-2`` malformed request or params,
``-3`` domain error (bad values, unknown preset, unparseable state change),
``-4`` the scene has no focus target.  A malformed line never kills the
connection; the server answers with id 0 and keeps reading.  Infinite values
(focus at infinity, unbounded far depth of field) cross the wire as ``null``.

Requests on one connection are answered in order.  Connections share one
:class:`SimSession`; mutations are serialized under a lock, and ``getImage``
renders from an immutable snapshot taken under that lock so a render never
observes a half-applied change.
"""

from __future__ import annotations

import base64
import json
import math
import os
import socket
import socketserver
import threading

from . import optics
from .control import Scenario, autofocus_step
from .errors import BindError, CinelensError, DomainError, NoTargetError, ValidationError
from .optics import CameraState, Filmback, clamp_camera_state
from .render import (
    PASS_NAMES,
    RenderSettings,
    encode_image,
    overlay_focus_plane,
    render_pass,
)
from .scene import Scene, target_position
from .vehicle import CameraMount, Pose, camera_world_pose, interpolate_pose, quat_normalize

DEFAULT_PORT = 41451
PORT_ENV_VAR = "CINELENS_PORT"

ERR_UNKNOWN_METHOD = -1
ERR_MALFORMED = -2
ERR_DOMAIN = -3
ERR_NO_TARGET = -4


class _Malformed(Exception):
    """Internal: request shape or param types are wrong (wire code -2)."""


def resolve_port(cli_value: int | None = None) -> int:
    """Port precedence: explicit value, then ``CINELENS_PORT``, then the
    default."""
    if cli_value is not None:
        return int(cli_value)
    env = os.environ.get(PORT_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(
                f"{PORT_ENV_VAR} must be an integer, got {env!r}"
            ) from None
    return DEFAULT_PORT


class SimSession:
    """Mutable simulator state shared by every connection.

    The vehicle holds one live pose (clients drive it with setVehiclePose);
    the camera is a single :class:`CameraState`.  All mutation goes through
    methods that take the lock and re-clamp, so the stored state is legal at
    every instant.
    """

    def __init__(
        self,
        scene: Scene,
        vehicle_pose: Pose,
        mount: CameraMount,
        camera: CameraState,
        render_settings: RenderSettings,
        overlay_band_m: float = 0.1,
    ):
        self.lock = threading.RLock()
        self.scene = scene
        self.vehicle_pose = vehicle_pose
        self.mount = mount
        self.camera = camera
        self.render_settings = render_settings
        self.overlay_band_m = overlay_band_m
        self.clock_s = 0.0

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "SimSession":
        return cls(
            scene=scenario.scene,
            vehicle_pose=interpolate_pose(scenario.keyframes, 0.0),
            mount=scenario.mount,
            camera=scenario.camera,
            render_settings=scenario.render,
            overlay_band_m=scenario.overlay_band_m,
        )

    def snapshot(self):
        """Consistent (pose, camera, settings) triple; every member is
        immutable, so the result can be used outside the lock."""
        with self.lock:
            return self.vehicle_pose, self.camera, self.render_settings

    def apply_camera(self, **changes) -> CameraState:
        with self.lock:
            cam = self.camera
            merged = {
                "focal_length_mm": cam.focal_length_mm,
                "focus_distance_cm": cam.focus_distance_cm,
                "fstop": cam.fstop,
                "manual_focus_enabled": cam.manual_focus_enabled,
                "focus_plane_debug": cam.focus_plane_debug,
            }
            merged.update(changes)
            self.camera = clamp_camera_state(cam.lens, cam.filmback, **merged)
            return self.camera

    def camera_pose(self) -> Pose:
        with self.lock:
            return camera_world_pose(self.vehicle_pose, self.mount)


def _number(params: dict, key: str, default=None):
    if key not in params or params[key] is None:
        if default is None:
            raise _Malformed(f"missing numeric param {key!r}")
        return default
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _Malformed(f"param {key!r} must be a number, got {value!r}")
    return float(value)


def _integer(params: dict, key: str, default: int) -> int:
    value = params.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Malformed(f"param {key!r} must be an integer, got {value!r}")
    return value


def _boolean(params: dict, key: str) -> bool:
    if key not in params:
        raise _Malformed(f"missing boolean param {key!r}")
    value = params[key]
    if not isinstance(value, bool):
        raise _Malformed(f"param {key!r} must be a boolean, got {value!r}")
    return value


def _vector(params: dict, key: str, size: int) -> list[float]:
    if key not in params:
        raise _Malformed(f"missing param {key!r}")
    value = params[key]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != size
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise _Malformed(f"param {key!r} must be a list of {size} numbers")
    return [float(v) for v in value]


def _require_positive(value: float, name: str, allow_inf: bool = False) -> float:
    if math.isnan(value) or value <= 0.0 or (math.isinf(value) and not allow_inf):
        raise DomainError(f"{name} must be a positive{' ' if allow_inf else ' finite '}number")
    return value


def _wire(value: float):
    """Numbers cross the wire as-is; infinity becomes null."""
    return None if math.isinf(value) else value


def _camera_info(session: SimSession) -> dict:
    with session.lock:
        cam = session.camera
        clock = session.clock_s
    coc_limit = optics.default_coc_limit(cam.filmback)
    near_mm, far_mm = optics.dof_limits(
        cam.focal_length_mm, cam.fstop, cam.focus_distance_mm, coc_limit
    )
    hyper_mm = optics.hyperfocal_distance(cam.focal_length_mm, cam.fstop, coc_limit)
    return {
        "lens": cam.lens.name,
        "filmback": {
            "name": cam.filmback.name,
            "sensor_width_mm": cam.filmback.sensor_width_mm,
            "sensor_height_mm": cam.filmback.sensor_height_mm,
        },
        "focal_length_mm": cam.focal_length_mm,
        "focus_distance_cm": _wire(cam.focus_distance_cm),
        "fstop": cam.fstop,
        "aperture_diameter_mm": cam.aperture_diameter_mm,
        "manual_focus_enabled": cam.manual_focus_enabled,
        "focus_plane_debug": cam.focus_plane_debug,
        "horizontal_fov_deg": optics.horizontal_fov(cam.filmback, cam.focal_length_mm),
        "vertical_fov_deg": optics.vertical_fov(cam.filmback, cam.focal_length_mm),
        "coc_limit_mm": coc_limit,
        "dof_near_cm": _wire(near_mm / optics.MM_PER_CM),
        "dof_far_cm": _wire(far_mm / optics.MM_PER_CM),
        "hyperfocal_cm": hyper_mm / optics.MM_PER_CM,
        "clock_s": clock,
    }


def _do_get_image(session: SimSession, params: dict):
    pass_name = params.get("pass", "rgb")
    if not isinstance(pass_name, str):
        raise _Malformed("param 'pass' must be a string")
    if pass_name not in PASS_NAMES:
        raise DomainError(f"unknown pass {pass_name!r}; expected one of {PASS_NAMES}")
    pose, camera, base_settings = session.snapshot()
    settings = RenderSettings(
        width=_integer(params, "width", base_settings.width),
        height=_integer(params, "height", base_settings.height),
        samples_per_pixel=_integer(params, "spp", base_settings.samples_per_pixel),
        rng_seed=base_settings.rng_seed,
        mode=base_settings.mode,
    )
    cam_pose = camera_world_pose(pose, session.mount)
    buffer = render_pass(session.scene, cam_pose, camera, settings, pass_name)
    if pass_name == "rgb" and camera.focus_plane_debug:
        depth = render_pass(session.scene, cam_pose, camera, settings, "depth")
        buffer = overlay_focus_plane(
            buffer,
            depth,
            camera.focus_distance_cm / optics.CM_PER_M,
            session.overlay_band_m,
        )
    return base64.b64encode(encode_image(buffer)).decode("ascii")


def _do_set_filmback(session: SimSession, params: dict):
    if "name" in params:
        name = params["name"]
        if not isinstance(name, str):
            raise _Malformed("param 'name' must be a string")
        filmback = optics.filmback_preset(name)
    else:
        width = _require_positive(_number(params, "width_mm"), "width_mm")
        height = _require_positive(_number(params, "height_mm"), "height_mm")
        filmback = Filmback(name="custom", sensor_width_mm=width, sensor_height_mm=height)
    with session.lock:
        cam = session.camera
        session.camera = CameraState(
            lens=cam.lens,
            filmback=filmback,
            focal_length_mm=cam.focal_length_mm,
            focus_distance_cm=cam.focus_distance_cm,
            fstop=cam.fstop,
            manual_focus_enabled=cam.manual_focus_enabled,
            focus_plane_debug=cam.focus_plane_debug,
        )
    return {
        "name": filmback.name,
        "sensor_width_mm": filmback.sensor_width_mm,
        "sensor_height_mm": filmback.sensor_height_mm,
    }


def _do_set_lens(session: SimSession, params: dict):
    name = params.get("name")
    if not isinstance(name, str):
        raise _Malformed("param 'name' must be a string")
    lens = optics.lens_preset(name)
    with session.lock:
        cam = session.camera
        session.camera = clamp_camera_state(
            lens,
            cam.filmback,
            focal_length_mm=cam.focal_length_mm,
            focus_distance_cm=cam.focus_distance_cm,
            fstop=cam.fstop,
            manual_focus_enabled=cam.manual_focus_enabled,
            focus_plane_debug=cam.focus_plane_debug,
        )
    return _camera_info(session)


def _do_set_vehicle_pose(session: SimSession, params: dict):
    position = _vector(params, "position", 3)
    quaternion = _vector(params, "quaternion", 4)
    if any(not math.isfinite(v) for v in position):
        raise DomainError("position must be finite")
    try:
        quat = quat_normalize(quaternion)
    except ValidationError as exc:
        raise DomainError(str(exc)) from exc
    pose = Pose(position=position, orientation=quat)
    with session.lock:
        session.vehicle_pose = pose
    return {
        "position": [float(v) for v in pose.position],
        "quaternion": [float(v) for v in pose.orientation],
    }


def handle_request(session: SimSession, request: dict) -> dict:
    """Dispatch one parsed request object to its handler and wrap the reply.
    Never raises on client mistakes; those come back as error responses."""
    request_id = request.get("id", 0)
    if isinstance(request_id, bool) or not isinstance(request_id, int):
        return _error(0, ERR_MALFORMED, "request id must be an integer")
    method = request.get("method")
    if not isinstance(method, str):
        return _error(request_id, ERR_MALFORMED, "request needs a string 'method'")
    params = request.get("params", {})
    if not isinstance(params, dict):
        return _error(request_id, ERR_MALFORMED, "'params' must be an object")

    try:
        result = _dispatch(session, method, params)
    except _Malformed as exc:
        return _error(request_id, ERR_MALFORMED, str(exc))
    except NoTargetError as exc:
        return _error(request_id, ERR_NO_TARGET, str(exc))
    except CinelensError as exc:
        # DomainError, ValidationError, NotFoundError: value-level problems.
        return _error(request_id, ERR_DOMAIN, str(exc))
    except KeyError:
        return _error(request_id, ERR_UNKNOWN_METHOD, f"unknown method {method!r}")
    except Exception as exc:  # pragma: no cover - defensive
        return _error(request_id, ERR_DOMAIN, f"internal error: {exc!r}")
    return {"id": request_id, "result": result}


def _dispatch(session: SimSession, method: str, params: dict):
    if method == "getCameraInfo":
        return _camera_info(session)
    if method == "setFocalLength":
        value = _require_positive(_number(params, "value_mm"), "value_mm")
        return session.apply_camera(focal_length_mm=value).focal_length_mm
    if method == "setFocusDistance":
        raw = params.get("value_cm")
        value = math.inf if raw is None else _number(params, "value_cm")
        value = _require_positive(value, "value_cm", allow_inf=True)
        return _wire(session.apply_camera(focus_distance_cm=value).focus_distance_cm)
    if method == "setFocusAperture":
        value = _require_positive(_number(params, "value"), "value")
        return session.apply_camera(fstop=value).fstop
    if method == "setFilmback":
        return _do_set_filmback(session, params)
    if method == "setLensPreset":
        return _do_set_lens(session, params)
    if method == "enableManualFocus":
        enabled = _boolean(params, "enabled")
        return session.apply_camera(manual_focus_enabled=enabled).manual_focus_enabled
    if method == "setFocusPlane":
        enabled = _boolean(params, "enabled")
        return session.apply_camera(focus_plane_debug=enabled).focus_plane_debug
    if method == "getImage":
        return _do_get_image(session, params)
    if method == "setVehiclePose":
        return _do_set_vehicle_pose(session, params)
    if method == "getDistanceToTarget":
        pose = session.camera_pose()
        target_m = target_position(session.scene)
        return autofocus_step(pose, target_m) / optics.CM_PER_M
    if method == "simTick":
        dt = _number(params, "dt_s")
        if math.isnan(dt) or math.isinf(dt) or dt < 0.0:
            raise DomainError("dt_s must be finite and >= 0")
        with session.lock:
            session.clock_s += dt
            return session.clock_s
    raise KeyError(method)


def _error(request_id: int, code: int, message: str) -> dict:
    return {"id": request_id, "error": {"code": code, "message": message}}


def respond_to_line(session: SimSession, line: str) -> dict:
    """Full line-level protocol step: parse, dispatch, build the response.
    Unparseable lines answer with id 0 and code -2."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError:
        return _error(0, ERR_MALFORMED, "line is not valid JSON")
    if not isinstance(data, dict):
        return _error(0, ERR_MALFORMED, "request must be a JSON object")
    return handle_request(session, data)


class _RequestHandler(socketserver.StreamRequestHandler):
    def setup(self) -> None:
        super().setup()
        self.server._track(self.connection, add=True)

    def finish(self) -> None:
        self.server._track(self.connection, add=False)
        super().finish()

    def handle(self) -> None:
        session = self.server.session
        try:
            for raw in iter(self.rfile.readline, b""):
                line = raw.strip(b"\r\n")
                if not line:
                    response = _error(0, ERR_MALFORMED, "empty request line")
                else:
                    try:
                        text = line.decode("utf-8")
                    except UnicodeDecodeError:
                        response = _error(0, ERR_MALFORMED, "request is not valid UTF-8")
                    else:
                        response = respond_to_line(session, text)
                payload = json.dumps(response, allow_nan=False).encode("utf-8") + b"\n"
                self.wfile.write(payload)
                self.wfile.flush()
        except (ConnectionError, OSError, ValueError):
            # Peer vanished or socket was shut down underneath us.
            return


class CineServer(socketserver.ThreadingTCPServer):
    """TCP front end bound to one :class:`SimSession`."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, session: SimSession):
        self.session = session
        self._conn_lock = threading.Lock()
        self._connections: set[socket.socket] = set()
        super().__init__(address, _RequestHandler)

    @property
    def bound_port(self) -> int:
        return self.server_address[1]

    def _track(self, conn: socket.socket, add: bool) -> None:
        with self._conn_lock:
            if add:
                self._connections.add(conn)
            else:
                self._connections.discard(conn)

    def stop(self) -> None:
        """Stop accepting, then nudge open connections off their blocking
        reads so handler threads exit."""
        self.shutdown()
        with self._conn_lock:
            pending = list(self._connections)
        for conn in pending:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self.server_close()


def serve(session: SimSession, host: str = "127.0.0.1", port: int | None = None) -> CineServer:
    """Bind and return a server (not yet running; call ``serve_forever`` or
    drive it from a thread).  Port 0 picks an ephemeral port."""
    resolved = resolve_port(port)
    try:
        return CineServer((host, resolved), session)
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{resolved}: {exc}") from exc
