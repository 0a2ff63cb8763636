"""Software renderer for the simulated camera.

Passes:

* ``rgb``: stochastic thin-lens render.  Each pixel averages
  ``samples_per_pixel`` rays whose origins are jittered across the lens
  aperture and whose sub-pixel positions are stratified, then the linear
  average is clamped to [0, 1], gamma-encoded at 2.2 and quantized to 8 bits.
* ``depth``: planar depth along the camera gaze axis in meters, one centered
  pinhole ray per pixel, float32, misses carry +inf.
* ``segmentation``: object id per pixel (uint16), 0 where no surface is hit.

All stochastic choices derive from counter-based (Philox) streams keyed by
``(rng_seed, stream id)``, so a render is a pure function of scene, pose,
camera state and settings: repeated calls produce bit-identical buffers.
Setting ``mode="pinhole"`` (or disabling manual focus on the camera) forces
every aperture sample to (0, 0), which routes through the exact same ray
construction and therefore reuses the identical sub-pixel jitter sequence.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from io import BytesIO

import numpy as np
from PIL import Image

from . import scene as scene_mod
from .errors import DimensionMismatchError, DomainError
from .optics import CameraState, Filmback
from .scene import Scene, intersect_rays
from .vehicle import Pose, quat_rotate

GAMMA = 2.2
MIN_IMAGE_DIM = 8
MAX_SEGMENTATION_ID = 65535

DEPTH_MAGIC = b"DPTH"
PPM_MAGIC = b"P6"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

FOCUS_OVERLAY_RGB = (255.0, 0.0, 255.0)
FOCUS_OVERLAY_ALPHA = 0.5

PASS_NAMES = ("rgb", "depth", "segmentation")

# Philox stream ids; each render draws from private generators so renders
# never observe shared RNG state.
_STREAM_JITTER = 1
_STREAM_APERTURE_SHIFT = 2


@dataclass(frozen=True)
class RenderSettings:
    width: int
    height: int
    samples_per_pixel: int = 16
    rng_seed: int = 0
    mode: str = "thin_lens"

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise DomainError(f"{name} must be an integer, got {value!r}")
            if value < MIN_IMAGE_DIM:
                raise DomainError(f"{name} must be >= {MIN_IMAGE_DIM}, got {value}")
        spp = self.samples_per_pixel
        if not isinstance(spp, int) or isinstance(spp, bool) or spp < 1:
            raise DomainError(f"samples_per_pixel must be a positive integer, got {spp!r}")
        if not isinstance(self.rng_seed, int) or isinstance(self.rng_seed, bool) or self.rng_seed < 0:
            raise DomainError(f"rng_seed must be a non-negative integer, got {self.rng_seed!r}")
        if self.mode not in ("thin_lens", "pinhole"):
            raise DomainError(f"mode must be 'thin_lens' or 'pinhole', got {self.mode!r}")


_CHANNEL_SPECS = {
    "rgb8": (np.uint8, 3),
    "depth_f32": (np.float32, 2),
    "seg_u16": (np.uint16, 2),
}


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    width: int
    height: int
    channels: str
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.channels not in _CHANNEL_SPECS:
            raise DomainError(f"unknown channel layout {self.channels!r}")
        dtype, ndim = _CHANNEL_SPECS[self.channels]
        expected = (self.height, self.width, 3) if ndim == 3 else (self.height, self.width)
        if self.data.shape != expected or self.data.dtype != dtype:
            raise DimensionMismatchError(
                f"{self.channels} buffer must be {expected} {np.dtype(dtype).name}, "
                f"got {self.data.shape} {self.data.dtype}"
            )
        self.data.flags.writeable = False


def radical_inverse(index: int, base: int) -> float:
    """Van der Corput radical inverse of ``index`` in ``base``."""
    inv_base = 1.0 / base
    result = 0.0
    factor = inv_base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * factor
        factor *= inv_base
    return result


def _polygon_vertices(blade_count: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(blade_count + 1) / blade_count
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _map_aperture(u: np.ndarray, v: np.ndarray, blade_count: int):
    """Vectorized map from the unit square onto the aperture footprint.

    Returns coordinates in the unit disc.  ``u = 0`` always lands on the
    center regardless of ``v``, which is how pinhole sampling falls out of
    the thin-lens path.
    """
    if blade_count == 0:
        r = np.sqrt(u)
        theta = 2.0 * np.pi * v
        return r * np.cos(theta), r * np.sin(theta)
    if blade_count < 3:
        raise DomainError(f"blade_count must be 0 or >= 3, got {blade_count}")
    # Regular polygon inscribed in the unit circle, first vertex at angle 0,
    # decomposed into a fan of equal-area triangles around the center.
    verts = _polygon_vertices(blade_count)
    scaled = u * blade_count
    tri = np.minimum(scaled.astype(np.int64), blade_count - 1)
    u_local = scaled - tri
    a = verts[tri]
    b = verts[tri + 1]
    su = np.sqrt(u_local)
    edge = a + v[..., None] * (b - a)
    point = su[..., None] * edge
    return point[..., 0], point[..., 1]


def sample_aperture_point(u: float, v: float, blade_count: int = 0) -> tuple[float, float]:
    """Map ``(u, v)`` in the unit square to a point on the unit-radius
    aperture: the full disc for ``blade_count == 0``, otherwise a regular
    polygon with that many blades inscribed in the unit circle."""
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise DomainError(f"aperture sample must lie in the unit square, got {(u, v)!r}")
    x, y = _map_aperture(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64), blade_count)
    return float(x), float(y)


class _CameraFrame:
    """World-space basis and projection constants for one render."""

    def __init__(self, pose: Pose, state: CameraState, width: int, height: int):
        self.origin = pose.position.astype(np.float64)
        self.forward = quat_rotate(pose.orientation, (1.0, 0.0, 0.0))
        self.right = quat_rotate(pose.orientation, (0.0, 1.0, 0.0))
        self.up = quat_rotate(pose.orientation, (0.0, 0.0, 1.0))
        self.width = width
        self.height = height
        f = state.focal_length_mm
        self.tan_half_h = state.filmback.sensor_width_mm / (2.0 * f)
        self.tan_half_v = state.filmback.sensor_height_mm / (2.0 * f)
        self.focus_m = state.focus_distance_cm / 100.0
        # Lens radius in meters; aperture diameter is f/N millimeters.
        self.lens_radius_m = state.aperture_diameter_mm / 2.0 / 1000.0

    def rays(self, sample_x, sample_y, aperture_x, aperture_y):
        """Build world rays for sample positions in pixel units and aperture
        samples in the unit disc.  All inputs broadcast together."""
        ndc_x = 2.0 * sample_x / self.width - 1.0
        ndc_y = 1.0 - 2.0 * sample_y / self.height
        view = (
            self.forward
            + (ndc_x * self.tan_half_h)[..., None] * self.right
            + (ndc_y * self.tan_half_v)[..., None] * self.up
        )
        lens_offset = (
            (self.lens_radius_m * aperture_x)[..., None] * self.right
            + (self.lens_radius_m * aperture_y)[..., None] * self.up
        )
        origins = self.origin + lens_offset
        if math.isinf(self.focus_m):
            # Focus at infinity: the pencil never converges, every lens point
            # fires a ray parallel to the view direction.
            dirs = view / np.linalg.norm(view, axis=-1, keepdims=True)
            dirs = np.broadcast_to(dirs, origins.shape).copy()
        else:
            # Point where this pixel's pencil converges: on the plane
            # perpendicular to the gaze at the focus distance (view has a
            # unit forward component).
            focus_point = self.origin + self.focus_m * view
            dirs = focus_point - origins
            dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
        return origins, dirs


def generate_ray(
    pose: Pose,
    state: CameraState,
    width: int,
    height: int,
    pixel_x: float,
    pixel_y: float,
    jitter: tuple[float, float] = (0.5, 0.5),
    aperture_sample: tuple[float, float] = (0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Single camera ray through pixel ``(pixel_x + jx, pixel_y + jy)``.

    ``aperture_sample`` is a point in the unit disc (already mapped); (0, 0)
    gives the pinhole ray.  A camera with manual focus disabled ignores the
    aperture sample and behaves as a pinhole.
    """
    if width < MIN_IMAGE_DIM or height < MIN_IMAGE_DIM:
        raise DomainError(f"image dimensions must be >= {MIN_IMAGE_DIM}")
    frame = _CameraFrame(pose, state, width, height)
    ax, ay = aperture_sample
    if not state.manual_focus_enabled:
        ax, ay = 0.0, 0.0
    if math.hypot(ax, ay) > 1.0 + 1e-12:
        raise DomainError(f"aperture sample must lie in the unit disc, got {aperture_sample!r}")
    sx = np.asarray([pixel_x + jitter[0]], dtype=np.float64)
    sy = np.asarray([pixel_y + jitter[1]], dtype=np.float64)
    origins, dirs = frame.rays(sx, sy, np.asarray([ax]), np.asarray([ay]))
    return origins[0], dirs[0]


def _shade(scene: Scene, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Linear-light Lambertian shading with one shadow ray per hit."""
    count = origins.shape[0]
    colors = np.tile(np.asarray(scene.background, dtype=np.float64), (count, 1))
    t, index, normals = intersect_rays(scene, origins, dirs)
    hit = index >= 0
    if not hit.any():
        return colors
    points = origins[hit] + t[hit, None] * dirs[hit]
    hit_normals = normals[hit]
    hit_index = index[hit]
    albedo = np.empty((points.shape[0], 3))
    for k, obj in enumerate(scene.objects):
        mask = hit_index == k
        if mask.any():
            albedo[mask] = scene_mod.albedo_at(obj.material, points[mask])
    to_light = scene.light.position - points
    dist_sq = np.maximum(np.einsum("ij,ij->i", to_light, to_light), 1e-12)
    dist = np.sqrt(dist_sq)
    light_dir = to_light / dist[:, None]
    cos_term = np.maximum(np.einsum("ij,ij->i", hit_normals, light_dir), 0.0)
    shadow_origins = points + scene_mod.RAY_EPSILON * hit_normals
    shadow_t, _, _ = intersect_rays(scene, shadow_origins, light_dir)
    visible = shadow_t >= dist - scene_mod.RAY_EPSILON
    irradiance = scene.ambient + visible * scene.light.intensity * cos_term / dist_sq
    colors[hit] = albedo * irradiance[:, None]
    return colors


def _center_rays(frame: _CameraFrame):
    px = np.broadcast_to(np.arange(frame.width, dtype=np.float64), (frame.height, frame.width))
    py = np.broadcast_to(
        np.arange(frame.height, dtype=np.float64)[:, None], (frame.height, frame.width)
    )
    zeros = np.zeros((frame.height, frame.width))
    origins, dirs = frame.rays(px + 0.5, py + 0.5, zeros, zeros)
    return origins.reshape(-1, 3), dirs.reshape(-1, 3)


def render_pass(
    scene: Scene,
    pose: Pose,
    state: CameraState,
    settings: RenderSettings,
    pass_name: str = "rgb",
) -> ImageBuffer:
    """Render one pass.  Deterministic: identical arguments give identical
    buffer bytes."""
    if pass_name not in PASS_NAMES:
        raise DomainError(f"unknown pass {pass_name!r}; expected one of {PASS_NAMES}")
    width, height = settings.width, settings.height
    frame = _CameraFrame(pose, state, width, height)

    if pass_name == "depth":
        origins, dirs = _center_rays(frame)
        t, index, _ = intersect_rays(scene, origins, dirs)
        axial = np.einsum("ij,j->i", dirs, frame.forward)
        depth = (t * axial).astype(np.float32).reshape(height, width)
        depth[index.reshape(height, width) < 0] = np.inf
        return ImageBuffer(width, height, "depth_f32", depth)

    if pass_name == "segmentation":
        origins, dirs = _center_rays(frame)
        _, index, _ = intersect_rays(scene, origins, dirs)
        ids = np.zeros(index.shape, dtype=np.uint16)
        for k, obj in enumerate(scene.objects):
            ids[index == k] = obj.id
        return ImageBuffer(width, height, "seg_u16", ids.reshape(height, width))

    pinhole = settings.mode == "pinhole" or not state.manual_focus_enabled
    spp = settings.samples_per_pixel
    strata = math.isqrt(spp)
    jitter_rng = np.random.Generator(
        np.random.Philox(key=[settings.rng_seed, _STREAM_JITTER])
    )
    shift = np.random.Generator(
        np.random.Philox(key=[settings.rng_seed, _STREAM_APERTURE_SHIFT])
    ).random((height, width, 2))
    px = np.broadcast_to(np.arange(width, dtype=np.float64), (height, width))
    py = np.broadcast_to(np.arange(height, dtype=np.float64)[:, None], (height, width))
    blade_count = state.lens.diaphragm_blade_count
    zeros = np.zeros((height, width))
    acc = np.zeros((height, width, 3))
    for s in range(spp):
        xi = jitter_rng.random((height, width, 2))
        if s < strata * strata:
            jx = (s % strata + xi[..., 0]) / strata
            jy = (s // strata + xi[..., 1]) / strata
        else:
            jx, jy = xi[..., 0], xi[..., 1]
        if pinhole:
            ap_x, ap_y = zeros, zeros
        else:
            # Scrambled Halton: one low-discrepancy point per sample index,
            # decorrelated across pixels by a per-pixel toroidal shift.
            u = (radical_inverse(s + 1, 2) + shift[..., 0]) % 1.0
            v = (radical_inverse(s + 1, 3) + shift[..., 1]) % 1.0
            ap_x, ap_y = _map_aperture(u, v, blade_count)
        origins, dirs = frame.rays(px + jx, py + jy, ap_x, ap_y)
        colors = _shade(scene, origins.reshape(-1, 3), dirs.reshape(-1, 3))
        acc += colors.reshape(height, width, 3)
    linear = np.clip(acc / spp, 0.0, 1.0)
    encoded = linear ** (1.0 / GAMMA)
    data = np.round(encoded * 255.0).astype(np.uint8)
    return ImageBuffer(width, height, "rgb8", data)


def overlay_focus_plane(
    rgb: ImageBuffer,
    depth: ImageBuffer,
    focus_distance_m: float,
    band_m: float = 0.1,
) -> ImageBuffer:
    """Blend 50% magenta over pixels whose depth lies within ``band_m`` of
    the focus distance.  Buffers must share dimensions."""
    if rgb.channels != "rgb8" or depth.channels != "depth_f32":
        raise DimensionMismatchError("overlay needs an rgb8 and a depth_f32 buffer")
    if (rgb.width, rgb.height) != (depth.width, depth.height):
        raise DimensionMismatchError(
            f"buffer dimensions differ: {(rgb.width, rgb.height)} vs "
            f"{(depth.width, depth.height)}"
        )
    if not (math.isfinite(focus_distance_m) and focus_distance_m > 0):
        raise DomainError("focus_distance_m must be finite and > 0")
    if not (math.isfinite(band_m) and band_m >= 0):
        raise DomainError("band_m must be finite and >= 0")
    mask = np.abs(depth.data - focus_distance_m) <= band_m
    out = rgb.data.astype(np.float64).copy()
    tint = np.asarray(FOCUS_OVERLAY_RGB)
    out[mask] = (1.0 - FOCUS_OVERLAY_ALPHA) * out[mask] + FOCUS_OVERLAY_ALPHA * tint
    return ImageBuffer(rgb.width, rgb.height, "rgb8", np.round(out).astype(np.uint8))


def encode_image(buffer: ImageBuffer, image_format: str | None = None) -> bytes:
    """Serialize a buffer.  rgb8 encodes as PNG (default) or binary PPM;
    depth_f32 as a little-endian raw block (magic, uint16 dims, float32
    scanlines); seg_u16 as 16-bit grayscale PNG."""
    if buffer.channels == "rgb8":
        fmt = image_format or "png"
        if fmt == "ppm":
            header = f"P6\n{buffer.width} {buffer.height}\n255\n".encode("ascii")
            return header + buffer.data.tobytes()
        if fmt == "png":
            out = BytesIO()
            Image.fromarray(buffer.data, mode="RGB").save(out, format="PNG")
            return out.getvalue()
        raise DomainError(f"rgb8 buffers encode as 'png' or 'ppm', got {image_format!r}")
    if buffer.channels == "depth_f32":
        if image_format not in (None, "raw"):
            raise DomainError(f"depth buffers encode as 'raw', got {image_format!r}")
        header = DEPTH_MAGIC + struct.pack("<HH", buffer.width, buffer.height)
        return header + buffer.data.astype("<f4").tobytes()
    if image_format not in (None, "png"):
        raise DomainError(f"segmentation buffers encode as 'png', got {image_format!r}")
    out = BytesIO()
    img = Image.frombytes(
        "I;16", (buffer.width, buffer.height), buffer.data.astype("<u2").tobytes()
    )
    img.save(out, format="PNG")
    return out.getvalue()


def export_image(buffer: ImageBuffer, path, image_format: str | None = None) -> None:
    """Write a buffer to disk; see :func:`encode_image` for formats.  I/O
    failures propagate as ``OSError``."""
    payload = encode_image(buffer, image_format)
    with open(path, "wb") as handle:
        handle.write(payload)


def decode_image(payload: bytes) -> ImageBuffer:
    """Inverse of :func:`encode_image`; sniffs the container from magic
    bytes."""
    if payload.startswith(DEPTH_MAGIC):
        width, height = struct.unpack("<HH", payload[4:8])
        expected = width * height * 4
        body = payload[8:]
        if len(body) != expected:
            raise DomainError(
                f"depth payload carries {len(body)} bytes, expected {expected}"
            )
        data = np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float32)
        return ImageBuffer(width, height, "depth_f32", data)
    if payload.startswith(PPM_MAGIC):
        parts = payload.split(b"\n", 3)
        if len(parts) != 4 or parts[2] != b"255":
            raise DomainError("unsupported PPM layout")
        width, height = (int(v) for v in parts[1].split())
        data = np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width, 3)
        return ImageBuffer(width, height, "rgb8", data.copy())
    if payload.startswith(PNG_MAGIC):
        img = Image.open(BytesIO(payload))
        if img.mode in ("I;16", "I"):
            data = np.asarray(img, dtype=np.uint16)
            return ImageBuffer(img.width, img.height, "seg_u16", data)
        data = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return ImageBuffer(img.width, img.height, "rgb8", data)
    raise DomainError("unrecognized image payload")


def load_image(path) -> ImageBuffer:
    with open(path, "rb") as handle:
        return decode_image(handle.read())


def gradient_energy(buffer: ImageBuffer, mask: np.ndarray | None = None) -> float:
    """Sum of squared finite-difference luminance gradients; a crude but
    monotone sharpness score.  ``mask`` restricts the sum to differences
    whose both endpoints are inside the mask."""
    if buffer.channels != "rgb8":
        raise DomainError("gradient_energy expects an rgb8 buffer")
    lum = buffer.data.astype(np.float64).mean(axis=2) / 255.0
    gx = lum[:, 1:] - lum[:, :-1]
    gy = lum[1:, :] - lum[:-1, :]
    if mask is not None:
        if mask.shape != lum.shape:
            raise DimensionMismatchError("mask shape must match the image")
        vx = mask[:, 1:] & mask[:, :-1]
        vy = mask[1:, :] & mask[:-1, :]
        return float(np.sum(gx * gx * vx) + np.sum(gy * gy * vy))
    return float(np.sum(gx * gx) + np.sum(gy * gy))


def default_resolution(filmback: Filmback, width: int = 160) -> tuple[int, int]:
    """Pick an output height matching the filmback aspect ratio."""
    if width < MIN_IMAGE_DIM:
        raise DomainError(f"width must be >= {MIN_IMAGE_DIM}")
    height = max(MIN_IMAGE_DIM, round(width / filmback.aspect_ratio))
    return width, int(height)
