"""Minimal renderable world: analytic primitives with Lambertian materials,
per-object segmentation IDs, one point light plus an ambient floor, and an
optional designated focus target.

World geometry is in meters throughout.  The frozen coordinate convention for
the whole package: +x is the camera's default gaze direction, +y maps to image
right, +z is up.  Scenes are immutable after construction; all intersection
queries are pure functions and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NoTargetError, ValidationError

# Minimum accepted hit distance, meters. Re-shooting a ray from a hit point
# nudged past this distance can never return the same surface point.
RAY_EPSILON = 1e-4

_UNIT_NORM_TOL = 1e-9


def _vec3(value, context: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{context} must be a finite 3-vector, got {value!r}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec3(self.center, "sphere center"))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValidationError(f"sphere radius must be > 0, got {self.radius!r}")


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", _vec3(self.point, "plane point"))
        object.__setattr__(self, "normal", _vec3(self.normal, "plane normal"))
        if abs(np.linalg.norm(self.normal) - 1.0) > _UNIT_NORM_TOL:
            raise ValidationError("plane normal must have unit length")


@dataclass(frozen=True)
class Quad:
    """Parallelogram patch spanned by two edge vectors from a corner."""

    corner: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "corner", _vec3(self.corner, "quad corner"))
        object.__setattr__(self, "edge_u", _vec3(self.edge_u, "quad edge_u"))
        object.__setattr__(self, "edge_v", _vec3(self.edge_v, "quad edge_v"))
        if np.linalg.norm(np.cross(self.edge_u, self.edge_v)) < 1e-12:
            raise ValidationError("quad edges must not be parallel")

    @cached_property
    def unit_normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        n = n / np.linalg.norm(n)
        n.flags.writeable = False
        return n

    @cached_property
    def centroid(self) -> np.ndarray:
        c = self.corner + 0.5 * (self.edge_u + self.edge_v)
        c.flags.writeable = False
        return c


Shape = Sphere | Plane | Quad


@dataclass(frozen=True)
class Material:
    """Lambertian surface; an optional procedural checker darkens alternating
    world-space cells to provide high-frequency detail without assets."""

    albedo: tuple[float, float, float] = (0.8, 0.8, 0.8)
    checker_scale: float | None = None

    def __post_init__(self) -> None:
        if len(self.albedo) != 3 or not all(0.0 <= c <= 1.0 for c in self.albedo):
            raise ValidationError(f"albedo must be RGB in [0,1]^3, got {self.albedo!r}")
        object.__setattr__(self, "albedo", tuple(float(c) for c in self.albedo))
        if self.checker_scale is not None and not self.checker_scale > 0:
            raise ValidationError("checker_scale must be > 0 when present")


@dataclass(frozen=True)
class SceneObject:
    id: int
    shape: Shape
    material: Material = field(default_factory=Material)

    def __post_init__(self) -> None:
        # ids must fit the uint16 segmentation pass; 0 is reserved for misses
        if not (isinstance(self.id, int) and 0 < self.id <= 65535):
            raise ValidationError(f"object id must be an integer in [1, 65535], got {self.id!r}")


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "light position"))
        if not (math.isfinite(self.intensity) and self.intensity >= 0):
            raise ValidationError("light intensity must be >= 0")


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    light: PointLight
    ambient: float = 0.1
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    focus_target: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [obj.id for obj in self.objects]
        if len(set(ids)) != len(ids):
            raise ValidationError("segmentation ids must be unique within a scene")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValidationError("ambient must lie in [0,1]")
        if len(self.background) != 3 or not all(0.0 <= c <= 1.0 for c in self.background):
            raise ValidationError("background must be RGB in [0,1]^3")
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))
        if self.focus_target is not None and self.focus_target not in ids:
            raise ValidationError(
                f"focus_target {self.focus_target} does not reference a scene object"
            )

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise ValidationError(f"no object with id {object_id}")


def _intersect_sphere(shape: Sphere, origins, dirs):
    oc = origins - shape.center
    b = np.einsum("ij,ij->i", oc, dirs)
    c = np.einsum("ij,ij->i", oc, oc) - shape.radius * shape.radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near >= RAY_EPSILON, t_near, t_far)
    t = np.where(hit & (t >= RAY_EPSILON), t, np.inf)
    safe_t = np.where(np.isfinite(t), t, 0.0)
    normals = (origins + safe_t[:, None] * dirs - shape.center) / shape.radius
    return t, normals


def _intersect_plane_raw(point, unit_normal, origins, dirs):
    denom = np.einsum("ij,j->i", dirs, unit_normal)
    offset = np.einsum("ij,j->i", point - origins, unit_normal)
    valid = np.abs(denom) > 1e-12
    t = np.where(valid, offset / np.where(valid, denom, 1.0), np.inf)
    t = np.where(valid & (t >= RAY_EPSILON), t, np.inf)
    return t


def _intersect_plane(shape: Plane, origins, dirs):
    t = _intersect_plane_raw(shape.point, shape.normal, origins, dirs)
    normals = np.broadcast_to(shape.normal, origins.shape)
    return t, normals


def _intersect_quad(shape: Quad, origins, dirs):
    n = shape.unit_normal
    t = _intersect_plane_raw(shape.corner, n, origins, dirs)
    safe_t = np.where(np.isfinite(t), t, 0.0)
    d = origins + safe_t[:, None] * dirs - shape.corner
    # Solve d = su*edge_u + sv*edge_v in the quad plane (edges may be skewed).
    uu = float(shape.edge_u @ shape.edge_u)
    vv = float(shape.edge_v @ shape.edge_v)
    uv = float(shape.edge_u @ shape.edge_v)
    du = np.einsum("ij,j->i", d, shape.edge_u)
    dv = np.einsum("ij,j->i", d, shape.edge_v)
    det = uu * vv - uv * uv
    su = (du * vv - dv * uv) / det
    sv = (dv * uu - du * uv) / det
    inside = (su >= 0.0) & (su <= 1.0) & (sv >= 0.0) & (sv <= 1.0)
    t = np.where(inside, t, np.inf)
    normals = np.broadcast_to(n, origins.shape)
    return t, normals


def intersect_rays(scene: Scene, origins: np.ndarray, dirs: np.ndarray):
    """Nearest intersection for a batch of rays.

    Returns ``(t, object_index, normals)`` where misses carry ``t = inf`` and
    ``object_index = -1``.  Normals are unit length and oriented against the
    ray (two-sided surfaces).
    """
    count = origins.shape[0]
    best_t = np.full(count, np.inf)
    best_index = np.full(count, -1, dtype=np.int64)
    best_normal = np.zeros((count, 3))
    for index, obj in enumerate(scene.objects):
        shape = obj.shape
        if isinstance(shape, Sphere):
            t, normals = _intersect_sphere(shape, origins, dirs)
        elif isinstance(shape, Plane):
            t, normals = _intersect_plane(shape, origins, dirs)
        else:
            t, normals = _intersect_quad(shape, origins, dirs)
        closer = t < best_t
        if not closer.any():
            continue
        best_t = np.where(closer, t, best_t)
        best_index = np.where(closer, index, best_index)
        best_normal = np.where(closer[:, None], normals, best_normal)
    # Orient normals against the incoming direction.
    facing = np.einsum("ij,ij->i", best_normal, dirs) > 0.0
    best_normal = np.where(facing[:, None], -best_normal, best_normal)
    return best_t, best_index, best_normal


@dataclass(frozen=True)
class Hit:
    t: float
    object_id: int
    point: np.ndarray
    normal: np.ndarray


def intersect(scene: Scene, origin, direction) -> Hit | None:
    """Nearest hit of a single ray, or ``None``.  ``direction`` must be unit
    length."""
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    t, index, normal = intersect_rays(scene, origin, direction)
    if index[0] < 0:
        return None
    point = origin[0] + t[0] * direction[0]
    return Hit(
        t=float(t[0]),
        object_id=scene.objects[int(index[0])].id,
        point=point,
        normal=normal[0],
    )


def reference_point(obj: SceneObject) -> np.ndarray:
    if isinstance(obj.shape, Sphere):
        return obj.shape.center
    if isinstance(obj.shape, Quad):
        return obj.shape.centroid
    return obj.shape.point


def target_position(scene: Scene) -> np.ndarray:
    """World position of the designated focus target (sphere center, quad
    centroid, or plane anchor point)."""
    if scene.focus_target is None:
        raise NoTargetError("scene has no focus_target")
    return reference_point(scene.object_by_id(scene.focus_target))


def albedo_at(material: Material, points: np.ndarray) -> np.ndarray:
    """Surface albedo for a batch of world points, applying the checker."""
    base = np.asarray(material.albedo)
    if material.checker_scale is None:
        return np.broadcast_to(base, points.shape).copy()
    cells = np.floor(points / material.checker_scale).sum(axis=-1)
    dark = (cells.astype(np.int64) % 2) != 0
    factors = np.where(dark, 0.25, 1.0)
    return base * factors[..., None]


def _field(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ValidationError(f"{context}: missing field {key!r}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set[str], context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"{context}: unknown fields {sorted(unknown)}")


def _shape_from_dict(data: dict) -> Shape:
    kind = _field(data, "type", "shape")
    if kind == "sphere":
        _check_keys(data, {"type", "center", "radius"}, "sphere")
        return Sphere(center=_field(data, "center", "sphere"), radius=float(_field(data, "radius", "sphere")))
    if kind == "plane":
        _check_keys(data, {"type", "point", "normal"}, "plane")
        return Plane(point=_field(data, "point", "plane"), normal=_field(data, "normal", "plane"))
    if kind == "quad":
        _check_keys(data, {"type", "corner", "edge_u", "edge_v"}, "quad")
        return Quad(
            corner=_field(data, "corner", "quad"),
            edge_u=_field(data, "edge_u", "quad"),
            edge_v=_field(data, "edge_v", "quad"),
        )
    raise ValidationError(f"unknown shape type {kind!r}")


def _material_from_dict(data: dict) -> Material:
    _check_keys(data, {"albedo", "checker_scale"}, "material")
    scale = data.get("checker_scale")
    return Material(
        albedo=tuple(data.get("albedo", (0.8, 0.8, 0.8))),
        checker_scale=float(scale) if scale is not None else None,
    )


def scene_from_dict(data: dict) -> Scene:
    """Parse the ``scene`` section of a scenario file."""
    _check_keys(
        data, {"objects", "light", "ambient", "background", "focus_target"}, "scene"
    )
    objects = []
    for entry in _field(data, "objects", "scene"):
        _check_keys(entry, {"id", "shape", "material"}, "scene object")
        objects.append(
            SceneObject(
                id=int(_field(entry, "id", "scene object")),
                shape=_shape_from_dict(_field(entry, "shape", "scene object")),
                material=_material_from_dict(entry.get("material", {})),
            )
        )
    light_data = _field(data, "light", "scene")
    _check_keys(light_data, {"position", "intensity"}, "light")
    light = PointLight(
        position=_field(light_data, "position", "light"),
        intensity=float(_field(light_data, "intensity", "light")),
    )
    target = data.get("focus_target")
    return Scene(
        objects=tuple(objects),
        light=light,
        ambient=float(data.get("ambient", 0.1)),
        background=tuple(data.get("background", (0.0, 0.0, 0.0))),
        focus_target=int(target) if target is not None else None,
    )
