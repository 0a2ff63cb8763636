"""Closed-form thin-lens optics and the commercial preset catalogs.

The projection model is the conjugate equation ``1/f = 1/Z + 1/z`` relating
focal length ``f``, the distance ``Z`` to the plane in perfect focus, and the
lens-to-sensor distance ``z``.  Everything in this module is exact scalar
algebra derived from it: blur-circle (circle of confusion) diameter, field of
view, depth-of-field limits, hyperfocal distance, and clamping of requested
camera settings into a lens's hard physical limits.

Unit conventions: internal math is millimeters; the public camera API uses
centimeters for focus distance and world geometry elsewhere in the package is
meters.  Names carry unit suffixes at every boundary.  Focus at infinity and
an unbounded far depth-of-field limit are ``math.inf``, never a large finite
stand-in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import DomainError, NotFoundError, ValidationError

MM_PER_CM = 10.0
CM_PER_M = 100.0

# Conventional sharpness criterion: a point reads as "in focus" while its
# blur circle stays below sensor_width / COC_DIVISOR.
COC_DIVISOR = 1500.0


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if math.isnan(value) or value <= 0.0:
            raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class Filmback:
    """Physical sensor dimensions; together with focal length they fix the
    field of view, and alone they fix the image aspect ratio."""

    name: str
    sensor_width_mm: float
    sensor_height_mm: float

    def __post_init__(self) -> None:
        for field in ("sensor_width_mm", "sensor_height_mm"):
            value = getattr(self, field)
            if not (math.isfinite(value) and value > 0.0):
                raise ValidationError(f"filmback {field} must be finite and > 0, got {value!r}")

    @property
    def aspect_ratio(self) -> float:
        return self.sensor_width_mm / self.sensor_height_mm


@dataclass(frozen=True)
class Lens:
    """Hard limits of one physical lens.  A prime lens is encoded as
    ``min_focal_length_mm == max_focal_length_mm``."""

    name: str
    min_focal_length_mm: float
    max_focal_length_mm: float
    min_fstop: float
    max_fstop: float
    min_focus_distance_cm: float
    diaphragm_blade_count: int

    def __post_init__(self) -> None:
        if not (0.0 < self.min_focal_length_mm <= self.max_focal_length_mm):
            raise ValidationError(f"lens {self.name!r}: need 0 < min_focal <= max_focal")
        if not (0.0 < self.min_fstop <= self.max_fstop):
            raise ValidationError(f"lens {self.name!r}: need 0 < min_fstop <= max_fstop")
        if not self.min_focus_distance_cm > 0.0:
            raise ValidationError(f"lens {self.name!r}: min_focus_distance_cm must be > 0")
        if self.diaphragm_blade_count != 0 and self.diaphragm_blade_count < 3:
            raise ValidationError(
                f"lens {self.name!r}: blade count must be 0 (circular) or >= 3"
            )
        # The closest focusable plane must sit beyond the longest focal length,
        # otherwise no focus setting yields a real image and clamping could not
        # stay total.  Every physical lens satisfies this.
        if self.min_focus_distance_cm * MM_PER_CM <= self.max_focal_length_mm:
            raise ValidationError(
                f"lens {self.name!r}: min focus distance "
                f"({self.min_focus_distance_cm} cm) must exceed the longest "
                f"focal length ({self.max_focal_length_mm} mm)"
            )

    @property
    def is_prime(self) -> bool:
        return self.min_focal_length_mm == self.max_focal_length_mm


@dataclass(frozen=True)
class CameraState:
    """Live lens settings of the mounted camera.

    The lens-to-sensor distance is not stored; it is always derived via
    :func:`image_distance`.  Use :func:`clamp_camera_state` to build a state
    from untrusted requests; direct construction validates and raises.
    """

    lens: Lens
    filmback: Filmback
    focal_length_mm: float
    focus_distance_cm: float
    fstop: float
    manual_focus_enabled: bool = True
    focus_plane_debug: bool = False

    def __post_init__(self) -> None:
        lens = self.lens
        if not lens.min_focal_length_mm <= self.focal_length_mm <= lens.max_focal_length_mm:
            raise DomainError(
                f"focal length {self.focal_length_mm} mm outside "
                f"[{lens.min_focal_length_mm}, {lens.max_focal_length_mm}]"
            )
        if not lens.min_fstop <= self.fstop <= lens.max_fstop:
            raise DomainError(
                f"fstop {self.fstop} outside [{lens.min_fstop}, {lens.max_fstop}]"
            )
        if not self.focus_distance_cm >= lens.min_focus_distance_cm:
            raise DomainError(
                f"focus distance {self.focus_distance_cm} cm below lens minimum "
                f"{lens.min_focus_distance_cm} cm"
            )
        if not self.focus_distance_mm > self.focal_length_mm:
            raise DomainError("focus distance must exceed focal length")

    @property
    def focus_distance_mm(self) -> float:
        return self.focus_distance_cm * MM_PER_CM

    @property
    def aperture_diameter_mm(self) -> float:
        return aperture_diameter(self.focal_length_mm, self.fstop)


def image_distance(focal_length_mm: float, object_distance_mm: float) -> float:
    """Lens-to-sensor distance ``z`` that focuses an object at ``Z``:
    ``z = 1 / (1/f - 1/Z)``.  An object at infinity focuses at ``f``."""
    _require_positive(focal_length_mm=focal_length_mm)
    if math.isinf(object_distance_mm):
        return focal_length_mm
    if math.isnan(object_distance_mm) or object_distance_mm <= focal_length_mm:
        raise DomainError(
            f"object distance {object_distance_mm!r} mm must exceed the focal "
            f"length {focal_length_mm} mm to form a real image"
        )
    return 1.0 / (1.0 / focal_length_mm - 1.0 / object_distance_mm)


def aperture_diameter(focal_length_mm: float, fstop: float) -> float:
    """Entrance pupil diameter ``f / N`` in millimeters."""
    _require_positive(focal_length_mm=focal_length_mm, fstop=fstop)
    return focal_length_mm / fstop


def coc_diameter(
    focal_length_mm: float,
    fstop: float,
    focus_distance_mm: float,
    object_distance_mm: float,
) -> float:
    """Blur-circle diameter on the sensor, in millimeters, for a point at
    ``object_distance_mm`` while focused at ``focus_distance_mm``.

    Derived from the conjugate equation with the sensor at
    ``image_distance(f, Z_f)``:

        c = (f^2 / N) * |Z - Z_f| / (Z * (Z_f - f))

    Zero exactly on the focus plane; approaches ``f^2 / (N (Z_f - f))`` as the
    object recedes to infinity.
    """
    _require_positive(focal_length_mm=focal_length_mm, fstop=fstop)
    if math.isnan(focus_distance_mm) or focus_distance_mm <= focal_length_mm:
        raise DomainError("focus distance must exceed the focal length")
    _require_positive(object_distance_mm=object_distance_mm)
    f = focal_length_mm
    if math.isinf(focus_distance_mm):
        if math.isinf(object_distance_mm):
            return 0.0
        return f * f / (fstop * object_distance_mm)
    limit = f * f / (fstop * (focus_distance_mm - f))
    if math.isinf(object_distance_mm):
        return limit
    if object_distance_mm == focus_distance_mm:
        return 0.0
    return limit * abs(object_distance_mm - focus_distance_mm) / object_distance_mm


def horizontal_fov(filmback: Filmback, focal_length_mm: float) -> float:
    """Horizontal field of view in degrees: ``2 atan(w / 2f)``."""
    _require_positive(focal_length_mm=focal_length_mm)
    return math.degrees(2.0 * math.atan(filmback.sensor_width_mm / (2.0 * focal_length_mm)))


def vertical_fov(filmback: Filmback, focal_length_mm: float) -> float:
    """Vertical field of view in degrees: ``2 atan(h / 2f)``."""
    _require_positive(focal_length_mm=focal_length_mm)
    return math.degrees(2.0 * math.atan(filmback.sensor_height_mm / (2.0 * focal_length_mm)))


def hyperfocal_distance(focal_length_mm: float, fstop: float, coc_limit_mm: float) -> float:
    """Focus distance beyond which the far depth-of-field limit is infinite:
    ``H = f^2 / (N c) + f``."""
    _require_positive(
        focal_length_mm=focal_length_mm, fstop=fstop, coc_limit_mm=coc_limit_mm
    )
    return focal_length_mm * focal_length_mm / (fstop * coc_limit_mm) + focal_length_mm


def dof_limits(
    focal_length_mm: float,
    fstop: float,
    focus_distance_mm: float,
    coc_limit_mm: float,
) -> tuple[float, float]:
    """Nearest and farthest object distances whose blur circle stays within
    ``coc_limit_mm``; the far limit is ``math.inf`` at or beyond the
    hyperfocal distance.

    Both limits solve ``coc_diameter(...) = coc_limit`` in closed form: with
    ``K = f^2 / (N (Z_f - f))`` the roots are ``K Z_f / (K ± c)``.
    """
    _require_positive(focal_length_mm=focal_length_mm, fstop=fstop)
    if math.isnan(focus_distance_mm) or focus_distance_mm <= focal_length_mm:
        raise DomainError("focus distance must exceed the focal length")
    if math.isnan(coc_limit_mm) or coc_limit_mm < 0.0:
        raise DomainError(f"coc_limit_mm must be >= 0, got {coc_limit_mm!r}")
    f = focal_length_mm
    if math.isinf(focus_distance_mm):
        if coc_limit_mm == 0.0:
            return (math.inf, math.inf)
        return (f * f / (fstop * coc_limit_mm), math.inf)
    if coc_limit_mm == 0.0:
        return (focus_distance_mm, focus_distance_mm)
    k = f * f / (fstop * (focus_distance_mm - f))
    near = k * focus_distance_mm / (k + coc_limit_mm)
    far = math.inf if k <= coc_limit_mm else k * focus_distance_mm / (k - coc_limit_mm)
    return (near, far)


def default_coc_limit(filmback: Filmback) -> float:
    """Acceptable blur-circle diameter in mm, scaled to the sensor width."""
    return filmback.sensor_width_mm / COC_DIVISOR


def clamp_camera_state(
    lens: Lens,
    filmback: Filmback,
    *,
    focal_length_mm: float,
    focus_distance_cm: float,
    fstop: float,
    manual_focus_enabled: bool = True,
    focus_plane_debug: bool = False,
) -> CameraState:
    """Clamp requested settings into the lens's legal intervals and return the
    resulting state.  Idempotent: clamping an already-legal state is the
    identity.  NaN requests are rejected as DomainError; everything else,
    including infinite focus distance, clamps cleanly.
    """
    for name, value in (
        ("focal_length_mm", focal_length_mm),
        ("focus_distance_cm", focus_distance_cm),
        ("fstop", fstop),
    ):
        if math.isnan(value):
            raise DomainError(f"{name} request is NaN")
    focal = min(max(focal_length_mm, lens.min_focal_length_mm), lens.max_focal_length_mm)
    stop = min(max(fstop, lens.min_fstop), lens.max_fstop)
    focus = max(focus_distance_cm, lens.min_focus_distance_cm)
    return CameraState(
        lens=lens,
        filmback=filmback,
        focal_length_mm=focal,
        focus_distance_cm=focus,
        fstop=stop,
        manual_focus_enabled=bool(manual_focus_enabled),
        focus_plane_debug=bool(focus_plane_debug),
    )


_FILMBACK_FIELDS = frozenset({"name", "sensor_width_mm", "sensor_height_mm"})
_LENS_FIELDS = frozenset(
    {
        "name",
        "min_focal_length_mm",
        "max_focal_length_mm",
        "min_fstop",
        "max_fstop",
        "min_focus_distance_cm",
        "diaphragm_blade_count",
    }
)


def parse_catalog(records: list) -> tuple[dict[str, Filmback], dict[str, Lens]]:
    """Build the preset catalogs from a JSON array of records.  Record kind is
    determined by its exact field set; unknown or missing fields reject the
    record."""
    filmbacks: dict[str, Filmback] = {}
    lenses: dict[str, Lens] = {}
    if not isinstance(records, list):
        raise ValidationError("preset catalog must be a JSON array")
    for record in records:
        if not isinstance(record, dict):
            raise ValidationError(f"preset record must be an object, got {record!r}")
        fields = frozenset(record)
        if fields == _FILMBACK_FIELDS:
            fb = Filmback(
                name=str(record["name"]),
                sensor_width_mm=float(record["sensor_width_mm"]),
                sensor_height_mm=float(record["sensor_height_mm"]),
            )
            if fb.name in filmbacks:
                raise ValidationError(f"duplicate filmback preset {fb.name!r}")
            filmbacks[fb.name] = fb
        elif fields == _LENS_FIELDS:
            lens = Lens(
                name=str(record["name"]),
                min_focal_length_mm=float(record["min_focal_length_mm"]),
                max_focal_length_mm=float(record["max_focal_length_mm"]),
                min_fstop=float(record["min_fstop"]),
                max_fstop=float(record["max_fstop"]),
                min_focus_distance_cm=float(record["min_focus_distance_cm"]),
                diaphragm_blade_count=int(record["diaphragm_blade_count"]),
            )
            if lens.name in lenses:
                raise ValidationError(f"duplicate lens preset {lens.name!r}")
            lenses[lens.name] = lens
        else:
            unknown = fields - _FILMBACK_FIELDS - _LENS_FIELDS
            raise ValidationError(
                f"preset record {record.get('name', '?')!r} has unrecognized field set"
                + (f" (unknown: {sorted(unknown)})" if unknown else " (missing fields)")
            )
    return filmbacks, lenses


def load_catalog(path: str) -> tuple[dict[str, Filmback], dict[str, Lens]]:
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(json.load(fh))


@lru_cache(maxsize=1)
def _default_catalog() -> tuple[dict[str, Filmback], dict[str, Lens]]:
    text = resources.files(__package__).joinpath("presets.json").read_text("utf-8")
    return parse_catalog(json.loads(text))


def filmback_preset(name: str) -> Filmback:
    filmbacks, _ = _default_catalog()
    try:
        return filmbacks[name]
    except KeyError:
        raise NotFoundError(f"unknown filmback preset {name!r}") from None


def lens_preset(name: str) -> Lens:
    _, lenses = _default_catalog()
    try:
        return lenses[name]
    except KeyError:
        raise NotFoundError(f"unknown lens preset {name!r}") from None


def filmback_names() -> list[str]:
    return sorted(_default_catalog()[0])


def lens_names() -> list[str]:
    return sorted(_default_catalog()[1])
