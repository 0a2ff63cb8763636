"""cinelens: a self-contained cinematic drone-camera simulator.

Thin-lens optics with real lens limits, a deterministic software renderer
with depth-of-field bokeh, a kinematic vehicle with a rigid camera mount,
scripted scenario playback with ground-truth autofocus, and a TCP control
server speaking newline-delimited JSON.
"""

from .control import (
    AutofocusSettings,
    FrameRecord,
    ScalarTrack,
    Scenario,
    autofocus_step,
    build_replay_scenario,
    evaluate_track,
    frame_count,
    load_scenario,
    read_frame_log,
    run_scenario,
    scenario_from_dict,
)
from .errors import (
    BindError,
    CinelensError,
    DimensionMismatchError,
    DomainError,
    EmptyTrackError,
    NoTargetError,
    NotFoundError,
    ValidationError,
)
from .optics import (
    CameraState,
    Filmback,
    Lens,
    aperture_diameter,
    clamp_camera_state,
    coc_diameter,
    default_coc_limit,
    dof_limits,
    filmback_names,
    filmback_preset,
    horizontal_fov,
    hyperfocal_distance,
    image_distance,
    lens_names,
    lens_preset,
    load_catalog,
    parse_catalog,
    vertical_fov,
)
from .render import (
    ImageBuffer,
    RenderSettings,
    decode_image,
    default_resolution,
    encode_image,
    export_image,
    generate_ray,
    gradient_energy,
    load_image,
    overlay_focus_plane,
    render_pass,
    sample_aperture_point,
)
from .scene import (
    Hit,
    Material,
    Plane,
    PointLight,
    Quad,
    Scene,
    SceneObject,
    Sphere,
    intersect,
    intersect_rays,
    scene_from_dict,
    target_position,
)
from .server import DEFAULT_PORT, PORT_ENV_VAR, CineServer, SimSession, serve
from .vehicle import (
    CameraMount,
    Pose,
    PoseKeyframe,
    camera_world_pose,
    interpolate_pose,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
)

__version__ = "0.1.0"
