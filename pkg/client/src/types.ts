export type Vec3 = [number, number, number];

/** Scalar-first unit quaternion, [w, x, y, z]. */
export type Quat = [number, number, number, number];

export interface FilmbackInfo {
    name: string;
    sensor_width_mm: number;
    sensor_height_mm: number;
}

/**
 * Full camera report. Wire field names are kept as-is; distances the server
 * sends as null (meaning infinity) arrive here as Infinity.
 */
export interface CameraInfo {
    lens: string;
    filmback: FilmbackInfo;
    focal_length_mm: number;
    focus_distance_cm: number;
    fstop: number;
    aperture_diameter_mm: number;
    manual_focus_enabled: boolean;
    focus_plane_debug: boolean;
    horizontal_fov_deg: number;
    vertical_fov_deg: number;
    coc_limit_mm: number;
    dof_near_cm: number;
    dof_far_cm: number;
    hyperfocal_cm: number;
    clock_s: number;
}

export interface AppliedPose {
    position: Vec3;
    quaternion: Quat;
}

export type RenderPass = "rgb" | "depth" | "segmentation";

/** All fields optional; the server falls back to the session's render settings. */
export interface ImageRequest {
    pass?: RenderPass;
    width?: number;
    height?: number;
    spp?: number;
}
