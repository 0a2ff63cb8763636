export { CinelensClient, DEFAULT_PORT, ConnectOptions } from "./client";
export {
    ERR_DOMAIN,
    ERR_MALFORMED,
    ERR_NO_TARGET,
    ERR_UNKNOWN_METHOD,
    ProtocolError,
    ServerError,
} from "./errors";
export { FRAME_LOG_HEADER, FrameRecord, parseFrameLog, readFrameLog } from "./framelog";
export { AppliedFrame, replayFrameLog } from "./replay";
export {
    AppliedPose,
    CameraInfo,
    FilmbackInfo,
    ImageRequest,
    Quat,
    RenderPass,
    Vec3,
} from "./types";
