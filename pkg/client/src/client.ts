import * as net from "node:net";

import { ProtocolError, ServerError } from "./errors";
import { AppliedPose, CameraInfo, FilmbackInfo, ImageRequest, Quat, Vec3 } from "./types";

export const DEFAULT_PORT = 41451;

export interface ConnectOptions {
    host?: string;
    port?: number;
    /** Reject if the TCP connect has not completed after this long. */
    timeoutMs?: number;
}

interface Pending {
    resolve(value: unknown): void;
    reject(err: Error): void;
}

/** Infinity never crosses the wire; the protocol spells it null. */
function toWire(value: number): number | null {
    return Number.isFinite(value) ? value : null;
}

function fromWire(value: number | null): number {
    return value === null ? Infinity : value;
}

function normalizeInfo(raw: Record<string, unknown>): CameraInfo {
    return {
        ...raw,
        focus_distance_cm: fromWire(raw.focus_distance_cm as number | null),
        dof_near_cm: fromWire(raw.dof_near_cm as number | null),
        dof_far_cm: fromWire(raw.dof_far_cm as number | null),
    } as CameraInfo;
}

/**
 * Client for the simulator's control protocol: newline-delimited JSON over
 * TCP, one request object per line, responses echoing the request id.
 *
 * All methods return promises. Requests may be pipelined freely; responses
 * are matched by id. A server-reported failure rejects with ServerError
 * (carrying the numeric code), a broken stream rejects everything in flight
 * with ProtocolError and poisons the client.
 */
export class CinelensClient {
    private readonly socket: net.Socket;
    private readonly pending = new Map<number, Pending>();
    private nextId = 1;
    private carry = "";
    private failure: Error | null = null;

    private constructor(socket: net.Socket) {
        this.socket = socket;
        socket.setEncoding("utf8");
        socket.on("data", (chunk: string) => this.feed(chunk));
        socket.on("error", (err: Error) => this.fail(new ProtocolError(`socket error: ${err.message}`)));
        socket.on("close", () => this.fail(new ProtocolError("connection closed")));
    }

    /** Open a connection and resolve with a ready client. */
    static connect(options: ConnectOptions = {}): Promise<CinelensClient> {
        const host = options.host ?? "127.0.0.1";
        const port = options.port ?? DEFAULT_PORT;
        return new Promise((resolve, reject) => {
            const socket = net.createConnection({ host, port });
            const onError = (err: Error) => {
                socket.destroy();
                reject(err);
            };
            if (options.timeoutMs !== undefined) {
                socket.setTimeout(options.timeoutMs, () => {
                    onError(new ProtocolError(`connect timed out after ${options.timeoutMs} ms`));
                });
            }
            socket.once("error", onError);
            socket.once("connect", () => {
                socket.off("error", onError);
                socket.setTimeout(0);
                resolve(new CinelensClient(socket));
            });
        });
    }

    /** True once the connection is gone; every further call rejects. */
    get closed(): boolean {
        return this.failure !== null;
    }

    close(): void {
        this.socket.end();
        // poison immediately; the socket's own close event is asynchronous
        this.fail(new ProtocolError("connection closed"));
    }

    /**
     * Send a raw request. The typed wrappers below are usually what you
     * want; this is the escape hatch and does no null/Infinity mapping.
     */
    call(method: string, params: Record<string, unknown> = {}): Promise<unknown> {
        if (this.failure !== null) {
            return Promise.reject(this.failure);
        }
        const id = this.nextId++;
        const line = JSON.stringify({ id, method, params }) + "\n";
        return new Promise((resolve, reject) => {
            this.pending.set(id, { resolve, reject });
            this.socket.write(line, (err) => {
                if (err) {
                    this.fail(new ProtocolError(`write failed: ${err.message}`));
                }
            });
        });
    }

    async getCameraInfo(): Promise<CameraInfo> {
        return normalizeInfo((await this.call("getCameraInfo")) as Record<string, unknown>);
    }

    /** Returns the applied focal length, clamped into the lens range. */
    async setFocalLength(valueMm: number): Promise<number> {
        return (await this.call("setFocalLength", { value_mm: valueMm })) as number;
    }

    /**
     * Focus distance in cm; pass Infinity to focus at infinity. Returns the
     * applied distance (clamped to the lens minimum, Infinity allowed).
     */
    async setFocusDistance(valueCm: number): Promise<number> {
        const result = await this.call("setFocusDistance", { value_cm: toWire(valueCm) });
        return fromWire(result as number | null);
    }

    /** Returns the applied f-number, clamped into the lens stop range. */
    async setFocusAperture(value: number): Promise<number> {
        return (await this.call("setFocusAperture", { value })) as number;
    }

    setFilmback(name: string): Promise<FilmbackInfo>;
    setFilmback(widthMm: number, heightMm: number): Promise<FilmbackInfo>;
    async setFilmback(nameOrWidth: string | number, heightMm?: number): Promise<FilmbackInfo> {
        const params =
            typeof nameOrWidth === "string"
                ? { name: nameOrWidth }
                : { width_mm: nameOrWidth, height_mm: heightMm };
        return (await this.call("setFilmback", params)) as FilmbackInfo;
    }

    /** Swap the lens; the camera state re-clamps into the new lens limits. */
    async setLensPreset(name: string): Promise<CameraInfo> {
        return normalizeInfo((await this.call("setLensPreset", { name })) as Record<string, unknown>);
    }

    async enableManualFocus(enabled: boolean): Promise<boolean> {
        return (await this.call("enableManualFocus", { enabled })) as boolean;
    }

    async setFocusPlane(enabled: boolean): Promise<boolean> {
        return (await this.call("setFocusPlane", { enabled })) as boolean;
    }

    /**
     * Render from the current session state and return the encoded bytes
     * (PNG for rgb/segmentation, the raw float container for depth).
     */
    async getImage(request: ImageRequest = {}): Promise<Buffer> {
        const params: Record<string, unknown> = {};
        if (request.pass !== undefined) params.pass = request.pass;
        if (request.width !== undefined) params.width = request.width;
        if (request.height !== undefined) params.height = request.height;
        if (request.spp !== undefined) params.spp = request.spp;
        const b64 = (await this.call("getImage", params)) as string;
        return Buffer.from(b64, "base64");
    }

    /** Teleport the vehicle. The quaternion is normalized server-side. */
    async setVehiclePose(position: Vec3, quaternion: Quat): Promise<AppliedPose> {
        return (await this.call("setVehiclePose", { position, quaternion })) as AppliedPose;
    }

    /** Camera-to-target distance in meters. Rejects with code -4 when the scene has no target. */
    async getDistanceToTarget(): Promise<number> {
        return (await this.call("getDistanceToTarget")) as number;
    }

    /** Advance the session clock; returns the accumulated time in seconds. */
    async simTick(dtS: number): Promise<number> {
        return (await this.call("simTick", { dt_s: dtS })) as number;
    }

    private feed(chunk: string): void {
        this.carry += chunk;
        let nl: number;
        while ((nl = this.carry.indexOf("\n")) >= 0) {
            const line = this.carry.slice(0, nl);
            this.carry = this.carry.slice(nl + 1);
            if (line.trim() !== "") {
                this.dispatch(line);
            }
        }
    }

    private dispatch(line: string): void {
        let response: { id?: unknown; result?: unknown; error?: { code: number; message: string } };
        try {
            response = JSON.parse(line);
        } catch {
            this.fail(new ProtocolError(`unparseable response line: ${line.slice(0, 120)}`));
            return;
        }
        const id = response.id;
        const entry = typeof id === "number" ? this.pending.get(id) : undefined;
        if (entry === undefined) {
            this.fail(new ProtocolError(`response for unknown request id ${JSON.stringify(id)}`));
            return;
        }
        this.pending.delete(id as number);
        if (response.error !== undefined) {
            entry.reject(new ServerError(response.error.code, response.error.message));
        } else {
            entry.resolve(response.result);
        }
    }

    private fail(err: Error): void {
        if (this.failure !== null) {
            return;
        }
        this.failure = err;
        this.socket.destroy();
        const waiting = Array.from(this.pending.values());
        this.pending.clear();
        for (const entry of waiting) {
            entry.reject(err);
        }
    }
}
