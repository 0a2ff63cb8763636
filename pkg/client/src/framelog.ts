import { readFileSync } from "node:fs";

import { Quat, Vec3 } from "./types";

export const FRAME_LOG_HEADER =
    "frame,t,px,py,pz,qw,qx,qy,qz,focal_mm,focus_cm,fstop,af_dist_cm";

/** One row of a frames.csv log written by a scenario run. */
export interface FrameRecord {
    frame: number;
    t: number;
    position: Vec3;
    quaternion: Quat;
    /** Applied focal length, after lens clamping. */
    focal_mm: number;
    /** Applied focus distance; Infinity when the log says inf. */
    focus_cm: number;
    /** Applied f-number. */
    fstop: number;
    /** Raw autofocus measurement, or null when autofocus was off. */
    af_dist_cm: number | null;
}

// The log is written with full-precision floats (shortest form that parses
// back to the same binary64), so Number() recovers the exact values.
function parseFloatField(field: string, where: string): number {
    if (field === "inf") return Infinity;
    if (field === "-inf") return -Infinity;
    const value = Number(field);
    if (field === "" || Number.isNaN(value)) {
        throw new Error(`bad numeric field ${JSON.stringify(field)} in ${where}`);
    }
    return value;
}

export function parseFrameLog(text: string): FrameRecord[] {
    const lines = text.split(/\r?\n/).filter((line) => line !== "");
    if (lines.length === 0 || lines[0] !== FRAME_LOG_HEADER) {
        throw new Error(`not a frame log: expected header ${FRAME_LOG_HEADER}`);
    }
    return lines.slice(1).map((line, index) => {
        const fields = line.split(",");
        if (fields.length !== 13) {
            throw new Error(`row ${index}: expected 13 fields, got ${fields.length}`);
        }
        const where = `row ${index}`;
        const num = (i: number) => parseFloatField(fields[i], where);
        return {
            frame: num(0),
            t: num(1),
            position: [num(2), num(3), num(4)] as Vec3,
            quaternion: [num(5), num(6), num(7), num(8)] as Quat,
            focal_mm: num(9),
            focus_cm: num(10),
            fstop: num(11),
            af_dist_cm: fields[12] === "" ? null : num(12),
        };
    });
}

export function readFrameLog(path: string): FrameRecord[] {
    return parseFrameLog(readFileSync(path, "utf8"));
}
