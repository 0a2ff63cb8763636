import { CinelensClient } from "./client";
import { FrameRecord } from "./framelog";

/** What the server reported back while replaying one frame. */
export interface AppliedFrame {
    frame: number;
    focal_mm: number;
    focus_cm: number;
    fstop: number;
}

/**
 * Drive a live session through a recorded frame log: per record, the vehicle
 * pose and the three lens parameters are applied in order. Returns the
 * applied values the server reported, one entry per record, so checking a
 * reproduction is a straight column comparison against the original log.
 *
 * The `onFrame` hook runs after each record's state is in place, which is
 * the moment to grab an image for that frame.
 */
export async function replayFrameLog(
    client: CinelensClient,
    records: FrameRecord[],
    onFrame?: (record: FrameRecord, applied: AppliedFrame) => void | Promise<void>,
): Promise<AppliedFrame[]> {
    const applied: AppliedFrame[] = [];
    for (const record of records) {
        await client.setVehiclePose(record.position, record.quaternion);
        const entry: AppliedFrame = {
            frame: record.frame,
            focal_mm: await client.setFocalLength(record.focal_mm),
            focus_cm: await client.setFocusDistance(record.focus_cm),
            fstop: await client.setFocusAperture(record.fstop),
        };
        applied.push(entry);
        if (onFrame) {
            await onFrame(record, entry);
        }
    }
    return applied;
}
