import { describe, expect, it } from "vitest";

import { FRAME_LOG_HEADER, parseFrameLog } from "../src/framelog";

const HEADER = FRAME_LOG_HEADER;

describe("parseFrameLog", () => {
    it("parses rows into typed records", () => {
        const text = [
            HEADER,
            "0,0.0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,50.0,300.0,1.2,",
            "1,0.1,0.15,-0.04,0.03,0.9995,0.0,0.0,0.0312,50.0,329.1,1.33,412.5",
        ].join("\n");
        const records = parseFrameLog(text);
        expect(records).toHaveLength(2);
        expect(records[0].frame).toBe(0);
        expect(records[0].position).toEqual([0, 0, 0]);
        expect(records[0].quaternion).toEqual([1, 0, 0, 0]);
        expect(records[0].af_dist_cm).toBeNull();
        expect(records[1].t).toBe(0.1);
        expect(records[1].focal_mm).toBe(50);
        expect(records[1].af_dist_cm).toBe(412.5);
    });

    it("recovers full-precision floats exactly", () => {
        const text = [
            HEADER,
            "0,0.30000000000000004,1e-05,0.1,2.5e-12,1.0,0.0,0.0,0.0,85.0,123.45678901234567,1.8,",
        ].join("\n");
        const [rec] = parseFrameLog(text);
        expect(rec.t).toBe(0.30000000000000004);
        expect(rec.position[0]).toBe(1e-5);
        expect(rec.position[2]).toBe(2.5e-12);
        expect(rec.focus_cm).toBe(123.45678901234567);
    });

    it("maps inf to Infinity", () => {
        const text = [HEADER, "0,0.0,0,0,0,1,0,0,0,50.0,inf,8.0,inf"].join("\n");
        const [rec] = parseFrameLog(text);
        expect(rec.focus_cm).toBe(Infinity);
        expect(rec.af_dist_cm).toBe(Infinity);
    });

    it("rejects a wrong header", () => {
        expect(() => parseFrameLog("frame,t\n0,0.0")).toThrow(/not a frame log/);
    });

    it("rejects rows with missing fields", () => {
        expect(() => parseFrameLog([HEADER, "0,0.0,1.0"].join("\n"))).toThrow(/13 fields/);
    });

    it("rejects non-numeric fields", () => {
        const text = [HEADER, "0,0.0,x,0,0,1,0,0,0,50.0,300.0,2.0,"].join("\n");
        expect(() => parseFrameLog(text)).toThrow(/bad numeric field/);
    });

    it("tolerates trailing newline and CRLF", () => {
        const text = HEADER + "\r\n" + "0,0.0,0,0,0,1,0,0,0,50.0,300.0,2.0,\r\n";
        expect(parseFrameLog(text)).toHaveLength(1);
    });
});
