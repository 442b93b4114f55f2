// Wire formats shared with the backend: canonical control/ack JSON and the
// FRM1 binary frame descriptor. Byte layouts must match the service exactly.

export const JOINTS = ["J1", "J2", "J3", "J4", "J5", "J6"] as const;
export const GRIP = "GRIP";
export const CLASS_NAMES = ["forefoot", "body", "hind_foot", "soles_of_the_feet"];

export interface BBox {
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface SceneObject {
  classId: number;
  box: BBox;
}

export interface Detection {
  classId: number;
  box: BBox;
  confidence: number;
}

export interface DetectionFrame {
  frameId: number;
  capturedAtUs: number;
  scene: SceneObject[];
  detections: Detection[];
  inferenceMs: number;
}

export interface Ack {
  seq: number;
  applied: boolean;
  ackedAtUs: number;
  anglesDeg: number[];
  grip: boolean;
  error?: string;
}

export function clampAngle(deg: number): number {
  return Math.min(180, Math.max(0, deg));
}

// Floats must serialize the way the service does: integral values keep one
// decimal place ("45.0"), everything else uses the shortest round-trip form.
function floatLiteral(value: number): string {
  return Number.isInteger(value) ? value.toFixed(1) : String(value);
}

export function buildControlPayload(
  seq: number,
  joint: string,
  targetDeg: number,
  issuedAtUs: number,
): string {
  const target = clampAngle(targetDeg);
  return `{"v":1,"seq":${seq},"joint":"${joint}","target_deg":${floatLiteral(target)},"issued_at_us":${Math.round(issuedAtUs)}}`;
}

export function parseAck(text: string): Ack | null {
  let obj: Record<string, unknown>;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj.seq !== "number" || typeof obj.applied !== "boolean" ||
      !Array.isArray(obj.angles_deg)) {
    return null;
  }
  return {
    seq: obj.seq,
    applied: obj.applied,
    ackedAtUs: obj.acked_at_us as number,
    anglesDeg: obj.angles_deg as number[],
    grip: Boolean(obj.grip),
    error: typeof obj.error === "string" ? obj.error : undefined,
  };
}

const FRAME_MAGIC = 0x46524d31; // "FRM1"

export class FrameDecodeError extends Error {}

export function decodeFrame(buffer: ArrayBuffer): DetectionFrame {
  const view = new DataView(buffer);
  if (buffer.byteLength < 24 || view.getUint32(0) !== FRAME_MAGIC) {
    throw new FrameDecodeError("bad frame magic or length");
  }
  const frameId = Number(view.getBigUint64(4));
  const capturedAtUs = Number(view.getBigUint64(12));
  let off = 20;
  const readBox = (): BBox => {
    const box = {
      cx: view.getFloat32(off),
      cy: view.getFloat32(off + 4),
      w: view.getFloat32(off + 8),
      h: view.getFloat32(off + 12),
    };
    off += 16;
    return box;
  };
  try {
    const nTruth = view.getUint16(off);
    off += 2;
    const scene: SceneObject[] = [];
    for (let i = 0; i < nTruth; i++) {
      const classId = view.getUint8(off);
      off += 1;
      scene.push({ classId, box: readBox() });
    }
    const nDet = view.getUint16(off);
    off += 2;
    const detections: Detection[] = [];
    for (let i = 0; i < nDet; i++) {
      const classId = view.getUint8(off);
      off += 1;
      const box = readBox();
      const confidence = view.getFloat32(off);
      off += 4;
      detections.push({ classId, box, confidence });
    }
    const inferenceMs = view.getUint16(off);
    off += 2;
    if (off !== buffer.byteLength) {
      throw new FrameDecodeError("trailing bytes in frame");
    }
    return { frameId, capturedAtUs, scene, detections, inferenceMs };
  } catch (err) {
    if (err instanceof FrameDecodeError) throw err;
    throw new FrameDecodeError(`truncated frame: ${err}`);
  }
}

export function classLabel(classId: number): string {
  return CLASS_NAMES[classId] ?? `class${classId}`;
}
