// View model: a UiState renders to a flat list of draw operations. The
// canvas painter just replays them, so rendering stays pure and
// snapshot-testable without a DOM.

import { chainPoints, REACH_M, Z_BASE } from "./fk.js";
import { hudMeanMs, UiState } from "./state.js";
import { classLabel } from "./wire.js";

export type DrawOp =
  | { kind: "clear"; w: number; h: number }
  | { kind: "rect"; x: number; y: number; w: number; h: number;
      stroke: string; width: number }
  | { kind: "fillRect"; x: number; y: number; w: number; h: number; fill: string }
  | { kind: "line"; points: [number, number][]; stroke: string; width: number }
  | { kind: "circle"; x: number; y: number; r: number; fill: string }
  | { kind: "text"; x: number; y: number; text: string; fill: string; font: string };

export interface Layout {
  width: number;
  height: number;
  // workspace (top view) panel and side-elevation panel, in canvas pixels
  top: { x: number; y: number; w: number; h: number };
  side: { x: number; y: number; w: number; h: number };
}

export const DEFAULT_LAYOUT: Layout = {
  width: 960,
  height: 520,
  top: { x: 20, y: 40, w: 560, h: 440 },
  side: { x: 620, y: 40, w: 320, h: 440 },
};

const COLORS = ["#4fc3f7", "#81c784", "#ffb74d", "#e57373"];

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

export function renderView(state: UiState, layout: Layout = DEFAULT_LAYOUT): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "clear", w: layout.width, h: layout.height }];
  const frame = state.frames[state.frames.length - 1];
  const { top, side } = layout;

  ops.push({ kind: "rect", x: top.x, y: top.y, w: top.w, h: top.h,
             stroke: "#555", width: 1 });
  ops.push({ kind: "text", x: top.x, y: top.y - 8, text: "workspace (top view)",
             fill: "#aaa", font: "12px sans-serif" });
  ops.push({ kind: "rect", x: side.x, y: side.y, w: side.w, h: side.h,
             stroke: "#555", width: 1 });
  ops.push({ kind: "text", x: side.x, y: side.y - 8, text: "elevation (side view)",
             fill: "#aaa", font: "12px sans-serif" });

  // scene objects and detection overlays live in normalized frame coords
  const toTop = (cx: number, cy: number): [number, number] =>
    [top.x + cx * top.w, top.y + cy * top.h];

  if (frame) {
    for (const obj of frame.scene) {
      const [x, y] = toTop(obj.box.cx - obj.box.w / 2, obj.box.cy - obj.box.h / 2);
      ops.push({ kind: "fillRect", x: round2(x), y: round2(y),
                 w: round2(obj.box.w * top.w), h: round2(obj.box.h * top.h),
                 fill: "#333" });
    }
    frame.detections.forEach((det, index) => {
      const [x, y] = toTop(det.box.cx - det.box.w / 2, det.box.cy - det.box.h / 2);
      const highlighted = state.highlightedDetection === index;
      ops.push({ kind: "rect", x: round2(x), y: round2(y),
                 w: round2(det.box.w * top.w), h: round2(det.box.h * top.h),
                 stroke: COLORS[det.classId % COLORS.length],
                 width: highlighted ? 4 : 2 });
      const label = `${classLabel(det.classId)} ${(det.confidence * 100).toFixed(0)}%`;
      ops.push({ kind: "text", x: round2(x), y: round2(y - 4), text: label,
                 fill: COLORS[det.classId % COLORS.length],
                 font: "12px sans-serif" });
    });
  }

  // arm pose projections from the last acked joint angles
  const points = chainPoints(state.ackedAngles);
  const scale = (top.w / 2) / (REACH_M * 1.1);
  const baseTop: [number, number] = [top.x + top.w / 2, top.y + top.h - 20];
  const topLine = points.map((p): [number, number] =>
    [round2(baseTop[0] + p.y * scale), round2(baseTop[1] - p.x * scale)]);
  ops.push({ kind: "line", points: topLine, stroke: "#eeeeee", width: 3 });
  ops.push({ kind: "circle", x: topLine[0][0], y: topLine[0][1], r: 5,
             fill: state.gripClosed ? "#e57373" : "#81c784" });

  const sideScale = (side.h - 60) / (REACH_M + Z_BASE);
  const baseSide: [number, number] = [side.x + 40, side.y + side.h - 20];
  const sideLine = points.map((p): [number, number] =>
    [round2(baseSide[0] + p.r * sideScale), round2(baseSide[1] - p.z * sideScale)]);
  ops.push({ kind: "line", points: sideLine, stroke: "#eeeeee", width: 3 });
  ops.push({ kind: "line",
             points: [[side.x + 10, baseSide[1]], [side.x + side.w - 10, baseSide[1]]],
             stroke: "#444", width: 1 });

  // HUD: display latency, frame age, connection state
  const hud = hudMeanMs(state);
  const hudText = hud === null ? "display latency: n/a"
    : `display latency: ${hud.toFixed(1)} ms (mean of last ${Math.min(
        state.displayLatenciesMs.length, 30)})`;
  ops.push({ kind: "text", x: 20, y: layout.height - 8, text: hudText,
             fill: "#ffd54f", font: "14px monospace" });
  const status = state.connected
    ? `connected: ${state.room ?? "?"} as ${state.participant ?? "?"}`
    : "disconnected";
  ops.push({ kind: "text", x: 20, y: 16, text: status,
             fill: state.connected ? "#81c784" : "#e57373",
             font: "13px monospace" });
  if (frame) {
    ops.push({ kind: "text", x: side.x, y: layout.height - 8,
               text: `frame ${frame.frameId}, inference ${frame.inferenceMs} ms, ` +
                     `${frame.detections.length} detection(s)`,
               fill: "#aaa", font: "12px monospace" });
  }
  if (state.banner) {
    ops.push({ kind: "fillRect", x: 0, y: 20, w: layout.width, h: 22,
               fill: "#6d1b1b" });
    ops.push({ kind: "text", x: 20, y: 36, text: state.banner,
               fill: "#fff", font: "13px sans-serif" });
  }
  return ops;
}

export function paint(ctx: CanvasRenderingContext2D, ops: DrawOp[]): void {
  for (const op of ops) {
    switch (op.kind) {
      case "clear":
        ctx.fillStyle = "#161616";
        ctx.fillRect(0, 0, op.w, op.h);
        break;
      case "rect":
        ctx.strokeStyle = op.stroke;
        ctx.lineWidth = op.width;
        ctx.strokeRect(op.x, op.y, op.w, op.h);
        break;
      case "fillRect":
        ctx.fillStyle = op.fill;
        ctx.fillRect(op.x, op.y, op.w, op.h);
        break;
      case "line":
        ctx.strokeStyle = op.stroke;
        ctx.lineWidth = op.width;
        ctx.beginPath();
        op.points.forEach(([x, y], i) =>
          i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y));
        ctx.stroke();
        break;
      case "circle":
        ctx.fillStyle = op.fill;
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, 2 * Math.PI);
        ctx.fill();
        break;
      case "text":
        ctx.fillStyle = op.fill;
        ctx.font = op.font;
        ctx.fillText(op.text, op.x, op.y);
        break;
    }
  }
}

// hit test for click-to-highlight, in the top panel's coordinates
export function detectionAt(state: UiState, px: number, py: number,
                            layout: Layout = DEFAULT_LAYOUT): number | null {
  const frame = state.frames[state.frames.length - 1];
  if (!frame) return null;
  const { top } = layout;
  const cx = (px - top.x) / top.w;
  const cy = (py - top.y) / top.h;
  for (let i = frame.detections.length - 1; i >= 0; i--) {
    const box = frame.detections[i].box;
    if (Math.abs(cx - box.cx) <= box.w / 2 && Math.abs(cy - box.cy) <= box.h / 2) {
      return i;
    }
  }
  return null;
}
