// Forward kinematics mirror of the simulated arm: planar shoulder/elbow/
// wrist chain under a base yaw. Used only to draw the pose projections.

export const L1 = 0.12;
export const L2 = 0.12;
export const L3 = 0.06;
export const Z_BASE = 0.06;
export const REACH_M = L1 + L2 + L3;

export interface JointPoint {
  x: number;
  y: number;
  z: number;
  r: number; // radial distance in the yaw plane, for the side projection
}

export function chainPoints(anglesDeg: number[]): JointPoint[] {
  const rad = (d: number) => (d * Math.PI) / 180;
  const yaw = rad(anglesDeg[0] ?? 0);
  const p2 = rad(anglesDeg[1] ?? 0);
  const p3 = p2 + rad(anglesDeg[2] ?? 0);
  const p4 = p3 + rad(anglesDeg[3] ?? 0);
  const points: JointPoint[] = [{ x: 0, y: 0, z: Z_BASE, r: 0 }];
  let r = 0;
  let z = Z_BASE;
  for (const [pitch, length] of [[p2, L1], [p3, L2], [p4, L3]] as const) {
    r += length * Math.cos(pitch);
    z += length * Math.sin(pitch);
    points.push({ x: r * Math.cos(yaw), y: r * Math.sin(yaw), z, r });
  }
  return points;
}
