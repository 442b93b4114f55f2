// WebSocket glue: clock sync against the service loop, throttled command
// sending with an offline queue, and inbound dispatch onto the state.

import {
  JointThrottle,
  PendingCommand,
  UiState,
  applyAck,
  applyFrame,
  applySliderChange,
  drainQueue,
  enqueueOffline,
  initialState,
  recordBadFrame,
  recordCommandSent,
} from "./state.js";
import { Ack, JOINTS, buildControlPayload, decodeFrame, parseAck } from "./wire.js";

interface Hello {
  type: "hello";
  now_us: number;
  room: string;
  arm: string;
  participant: string;
  route: string;
}

export class ConsoleClient {
  state: UiState = initialState();
  onChange: (state: UiState) => void = () => {};
  private ws: WebSocket | null = null;
  private clockOffsetUs = 0; // service clock minus local clock
  private throttle = new JointThrottle();
  private pendingTimers = new Map<number, number>();

  constructor(private url: string) {}

  localNowUs(): number {
    return Math.round(performance.now() * 1000);
  }

  serviceNowUs(): number {
    return this.localNowUs() + this.clockOffsetUs;
  }

  connect(): void {
    const ws = new WebSocket(this.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;
    ws.onopen = () => {
      // hello carries the clock; ready state flips when it arrives
    };
    ws.onmessage = (event: MessageEvent) => this.onMessage(event);
    ws.onclose = () => {
      this.state = { ...this.state, connected: false,
                     banner: "disconnected, queueing commands" };
      this.onChange(this.state);
      setTimeout(() => this.connect(), 1000);
    };
    ws.onerror = () => ws.close();
  }

  private onMessage(event: MessageEvent): void {
    if (typeof event.data === "string") {
      this.onText(event.data);
    } else {
      this.onBinary(event.data as ArrayBuffer);
    }
    this.onChange(this.state);
  }

  private onText(text: string): void {
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(text);
    } catch {
      return;
    }
    if (obj.type === "hello") {
      const hello = obj as unknown as Hello;
      this.clockOffsetUs = hello.now_us - this.localNowUs();
      this.state = { ...this.state, connected: true, room: hello.room,
                     participant: hello.participant, banner: null };
      const [queued, drained] = drainQueue(this.state);
      this.state = drained;
      queued.forEach((cmd) => this.transmit(cmd));
      return;
    }
    if ("applied" in obj) {
      const ack = parseAck(text);
      if (ack) this.state = applyAck(this.state, ack);
    }
  }

  private onBinary(data: ArrayBuffer): void {
    try {
      const frame = decodeFrame(data);
      const latencyMs = (this.serviceNowUs() - frame.capturedAtUs) / 1000;
      this.state = applyFrame(this.state, frame, latencyMs);
    } catch {
      this.state = recordBadFrame(this.state);
    }
  }

  // slider/gripper entry point; throttled to 10 commands/s per joint
  command(jointIndex: number, joint: string, targetDeg: number): void {
    if (jointIndex >= 0) {
      this.state = applySliderChange(this.state, jointIndex, targetDeg);
      this.onChange(this.state);
    }
    const nowMs = performance.now();
    const key = jointIndex >= 0 ? jointIndex : JOINTS.length; // gripper slot
    const existing = this.pendingTimers.get(key);
    if (existing !== undefined) {
      clearTimeout(existing);
      this.pendingTimers.delete(key);
    }
    const delay = this.throttle.delayFor(key, nowMs);
    const fire = () => {
      this.pendingTimers.delete(key);
      this.throttle.markSent(key, performance.now());
      const seq = this.state.nextSeq;
      const cmd: PendingCommand = { joint, targetDeg: this.latestTarget(jointIndex, targetDeg), seq };
      this.state = recordCommandSent(this.state, key, seq);
      this.transmit(cmd);
      this.onChange(this.state);
    };
    if (delay <= 0) {
      fire();
    } else {
      this.pendingTimers.set(key, setTimeout(fire, delay) as unknown as number);
    }
  }

  private latestTarget(jointIndex: number, fallback: number): number {
    return jointIndex >= 0 ? this.state.sliders[jointIndex] : fallback;
  }

  private transmit(cmd: PendingCommand): void {
    const payload = buildControlPayload(cmd.seq, cmd.joint, cmd.targetDeg,
                                        this.serviceNowUs());
    if (this.ws && this.ws.readyState === WebSocket.OPEN && this.state.connected) {
      this.ws.send(payload);
    } else {
      this.state = enqueueOffline(this.state, cmd);
      this.onChange(this.state);
    }
  }

  applyAckForTest(ack: Ack): void {
    this.state = applyAck(this.state, ack);
  }
}
