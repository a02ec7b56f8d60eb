/**
 * Binary codec for the simulator's tick-stream protocol.
 *
 * Frame: u32le length (kind tag + payload), u8 kind tag, payload.
 * Integers little-endian, floats IEEE-754 binary32, ticks u64 (bigint).
 * Byte layouts are pinned by docs/protocol.md and the shared golden
 * fixture file; both sides of the wire must decode them identically.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_FRAME = 16 * 1024 * 1024;

export enum Kind {
  Hello = 1,
  HelloAck = 2,
  TickBegin = 3,
  AgentState = 4,
  TickEnd = 5,
  EnvUpdate = 6,
  SpawnEvent = 7,
  DespawnEvent = 8,
  Error = 9,
  Shutdown = 10,
}

export enum Mode {
  Lockstep = 0,
  Streaming = 1,
}

export enum EnvOp {
  AddObstacle = 1,
  RemoveObstacle = 2,
  OpenSpawn = 3,
  CloseSpawn = 4,
  RetargetGoal = 5,
}

export interface HelloMsg {
  kind: Kind.Hello;
  version: number;
  mode: Mode;
}

export interface HelloAckMsg {
  kind: Kind.HelloAck;
  version: number;
  mode: Mode;
}

export interface TickBeginMsg {
  kind: Kind.TickBegin;
  tick: bigint;
  agentCount: number;
}

export interface AgentStateMsg {
  kind: Kind.AgentState;
  agentId: number;
  tick: bigint;
  x: number;
  y: number;
  vx: number;
  vy: number;
  gaitPhase: number;
  anomaly: number;
}

export interface TickEndMsg {
  kind: Kind.TickEnd;
  tick: bigint;
}

export interface EnvUpdateMsg {
  kind: Kind.EnvUpdate;
  op: EnvOp;
  targetId: number;
  vertices: number[]; // flat x0, y0, x1, y1, ...
}

export interface SpawnEventMsg {
  kind: Kind.SpawnEvent;
  tick: bigint;
  agentId: number;
  x: number;
  y: number;
  v0: number;
  height: number;
}

export interface DespawnEventMsg {
  kind: Kind.DespawnEvent;
  tick: bigint;
  agentId: number;
  reason: number;
}

export interface ErrorMsg {
  kind: Kind.Error;
  code: number;
  message: string;
}

export interface ShutdownMsg {
  kind: Kind.Shutdown;
}

export type Message =
  | HelloMsg
  | HelloAckMsg
  | TickBeginMsg
  | AgentStateMsg
  | TickEndMsg
  | EnvUpdateMsg
  | SpawnEventMsg
  | DespawnEventMsg
  | ErrorMsg
  | ShutdownMsg;

export class ProtocolError extends Error {}
export class FramingError extends ProtocolError {}
export class UnknownKindError extends ProtocolError {
  constructor(public readonly tag: number) {
    super(`unknown message kind tag 0x${tag.toString(16).padStart(2, "0")}`);
  }
}

function encodePayload(msg: Message): Buffer {
  switch (msg.kind) {
    case Kind.Hello:
    case Kind.HelloAck: {
      const b = Buffer.alloc(3);
      b.writeUInt16LE(msg.version, 0);
      b.writeUInt8(msg.mode, 2);
      return b;
    }
    case Kind.TickBegin: {
      const b = Buffer.alloc(12);
      b.writeBigUInt64LE(msg.tick, 0);
      b.writeUInt32LE(msg.agentCount, 8);
      return b;
    }
    case Kind.AgentState: {
      const b = Buffer.alloc(33);
      b.writeUInt32LE(msg.agentId, 0);
      b.writeBigUInt64LE(msg.tick, 4);
      b.writeFloatLE(msg.x, 12);
      b.writeFloatLE(msg.y, 16);
      b.writeFloatLE(msg.vx, 20);
      b.writeFloatLE(msg.vy, 24);
      b.writeFloatLE(msg.gaitPhase, 28);
      b.writeUInt8(msg.anomaly, 32);
      return b;
    }
    case Kind.TickEnd: {
      const b = Buffer.alloc(8);
      b.writeBigUInt64LE(msg.tick, 0);
      return b;
    }
    case Kind.EnvUpdate: {
      const n = Math.floor(msg.vertices.length / 2);
      const b = Buffer.alloc(9 + 8 * n);
      b.writeUInt8(msg.op, 0);
      b.writeUInt32LE(msg.targetId, 1);
      b.writeUInt32LE(n, 5);
      for (let i = 0; i < 2 * n; i++) {
        b.writeFloatLE(msg.vertices[i], 9 + 4 * i);
      }
      return b;
    }
    case Kind.SpawnEvent: {
      const b = Buffer.alloc(28);
      b.writeBigUInt64LE(msg.tick, 0);
      b.writeUInt32LE(msg.agentId, 8);
      b.writeFloatLE(msg.x, 12);
      b.writeFloatLE(msg.y, 16);
      b.writeFloatLE(msg.v0, 20);
      b.writeFloatLE(msg.height, 24);
      return b;
    }
    case Kind.DespawnEvent: {
      const b = Buffer.alloc(13);
      b.writeBigUInt64LE(msg.tick, 0);
      b.writeUInt32LE(msg.agentId, 8);
      b.writeUInt8(msg.reason, 12);
      return b;
    }
    case Kind.Error: {
      const text = Buffer.from(msg.message, "utf-8");
      const b = Buffer.alloc(4 + text.length);
      b.writeUInt16LE(msg.code, 0);
      b.writeUInt16LE(text.length, 2);
      text.copy(b, 4);
      return b;
    }
    case Kind.Shutdown:
      return Buffer.alloc(0);
  }
}

export function encodeMessage(msg: Message): Buffer {
  const payload = encodePayload(msg);
  const frame = Buffer.alloc(5 + payload.length);
  frame.writeUInt32LE(1 + payload.length, 0);
  frame.writeUInt8(msg.kind, 4);
  payload.copy(frame, 5);
  return frame;
}

function decodePayload(tag: number, p: Buffer): Message {
  switch (tag) {
    case Kind.Hello:
      return { kind: Kind.Hello, version: p.readUInt16LE(0), mode: p.readUInt8(2) };
    case Kind.HelloAck:
      return { kind: Kind.HelloAck, version: p.readUInt16LE(0), mode: p.readUInt8(2) };
    case Kind.TickBegin:
      return {
        kind: Kind.TickBegin,
        tick: p.readBigUInt64LE(0),
        agentCount: p.readUInt32LE(8),
      };
    case Kind.AgentState:
      return {
        kind: Kind.AgentState,
        agentId: p.readUInt32LE(0),
        tick: p.readBigUInt64LE(4),
        x: p.readFloatLE(12),
        y: p.readFloatLE(16),
        vx: p.readFloatLE(20),
        vy: p.readFloatLE(24),
        gaitPhase: p.readFloatLE(28),
        anomaly: p.readUInt8(32),
      };
    case Kind.TickEnd:
      return { kind: Kind.TickEnd, tick: p.readBigUInt64LE(0) };
    case Kind.EnvUpdate: {
      const n = p.readUInt32LE(5);
      const vertices: number[] = [];
      for (let i = 0; i < 2 * n; i++) {
        vertices.push(p.readFloatLE(9 + 4 * i));
      }
      return {
        kind: Kind.EnvUpdate,
        op: p.readUInt8(0),
        targetId: p.readUInt32LE(1),
        vertices,
      };
    }
    case Kind.SpawnEvent:
      return {
        kind: Kind.SpawnEvent,
        tick: p.readBigUInt64LE(0),
        agentId: p.readUInt32LE(8),
        x: p.readFloatLE(12),
        y: p.readFloatLE(16),
        v0: p.readFloatLE(20),
        height: p.readFloatLE(24),
      };
    case Kind.DespawnEvent:
      return {
        kind: Kind.DespawnEvent,
        tick: p.readBigUInt64LE(0),
        agentId: p.readUInt32LE(8),
        reason: p.readUInt8(12),
      };
    case Kind.Error: {
      const len = p.readUInt16LE(2);
      return {
        kind: Kind.Error,
        code: p.readUInt16LE(0),
        message: p.subarray(4, 4 + len).toString("utf-8"),
      };
    }
    case Kind.Shutdown:
      return { kind: Kind.Shutdown };
    default:
      throw new UnknownKindError(tag);
  }
}

/**
 * Incremental decode: returns the message and consumed byte count, or null
 * while the buffer holds less than one full frame. Never consumes partials.
 */
export function decodeMessage(buf: Buffer): { msg: Message; consumed: number } | null {
  if (buf.length < 4) return null;
  const length = buf.readUInt32LE(0);
  if (length > MAX_FRAME) {
    throw new FramingError(`frame length ${length} exceeds ${MAX_FRAME}`);
  }
  if (length < 1) {
    throw new FramingError("frame length must count the kind tag");
  }
  if (buf.length < 4 + length) return null;
  const msg = decodePayload(buf.readUInt8(4), buf.subarray(5, 4 + length));
  return { msg, consumed: 4 + length };
}

/** Buffering decoder for a stream arriving in arbitrary chunks. */
export class FrameDecoder {
  private buf: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Message[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : Buffer.from(chunk);
    const out: Message[] = [];
    for (;;) {
      const result = decodeMessage(this.buf);
      if (result === null) break;
      this.buf = this.buf.subarray(result.consumed);
      out.push(result.msg);
    }
    return out;
  }

  get pending(): number {
    return this.buf.length;
  }
}
