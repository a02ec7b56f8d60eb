/**
 * Reference renderer-side client: connects to the simulation server,
 * acknowledges ticks in lockstep, reconstructs per-tick agent states, and
 * can inject timed environment updates. No rendering: its job is protocol
 * conformance and trajectory reconstruction.
 */

import * as net from "node:net";

import {
  AgentStateMsg,
  DespawnEventMsg,
  EnvUpdateMsg,
  ErrorMsg,
  FrameDecoder,
  HelloAckMsg,
  Kind,
  Message,
  Mode,
  PROTOCOL_VERSION,
  ProtocolError,
  SpawnEventMsg,
  encodeMessage,
} from "./codec.js";

export interface TimedUpdate {
  atTick: number;
  update: Omit<EnvUpdateMsg, "kind">;
}

export interface ClientTrace {
  version: number;
  mode: Mode;
  states: AgentStateMsg[];
  spawns: SpawnEventMsg[];
  despawns: DespawnEventMsg[];
  errors: ErrorMsg[];
  lastTick: bigint;
  shutdownReceived: boolean;
}

export interface ConnectOptions {
  host: string;
  port: number;
  /** stop acking and close after this many ticks; 0 = handshake only */
  tickLimit?: number;
  updates?: TimedUpdate[];
  timeoutMs?: number;
}

export function connectAndTrace(opts: ConnectOptions): Promise<ClientTrace> {
  const {
    host,
    port,
    tickLimit = Number.POSITIVE_INFINITY,
    updates = [],
    timeoutMs = 60000,
  } = opts;
  const byTick = new Map<number, TimedUpdate[]>();
  for (const u of updates) {
    const list = byTick.get(u.atTick) ?? [];
    list.push(u);
    byTick.set(u.atTick, list);
  }

  return new Promise((resolve, reject) => {
    const trace: ClientTrace = {
      version: PROTOCOL_VERSION,
      mode: Mode.Lockstep,
      states: [],
      spawns: [],
      despawns: [],
      errors: [],
      lastTick: 0n,
      shutdownReceived: false,
    };
    const decoder = new FrameDecoder();
    const socket = net.createConnection({ host, port });
    let settled = false;
    let fatal: Error | null = null;

    const timer = setTimeout(() => {
      fatal = new ProtocolError(`session timed out after ${timeoutMs} ms`);
      socket.destroy();
    }, timeoutMs);

    const finish = () => {
      if (settled) return;
      settled = true;
      clearTimeout(timer);
      if (fatal) reject(fatal);
      else resolve(trace);
    };

    socket.on("connect", () => {
      socket.write(
        encodeMessage({ kind: Kind.Hello, version: PROTOCOL_VERSION, mode: Mode.Lockstep }),
      );
      if (tickLimit === 0) {
        // handshake only: announce shutdown and wait for the server's
        socket.write(encodeMessage({ kind: Kind.Shutdown }));
      }
    });

    socket.on("data", (chunk: Buffer) => {
      let messages: Message[];
      try {
        messages = decoder.push(chunk);
      } catch (err) {
        fatal = err as Error;
        socket.destroy();
        return;
      }
      for (const msg of messages) {
        switch (msg.kind) {
          case Kind.HelloAck: {
            const ack = msg as HelloAckMsg;
            if (ack.version !== PROTOCOL_VERSION) {
              fatal = new ProtocolError(
                `server negotiated unsupported version ${ack.version}`,
              );
              socket.destroy();
              return;
            }
            trace.mode = ack.mode;
            break;
          }
          case Kind.AgentState:
            trace.states.push(msg);
            break;
          case Kind.SpawnEvent:
            trace.spawns.push(msg);
            break;
          case Kind.DespawnEvent:
            trace.despawns.push(msg);
            break;
          case Kind.Error:
            trace.errors.push(msg);
            break;
          case Kind.TickBegin:
            break;
          case Kind.TickEnd: {
            trace.lastTick = msg.tick;
            const tickNum = Number(msg.tick);
            for (const u of byTick.get(tickNum) ?? []) {
              socket.write(encodeMessage({ kind: Kind.EnvUpdate, ...u.update }));
            }
            if (tickNum >= tickLimit) {
              socket.write(encodeMessage({ kind: Kind.Shutdown }));
            } else if (trace.mode === Mode.Lockstep) {
              socket.write(encodeMessage({ kind: Kind.TickEnd, tick: msg.tick }));
            }
            break;
          }
          case Kind.Shutdown:
            trace.shutdownReceived = true;
            socket.end();
            break;
          default: {
            fatal = new ProtocolError(`unexpected message kind ${(msg as Message).kind}`);
            socket.destroy();
            return;
          }
        }
      }
    });

    socket.on("error", (err) => {
      if (!trace.shutdownReceived) fatal = fatal ?? err;
    });
    socket.on("close", finish);
  });
}

/** Same schema as the server's trajectory CSV, rows ordered as received. */
export function traceToCsv(trace: ClientTrace): string {
  const lines = ["tick,agent_id,x,y,vx,vy,anomaly_flag"];
  for (const s of trace.states) {
    lines.push(
      `${s.tick},${s.agentId},${s.x.toFixed(6)},${s.y.toFixed(6)},` +
        `${s.vx.toFixed(6)},${s.vy.toFixed(6)},${s.anomaly}`,
    );
  }
  return lines.join("\n") + "\n";
}

export interface UpdateScriptEntry {
  at_tick: number;
  op: "add_obstacle" | "remove_obstacle" | "open_spawn" | "close_spawn" | "retarget_goal";
  target_id?: number;
  vertices?: number[];
}

const OP_CODES = {
  add_obstacle: 1,
  remove_obstacle: 2,
  open_spawn: 3,
  close_spawn: 4,
  retarget_goal: 5,
} as const;

export function parseUpdateScript(json: string): TimedUpdate[] {
  const entries = JSON.parse(json) as UpdateScriptEntry[];
  if (!Array.isArray(entries)) {
    throw new ProtocolError("update script must be a JSON array");
  }
  return entries.map((e) => {
    const op = OP_CODES[e.op];
    if (op === undefined) {
      throw new ProtocolError(`unknown update op '${e.op}'`);
    }
    const vertices = e.vertices ?? [];
    if (vertices.length % 2 !== 0) {
      throw new ProtocolError("vertices must be flat x,y pairs");
    }
    if (op === OP_CODES.add_obstacle && vertices.length < 6) {
      throw new ProtocolError("add_obstacle needs at least 3 vertices");
    }
    return {
      atTick: e.at_tick,
      update: { op, targetId: e.target_id ?? 0, vertices },
    };
  });
}
