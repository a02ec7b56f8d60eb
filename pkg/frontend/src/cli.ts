#!/usr/bin/env node
/**
 * crowdsim-client <host:port> [--ticks N] [--updates script.json]
 *                 [--out trace.csv]
 *
 * Connects in lockstep, records the tick stream, and writes the trace CSV
 * (same schema as the server's trajectory export).
 */

import * as fs from "node:fs";

import { connectAndTrace, parseUpdateScript, traceToCsv } from "./client.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(2);
}

async function main(): Promise<void> {
  const args = process.argv.slice(2);
  if (args.length < 1) {
    fail("usage: crowdsim-client <host:port> [--ticks N] [--updates file] [--out file]");
  }
  const [hostPort] = args;
  const sep = hostPort.lastIndexOf(":");
  if (sep < 0) fail(`expected host:port, got '${hostPort}'`);
  const host = hostPort.slice(0, sep);
  const port = Number(hostPort.slice(sep + 1));
  if (!Number.isInteger(port) || port < 1 || port > 65535) {
    fail(`invalid port in '${hostPort}'`);
  }

  let tickLimit = Number.POSITIVE_INFINITY;
  let updatesPath = "";
  let outPath = "trace.csv";
  for (let i = 1; i < args.length; i++) {
    switch (args[i]) {
      case "--ticks":
        tickLimit = Number(args[++i]);
        break;
      case "--updates":
        updatesPath = args[++i];
        break;
      case "--out":
        outPath = args[++i];
        break;
      default:
        fail(`unknown argument '${args[i]}'`);
    }
  }

  const updates = updatesPath
    ? parseUpdateScript(fs.readFileSync(updatesPath, "utf-8"))
    : [];
  const trace = await connectAndTrace({ host, port, tickLimit, updates });
  fs.writeFileSync(outPath, traceToCsv(trace));
  console.log(
    `session ${trace.shutdownReceived ? "completed" : "ended"} at tick ` +
      `${trace.lastTick}: ${trace.states.length} states, ` +
      `${trace.spawns.length} spawns, ${trace.despawns.length} despawns, ` +
      `${trace.errors.length} errors -> ${outPath}`,
  );
  if (trace.errors.length > 0) {
    for (const e of trace.errors) console.error(`server error ${e.code}: ${e.message}`);
  }
}

main().catch((err) => {
  console.error(`error: ${err.message ?? err}`);
  process.exit(1);
});
