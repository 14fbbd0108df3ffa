/**
 * Reference external-policy client. Reads the init message, then answers
 * every step with one distribution per agent until the end message.
 *
 * Usage: node dist/client.js [--mode uniform|greedy|replay] [--replay FILE]
 *
 * Every reply is flushed line-by-line; the host does not pipeline. A
 * malformed host message is reported on stderr and exits nonzero.
 */
import { createInterface } from "node:readline";
import { readFileSync } from "node:fs";
import { ClientState, Mode, ProtocolError, parseHostMessage } from "./protocol.js";

function parseArgs(argv: string[]): { mode: Mode; replayFile: string } {
  let mode: Mode = "uniform";
  let replayFile = "";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--mode") {
      const v = argv[++i];
      if (v !== "uniform" && v !== "greedy" && v !== "replay") {
        throw new ProtocolError(`unknown mode: ${v}`);
      }
      mode = v;
    } else if (argv[i] === "--replay") {
      replayFile = argv[++i] ?? "";
    } else {
      throw new ProtocolError(`unknown argument: ${argv[i]}`);
    }
  }
  if (mode === "replay" && !replayFile) {
    throw new ProtocolError("--mode replay requires --replay FILE");
  }
  return { mode, replayFile };
}

function fail(err: unknown): never {
  process.stderr.write(`policy client error: ${err instanceof Error ? err.message : err}\n`);
  process.exit(1);
}

function main(): void {
  let args: { mode: Mode; replayFile: string };
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    fail(err);
  }
  const replayText = args.replayFile ? readFileSync(args.replayFile, "utf8") : "";
  let state: ClientState | null = null;
  const rl = createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) {
      return;
    }
    try {
      const msg = parseHostMessage(line);
      if (msg.type === "init") {
        state = new ClientState(msg, args.mode, replayText);
        process.stdout.write(JSON.stringify({ type: "ready" }) + "\n");
      } else if (msg.type === "step") {
        if (state === null) {
          throw new ProtocolError("step before init");
        }
        process.stdout.write(state.respond(msg) + "\n");
      } else {
        rl.close();
        process.exit(0);
      }
    } catch (err) {
      fail(err);
    }
  });
}

main();
