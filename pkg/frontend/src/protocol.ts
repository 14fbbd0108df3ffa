/**
 * Wire protocol types and the distribution rules of the reference policy
 * client. One JSON message per line over stdin/stdout; actions use the
 * canonical index order Up, Down, Left, Right, Wait, with Up decreasing y.
 */

export type Cell = [number, number];

export interface InitMessage {
  type: "init";
  width: number;
  height: number;
  blocked: Cell[];
  starts: Cell[];
  goals: Cell[];
  seed: number;
}

export interface StepMessage {
  type: "step";
  t: number;
  positions: Cell[];
}

export interface EndMessage {
  type: "end";
  status: "success" | "failure";
}

export interface DistMessage {
  type: "dist";
  t: number;
  dists: number[][];
}

export type HostMessage = InitMessage | StepMessage | EndMessage;

export const N_ACTIONS = 5;
// (dx, dy) per action: Up, Down, Left, Right, Wait
export const ACTION_DELTAS: ReadonlyArray<Cell> = [
  [0, -1],
  [0, 1],
  [-1, 0],
  [1, 0],
  [0, 0],
];

export type Mode = "uniform" | "greedy" | "replay";

export class ProtocolError extends Error {}

function isCell(v: unknown): v is Cell {
  return (
    Array.isArray(v) &&
    v.length === 2 &&
    Number.isInteger(v[0]) &&
    Number.isInteger(v[1])
  );
}

function cellList(v: unknown, what: string): Cell[] {
  if (!Array.isArray(v) || !v.every(isCell)) {
    throw new ProtocolError(`${what} must be a list of [x, y] pairs`);
  }
  return v as Cell[];
}

/** Parse and structurally validate one host message line. */
export function parseHostMessage(line: string): HostMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new ProtocolError(`malformed JSON: ${line.slice(0, 80)}`);
  }
  if (typeof raw !== "object" || raw === null || !("type" in raw)) {
    throw new ProtocolError(`message without type: ${line.slice(0, 80)}`);
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "init": {
      if (
        !Number.isInteger(msg.width) ||
        !Number.isInteger(msg.height) ||
        (msg.width as number) < 1 ||
        (msg.height as number) < 1
      ) {
        throw new ProtocolError("init needs positive integer width/height");
      }
      const starts = cellList(msg.starts, "starts");
      const goals = cellList(msg.goals, "goals");
      if (starts.length !== goals.length || starts.length === 0) {
        throw new ProtocolError("starts and goals must be equal-length and non-empty");
      }
      return {
        type: "init",
        width: msg.width as number,
        height: msg.height as number,
        blocked: cellList(msg.blocked ?? [], "blocked"),
        starts,
        goals,
        seed: Number.isInteger(msg.seed) ? (msg.seed as number) : 0,
      };
    }
    case "step": {
      if (!Number.isInteger(msg.t)) {
        throw new ProtocolError("step needs an integer t");
      }
      return {
        type: "step",
        t: msg.t as number,
        positions: cellList(msg.positions, "positions"),
      };
    }
    case "end":
      return { type: "end", status: msg.status === "failure" ? "failure" : "success" };
    default:
      throw new ProtocolError(`unknown message type: ${String(msg.type)}`);
  }
}

export function uniformDistribution(): number[] {
  return new Array(N_ACTIONS).fill(1 / N_ACTIONS);
}

function manhattan(a: Cell, b: Cell): number {
  return Math.abs(a[0] - b[0]) + Math.abs(a[1] - b[1]);
}

/**
 * Greedy rule: 0.6 split evenly over the Manhattan-decreasing actions, the
 * remaining 0.4 spread uniformly over all five. At the goal no action
 * decreases the distance, so the 0.6 falls on Wait.
 */
export function greedyDistribution(position: Cell, goal: Cell): number[] {
  const base = manhattan(position, goal);
  const preferred: number[] = [];
  for (let a = 0; a < N_ACTIONS - 1; a++) {
    const target: Cell = [position[0] + ACTION_DELTAS[a][0], position[1] + ACTION_DELTAS[a][1]];
    if (manhattan(target, goal) < base) {
      preferred.push(a);
    }
  }
  if (preferred.length === 0) {
    preferred.push(N_ACTIONS - 1); // Wait
  }
  const dist = new Array(N_ACTIONS).fill(0.4 / N_ACTIONS);
  for (const a of preferred) {
    dist[a] += 0.6 / preferred.length;
  }
  return dist;
}

export class ClientState {
  readonly goals: Cell[];
  readonly mode: Mode;
  private readonly replayLines: string[];
  private replayIndex = 0;

  constructor(init: InitMessage, mode: Mode, replayText = "") {
    this.goals = init.goals;
    this.mode = mode;
    this.replayLines = replayText.split("\n").filter((l) => l.trim().length > 0);
  }

  /** One dist-message line answering the given step message. */
  respond(step: StepMessage): string {
    if (step.positions.length !== this.goals.length) {
      throw new ProtocolError(
        `step ${step.t}: ${step.positions.length} positions for ${this.goals.length} agents`,
      );
    }
    if (this.mode === "replay") {
      const line = this.replayLines[this.replayIndex++];
      if (line === undefined) {
        throw new ProtocolError(`step ${step.t}: replay file exhausted`);
      }
      return line;
    }
    const dists = step.positions.map((pos, i) =>
      this.mode === "uniform" ? uniformDistribution() : greedyDistribution(pos, this.goals[i]),
    );
    for (const d of dists) {
      const sum = d.reduce((acc, v) => acc + v, 0);
      if (Math.abs(sum - 1) > 1e-9) {
        throw new ProtocolError(`internal: distribution sums to ${sum}`);
      }
    }
    const reply: DistMessage = { type: "dist", t: step.t, dists };
    return JSON.stringify(reply);
  }
}
