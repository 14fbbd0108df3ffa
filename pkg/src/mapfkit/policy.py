"""Action-distribution policies and the machinery turning them into PIBT action orderings.

A policy yields one 5-way probability vector per agent (canonical action
order). Orderings are built either from the distribution alone (strict sort
or biased sampling without replacement) or by ranking successor cells with a
heuristic table, a distribution, or a weighted blend of both.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

from ._kernels import sort_candidates
from .grid import Action, Cell, Configuration, GridMap, Instance, N_ACTIONS, apply_action
from .heuristics import HeuristicTable, _cell_uniforms

DIST_TOL = 1e-6          # internal providers must sum to 1 within this
WIRE_DIST_TOL = 1e-3     # external replies renormalized within this, rejected beyond


def validate_distribution(probs: Sequence[float], tol: float = DIST_TOL) -> np.ndarray:
    """Check a 5-way action distribution; returns it renormalized to sum 1.

    Entries must be nonnegative and the sum within tol of 1.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (N_ACTIONS,):
        raise ValueError(f"distribution must have {N_ACTIONS} entries, got shape {p.shape}")
    if (p < 0).any():
        raise ValueError(f"distribution has negative entries: {p.tolist()}")
    s = p.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"distribution sums to {s:.6g}, off by more than {tol}")
    return p / s


def strict_ordering(probs: Sequence[float], rng: np.random.Generator) -> list[Action]:
    """Actions sorted by descending probability; exact ties break uniformly at random."""
    p = validate_distribution(probs)
    u = rng.random(N_ACTIONS)
    return [Action(int(a)) for a in np.lexsort((u, -p))]


def sampled_ordering(probs: Sequence[float], rng: np.random.Generator) -> list[Action]:
    """Biased sampling without replacement (a Plackett-Luce draw).

    Each position is drawn proportionally to the remaining probabilities;
    zero-probability actions fill the trailing positions in random order.
    """
    p = validate_distribution(probs)
    remaining = list(range(N_ACTIONS))
    out: list[int] = []
    while remaining:
        total = sum(p[a] for a in remaining)
        if total <= 0.0:
            out.extend(remaining[i] for i in rng.permutation(len(remaining)))
            break
        r = rng.random() * total
        acc = 0.0
        idx = len(remaining) - 1
        for k, a in enumerate(remaining):
            acc += p[a]
            if r < acc:
                idx = k
                break
        out.append(remaining.pop(idx))
    return [Action(a) for a in out]


@dataclass(frozen=True)
class RankMode:
    """How to order an agent's five actions.

    kind "h" ranks by successor heuristic value (random tie-break), "h2"
    additionally prefers cells free of other agents on ties, "pi" by the
    policy distribution, "tie" lexicographically by (h, 1-p), and "sum" by
    h + r*(1-p).
    """

    kind: str
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in ("h", "h2", "pi", "tie", "sum"):
            raise ValueError(f"unknown rank mode {self.kind!r}")
        if self.r < 0:
            raise ValueError("r must be nonnegative")

    @property
    def needs_policy(self) -> bool:
        return self.kind in ("pi", "tie", "sum")

    @property
    def needs_heuristic(self) -> bool:
        return self.kind in ("h", "h2", "tie", "sum")


O_H = RankMode("h")
O_H2 = RankMode("h2")
O_PI = RankMode("pi")
O_TIE = RankMode("tie")


def o_sum(r: float) -> RankMode:
    return RankMode("sum", r)


def rank_actions(
    cell: Cell,
    table: Optional[HeuristicTable],
    dist: Optional[Sequence[float]],
    mode: RankMode,
    occupied: frozenset[Cell] | set[Cell] = frozenset(),
    rng: Optional[np.random.Generator] = None,
    grid: Optional[GridMap] = None,
) -> list[Action]:
    """Order the five actions for one agent under the given rank mode.

    Infeasible moves (off-map or into obstacles) always rank last; remaining
    exact ties break uniformly at random. "h2" prefers target cells not in
    `occupied` before the random tie-break.
    """
    if mode.needs_policy and dist is None:
        raise ValueError(f"rank mode {mode.kind} requires an action distribution")
    if mode.needs_heuristic and table is None:
        raise ValueError(f"rank mode {mode.kind} requires a heuristic table")
    if grid is None:
        if table is None:
            raise ValueError("need a grid (directly or via the table) to test feasibility")
        grid = table.grid
    rng = rng if rng is not None else np.random.default_rng()

    targets = [apply_action(cell, Action(a), grid) for a in range(N_ACTIONS)]
    feas = np.array([t is not None for t in targets])
    inf = np.inf
    u = rng.random(N_ACTIONS)

    if mode.needs_heuristic:
        rank_vals = table.ranking_values()
        h = np.array([rank_vals[grid.index(t)] if t is not None else inf for t in targets])
    if mode.needs_policy:
        p = validate_distribution(dist)

    if mode.kind == "h":
        keys: tuple[np.ndarray, ...] = (u, h)
    elif mode.kind == "h2":
        occ = np.array([(t in occupied and t != cell) if t is not None else True for t in targets], dtype=float)
        keys = (u, occ, h)
    elif mode.kind == "pi":
        keys = (u, np.where(feas, 1.0 - p, inf))
    elif mode.kind == "tie":
        keys = (u, np.where(feas, 1.0 - p, 0.0), h)
    else:  # sum
        keys = (u, np.where(feas, h + mode.r * (1.0 - p), inf))
    return [Action(int(a)) for a in np.lexsort(keys)]


class PolicyProvider:
    """Produces one action distribution per agent each timestep.

    Implementations receive the full current configuration and own whatever
    observation restriction they want. They must return exactly one row per
    agent and be deterministic given their own seed.
    """

    n_agents: int

    def distributions(self, t: int, config: Configuration) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


class UniformPolicy(PolicyProvider):
    """0.2 on every action for every agent."""

    def __init__(self, n_agents: int):
        self.n_agents = n_agents

    def distributions(self, t: int, config: Configuration) -> np.ndarray:
        return np.full((self.n_agents, N_ACTIONS), 1.0 / N_ACTIONS)


class SoftmaxHeuristicPolicy(PolicyProvider):
    """Surrogate learnt policy: softmax over noisily perceived cost-to-go.

    Scores each action by -h~(T(s,a)) and softmaxes at temperature tau,
    where h~ multiplies the agent's exact table by a per-cell factor
    e ~ U[1-kappa/100, 1] that is redrawn each timestep (the admissible
    band of the degrade op, applied as time-varying estimation error the
    way an imperfect learnt model wobbles, rather than as one frozen
    field, which would strand agents in permanent noise minima). Infeasible
    actions get probability zero. Agents standing on their goal put all
    mass on Wait, mirroring how learnt policies rest at the goal (they
    still move when displaced through the collision shield).
    """

    def __init__(self, inst: Instance, tables: Sequence[HeuristicTable],
                 tau: float, kappa: float, seed: int):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 <= kappa <= 100:
            raise ValueError("kappa must be in [0, 100]")
        if len(tables) != inst.n_agents:
            raise ValueError("one heuristic table per agent required")
        self.n_agents = inst.n_agents
        self.tau = float(tau)
        self.kappa = float(kappa)
        self.seed = int(seed)
        self._grid = inst.grid
        self._neigh = inst.grid.neighbor_table()
        self._goals = np.array([inst.grid.index(g) for g in inst.goals], dtype=np.int64)
        self._values = np.stack([tab.ranking_values() for tab in tables])
        self._rows = np.arange(self.n_agents)[:, None]

    def distributions(self, t: int, config: Configuration) -> np.ndarray:
        cfg = np.fromiter((self._grid.index(c) for c in config), dtype=np.int64,
                          count=self.n_agents)
        return self.distributions_flat(t, cfg)

    def distributions_flat(self, t: int, cfg: np.ndarray) -> np.ndarray:
        step_seed = self.seed + (t + 1) * 0x9E3779B97F4A7C15
        e = 1.0 - (self.kappa / 100.0) * _cell_uniforms(step_seed, self._grid.n_cells)
        targets = self._neigh[cfg]
        feas = targets >= 0
        safe = targets.clip(0)
        scores = -(e[safe] * self._values[self._rows, safe]) / self.tau
        scores[~feas] = -np.inf
        scores -= scores.max(axis=1, keepdims=True)
        p = np.exp(scores)
        p[~feas] = 0.0
        p /= p.sum(axis=1, keepdims=True)
        resting = cfg == self._goals
        p[resting] = 0.0
        p[resting, N_ACTIONS - 1] = 1.0
        return p


class RecordingPolicy(PolicyProvider):
    """Wraps a provider and logs each reply as a wire-format dist message line."""

    def __init__(self, inner: PolicyProvider, sink: IO[str]):
        self.inner = inner
        self.n_agents = inner.n_agents
        self._sink = sink

    def distributions(self, t: int, config: Configuration) -> np.ndarray:
        dists = self.inner.distributions(t, config)
        msg = {"type": "dist", "t": t, "dists": [[float(v) for v in row] for row in dists]}
        self._sink.write(json.dumps(msg, separators=(",", ":")) + "\n")
        return dists

    def close(self) -> None:
        self._sink.flush()
        self.inner.close()


class PolicyProtocolError(RuntimeError):
    """The external policy process broke the wire protocol."""


class ExternalPolicyHost(PolicyProvider):
    """Host side of the line-delimited JSON policy protocol.

    Spawns the child command, sends the init message (map, endpoints, seed),
    and exchanges one step/dist message pair per timestep over the child's
    stdin/stdout. Replies are validated: exactly one distribution per agent,
    no negative entries, and sums renormalized when within 1e-3 of 1.
    """

    def __init__(self, command: str | Sequence[str], inst: Instance, seed: int,
                 timeout_s: float = 10.0):
        self.n_agents = inst.n_agents
        self.timeout_s = float(timeout_s)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._steps = 0
        self._latency_s = 0.0
        init = {
            "type": "init",
            "width": inst.grid.width,
            "height": inst.grid.height,
            "blocked": [[x, y] for x, y in sorted(inst.grid.blocked)],
            "starts": [[x, y] for x, y in inst.starts],
            "goals": [[x, y] for x, y in inst.goals],
            "seed": int(seed),
        }
        self._send(init)
        ready = self._recv("init")
        if ready.get("type") != "ready":
            raise PolicyProtocolError(f"expected ready after init, got {ready!r}")

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PolicyProtocolError(f"policy process closed stdin: {exc}") from exc

    def _recv(self, what: str) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise PolicyProtocolError(f"timed out after {self.timeout_s}s waiting for {what} reply") from None
        if line is None:
            raise PolicyProtocolError(f"policy process exited while waiting for {what} reply "
                                      f"(exit code {self._proc.poll()})")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PolicyProtocolError(f"malformed JSON in {what} reply: {line!r}") from exc
        if not isinstance(msg, dict):
            raise PolicyProtocolError(f"{what} reply is not an object: {line!r}")
        return msg

    def distributions(self, t: int, config: Configuration) -> np.ndarray:
        start = time.perf_counter()
        self._send({"type": "step", "t": t, "positions": [[x, y] for x, y in config]})
        msg = self._recv(f"step {t}")
        if msg.get("type") != "dist" or "dists" not in msg:
            raise PolicyProtocolError(f"step {t}: expected dist message, got {msg!r}")
        dists = msg["dists"]
        if len(dists) != self.n_agents:
            raise PolicyProtocolError(
                f"step {t}: got {len(dists)} distributions for {self.n_agents} agents")
        rows = []
        for i, row in enumerate(dists):
            try:
                rows.append(validate_distribution(row, tol=WIRE_DIST_TOL))
            except ValueError as exc:
                raise PolicyProtocolError(f"step {t}: agent {i}: {exc}") from exc
        self._latency_s += time.perf_counter() - start
        self._steps += 1
        return np.stack(rows)

    @property
    def mean_latency_ms(self) -> float:
        return 1000.0 * self._latency_s / self._steps if self._steps else 0.0

    def close(self, status: str = "success") -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "end", "status": status})
            except PolicyProtocolError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc.stdin:
            self._proc.stdin.close()


class CandidateRanker:
    """Vectorized per-step ordering of every agent's candidate target cells.

    Produces, for each agent, its feasible 1-step target cells (flat ids)
    sorted most-preferred first, which is exactly what the PIBT engine
    consumes. Heuristic modes rank by the (N, n_cells) table matrix; policy
    modes query the provider. For mode "pi" the conversion follows the
    distribution alone (strict sort or Plackett-Luce sampling via Gumbel
    keys); the engine's feasibility filter drops blocked targets.
    """

    def __init__(self, grid: GridMap, mode: RankMode, *,
                 tables: Optional[np.ndarray] = None,
                 provider: Optional[PolicyProvider] = None,
                 sample_mode: str = "sampled",
                 rng: Optional[np.random.Generator] = None):
        if mode.needs_heuristic and tables is None:
            raise ValueError(f"rank mode {mode.kind} requires heuristic tables")
        if mode.needs_policy and provider is None:
            raise ValueError(f"rank mode {mode.kind} requires a policy provider")
        if sample_mode not in ("strict", "sampled"):
            raise ValueError(f"unknown sample mode {sample_mode!r}")
        self.grid = grid
        self.mode = mode
        self.tables = tables
        self.provider = provider
        self.sample_mode = sample_mode
        self.rng = rng if rng is not None else np.random.default_rng()
        self._neigh = grid.neighbor_table()
        self._rows = None if tables is None else np.arange(tables.shape[0])[:, None]
        self._ranked: Optional[np.ndarray] = None
        self._counts: Optional[np.ndarray] = None
        self._orders: Optional[np.ndarray] = None
        self.last_order: Optional[np.ndarray] = None  # (N, 5) action index perms

    def _dists(self, t: int, cfg: np.ndarray) -> np.ndarray:
        fast = getattr(self.provider, "distributions_flat", None)
        if fast is not None:
            return fast(t, cfg)
        w = self.grid.width
        cells = tuple((int(c % w), int(c // w)) for c in cfg)
        return self.provider.distributions(t, cells)

    def _ensure_buffers(self, n: int) -> None:
        if self._ranked is None or self._ranked.shape[0] < n:
            self._ranked = np.empty((n, N_ACTIONS), dtype=np.int64)
            self._counts = np.empty(n, dtype=np.int64)
            self._orders = np.empty((n, N_ACTIONS), dtype=np.int64)

    def candidate_arrays(self, t: int, cfg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-agent candidate targets for the PIBT engine, as a padded
        (N, 5) array of flat cells plus a count vector. Also refreshes
        last_order with the full action permutations."""
        n = len(cfg)
        targets = self._neigh[cfg]
        feas = targets >= 0
        inf = np.inf
        u = self.rng.random((n, N_ACTIONS))
        kind = self.mode.kind

        if kind in ("h", "h2", "tie", "sum"):
            h = self.tables[self._rows[:n], targets.clip(0)]
            h[~feas] = inf
        if self.mode.needs_policy:
            p = self._dists(t, cfg)

        tie = u
        if kind == "h":
            keys = h
        elif kind == "h2":
            occupied = np.zeros(self.grid.n_cells + 1, dtype=bool)
            occupied[cfg] = True
            occ = occupied[targets]
            occ[targets == cfg[:, None]] = False
            # fold the two-level (h, occupied) key into one float: occupancy
            # only breaks exact h ties, so a half-step bump never reorders h
            keys = h + np.where(occ, 0.5, 0.0) * np.where(np.isfinite(h), 1.0, 0.0)
        elif kind == "tie":
            keys = h
            tie = np.where(feas, 1.0 - p, 0.0) + u * 1e-9  # u only breaks exact p ties
        elif kind == "sum":
            keys = np.where(feas, h + self.mode.r * (1.0 - p), inf)
        elif self.sample_mode == "strict":
            keys = -p
        else:
            with np.errstate(divide="ignore"):
                gumbel = -np.log(-np.log(self.rng.random((n, N_ACTIONS))))
                keys = -(np.log(p) + gumbel)

        self._ensure_buffers(n)
        ranked, counts, orders = self._ranked[:n], self._counts[:n], self._orders[:n]
        sort_candidates(targets, np.ascontiguousarray(keys, dtype=np.float64),
                        np.ascontiguousarray(tie, dtype=np.float64),
                        orders, ranked, counts)
        self.last_order = orders
        return ranked, counts

    def candidates(self, t: int, cfg: np.ndarray) -> list[list[int]]:
        """List-of-lists view of candidate_arrays (convenience for tests)."""
        ranked, counts = self.candidate_arrays(t, cfg)
        rows = ranked.tolist()
        return [row[:k] for row, k in zip(rows, counts.tolist())]
