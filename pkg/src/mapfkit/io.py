"""MovingAI map/scen parsing, instance assembly, and solution/result serialization."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .grid import Cell, GridMap, Instance, PathSet

FREE_CHARS = frozenset(".GS")
BLOCKED_CHARS = frozenset("@OTW")

_LABEL_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ParseError(ValueError):
    """Malformed map/scen/solution input; the message names the line."""


def parse_map(text: str) -> GridMap:
    """Parse a MovingAI .map file.

    Header is the four lines `type octile`, `height H`, `width W`, `map`,
    followed by H rows of W terrain characters. `.`/`G`/`S` are free and
    `@`/`O`/`T`/`W` blocked.
    """
    lines = text.splitlines()

    def want(idx: int, key: str) -> str:
        if idx >= len(lines):
            raise ParseError(f"line {idx + 1}: missing `{key}` header line")
        parts = lines[idx].split()
        if not parts or parts[0] != key:
            raise ParseError(f"line {idx + 1}: expected `{key}` header, got {lines[idx]!r}")
        return lines[idx]

    want(0, "type")
    try:
        height = int(want(1, "height").split()[1])
        width = int(want(2, "width").split()[1])
    except (IndexError, ValueError):
        raise ParseError("line 2-3: height/width headers must carry an integer") from None
    want(3, "map")
    blocked: list[Cell] = []
    for y in range(height):
        ln = 4 + y
        if ln >= len(lines):
            raise ParseError(f"line {ln + 1}: map body ended early, expected {height} rows")
        row = lines[ln]
        if len(row) != width:
            raise ParseError(f"line {ln + 1}: row has {len(row)} cells, expected {width}")
        for x, ch in enumerate(row):
            if ch in BLOCKED_CHARS:
                blocked.append((x, y))
            elif ch not in FREE_CHARS:
                raise ParseError(f"line {ln + 1}: unknown terrain character {ch!r}")
    for extra in lines[4 + height:]:
        if extra.strip():
            raise ParseError(f"unexpected content after map body: {extra!r}")
    return GridMap(width, height, blocked)


def render_map(grid: GridMap) -> str:
    """Render a GridMap back to .map text (free cells `.`, blocked `@`)."""
    rows = []
    for y in range(grid.height):
        rows.append("".join("@" if (x, y) in grid.blocked else "." for x in range(grid.width)))
    return f"type octile\nheight {grid.height}\nwidth {grid.width}\nmap\n" + "\n".join(rows) + "\n"


@dataclass(frozen=True)
class ScenarioEntry:
    """One line of a MovingAI scen v1 file (a single start/goal pair)."""

    bucket: int
    map_name: str
    map_width: int
    map_height: int
    start: Cell
    goal: Cell
    optimal_length: float  # single-agent shortest path; parsed but unused


def parse_scen(text: str) -> list[ScenarioEntry]:
    """Parse a MovingAI scen v1 file into entries in file order.

    Each body line has 9 tab-separated fields: bucket, map name, map width,
    map height, start x, start y, goal x, goal y, optimal length.
    """
    lines = text.splitlines()
    if not lines:
        raise ParseError("line 1: empty scen file")
    head = lines[0].strip()
    if head not in ("version 1", "1"):
        raise ParseError(f"line 1: expected `version 1` header, got {lines[0]!r}")
    entries: list[ScenarioEntry] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.rstrip("\n").split("\t")
        if len(fields) != 9:
            raise ParseError(f"line {ln}: expected 9 tab-separated fields, got {len(fields)}")
        try:
            bucket = int(fields[0])
            w, h = int(fields[2]), int(fields[3])
            sx, sy, gx, gy = (int(v) for v in fields[4:8])
            opt = float(fields[8])
        except ValueError:
            raise ParseError(f"line {ln}: non-numeric field in {raw!r}") from None
        for name, (x, y) in (("start", (sx, sy)), ("goal", (gx, gy))):
            if not (0 <= x < w and 0 <= y < h):
                raise ParseError(f"line {ln}: {name} ({x},{y}) outside declared {w}x{h} map")
        entries.append(ScenarioEntry(bucket, fields[1], w, h, (sx, sy), (gx, gy), opt))
    return entries


def make_instance(grid: GridMap, entries: list[ScenarioEntry], n: int) -> Instance:
    """Instance from the first n scen entries, in file order."""
    if n < 1:
        raise ValueError(f"need at least 1 agent, got n={n}")
    if n > len(entries):
        raise ValueError(f"asked for {n} agents but the scenario has {len(entries)} entries")
    starts = tuple(e.start for e in entries[:n])
    goals = tuple(e.goal for e in entries[:n])
    return Instance(grid, starts, goals)


def write_solution(paths: PathSet) -> str:
    """Solution text: line t is `t: (x1,y1) (x2,y2) ...`, one column per agent."""
    if not paths:
        return ""
    length = len(paths[0])
    if any(len(p) != length for p in paths):
        raise ValueError("all agent paths must have equal length")
    lines = []
    for t in range(length):
        cells = " ".join(f"({p[t][0]},{p[t][1]})" for p in paths)
        lines.append(f"{t}: {cells}")
    return "\n".join(lines) + "\n"


_CELL_RE = re.compile(r"\((-?\d+),(-?\d+)\)")


def read_solution(text: str) -> PathSet:
    """Inverse of write_solution; round-trips exactly."""
    rows: list[list[Cell]] = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("line 1: empty solution text")
    for ln, raw in enumerate(lines, start=1):
        head, sep, rest = raw.partition(":")
        if not sep or not head.strip().isdigit():
            raise ParseError(f"line {ln}: expected `t: (x,y) ...`, got {raw!r}")
        if int(head) != ln - 1:
            raise ParseError(f"line {ln}: timestep {head.strip()} out of order")
        cells = _CELL_RE.findall(rest)
        if not cells or len(cells) != len(rest.split()):
            raise ParseError(f"line {ln}: malformed cell list {rest.strip()!r}")
        rows.append([(int(x), int(y)) for x, y in cells])
    n_agents = len(rows[0])
    if any(len(r) != n_agents for r in rows):
        raise ParseError("agent count varies between timesteps")
    return [[rows[t][i] for t in range(len(rows))] for i in range(n_agents)]


@dataclass
class RunRecord:
    """One benchmark run for the results CSV.

    Labels (algo/ordering_mode/shield/map/scen and params keys/values) are
    restricted to [A-Za-z0-9_.:+-] so rows need no quoting. A failed run
    reports flowtime/makespan 0 and is excluded from cost aggregation.
    """

    algo: str
    ordering_mode: str
    shield: str
    map: str
    scen: str
    n_agents: int
    seed: int
    success: bool
    flowtime: int
    makespan: int
    runtime_ms: int
    hl_nodes: int = 0
    params: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.success and (self.flowtime or self.makespan):
            raise ValueError("failed runs must report flowtime/makespan 0")


CSV_COLUMNS = (
    "algo", "ordering_mode", "shield", "map", "scen", "n_agents", "seed",
    "success", "flowtime", "makespan", "runtime_ms", "hl_nodes", "params",
)

_PARAM_RE = re.compile(r"^[A-Za-z0-9_.:+-]*$")


def format_params(params: dict[str, str]) -> str:
    items = []
    for k, v in params.items():
        v = str(v)
        if not _PARAM_RE.match(k) or not _PARAM_RE.match(v):
            raise ValueError(f"param {k}={v!r} contains characters unsafe for unquoted CSV")
        items.append(f"{k}={v}")
    return ";".join(items)


def parse_params(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in text.split(";"):
        if item:
            k, _, v = item.partition("=")
            out[k] = v
    return out


def record_to_row(rec: RunRecord) -> str:
    for label in (rec.algo, rec.ordering_mode, rec.shield, rec.map, rec.scen):
        if not _LABEL_RE.match(label):
            raise ValueError(f"label {label!r} not in [A-Za-z0-9_.-]")
    fields = [
        rec.algo, rec.ordering_mode, rec.shield, rec.map, rec.scen,
        str(rec.n_agents), str(rec.seed), "1" if rec.success else "0",
        str(rec.flowtime), str(rec.makespan), str(rec.runtime_ms),
        str(rec.hl_nodes), format_params(rec.params),
    ]
    return ",".join(fields)


def write_csv(records: list[RunRecord]) -> str:
    """Header plus one row per record, columns in RunRecord field order."""
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(record_to_row(r) for r in records)
    return "\n".join(lines) + "\n"


def read_csv(text: str) -> list[RunRecord]:
    """Parse run rows written by write_csv; aggregate rows (scen=ALL) are skipped."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise ParseError("line 1: missing or wrong CSV header")
    records = []
    for ln, raw in enumerate(lines[1:], start=2):
        parts = raw.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ParseError(f"line {ln}: expected {len(CSV_COLUMNS)} columns")
        if parts[4] == "ALL":
            continue
        records.append(RunRecord(
            algo=parts[0], ordering_mode=parts[1], shield=parts[2], map=parts[3],
            scen=parts[4], n_agents=int(parts[5]), seed=int(parts[6]),
            success=parts[7] == "1", flowtime=int(parts[8]), makespan=int(parts[9]),
            runtime_ms=int(parts[10]), hl_nodes=int(parts[11]),
            params=parse_params(parts[12]),
        ))
    return records
