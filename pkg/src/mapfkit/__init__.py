"""Grid multi-agent path finding: PIBT, LaCAM, collision shields, and
policy-guided action orderings, plus a reproducible benchmark harness."""

from .grid import (
    Action,
    Cell,
    Configuration,
    Conflict,
    GridMap,
    Instance,
    PathReport,
    PathSet,
    apply_action,
    flowtime,
    makespan,
    path_cost,
    validate_paths,
    validate_step,
)
from .heuristics import HeuristicBank, HeuristicTable, backward_dijkstra, degrade, manhattan
from .io import (
    ParseError,
    RunRecord,
    ScenarioEntry,
    make_instance,
    parse_map,
    parse_scen,
    read_csv,
    read_solution,
    render_map,
    write_csv,
    write_solution,
)
from .lacam import SolveResult, lacam_solve
from .pibt import (
    StepResult,
    cs_naive_step,
    cs_pibt_step,
    initial_priorities,
    pibt_step,
    update_priorities,
)
from .policy import (
    CandidateRanker,
    ExternalPolicyHost,
    O_H,
    O_H2,
    O_PI,
    O_TIE,
    PolicyProtocolError,
    PolicyProvider,
    RankMode,
    RecordingPolicy,
    SoftmaxHeuristicPolicy,
    UniformPolicy,
    o_sum,
    rank_actions,
    sampled_ordering,
    strict_ordering,
)
from .runner import (
    RunSpec,
    aggregate_records,
    bench_sweep,
    noise_study,
    ordering_histogram,
    run_lacam,
    run_onestep,
    run_spec,
)

__version__ = "0.1.0"
