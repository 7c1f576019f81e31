"""Deterministic engine for long-horizon calendar-conflict decision episodes.

Pipeline: organizational schemas with hidden weighted priority principles ->
conflict-free regular calendars -> conflict rounds with machine-derivable
ground truth -> a sequential decision environment with a capacity-bounded
strategy-memory tool -> metrics (accuracy, rank distance, error reduction)
and an exportable shaped-reward / group-advantage layer.
"""

from .agents import (
    FAILURE_SENTINEL,
    HEURISTIC_RULES,
    HeuristicAgent,
    OracleAgent,
    RandomAgent,
    RemoteAgent,
    RemoteEndpointConfig,
    load_prompt_template,
    make_agent,
    render_prompt,
)
from .calgen import (
    Calendar,
    Event,
    PlacementError,
    generate_regular_calendar,
    overlaps,
    validate_no_overlap,
    week_grid_start,
    week_of,
)
from .conflicts import (
    AnchorError,
    ConflictDataset,
    ConflictRound,
    GenParams,
    ScoreSeparationError,
    build_dataset,
    build_datasets,
    generate_competitors,
    sample_anchors,
)
from .env import (
    DEFAULT_HUB_CAPACITY,
    DEFAULT_K,
    DEFAULT_W,
    AgentAction,
    Decision,
    EnvConfig,
    Episode,
    HubDelta,
    Observation,
    ParseFailure,
    StrategyEntry,
    StrategyHub,
    TRUTH_KEYS,
    parse_agent_text,
    scan_for_truth_keys,
)
from .jsonio import canonical_text, digest_of, dump_canonical, load_json, substream
from .metrics import (
    MetricsReport,
    RoundMetrics,
    err_from_errors,
    instance_metrics,
    ord_score,
    round_accuracy,
)
from .rewards import (
    AdvantageBatch,
    RewardConfig,
    RoundReward,
    curriculum_weights,
    export_advantages_csv,
    returns_to_go,
    roundwise_advantages,
    score_group,
    score_round,
    trajectory_return,
)
from .runner import (
    Bundle,
    IntegrityError,
    build_context,
    dataset_from_files,
    default_size_plan,
    generate_bundle,
    load_bundle_user,
    load_org,
    profile_from_bundle,
    replay_trace,
    resolve_schema,
    run_bundle,
    run_episode,
    verify_bundle_files,
    write_bundle,
)
from .schema import (
    ConflictReason,
    DecisionContext,
    MeetingTemplate,
    Member,
    OrgBuildError,
    OrgChart,
    OrgSchema,
    PriorityPrinciple,
    Role,
    SchemaError,
    UserProfile,
    eval_predicate,
    evaluate_trigger,
    instantiate_org,
    load_schema,
    principle_score,
    schema_from_dict,
    schema_to_dict,
)

__version__ = "0.1.0"
