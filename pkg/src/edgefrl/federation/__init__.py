from .aggregation import (
    AggregationResult,
    ClientUpdate,
    GlobalModel,
    aggregate,
    bank_key,
    broadcast_and_finetune,
    finetune_heads,
    inverse_loss_weights,
)
from .rounds import (
    ClusterServer,
    ClusterTopology,
    PendingRound,
    RoundReport,
    cloud_sync,
    finish_round,
    hierarchical_round,
    round_latency,
    run_round,
    start_round,
)
from .selection import BANDWIDTH_REF, Candidate, DeviceStats, SelectionConfig, select_clients, total_utility

__all__ = [
    "AggregationResult", "BANDWIDTH_REF", "Candidate", "ClientUpdate", "ClusterServer", "ClusterTopology",
    "DeviceStats", "GlobalModel", "PendingRound", "RoundReport", "SelectionConfig", "aggregate", "bank_key",
    "broadcast_and_finetune", "cloud_sync", "finetune_heads", "finish_round", "hierarchical_round",
    "inverse_loss_weights", "round_latency", "run_round", "select_clients", "start_round", "total_utility",
]
