"""Incremental proximity-graph maintenance for online approximate nearest
neighbor search."""
from .exceptions import *  # noqa: F401,F403
from .graph import GraphStats, ProximityGraph, Violation
from .maintenance import (
    ALL_STRATEGIES,
    DeleteStrategy,
    MaintenanceConfig,
    OnlineIndex,
    apply_workload,
    delete_global_reconnect,
    delete_local_reconnect,
    delete_mask,
    delete_pure,
    insert,
    rebuild,
)
from .oracle import GroundTruth, delaunay_2d, ground_truth, recall_at_k
from .search import (
    Candidate,
    SearchResult,
    greedy_search,
    greedy_search_mask_aware,
    select_neighbors,
)
from .store import Metric, VectorStore, brute_force_topk, load_fvecs
from .workload import Workload, WorkloadSpec, build_workload, read_workload, write_workload
from .estimator import ProximityGraphIndex

__version__ = "0.1.0"
