"""Decentralized load-balancing placement of IoT services on edge-to-cloud networks."""

from .baselines import place_cloud, place_first_fit
from .config import GridSpec, RunConfig, load_config
from .costmodel import (LoadState, check_capacity, deadline_violation, deployment_cost,
                        local_cost, processing_time, response_time, unhosted_cost,
                        utilization_variance)
from .engine import MetricsReport, compare_strategies, run_experiment
from .epos import build_tree, run_epos, weighted_cost
from .plangen import AgentView, PlacementPlan, generate_plans, plan_distinctness
from .topology import NetworkGraph, NodeSpec, assign_capacities, generate_topology
from .workload import (ServiceRequest, SyntheticSource, WorkloadProfile, distribute_to_ingress,
                       load_profiles, materialize_requests)

__version__ = "0.1.0"
__all__ = [
    "AgentView", "GridSpec", "LoadState", "MetricsReport", "NetworkGraph", "NodeSpec",
    "PlacementPlan", "RunConfig", "ServiceRequest", "SyntheticSource", "WorkloadProfile",
    "assign_capacities", "build_tree", "check_capacity", "compare_strategies",
    "deadline_violation", "deployment_cost", "distribute_to_ingress", "generate_plans",
    "generate_topology", "load_config", "load_profiles", "local_cost", "materialize_requests",
    "place_cloud", "place_first_fit", "plan_distinctness", "processing_time", "response_time",
    "run_epos", "run_experiment", "unhosted_cost", "utilization_variance", "weighted_cost",
]
