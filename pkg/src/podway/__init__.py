"""Discrete-event microsimulation of personal rapid transit networks."""

from .kernel import EventKind, ReplicationConfig
from .network import NetworkGraph, generate_benchmark, load_graph, validate_graph
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict, validate_scenario
from .simulation import RunOutput, Simulation, run_replication

__all__ = [
    "EventKind", "NetworkGraph", "ReplicationConfig", "RunOutput", "Scenario", "ScenarioError",
    "Simulation", "generate_benchmark", "load_graph", "load_scenario", "run_replication",
    "scenario_from_dict", "validate_graph", "validate_scenario",
]
__version__ = "0.1.0"
