"""Dynamic-belief quantal cognitive hierarchy planning for vehicle-pedestrian crossings."""
from .config import ScenarioConfig, case_scenario, load_scenario
from .env import Geometry, Terminal, WorldState
from .sim import AgentSpec, SimulationTrace, run_case3_probe, run_episode

__all__ = ["AgentSpec", "Geometry", "ScenarioConfig", "SimulationTrace", "Terminal",
           "WorldState", "case_scenario", "load_scenario", "run_case3_probe", "run_episode"]
__version__ = "0.1.0"
