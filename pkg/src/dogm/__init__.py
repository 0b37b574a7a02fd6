"""Dynamic occupancy grid mapping with evidential masses and per-cell particle filters."""

from .cluster import ObjectCluster, extract_clusters
from .evidential import Dogm, update_map
from .grid import EvidenceMass, GridSpec, Params, Pose
from .measurement import MeasurementGrid, build_measurement_grid, dempster_combine
from .pipeline import Pipeline, RunResult, run_scenario
from .scenarios import LIBRARY
from .sensor_sim import Scenario, load_scenario, simulate_frame
from .tracker import TrackerState

__all__ = [
    "Dogm", "EvidenceMass", "GridSpec", "LIBRARY", "MeasurementGrid", "ObjectCluster", "Params", "Pipeline", "Pose",
    "RunResult", "Scenario", "TrackerState", "build_measurement_grid", "dempster_combine", "extract_clusters",
    "load_scenario", "run_scenario", "simulate_frame", "update_map",
]
