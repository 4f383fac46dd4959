"""Cut-off dynamics: meshes, mollified cut-offs, stopping times and path geometry."""

from .geometry import (GeometryReport, OccupancyRecord, ReentryReport, TransversalityReport,
                       check_path_geometry, check_transversality, derivative_scale, derivative_scaling,
                       occupancy_table, reentry_check, sample_reentry_pairs, theta_fd_probe,
                       tube_occupancy, tube_occupancy_linear, write_occupancy_csv)
from .history import PathHistory, PolylineHash, polyline_distance_linear
from .integrate import integrate_modified, mesh_aligned_step
from .mollifiers import phi, psi1, psi2, smoothstep
from .params import DEFAULT_EPS, ConstraintError, CutoffParams, derive_params
from .stopping import (StopReport, detect_self_intersection, detect_stopping_times,
                       detect_violent_turn, self_intersection_linear, violent_turn_linear)
from .theta import HistoryGapError, theta, theta_bruteforce

__all__ = [
    "CutoffParams", "ConstraintError", "DEFAULT_EPS", "derive_params",
    "psi1", "psi2", "phi", "smoothstep",
    "PathHistory", "PolylineHash", "polyline_distance_linear",
    "theta", "theta_bruteforce", "HistoryGapError",
    "integrate_modified", "mesh_aligned_step",
    "StopReport", "detect_stopping_times", "detect_violent_turn", "detect_self_intersection",
    "violent_turn_linear", "self_intersection_linear",
    "OccupancyRecord", "tube_occupancy", "tube_occupancy_linear", "occupancy_table",
    "write_occupancy_csv", "ReentryReport", "reentry_check", "sample_reentry_pairs",
    "GeometryReport", "check_path_geometry", "TransversalityReport", "check_transversality",
    "theta_fd_probe", "derivative_scale", "derivative_scaling",
]
