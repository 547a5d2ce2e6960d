"""Vehicle pose, size and track estimation from planar-projected LADAR hits.

A rectangle-region matched filter whose edge weights follow the viewing
angle is fitted to each point cluster by Levenberg-Marquardt on its
closed-form response; the fit's perturbation covariance feeds a CTRV
Kalman tracker that compensates for edges leaving view.  A linear
classifier on pose-normalized occupancy grids scores vehicles against
clutter.

The match kernel is compiled when the extension is built and falls back
to numpy otherwise; ``vdamf.kernels.BACKEND`` names the one in use.
"""

from . import kernels
from .config import ClassifierConfig, RunConfig, load_config
from .discriminator import (DEFAULT_GRID, CanonicalCloud, FeatureGrid, GridConfig, LinearClassifier,
                            bin_points, canonicalize, features, roc_auc, score, synthetic_examples,
                            train)
from .filters import (DEFAULT_WEIGHTS, FilterSpec, FilterWeights, MatchState, Rect, build_filter,
                      filter_energy, normalize_filter, wrap_angle)
from .match import MatchEval, evaluate, response
from .optimize import DEFAULT_CONFIG, FitResult, OptimizerConfig, fit, initialize_state
from .scan import Cluster, Frame, cluster_points, remove_ground, viewing_angle
from .synth import Scene, SceneObject, SensorModel, Trajectory, render_frame, render_frames
from .tracker import Track, Tracker, TrackerConfig, measure, segment_frame, step_frame
from .uncertainty import Measurement, VisibleEdges, covariance_or_fallback, pose_covariance
from .visibility import SizeMemory, anchor_correction, detect_visibility_loss, mask_covariance

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "ClassifierConfig", "RunConfig", "load_config",
    "DEFAULT_GRID", "CanonicalCloud", "FeatureGrid", "GridConfig", "LinearClassifier",
    "bin_points", "canonicalize", "features", "roc_auc", "score", "synthetic_examples", "train",
    "DEFAULT_WEIGHTS", "FilterSpec", "FilterWeights", "MatchState", "Rect", "build_filter",
    "filter_energy", "normalize_filter", "wrap_angle",
    "MatchEval", "evaluate", "response",
    "DEFAULT_CONFIG", "FitResult", "OptimizerConfig", "fit", "initialize_state",
    "Cluster", "Frame", "cluster_points", "remove_ground", "viewing_angle",
    "Scene", "SceneObject", "SensorModel", "Trajectory", "render_frame", "render_frames",
    "Track", "Tracker", "TrackerConfig", "measure", "segment_frame", "step_frame",
    "Measurement", "VisibleEdges", "covariance_or_fallback", "pose_covariance",
    "SizeMemory", "anchor_correction", "detect_visibility_loss", "mask_covariance",
]
