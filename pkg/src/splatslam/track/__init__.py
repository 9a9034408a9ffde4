from .align import compute_correspondences, zncc_scores
from .ba import BAEdges, BAReport, bundle_adjust, reproject_points
from .patches import Patch, PatchSet, sample_patches
from .tracker import Keyframe, TrackResult, Tracker, TrackerConfig

__all__ = ["BAEdges", "BAReport", "Keyframe", "Patch", "PatchSet",
           "TrackResult", "Tracker", "TrackerConfig", "bundle_adjust",
           "compute_correspondences", "reproject_points", "sample_patches",
           "zncc_scores"]
