"""HeAL acquisition scoring for active learning in 3D LiDAR detection.

A frame is scored by how much a detector disagrees with itself when the
scene is rotated by pi about the vertical axis: detections on both versions
become per-category Gaussian-mixture maps on a voxel grid, and the score is
the mean class-wise KL divergence between them.
"""

from .divergence import ScoreRecord, classwise_kl, heal_score, kl_divergence, score_frame
from .geometry import Box3D, rotate_box_pi_z, rotate_points_pi_z, wrap_to_pi
from .probmap import ClassProbMap, VoxelGrid, build_class_maps
from .scene_io import DetectionSet, RunConfig, read_config, read_detections, read_velodyne_bin
from .selection import ALState, advance_round, entropy_select, random_select, select_top_k

__version__ = "0.1.0"

__all__ = [
    "ALState",
    "Box3D",
    "ClassProbMap",
    "DetectionSet",
    "RunConfig",
    "ScoreRecord",
    "VoxelGrid",
    "advance_round",
    "build_class_maps",
    "classwise_kl",
    "entropy_select",
    "heal_score",
    "kl_divergence",
    "random_select",
    "read_config",
    "read_detections",
    "read_velodyne_bin",
    "rotate_box_pi_z",
    "rotate_points_pi_z",
    "score_frame",
    "select_top_k",
    "wrap_to_pi",
]
