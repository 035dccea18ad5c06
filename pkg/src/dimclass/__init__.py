"""Multi-scale local dimensionality classification of 3D point clouds."""

__version__ = "0.1.0"

from .errors import DataError, DegenerateError
from .pointcloud import PointCloud, SpatialIndex, CorePointSet, load_xyz, subsample_min_distance
from .msdim import FeatureSet, make_scales, compute_features_batch, load_features, save_features
from .classifier import BinaryClassifier, train_classifier
from .classifier_io import read_svg, write_svg
from .multiclass import Cascade, PipelineStage, run_cascade, majority_vote

__all__ = [
    "__version__",
    "DataError",
    "DegenerateError",
    "PointCloud",
    "SpatialIndex",
    "CorePointSet",
    "load_xyz",
    "subsample_min_distance",
    "FeatureSet",
    "make_scales",
    "compute_features_batch",
    "load_features",
    "save_features",
    "BinaryClassifier",
    "train_classifier",
    "read_svg",
    "write_svg",
    "Cascade",
    "PipelineStage",
    "run_cascade",
    "majority_vote",
]
