"""Lane segmentation engine: layers, losses, metrics and the training pipeline."""

try:
    from ._lanedetect import *  # noqa: F401,F403
    from ._lanedetect import LanedetectError
except ImportError:  # extension built next to the sources rather than installed
    from _lanedetect import *  # noqa: F401,F403
    from _lanedetect import LanedetectError

__all__ = [
    "LanedetectError",
    "conv2d",
    "conv2d_backward",
    "conv_transpose2d",
    "conv_transpose2d_backward",
    "maxpool2x2",
    "relu",
    "sigmoid",
    "dice_loss",
    "bce_loss",
    "mse_loss",
    "confusion",
    "threshold_grid",
    "parameter_count",
    "parameter_names",
    "binarize",
    "parse_annotation",
    "split_sizes",
    "write_shard",
    "read_shard",
    "train",
    "evaluate",
    "sweep_csv",
    "predict",
    "gradcheck",
]
__version__ = "0.1.0"
