"""Rotated-box IoU, Gaussian box modeling and the KFIoU regression loss."""

from .consistency import PairProtocol, SimReport, angle_sweep, aspect_sweep, emean_evar, evaluate_methods
from .diff import Dual, grad_check, grad_kf_loss
from .gaussian import (
    Gaussian,
    GaussianProduct,
    NotSPDError,
    box_to_gaussian,
    box2d_to_gaussian,
    box3d_to_gaussian,
    gaussian_product,
    gaussian_to_box,
    gaussian_volume,
)
from .geometry import (
    Convention,
    ConvexPolygon,
    InvalidBoxError,
    RotatedBox2D,
    RotatedBox3D,
    canonicalize,
    convex_clip,
    polygon_area,
    rasterized_iou,
    skew_iou_2d,
    skew_iou_3d,
)
from .losses import (
    AngleMode,
    CenterForm,
    KFForm,
    LossConfig,
    decode_box,
    encode_box,
    gwd_distance,
    gwd_loss,
    kf_loss,
    kfiou,
    kfiou_rescaled,
    kfiou_upper_bound,
    kld_distance,
    kld_loss,
    regression_loss,
)

__version__ = "0.1.0"
