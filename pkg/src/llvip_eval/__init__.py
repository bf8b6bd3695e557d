"""Evaluation toolkit for visible-to-infrared translation and pedestrian detection."""

__version__ = "0.1.0"

from .detection import (Box, Detection, GroundTruthBox, average_precision, evaluate, iou,  # noqa: E402
                        match_detections, nms, precision_recall)
from .image import Image, center_crop, decode_image, preprocess_pair, resize, to_grayscale  # noqa: E402
from .pyramid import (aggregate_pyramid_loss, build_pyramid, downsample, gaussian_blur,  # noqa: E402
                      make_kernel, scale_loss)
from .quality import aggregate_quality, mse, psnr, ssim  # noqa: E402
