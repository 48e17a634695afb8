"""Large-kernel-attention semantic segmentation engine (CPU, numpy-backed)."""

from .lka import DecoderBlock, LkaBlock, LkaConfig, lka_forward, lka_param_count
from .metrics import ConfusionMatrix, class_scores, iou_from_f1
from .model import (EncoderTaps, FusionGate, LKASegModel, ModelConfig,
                    fuse_weighted)
from .nn import (BatchNorm2d, Conv2d, ParamStore, ResBlock, linear_project,
                 load_checkpoint, save_checkpoint)
from .tensor import (ConvSpec, NumericsError, ShapeError, Tensor, TensorError,
                     activation, backward, batch_norm, bilinear_resize,
                     concat_channels, conv2d, elementwise, finite_diff_check,
                     max_pool2d, slice_channels, softmax_cross_entropy,
                     tensor_sum)
from .train import SGD, TrainConfig, eval_loop, train_loop

__version__ = "0.1.0"
