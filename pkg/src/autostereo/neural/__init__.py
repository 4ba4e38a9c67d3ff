"""Networks with a disparity-convolution front end, their training and evaluation."""

from .applications import (Hit, NeuralgramResult, features, precision_at_k, retrieve,
                           self_decode_psnr, synthesize_neural_autostereogram)
from .evaluate import EvalReport, EvalRow, accuracy, decode, evaluate, predict, score
from .models import ModelConfig, ResNetLite, UNetTiny, build_model, variant
from .training import (TrainConfig, TrainResult, load_model, save_model, train_classifier,
                       train_decoder, train_watermark, watermark_batch, write_loss_csv)

__all__ = [
    "ModelConfig", "UNetTiny", "ResNetLite", "build_model", "variant",
    "TrainConfig", "TrainResult", "train_decoder", "train_classifier", "train_watermark",
    "watermark_batch", "save_model", "load_model", "write_loss_csv",
    "EvalReport", "EvalRow", "evaluate", "predict", "decode", "score", "accuracy",
    "retrieve", "features", "Hit", "precision_at_k",
    "synthesize_neural_autostereogram", "NeuralgramResult", "self_decode_psnr",
]
