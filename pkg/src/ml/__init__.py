from .model import ModelDims, ModelParams, PredictionOutput, init_params, embed_frame, gru_step, forward, forward_batch, backward, decode_prediction
from .loss import LossWeights, TargetBatch, make_targets, total_loss
from .optim import NAdam, ReduceLROnPlateau, clip_by_global_norm
from .trainer import TrainingConfig, TrainingResult, train, evaluate_model, predict_curves, write_log_csv, read_log_csv
__all__ = ['ModelDims', 'ModelParams', 'PredictionOutput', 'init_params', 'embed_frame', 'gru_step', 'forward', 'forward_batch', 'backward', 'decode_prediction', 'LossWeights', 'TargetBatch', 'make_targets', 'total_loss', 'NAdam', 'ReduceLROnPlateau', 'clip_by_global_norm', 'TrainingConfig', 'TrainingResult', 'train', 'evaluate_model', 'predict_curves', 'write_log_csv', 'read_log_csv']
