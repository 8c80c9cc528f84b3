"""Observation addition: mixing, grid-searched CER supervision and the bridging predictor."""

from .bridging import BridgingModel, TrainConfig, predict_oa, train_bridging
from .features import FbankConfig, bridging_features, fbank, mel_filterbank
from .grid import CerCache, CerVector, CommandAsrOracle, OAGrid, OAUtterance, build_grid, cer_vector
from .loss import cer_target, oa_loss, oa_loss_grad
from .mixing import MixWeights, mix, mix_enhanced, mix_with_report
from .wav import WaveBuffer, channel_sum, read_wav, write_wav

__all__ = [
    "BridgingModel",
    "TrainConfig",
    "predict_oa",
    "train_bridging",
    "FbankConfig",
    "bridging_features",
    "fbank",
    "mel_filterbank",
    "CerCache",
    "CerVector",
    "CommandAsrOracle",
    "OAGrid",
    "OAUtterance",
    "build_grid",
    "cer_vector",
    "cer_target",
    "oa_loss",
    "oa_loss_grad",
    "MixWeights",
    "mix",
    "mix_enhanced",
    "mix_with_report",
    "WaveBuffer",
    "channel_sum",
    "read_wav",
    "write_wav",
]
