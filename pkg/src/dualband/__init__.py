"""Dual-band mmWave/Sub-6 GHz blockage prediction simulator."""
from .channel import BandConfig, ChannelState, LinkMode, channel_state, fspl_db, qpsk_ber, shannon_capacity_bps
from .codec import LatentCode, LatentCodec, PriorModel, RdReport, decode, discrete_prob, encode, fit_frames_prior, rd_report
from .config import ExperimentConfig
from .dataset import SplitDataset, WindowedSample, balance, split, window_and_label
from .errors import (
    BalanceError,
    ConfigurationError,
    DecodeError,
    DomainError,
    DualBandError,
    ParseError,
    SizingError,
    TrainingError,
)
from .predictor import (
    ConfusionPredictor,
    ConstantPredictor,
    LogisticModel,
    LogisticRegressionGD,
    OraclePredictor,
    WindowFeaturizer,
    evaluate,
    extract_features,
    predict,
    train_logistic,
)
from .scene import LinkTrace, ScenarioConfig, export_trace, generate_trace, import_trace
from .simulator import (
    PolicyConfig,
    PolicyMode,
    RunReport,
    StepMetrics,
    TrainingSetup,
    gamma_sweep,
    run,
    sweep_ber,
    sweep_blockages,
    train_predictor,
)

__version__ = "0.1.0"
