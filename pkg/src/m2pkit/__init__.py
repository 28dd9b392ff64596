"""Head-pose prediction and motion-to-photon latency tools for remote rendering."""

from .ar import ArModel, fit, forecast_multi, forecast_one, select_lag_aic
from .evaluation import MaeReport, evaluate_trace, export_report, sweep_lat
from .latency import EncoderProfile, LatencyBudget, display_latency, encode_latency, total_m2p
from .predictor import ModelPair, PredictionConfig, predict_pose, run_prediction_schedule, train_default_models
from .trace import PoseSample, RawTrace, UniformTrace, channel, load_trace, resample

__version__ = "0.1.0"
