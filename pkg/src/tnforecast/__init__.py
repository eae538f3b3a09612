"""Tree tensor network forecasting of chaotic flows (Lorenz, Rossler)."""

from .dataset import Pairs, Scaler, SplitDataset, build_windows, fit_scaler, prepare, split_chronological
from .dynamics import FlowSpec, Trajectory, generate_trajectory, lorenz_rhs, rk4_step, rossler_rhs
from .forecast_metrics import EvalReport, ForecastReport, predict_one_step, recursive_forecast
from .model import ParamMode, TnmModel, backward, build_model, deserialize, forward, param_count, serialize
from .training import AdamState, TrainConfig, adam_step, fit, mse

__version__ = "0.1.0"
