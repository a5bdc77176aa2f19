"""Careful vs not-careful classification of transport motions from video.

Frames go through dense optical flow, a scalar tangential-velocity feature
at 15 Hz, threshold segmentation and a bidirectional LSTM.
"""

from .config import PipelineConfig, build_configs, load_config
from .errors import (CarefulnessError, ConfigError, DataError, InputError, InsufficientDataError,
                     StreamError, StreamIOError, TrainingError)
from .evalstats import (classification_report, kinematic_metrics, latency_stats,
                        wilcoxon_signed_rank)
from .flowcore import FlowConfig, FlowEstimator, FlowField, compute_flow, mean_motion
from .frames import Frame, FrameStream, open_stream, read_cfvid, write_cfvid
from .kinefeat import FeatureConfig, Resampler, VelocitySample, VelocitySeries, tangential_velocity
from .pipeline import RecognitionEvent, run_stream, velocity_series
from .segmenter import Segment, Segmenter, SegmenterConfig, segment_offline, segment_stream
from .seqnet import ModelParams, Prediction, TrainConfig, forward, load_model, predict, save_model, train

__version__ = "0.1.0"
