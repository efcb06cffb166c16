"""Riemannian decoding of movement start/stop intent from EEG covariances.

The package covers the full loop: synthetic session generation, covariance
features on the SPD manifold, minimum-distance-to-mean classification with
task- or fixation-based recentering, threshold-and-hold decision logic with
an assistance gate, and offline analytics.
"""

__version__ = "0.1.0"

from .analysis import (ErdMap, RunMetrics, auc, bootstrap_ci, erd_ers_map,
                       latency_summary, margin_shift, outcome_latency_stats,
                       wilcoxon_exact)
from .config import DEFAULTS, config_hash, load_config
from .decoder import (ClassPrototypes, SelectedThreshold, auto_temperature,
                      ema_update, fit_prototypes, margin, posterior,
                      prototype_distances, select_threshold, smooth_trace)
from .errors import (BadArgumentError, ClassStarvationError, ConfigError,
                     ConvergenceError, DegenerateWindowError,
                     EmptySessionError, FormatError, NumericDomainError,
                     PipelineError, ProtocolError, ReferenceUnavailableError,
                     ShapeError, ThresholdInfeasibleError,
                     UndefinedMetricError)
from .io import read_eeg, read_session, write_eeg, write_session
from .pipeline import (CalibratedModel, RunLog, SessionLog, analyze, calibrate,
                       outcome_counts, replay, run_aucs, run_metrics,
                       session_bias)
from .preprocess import OnlineBandpass, StreamConfig, preprocess_stream
from .recenter import (FixationConfig, RecenterReference, apply_recenter,
                       fit_fixation_reference, update_task_reference)
from .session import (FrameRecord, PosteriorTrace, SessionConfig, TrialRecord,
                      TrialStateMachine, classify_outcomes, gate_torque,
                      run_trial)
from .spd import (FrechetConfig, airm_distance, congruence, eigenvalue_shrink,
                  frechet_mean, geodesic, identity_shrink, log_euclidean_mean,
                  spd_invsqrt, spd_log, spd_power, spd_sqrt, sym_exp,
                  symmetrize)
from .synth import (GroundTruth, RhythmSource, SessionSpec, TrialTruth,
                    fixation_window_mask, generate_session, label_windows,
                    make_default_spec)
