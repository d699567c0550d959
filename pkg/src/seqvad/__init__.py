"""Online video anomaly detection on per-frame object feature streams.

The pipeline: per-object kNN distances against a nominal training set give a
per-frame anomaly evidence score; a sequential statistic accumulates the
evidence drift and raises an alarm at a threshold calibrated in closed form
for a requested false alarm rate; offline localization marks the anomalous
window; event-based metrics score online detection quality.
"""

from .calibration import (
    calibrate,
    compute_d_alpha,
    compute_omega0,
    compute_threshold,
    compute_v_m,
    estimate_phi,
    far_bound,
    lambert_w,
)
from .data_model import (
    FrameObservation,
    GroundTruthEvent,
    NormalizationStats,
    fit_normalization,
    load_feature_stream,
    load_ground_truth,
    normalize,
    normalize_frame,
    parse_feature_stream,
    parse_ground_truth,
    save_feature_stream,
    save_ground_truth,
)
from .detector import (
    DetectionEvent,
    DetectorState,
    RnnDetector,
    adapt_few_shot,
    count_restart_alarms,
    detect_stream,
    fixed_weight_detector,
    generate_synthetic_evidence,
    localize,
    rnn_update,
    run_statistics,
    train_rnn_detector,
    update,
)
from .errors import (
    CalibrationError,
    DimensionMismatchError,
    EngineError,
    InsufficientDataError,
    NumericError,
    ParseError,
    ValidationError,
)
from .evidence import (
    KnnRegressor,
    TrainingSet,
    frame_evidence,
    knn_distance,
    knn_distance_brute,
    knn_distances,
    leave_one_out_distances,
    regressor_predict,
    train_knn_regressor,
)
from .metrics import (
    EvalReport,
    PrecisionDelayCurve,
    alarm_runs,
    apd,
    frame_auc,
    measure_far,
    precision_delay_curve,
)
from .model import CalibrationResult, NominalModel, load_model, save_model
from .synth import (
    ScenarioConfig,
    generate_nominal_matrix,
    generate_nominal_stream,
    generate_scenario,
    inject_outlier_frames,
)

__version__ = "0.1.0"
