"""Threshold calibration from nominal training data.

The decision threshold ``h`` is set in closed form so that the false alarm
rate of the sequential detector stays below a requested ``beta``:

    h = -log(beta) / omega0,     FAR <= exp(-omega0 * h) = beta,

where ``omega0`` is computed from training statistics (the evidence
percentile ``d_alpha``, the drift upper bound ``phi``, the unit-ball volume
``v_m``) through a Lambert-W expression. Everything here is a pure function;
``calibrate`` assembles the full pipeline into a ``NominalModel``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .data_model import (
    FrameObservation,
    fit_normalization,
    normalize_frame,
)
from .errors import (
    CalibrationError,
    InsufficientDataError,
    NumericError,
    ValidationError,
)
from .evidence import (
    RegressorTrainingConfig,
    TrainingSet,
    leave_one_out_distances,
    train_knn_regressor,
)
from .model import CalibrationResult, NominalModel

_BRANCH_POINT = -math.exp(-1.0)


def compute_d_alpha(distances: Sequence[float], alpha: float) -> float:
    """Nearest-rank (1 - alpha) percentile of nominal distances.

    The ceil((1-alpha)*N)-th smallest value, without interpolation;
    ``alpha = 0`` returns the maximum.
    """
    values = np.asarray(distances, dtype=float)
    if values.size == 0:
        raise InsufficientDataError("cannot take a percentile of an empty list")
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha must lie in [0, 1), got {alpha}")
    n = values.size
    # The small slack absorbs float rounding in (1-alpha)*n at integer targets.
    rank = math.ceil((1.0 - alpha) * n - 1e-9)
    rank = min(max(rank, 1), n)
    return float(np.partition(values, rank - 1)[rank - 1])


def compute_v_m(m: int) -> float:
    """Volume of the unit ball in m dimensions, pi**(m/2) / gamma(m/2 + 1).

    Evaluated through exact integer/half-integer gamma values so the only
    rounding is the final float conversion.
    """
    if m < 1:
        raise ValidationError(f"dimensionality must be >= 1, got {m}")
    if m % 2 == 0:
        half = m // 2
        return math.pi**half / float(math.factorial(half))
    j = (m + 1) // 2
    # gamma(j + 1/2) = (2j)! * sqrt(pi) / (4**j * j!)
    ratio = Fraction(4**j * math.factorial(j), math.factorial(2 * j))
    return math.pi ** ((m - 1) / 2) * float(ratio)


def _halley(x: float, w: float) -> float:
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-13 * (1.0 + abs(x)):
            break
        wp1 = w + 1.0
        if wp1 == 0.0:
            w += 1e-9
            continue
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def lambert_w(branch: str, x: float) -> float:
    """Solve w * exp(w) = x on the requested real branch.

    ``principal`` covers x >= -1/e (w >= -1); ``minus_one`` covers
    -1/e <= x < 0 (w <= -1). Halley iteration from a branch-appropriate
    initial guess, converged to absolute residual <= 1e-12.
    """
    if not math.isfinite(x):
        raise ValidationError(f"lambert_w argument must be finite, got {x}")
    near_branch_point = abs(x - _BRANCH_POINT) <= 4.0 * abs(_BRANCH_POINT) * 2.3e-16
    if branch == "principal":
        if x < _BRANCH_POINT and not near_branch_point:
            raise ValidationError(f"principal branch needs x >= -1/e, got {x}")
        if near_branch_point:
            return -1.0
        if x == 0.0:
            return 0.0
        if x < -0.25:
            p = math.sqrt(2.0 * (math.e * x + 1.0))
            guess = -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
        elif x < math.e:
            guess = x / (1.0 + x) if x > -0.2 else x * math.exp(-x)
        else:
            lx = math.log(x)
            guess = lx - math.log(lx)
        return _halley(x, guess)
    if branch == "minus_one":
        if x >= 0.0 or (x < _BRANCH_POINT and not near_branch_point):
            raise ValidationError(f"minus_one branch needs -1/e <= x < 0, got {x}")
        if near_branch_point:
            return -1.0
        if x > -0.25:
            l1 = math.log(-x)
            l2 = math.log(-l1)
            guess = l1 - l2 + l2 / l1
        else:
            p = math.sqrt(2.0 * (math.e * x + 1.0))
            guess = -1.0 - p - p * p / 3.0
        return _halley(x, guess)
    raise ValidationError(f"unknown branch {branch!r}")


def estimate_phi(
    evidences: Sequence[float], d_alpha: float, m: int, safety_factor: float = 1.0
) -> float:
    """Empirical upper bound of the per-frame drift term.

    The training maximum of ``D**m - d_alpha**m``, optionally inflated by a
    safety factor.
    """
    values = np.asarray(evidences, dtype=float)
    if values.size == 0:
        raise InsufficientDataError("cannot estimate phi from an empty list")
    if safety_factor <= 0:
        raise ValidationError("safety factor must be positive")
    phi = float((values.max() ** m - d_alpha**m) * safety_factor)
    if phi <= 0:
        raise CalibrationError(
            "all training evidence lies at or below d_alpha; the drift bound "
            "phi is not positive (degenerate training set)"
        )
    return phi


def compute_omega0(v_m: float, d_alpha: float, m: int, phi: float) -> float:
    """Exponent of the false-alarm bound, via the non-degenerate Lambert-W root.

    With q = phi * theta, the equation has the trivial root W = -q on one
    branch, which collapses the result to v_m and carries no information from
    training; the other branch is selected (principal for q > 1, minus_one
    for q < 1). Both roots coalesce at q = 1, which is rejected.
    """
    if phi <= 0:
        raise ValidationError(f"phi must be positive, got {phi}")
    if v_m <= 0 or d_alpha < 0:
        raise ValidationError("v_m must be positive and d_alpha non-negative")
    theta = v_m * math.exp(-v_m * d_alpha**m)
    q = phi * theta
    if not math.isfinite(q) or q <= 0:
        raise NumericError(f"phi * theta = {q} is not a positive finite number")
    if abs(q - 1.0) < 1e-9:
        raise NumericError(
            "phi * theta is 1 to within 1e-9: both Lambert-W roots coalesce"
        )
    arg = -q * math.exp(-q)
    branch = "principal" if q > 1.0 else "minus_one"
    w = lambert_w(branch, arg)
    omega0 = v_m - theta - w / phi
    if not math.isfinite(omega0) or omega0 <= 0:
        raise NumericError(f"omega0 = {omega0} is not positive and finite")
    if omega0 == v_m:
        raise NumericError("omega0 collapsed to v_m (degenerate root)")
    return omega0


def compute_theta(v_m: float, d_alpha: float, m: int) -> float:
    return v_m * math.exp(-v_m * d_alpha**m)


def compute_threshold(omega0: float, beta: float) -> float:
    """Closed-form threshold h = -log(beta) / omega0."""
    if omega0 <= 0:
        raise ValidationError(f"omega0 must be positive, got {omega0}")
    if not 0.0 < beta <= 1.0:
        raise ValidationError(f"beta must lie in (0, 1], got {beta}")
    return -math.log(beta) / omega0


def far_bound(omega0: float, h: float) -> float:
    """Upper bound on the false alarm rate at threshold h: exp(-omega0 * h)."""
    if omega0 <= 0:
        raise ValidationError(f"omega0 must be positive, got {omega0}")
    if h < 0:
        raise ValidationError(f"threshold must be non-negative, got {h}")
    return math.exp(-omega0 * h)


def training_evidences(
    frames: Sequence[FrameObservation], features: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-out per-object distances and the per-frame maxima.

    ``features`` is the normalized object matrix obtained by stacking the
    frames' objects in order. Frames with no objects score 0.
    """
    object_dist = leave_one_out_distances(features, k)
    evidences = np.zeros(len(frames))
    offset = 0
    for i, frame in enumerate(frames):
        c = frame.n_objects
        if c:
            evidences[i] = object_dist[offset : offset + c].max()
            offset += c
    return object_dist, evidences


def calibrate(
    train: Iterable[FrameObservation],
    alpha: float = 0.05,
    beta: float = 0.05,
    k: int = 10,
    *,
    phi_safety: float = 1.0,
    feature_mask: np.ndarray | None = None,
    train_regressor: bool = False,
    regressor_lambda: float = 1e-6,
    regressor_config: RegressorTrainingConfig | None = None,
    seed: int = 0,
) -> NominalModel:
    """Full calibration pipeline on raw training frames.

    Fits normalization, computes leave-one-out kNN evidence, the percentile
    ``d_alpha`` and maximum ``d_max``, the drift bound ``phi``, the exponent
    ``omega0`` and the threshold ``h``, and assembles an immutable model.
    Deterministic: calibrating twice on identical data yields identical
    models.
    """
    frames = list(train)
    if not frames:
        raise InsufficientDataError("no training frames")
    stats = fit_normalization(frames)
    m = stats.dim
    normalized = [normalize_frame(f, stats) for f in frames]
    mask = None
    if feature_mask is not None:
        mask = np.asarray(feature_mask, dtype=bool)
        if mask.shape != (m,):
            raise ValidationError("feature_mask length must equal data dimensionality")
    stacked = [f.objects for f in normalized if f.n_objects]
    features = np.vstack(stacked)
    if mask is not None:
        features = features[:, mask]
    object_dist, evidences = training_evidences(normalized, features, k)

    d_alpha = compute_d_alpha(evidences, alpha)
    d_max = float(evidences.max())
    phi = estimate_phi(evidences, d_alpha, m, phi_safety)
    v_m = compute_v_m(m)
    theta = compute_theta(v_m, d_alpha, m)
    omega0 = compute_omega0(v_m, d_alpha, m, phi)
    h = compute_threshold(omega0, beta)
    calibration = CalibrationResult(
        alpha=alpha,
        d_alpha=d_alpha,
        d_max=d_max,
        phi=phi,
        v_m=v_m,
        theta=theta,
        omega0=omega0,
        beta=beta,
        h=h,
    )
    training = TrainingSet(features, k)
    regressor = None
    if train_regressor:
        regressor = train_knn_regressor(
            training,
            object_dist,
            regressor_lambda,
            regressor_config or RegressorTrainingConfig(),
            seed=seed,
        )
    return NominalModel(
        training=training,
        stats=stats,
        m=m,
        calibration=calibration,
        regressor=regressor,
        use_regressor=False,
        feature_mask=mask,
    )
