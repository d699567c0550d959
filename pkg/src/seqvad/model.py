"""The calibrated nominal profile shared by evidence computation and detection."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data_model import (
    FrameObservation,
    NormalizationStats,
    normalize_frame,
)
from .errors import ValidationError
from .evidence import (
    KnnRegressor,
    TrainingSet,
    deserialize_regressor,
    frame_evidence,
    serialize_regressor,
)

_MODEL_FORMAT = "seqvad-nominal-model"
_MODEL_VERSION = 1


@dataclass(frozen=True)
class CalibrationResult:
    """Every scalar the threshold construction needs.

    ``omega0`` is the decay exponent of the false-alarm bound
    ``exp(-omega0 * h)``; ``v_m`` is the volume of the m-dimensional unit
    ball; ``phi`` the empirical upper bound of the per-frame drift term;
    ``theta`` the intermediate constant ``v_m * exp(-v_m * d_alpha**m)``.
    """

    alpha: float
    d_alpha: float
    d_max: float
    phi: float
    v_m: float
    theta: float
    omega0: float
    beta: float
    h: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")
        if self.d_alpha > self.d_max:
            raise ValidationError(
                f"d_alpha={self.d_alpha} exceeds d_max={self.d_max}"
            )
        if self.phi <= 0 or self.omega0 <= 0 or self.h < 0:
            raise ValidationError("phi and omega0 must be positive, h non-negative")
        if self.omega0 == self.v_m:
            raise ValidationError("omega0 equals v_m: degenerate root was selected")
        bound = math.exp(-self.omega0 * self.h)
        if bound > self.beta * (1.0 + 1e-9):
            raise ValidationError(
                f"false-alarm bound {bound} exceeds requested beta={self.beta}"
            )

    @property
    def far_bound(self) -> float:
        return math.exp(-self.omega0 * self.h)


@dataclass(eq=False)
class NominalModel:
    """Immutable-by-convention container for everything detection needs.

    ``training`` holds the normalized feature matrix actually used for
    distances (already restricted to ``feature_mask`` columns when a mask is
    set). Shared read-only across any number of detector streams.
    """

    training: TrainingSet
    stats: NormalizationStats
    m: int
    calibration: CalibrationResult
    regressor: KnnRegressor | None = None
    use_regressor: bool = False
    feature_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError(f"model dimensionality must be >= 1, got {self.m}")
        if self.feature_mask is not None:
            mask = np.asarray(self.feature_mask, dtype=bool)
            if mask.shape != (self.m,):
                raise ValidationError("feature_mask length must equal model m")
            if not mask.any():
                raise ValidationError("feature_mask must keep at least one dimension")
            if self.training.dim != int(mask.sum()):
                raise ValidationError(
                    "training matrix width does not match feature_mask selection"
                )
            self.feature_mask = mask
        elif self.training.dim != self.m:
            raise ValidationError(
                f"training matrix width {self.training.dim} does not match m={self.m}"
            )
        if self.use_regressor and self.regressor is None:
            raise ValidationError("use_regressor set without a regressor")

    # Convenience accessors used throughout detection and the CLI.
    @property
    def k(self) -> int:
        return self.training.k

    @property
    def d_alpha(self) -> float:
        return self.calibration.d_alpha

    @property
    def d_max(self) -> float:
        return self.calibration.d_max

    @property
    def h(self) -> float:
        return self.calibration.h

    @property
    def omega0(self) -> float:
        return self.calibration.omega0

    @property
    def drift_offset(self) -> float:
        """The constant subtracted from each evidence power: d_alpha ** m."""
        return self.calibration.d_alpha**self.m

    def with_threshold(self, h: float, beta: float) -> "NominalModel":
        cal = replace(self.calibration, h=h, beta=beta)
        return replace(self, calibration=cal)

    def evidence_for(self, frame: FrameObservation, *, normalized: bool = False) -> float:
        """Evidence of one raw (or pre-normalized) frame."""
        if not normalized:
            frame = normalize_frame(frame, self.stats)
        return frame_evidence(frame, self)

    def evidence_series(
        self, frames: Sequence[FrameObservation], *, normalized: bool = False
    ) -> np.ndarray:
        return np.array(
            [self.evidence_for(f, normalized=normalized) for f in frames]
        )


def model_to_dict(model: NominalModel) -> dict:
    cal = model.calibration
    payload = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "m": model.m,
        "k": model.k,
        "alpha": cal.alpha,
        "beta": cal.beta,
        "d_alpha": cal.d_alpha,
        "d_max": cal.d_max,
        "phi": cal.phi,
        "v_m": cal.v_m,
        "theta": cal.theta,
        "omega0": cal.omega0,
        "h": cal.h,
        "norm_min": list(model.stats.minimum),
        "norm_max": list(model.stats.maximum),
        "features": [list(row) for row in model.training.features],
        "feature_mask": (
            None if model.feature_mask is None else [bool(v) for v in model.feature_mask]
        ),
        "use_regressor": model.use_regressor,
        "regressor": (
            None
            if model.regressor is None
            else base64.b64encode(serialize_regressor(model.regressor)).decode("ascii")
        ),
    }
    return payload


def model_from_dict(payload: dict) -> NominalModel:
    if payload.get("format") != _MODEL_FORMAT:
        raise ValidationError("not a nominal-model file")
    if payload.get("version") != _MODEL_VERSION:
        raise ValidationError(f"unsupported model version {payload.get('version')}")
    cal = CalibrationResult(
        alpha=payload["alpha"],
        d_alpha=payload["d_alpha"],
        d_max=payload["d_max"],
        phi=payload["phi"],
        v_m=payload["v_m"],
        theta=payload["theta"],
        omega0=payload["omega0"],
        beta=payload["beta"],
        h=payload["h"],
    )
    regressor = None
    if payload.get("regressor"):
        regressor = deserialize_regressor(base64.b64decode(payload["regressor"]))
    mask = payload.get("feature_mask")
    return NominalModel(
        training=TrainingSet(np.asarray(payload["features"], dtype=float), payload["k"]),
        stats=NormalizationStats(
            minimum=np.asarray(payload["norm_min"], dtype=float),
            maximum=np.asarray(payload["norm_max"], dtype=float),
        ),
        m=payload["m"],
        calibration=cal,
        regressor=regressor,
        use_regressor=payload.get("use_regressor", False),
        feature_mask=None if mask is None else np.asarray(mask, dtype=bool),
    )


def save_model(model: NominalModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> NominalModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
