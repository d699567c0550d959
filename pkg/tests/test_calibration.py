import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from seqvad.calibration import (
    calibrate,
    compute_d_alpha,
    compute_omega0,
    compute_theta,
    compute_threshold,
    compute_v_m,
    estimate_phi,
    far_bound,
    lambert_w,
)
from seqvad.errors import (
    CalibrationError,
    InsufficientDataError,
    NumericError,
    ValidationError,
)
from seqvad.model import model_to_dict
from seqvad.synth import ScenarioConfig, generate_scenario


class TestDAlpha:
    def test_nearest_rank_hundred(self):
        distances = [round(0.01 * i, 2) for i in range(1, 101)]
        assert compute_d_alpha(distances, 0.05) == pytest.approx(0.95)

    def test_alpha_zero_is_max(self):
        assert compute_d_alpha([3.0, 1.0, 2.0], 0.0) == 3.0

    def test_single_value(self):
        assert compute_d_alpha([0.7], 0.3) == 0.7

    def test_small_n_boundary(self):
        # (1 - 0.1) * 10 = 9 exactly; float fuzz must not push the rank to 10.
        assert compute_d_alpha(list(range(1, 11)), 0.1) == 9

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(0)
        distances = rng.random(57)
        values = [compute_d_alpha(distances, a) for a in np.linspace(0.0, 0.9, 10)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            compute_d_alpha([], 0.1)


class TestVm:
    def test_known_values(self):
        assert compute_v_m(1) == pytest.approx(2.0, abs=1e-12)
        assert compute_v_m(2) == pytest.approx(math.pi, abs=1e-12)
        assert compute_v_m(3) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-12)

    def test_recurrence(self):
        for m in range(3, 31):
            expected = compute_v_m(m - 2) * 2.0 * math.pi / m
            assert compute_v_m(m) == pytest.approx(expected, rel=1e-12)

    def test_against_gamma_function(self):
        for m in range(1, 40):
            ref = math.pi ** (m / 2) / scipy.special.gamma(m / 2 + 1)
            assert compute_v_m(m) == pytest.approx(ref, rel=1e-12)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            compute_v_m(0)


class TestLambertW:
    def test_trivial_points(self):
        assert lambert_w("principal", 0.0) == 0.0
        assert lambert_w("principal", math.e) == pytest.approx(1.0, abs=1e-10)
        assert lambert_w("minus_one", -math.exp(-1.0)) == pytest.approx(-1.0, abs=1e-10)
        assert lambert_w("principal", -math.exp(-1.0)) == pytest.approx(-1.0, abs=1e-10)

    def test_residual_principal(self):
        rng = np.random.default_rng(1)
        xs = rng.uniform(-math.exp(-1.0), 50.0, size=1000)
        for x in xs:
            w = lambert_w("principal", float(x))
            assert abs(w * math.exp(w) - x) <= 1e-12

    def test_residual_minus_one(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(-math.exp(-1.0), -1e-12, size=1000)
        for x in xs:
            w = lambert_w("minus_one", float(x))
            assert w <= -1.0 + 1e-9
            assert abs(w * math.exp(w) - x) <= 1e-12

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        for x in rng.uniform(-math.exp(-1.0) + 1e-6, 5.0, size=50):
            assert lambert_w("principal", float(x)) == pytest.approx(
                float(scipy.special.lambertw(x, 0).real), rel=1e-9, abs=1e-12
            )
        for x in rng.uniform(-math.exp(-1.0) + 1e-6, -1e-3, size=50):
            assert lambert_w("minus_one", float(x)) == pytest.approx(
                float(scipy.special.lambertw(x, -1).real), rel=1e-9
            )

    def test_domain_errors(self):
        with pytest.raises(ValidationError):
            lambert_w("principal", -1.0)
        with pytest.raises(ValidationError):
            lambert_w("minus_one", 0.1)
        with pytest.raises(ValidationError):
            lambert_w("minus_one", -1.0)


class TestPhi:
    def test_basic(self):
        assert estimate_phi([0.5, 1.5, 2.0], 1.0, 1) == pytest.approx(1.0)

    def test_safety_factor(self):
        assert estimate_phi([0.5, 1.5, 2.0], 1.0, 1, 1.5) == pytest.approx(1.5)

    def test_degenerate(self):
        with pytest.raises(CalibrationError):
            estimate_phi([0.2, 0.3], 0.5, 1)


class TestOmega0:
    def test_worked_example(self):
        # m=2, d_alpha=0.5, phi=2: theta = pi * exp(-pi/4), omega0 about 1.809.
        v_m = compute_v_m(2)
        theta = compute_theta(v_m, 0.5, 2)
        assert theta == pytest.approx(math.pi * math.exp(-math.pi / 4.0), rel=1e-12)
        omega0 = compute_omega0(v_m, 0.5, 2, 2.0)
        assert omega0 == pytest.approx(1.8088681934871464, abs=1e-6)
        assert omega0 != v_m
        # The Lambert-W root satisfies the defining identity.
        w = (v_m - theta - omega0) * 2.0
        q = 2.0 * theta
        assert abs(w * math.exp(w) - (-q * math.exp(-q))) <= 1e-10

    def test_degenerate_branch_gives_v_m(self):
        # Substituting W = -phi*theta collapses the expression to exactly v_m.
        v_m = compute_v_m(3)
        theta = compute_theta(v_m, 0.3, 3)
        phi = 0.9
        w_degenerate = -phi * theta
        assert v_m - theta - w_degenerate / phi == pytest.approx(v_m, rel=1e-15)

    def test_coalesced_roots_rejected(self):
        # Pick phi so phi * theta = 1 exactly.
        v_m = compute_v_m(2)
        theta = compute_theta(v_m, 0.4, 2)
        with pytest.raises(NumericError):
            compute_omega0(v_m, 0.4, 2, 1.0 / theta)

    def test_equation_residual_random(self):
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 200:
            m = int(rng.integers(1, 12))
            d_alpha = float(rng.uniform(0.05, 0.9))
            phi = float(rng.uniform(1e-3, 3.0))
            v_m = compute_v_m(m)
            theta = compute_theta(v_m, d_alpha, m)
            if abs(phi * theta - 1.0) < 1e-6:
                continue
            omega0 = compute_omega0(v_m, d_alpha, m, phi)
            # omega0 solves: omega0 = v_m - theta - W(-q e^-q)/phi on the
            # selected branch; check the W identity through the residual.
            w = (v_m - theta - omega0) * phi
            q = phi * theta
            assert abs(w * math.exp(w) - (-q * math.exp(-q))) <= 1e-9
            assert omega0 > 0 and omega0 != v_m
            checked += 1


class TestThresholdAndBound:
    def test_threshold_values(self):
        assert compute_threshold(1.0, 0.05) == pytest.approx(-math.log(0.05), rel=1e-12)
        assert compute_threshold(1.0, 1.0) == 0.0
        assert compute_threshold(0.5, 0.01) == pytest.approx(math.log(100.0) / 0.5, rel=1e-12)

    def test_far_bound_values(self):
        assert far_bound(1.0, 0.0) == 1.0
        assert far_bound(1.0, -math.log(0.05)) == pytest.approx(0.05, rel=1e-12)
        assert far_bound(2.0, 1.0) == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            omega0 = float(rng.uniform(0.01, 50.0))
            beta = float(rng.uniform(1e-4, 1.0))
            assert far_bound(omega0, compute_threshold(omega0, beta)) == pytest.approx(
                beta, abs=1e-12
            )

    @given(
        st.floats(0.01, 50.0),
        st.floats(0.001, 0.99),
        st.floats(0.001, 0.99),
    )
    @settings(max_examples=100, deadline=None)
    def test_threshold_strictly_decreasing_in_beta(self, omega0, b1, b2):
        lo, hi = sorted((b1, b2))
        if lo >= hi * (1.0 - 1e-9):
            return  # betas closer than float resolution of the log
        assert compute_threshold(omega0, lo) > compute_threshold(omega0, hi)

    def test_threshold_decreasing_in_omega0(self):
        hs = [compute_threshold(w, 0.05) for w in (0.1, 1.0, 10.0)]
        assert hs[0] > hs[1] > hs[2]


class TestCalibratePipeline:
    @pytest.fixture(scope="class")
    def frames(self):
        config = ScenarioConfig(
            m=3, n_train_frames=400, objects_per_frame=(1, 2),
            anomaly_windows=((),), n_videos=1, seed=12,
        )
        train, _, _ = generate_scenario(config)
        return train

    def test_deterministic(self, frames):
        a = calibrate(frames, alpha=0.05, beta=0.05, k=5)
        b = calibrate(frames, alpha=0.05, beta=0.05, k=5)
        assert model_to_dict(a) == model_to_dict(b)

    def test_bound_holds_by_construction(self, frames):
        model = calibrate(frames, alpha=0.05, beta=0.02, k=5)
        c = model.calibration
        assert far_bound(c.omega0, c.h) == pytest.approx(0.02, abs=1e-12)
        assert c.d_alpha <= c.d_max

    def test_no_training_frames(self):
        with pytest.raises(InsufficientDataError):
            calibrate([], k=5)
