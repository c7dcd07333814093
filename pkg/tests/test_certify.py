import math

import numpy as np
import pytest

from subharnack import bernstein as bn
from subharnack import certify as ct
from subharnack import pathgen as pg
from subharnack import sde
from subharnack.observables import get_observable
from subharnack.stats import MCEstimate


def linear_law():
    return pg.ClockLaw(bn.LinearBernstein())


class TestEstimateAlgebra:
    def test_merge_matches_pooled_samples(self):
        gen = np.random.default_rng(0)
        a = gen.normal(size=500)
        b = gen.normal(loc=0.3, size=700)
        merged = MCEstimate.from_samples(a).merge(MCEstimate.from_samples(b))
        pooled = MCEstimate.from_samples(np.concatenate([a, b]))
        assert merged.mean == pytest.approx(pooled.mean, rel=1e-12)
        assert merged.stderr == pytest.approx(pooled.stderr, rel=1e-10)
        assert merged.n == pooled.n

    def test_merge_associative(self):
        gen = np.random.default_rng(1)
        parts = [MCEstimate.from_samples(gen.normal(size=n)) for n in (50, 80, 120)]
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        assert left.mean == pytest.approx(right.mean, rel=1e-12)
        assert left.stderr == pytest.approx(right.stderr, rel=1e-10)

    def test_log_transform_folds_bias_into_stderr(self):
        est = MCEstimate(mean=2.0, stderr=0.1, n=100)
        logged = est.log()
        assert logged.mean == pytest.approx(math.log(2.0))
        assert logged.stderr == pytest.approx(0.05 + 0.1**2 / (2 * 4.0))


class TestVerdictPolicy:
    def _report(self, lhs_mean, rhs_mean, se):
        return ct.HarnackReport.build(
            "unit", {}, MCEstimate(lhs_mean, se, 100), MCEstimate(rhs_mean, se, 100)
        )

    def test_certified_above_minus_three(self):
        assert self._report(1.0, 1.0, 0.1).verdict == "certified"
        assert self._report(1.2, 1.0, 0.1).verdict == "certified"  # z ~ -1.41

    def test_violated_below_minus_five(self):
        assert self._report(2.0, 1.0, 0.1).verdict == "violated"

    def test_inconclusive_between(self):
        report = self._report(1.6, 1.0, 0.1)  # z ~ -4.2
        assert report.verdict == "inconclusive"

    def test_deterministic_edge(self):
        report = ct.HarnackReport.build(
            "unit", {}, MCEstimate.exact(0.0), MCEstimate.exact(0.0)
        )
        assert report.verdict == "certified"
        assert report.z_score == 0.0

    def test_report_dict_schema(self):
        doc = self._report(1.0, 1.2, 0.05).to_dict()
        assert set(doc) == {
            "inequality", "params", "lhs", "rhs", "slack", "z_score",
            "verdict", "form", "notes", "runtime_seconds", "seed",
        }
        assert set(doc["lhs"]) == {"mean", "stderr", "n"}


class TestRateConstant:
    def test_deterministic_clock_exact(self):
        # linear clock, K = 0, lambda = 1, T = 2: inf over t of 1/t = 1/2
        model = sde.make_model("zero", dim=1)
        result = ct.harnack_rate_constant(
            model, linear_law(), 2.0, n_paths=1000, stream=pg.RngStream(1, purpose="rc")
        )
        assert result.infimum.mean == pytest.approx(0.5, abs=1e-12)
        assert result.infimum.stderr == pytest.approx(0.0, abs=1e-12)
        assert result.argmin_t == pytest.approx(2.0)
        assert not result.divergent

    def test_expanding_bound_attained_at_horizon(self):
        # K = 1: E[1 / int_0^t e^{-2s} ds] decreases in t; inf at t = T = 1
        model = sde.SdeModel(
            dim=1,
            drift=sde.DriftModel(func=lambda t, x: np.zeros_like(x), one_sided_bound=lambda t: 1.0),
            diffusion=sde.DiffusionModel.isotropic(1.0),
            perturbation=sde.PerturbationModel.zero(1),
        )
        resolution = 4096
        result = ct.harnack_rate_constant(
            model, linear_law(), 1.0, n_paths=1000,
            stream=pg.RngStream(2, purpose="rc2"), resolution=resolution,
        )
        expected = 2.0 / (1.0 - math.exp(-2.0))
        assert result.infimum.mean == pytest.approx(expected, abs=expected * 4.0 / resolution)

    def test_cross_module_oracle_all_clocks(self):
        # K = 0, lambda = 1: the rate constant is E[1/S(t)], matching the
        # quadrature moments from the analytic layer
        model = sde.make_model("zero", dim=1)
        cases = [
            (bn.StableBernstein(0.75), [0.05, 0.2, 1.0]),
            (bn.StableBernstein(0.6), [0.2, 1.0]),
            (bn.GammaBernstein(4.0, 1.0), [0.5, 1.0]),
            (bn.TemperedStableBernstein(0.6, 0.5), [0.2, 1.0]),
        ]
        for clock, t_grid in cases:
            law = pg.ClockLaw(clock)
            result = ct.harnack_rate_constant(
                model, law, 1.0, t_grid=np.asarray(t_grid), n_paths=100_000,
                stream=pg.RngStream(3, purpose=f"rc3-{type(clock).__name__}"),
            )
            for t, est in zip(result.t_grid, result.per_t):
                ref = bn.inverse_moment(clock, 1, t)
                assert abs(est.mean - ref) < 3.0 * est.stderr, (clock, t)

    def test_divergence_flagged_for_vanishing_mass(self):
        # gamma increments with tiny shape underflow to zero mass near t=0,
        # matching the analytically infinite moment
        model = sde.make_model("zero", dim=1)
        law = pg.ClockLaw(bn.GammaBernstein(1.0, 1.0))
        result = ct.harnack_rate_constant(
            model, law, 1.0, t_grid=np.array([1e-3, 1.0]), n_paths=2000,
            stream=pg.RngStream(4, purpose="rc4"),
        )
        assert result.infinite_fraction > 0.01
        assert result.divergent


class TestLogHarnack:
    def test_jensen_consistency_equal_points(self):
        for name in ("zero", "ou", "double_well", "rotating"):
            model = sde.make_model(name, dim=2)
            f = get_observable("sin1", 2)
            report = ct.log_harnack_certificate(
                f, [0.4, -0.2], [0.4, -0.2], 1.0, model, linear_law(), 20_000,
                pg.RngStream(5, purpose=f"jensen-{name}"),
                grid=pg.TimeGrid.uniform(1.0, 200),
            )
            assert report.verdict == "certified", name

    def test_sharp_brownian_case(self):
        # LHS and RHS are both exactly 1; the z-score must stay calibrated
        model = sde.make_model("zero", dim=2)
        f = get_observable("exp_a", 2, direction=[1.0, 0.0])
        report = ct.log_harnack_certificate(
            f, [0.0, 0.0], [1.0, 0.0], 1.0, model, linear_law(), 100_000,
            pg.RngStream(6, purpose="sharp"), grid=pg.TimeGrid.uniform(1.0, 100),
        )
        assert report.verdict == "certified"
        assert -3.0 <= report.z_score <= 3.0
        assert report.lhs.mean == pytest.approx(1.0, abs=3.0 * report.lhs.stderr)
        assert report.rhs.mean == pytest.approx(1.0, abs=3.0 * report.rhs.stderr)

    def test_double_well_stable_certified(self):
        # the cubic drift needs the semi-implicit step under unbounded
        # stable-clock kicks; explicit Euler can blow up on rare paths
        model = sde.make_model("double_well", dim=1)
        f = get_observable("sin1", 1)
        law = pg.ClockLaw(bn.StableBernstein(0.75))
        report = ct.log_harnack_certificate(
            f, [0.0], [1.0], 1.0, model, law, 50_000,
            pg.RngStream(7, purpose="dw"), grid=pg.TimeGrid.uniform(1.0, 400),
            method="semi_implicit",
        )
        assert report.verdict == "certified"

    def test_nonpositive_observable_rejected(self):
        model = sde.make_model("zero", dim=1)
        with pytest.raises(ValueError, match="strictly positive"):
            ct.log_harnack_certificate(
                lambda z: np.sin(z[:, 0]), [0.0], [1.0], 1.0, model, linear_law(),
                2000, pg.RngStream(8, purpose="neg"), grid=pg.TimeGrid.uniform(1.0, 20),
            )


class TestPowerHarnack:
    def test_equal_points_cauchy_schwarz(self):
        model = sde.make_model("ou", dim=1, rate=1.0)
        f = get_observable("sin1", 1)
        report = ct.power_harnack_certificate(
            f, 2.0, [0.3], [0.3], 1.0, model, linear_law(), 20_000,
            pg.RngStream(9, purpose="cs"), grid=pg.TimeGrid.uniform(1.0, 200),
        )
        assert report.verdict == "certified"

    def test_gaussian_equality_case(self):
        # both sides equal e^3 for f = exp(<a, .>), p = 2, T = 1
        model = sde.make_model("zero", dim=2)
        f = get_observable("exp_a", 2, direction=[1.0, 0.0])
        report = ct.power_harnack_certificate(
            f, 2.0, [0.0, 0.0], [1.0, 0.0], 1.0, model, linear_law(), 100_000,
            pg.RngStream(10, purpose="gauss"), grid=pg.TimeGrid.uniform(1.0, 100),
        )
        target = math.e**3
        assert abs(report.lhs.mean - target) <= 3.0 * report.lhs.stderr
        assert abs(report.rhs.mean - target) <= 3.0 * report.rhs.stderr
        assert report.verdict == "certified"

    def test_stable_above_half_certified(self):
        model = sde.make_model("ou", dim=1, rate=1.0)
        f = get_observable("sin1", 1)
        law = pg.ClockLaw(bn.StableBernstein(0.6))
        report = ct.power_harnack_certificate(
            f, 2.0, [0.0], [1.0], 1.0, model, law, 50_000,
            pg.RngStream(11, purpose="st6"), grid=pg.TimeGrid.uniform(1.0, 300),
        )
        assert report.verdict == "certified"
        assert not report.notes

    def test_divergent_factor_inconclusive_below_half(self):
        # theta <= 1/2 makes E exp(c / S(t)) infinite; the factor overflows
        model = sde.make_model("ou", dim=1, rate=1.0)
        f = get_observable("sin1", 1)
        law = pg.ClockLaw(bn.StableBernstein(0.4))
        report = ct.power_harnack_certificate(
            f, 2.0, [0.0], [2.0], 1.0, model, law, 5000,
            pg.RngStream(12, purpose="st4"), grid=pg.TimeGrid.uniform(1.0, 100),
        )
        assert report.verdict == "inconclusive"
        assert any("divergent" in note for note in report.notes)

    def test_large_p_limit_at_equal_points(self):
        # exponent p/(p-1)^2 -> 0: the factor collapses to exactly 1
        model = sde.make_model("ou", dim=1, rate=1.0)
        f = get_observable("sin1", 1)
        report = ct.power_harnack_certificate(
            f, 100.0, [0.2], [0.2], 1.0, model, linear_law(), 20_000,
            pg.RngStream(13, purpose="plimit"), grid=pg.TimeGrid.uniform(1.0, 200),
        )
        assert report.verdict == "certified"
        # with x = y the multiplicative factor is exp(0) = 1, so the RHS is
        # the pure p-th moment
        assert report.rhs.mean > report.lhs.mean


class TestGradientBound:
    def test_constant_observable(self):
        model = sde.make_model("ou", dim=2, rate=1.0)
        f = get_observable("const", 2)
        report = ct.gradient_certificate(
            f, [0.0, 0.0], 1.0, model, linear_law(), 5000,
            pg.RngStream(14, purpose="gc"), grid=pg.TimeGrid.uniform(1.0, 100),
        )
        assert report.lhs.mean == pytest.approx(0.0, abs=1e-12)
        assert report.verdict == "certified"

    def test_brownian_sin_oracle_values(self):
        # P_T sin = e^{-T/2} sin: the squared gradient at 0 is e^{-1} and
        # the variance bound is (1 - e^{-2})/2 at T = 1
        model = sde.make_model("zero", dim=1)

        class Sin:
            sup_norm = 1.0
            strictly_positive = False

            def __call__(self, z):
                return np.sin(np.atleast_2d(z)[:, 0])

            def describe(self):
                return {"name": "sin"}

        report = ct.gradient_certificate(
            Sin(), [0.0], 1.0, model, linear_law(), 100_000,
            pg.RngStream(15, purpose="gsin"), fd_step=0.05,
            grid=pg.TimeGrid.uniform(1.0, 100),
        )
        assert report.verdict == "certified"
        # finite-difference bias of sin at step 0.05 is ~4e-4 relative
        assert report.lhs.mean == pytest.approx(math.exp(-1.0), abs=3.0 * report.lhs.stderr + 1e-3)
        assert report.rhs.mean == pytest.approx(
            (1.0 - math.exp(-2.0)) / 2.0, abs=3.0 * report.rhs.stderr + 1e-3
        )

    def test_contractive_model_certifies_and_contracts(self):
        model = sde.make_model("ou", dim=1, rate=1.0)
        f = get_observable("sin1", 1)
        report = ct.gradient_certificate(
            f, [0.0], 3.0, model, linear_law(), 30_000,
            pg.RngStream(16, purpose="gou"), grid=pg.TimeGrid.uniform(3.0, 300),
        )
        assert report.verdict == "certified"
        # pathwise synchronous contraction at rate 1 over T = 3
        grid = pg.TimeGrid.uniform(3.0, 3000)
        gen = pg.RngStream(17, purpose="gcontract").generator()
        clock = linear_law().sample_raw(grid, gen, 1)
        dw = pg.bm_increments(clock, 1, gen)
        bm = pg.TimeChangedBMPath(grid=grid, dimension=1, increments=dw[0])
        a = sde.integrate([1.0], model, bm)
        b = sde.integrate([-1.0], model, bm)
        gap_end = abs(a.terminal[0] - b.terminal[0])
        assert gap_end <= math.exp(-3.0) * 2.0

    def test_uninformative_difference_flagged(self):
        # the gradient of P_T bump vanishes at the origin by symmetry, so
        # the finite-difference stderr dominates the measured slope
        model = sde.make_model("zero", dim=1)
        f = get_observable("bump", 1)
        report = ct.gradient_certificate(
            f, [0.0], 1.0, model, linear_law(), 2000,
            pg.RngStream(18, purpose="gnoise"), fd_step=0.01,
            grid=pg.TimeGrid.uniform(1.0, 20),
        )
        assert report.verdict == "inconclusive"
        assert any("raise n_paths or fd_step" in note for note in report.notes)


class TestCouplingPropertyBound:
    def test_equal_points(self):
        model = sde.make_model("zero", dim=2)
        f = get_observable("capnorm", 2)
        report = ct.coupling_property_bound(
            f, [0.5, 0.0], [0.5, 0.0], 4.0, model, linear_law(), 5000,
            pg.RngStream(19, purpose="cpb0"), grid=pg.TimeGrid.uniform(4.0, 100),
        )
        assert report.lhs.mean == 0.0
        assert report.verdict == "certified"

    def test_brownian_quarter_bound(self):
        model = sde.make_model("zero", dim=2)
        f = get_observable("capnorm", 2)
        report = ct.coupling_property_bound(
            f, [0.0, 0.0], [0.5, 0.0], 4.0, model, linear_law(), 50_000,
            pg.RngStream(20, purpose="cpb"), grid=pg.TimeGrid.uniform(4.0, 200),
        )
        assert report.rhs.mean == pytest.approx(0.25, abs=1e-9)
        assert report.verdict == "certified"
        assert report.lhs.mean < 0.25

    def test_decay_in_horizon_for_stable_clock(self):
        model = sde.make_model("zero", dim=2)
        f = get_observable("capnorm", 2)
        law = pg.ClockLaw(bn.StableBernstein(0.75))
        bounds = []
        for horizon in (1.0, 2.0, 4.0, 8.0):
            report = ct.coupling_property_bound(
                f, [0.0, 0.0], [0.5, 0.0], horizon, model, law, 20_000,
                pg.RngStream(21, purpose=f"cpbT{horizon}"),
                grid=pg.TimeGrid.uniform(horizon, 100),
            )
            assert report.verdict == "certified"
            bounds.append(report.rhs.mean)
        assert all(a > b for a, b in zip(bounds, bounds[1:]))
        # the bound scales like T^(-1/(2 theta))
        ratio = bounds[0] / bounds[-1]
        assert ratio == pytest.approx(8.0 ** (1.0 / (2 * 0.75)), rel=1e-6)

    def test_positive_one_sided_bound_rejected(self):
        model = sde.make_model("double_well", dim=1)
        f = get_observable("capnorm", 1)
        with pytest.raises(ValueError, match="K <= 0"):
            ct.coupling_property_bound(
                f, [0.0], [1.0], 1.0, model, linear_law(), 2000,
                pg.RngStream(22, purpose="cpbk"), grid=pg.TimeGrid.uniform(1.0, 20),
            )

    def test_unbounded_observable_rejected(self):
        model = sde.make_model("zero", dim=1)
        f = get_observable("exp_a", 1)
        with pytest.raises(ValueError, match="bounded"):
            ct.coupling_property_bound(
                f, [0.0], [1.0], 1.0, model, linear_law(), 2000,
                pg.RngStream(23, purpose="cpbu"), grid=pg.TimeGrid.uniform(1.0, 20),
            )


class TestStableRateCheck:
    def test_linear_limit_slope_exact(self):
        model = sde.make_model("zero", dim=1)
        fit = ct.stable_rate_check(
            1.0, model, np.array([0.1, 0.2, 0.4, 0.8]), 2000,
            pg.RngStream(24, purpose="fit-linear"), clock=bn.LinearBernstein(),
        )
        assert fit.fitted_slope == pytest.approx(-1.0, abs=1e-9)
        assert fit.slope_stderr == 0.0
        assert fit.consistent

    @pytest.mark.parametrize("theta", [0.5, 0.75])
    def test_stable_slopes(self, theta):
        model = sde.make_model("zero", dim=1)
        fit = ct.stable_rate_check(
            theta, model, np.array([0.1, 0.2, 0.4, 0.8]), 100_000,
            pg.RngStream(25, purpose=f"fit-{theta}"),
        )
        assert fit.consistent
        assert fit.fitted_slope == pytest.approx(-1.0 / theta, abs=3.0 * fit.slope_stderr)

    def test_too_few_horizons_rejected(self):
        model = sde.make_model("zero", dim=1)
        with pytest.raises(ValueError, match="4"):
            ct.stable_rate_check(
                0.5, model, np.array([0.1, 0.4, 0.8]), 1000,
                pg.RngStream(26, purpose="few"),
            )

    def test_nonzero_bound_model_rejected(self):
        model = sde.make_model("ou", dim=1, rate=1.0)
        with pytest.raises(ValueError, match="K = 0"):
            ct.stable_rate_check(
                0.5, model, np.array([0.1, 0.2, 0.4, 0.8]), 1000,
                pg.RngStream(27, purpose="badmodel"),
            )
