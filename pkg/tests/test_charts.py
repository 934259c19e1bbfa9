import math

import numpy as np
import pytest

from cusplab.charts import (
    Chart,
    ChartDomainError,
    RescalingCase,
    RescalingCaseError,
    chart_from_config,
    rescaled_metric_at,
    round_sphere_metric,
    truncate_bdf,
)


@pytest.fixture
def cusp41():
    return Chart.intermediate_cusp(4, 1)


class TestMetricAt:
    def test_cusp_closed_form(self, cusp41):
        # hand evaluation: diag(1/(r^2 c^2), 1/c^2, s^2/c^2, r^2/c^2)
        p = [0.5, math.pi / 4, 0.3, 0.2]
        got = cusp41.metric_at(p)
        assert np.allclose(got, np.diag([8.0, 2.0, 1.0, 0.5]), rtol=1e-12)

    def test_cusp_near_pole(self, cusp41):
        # at the pole margin cos(theta0) ~ 1 and the non-spherical entries
        # approach (1/r^2, 1, ., r^2)
        p = [0.5, 1e-3, 0.0, 0.0]
        got = np.diag(cusp41.metric_at(p))
        assert got[0] == pytest.approx(4.0, rel=1e-5)
        assert got[1] == pytest.approx(1.0, rel=1e-5)
        assert got[3] == pytest.approx(0.25, rel=1e-5)
        # the transverse sphere block carries the polar factor sin^2(theta0)
        assert got[2] == pytest.approx(math.sin(1e-3) ** 2, rel=1e-5)

    def test_maximal_at_unit_radius(self):
        chart = Chart.maximal_cusp(3)
        assert np.allclose(chart.metric_at([1.0, 0.3, -0.4]), np.eye(3))

    def test_collar_euclidean(self):
        chart = Chart.collar(3)
        got = chart.metric_at([0.1, 0.2, -0.3])
        assert np.allclose(got, 100.0 * np.eye(3), rtol=1e-12)

    def test_upper_half_space(self):
        chart = Chart.upper_half_space(4, 1)
        got = chart.metric_at([1.0, 0.0, 0.0, 0.5])
        # u=1, v=0: (u^2+|v|^2)^2/u^2 = 1 on the cusp block
        assert np.allclose(got, np.eye(4))

    def test_spd_across_kinds(self, rng):
        charts = [
            Chart.intermediate_cusp(4, 1),
            Chart.intermediate_cusp(5, 2),
            Chart.intermediate_cusp(5, 3),
            Chart.maximal_cusp(4),
            Chart.collar(4),
            Chart.collar(4, h_u="round_sphere"),
            Chart.upper_half_space(4, 2),
        ]
        for chart in charts:
            for p in sample_points(chart, 10, rng):
                g = chart.metric_at(p)
                assert np.allclose(g, g.T)
                assert np.linalg.eigvalsh(g)[0] > 0

    def test_translation_invariance_in_w(self, cusp41):
        a = cusp41.metric_at([0.5, 0.7, 1.1, 0.3])
        b = cusp41.metric_at([0.5, 0.7, 1.1, -2.7])
        assert np.array_equal(a, b)

    def test_angle_invariance_on_circle_block(self, cusp41):
        # b - 1 = 1: the transverse sphere is a circle, so the components do
        # not depend on the angular position at all
        a = cusp41.metric_at([0.5, 0.7, 0.2, 0.3])
        b = cusp41.metric_at([0.5, 0.7, 2.9, 0.3])
        assert np.array_equal(a, b)

    def test_rejects_degenerate_points(self, cusp41):
        with pytest.raises(ChartDomainError):
            cusp41.metric_at([0.0, 0.7, 0.1, 0.0])
        with pytest.raises(ChartDomainError):
            cusp41.metric_at([0.5, math.pi / 2, 0.1, 0.0])
        with pytest.raises(ChartDomainError):
            Chart.collar(3).metric_at([0.0, 0.1, 0.1])

    def test_rejects_out_of_range(self, cusp41):
        with pytest.raises(ChartDomainError):
            cusp41.metric_at([1.5, 0.7, 0.1, 0.0])
        with pytest.raises(ChartDomainError):
            cusp41.metric_at([0.5, 0.7, 0.1])


class TestVolumeDensity:
    def test_cusp_closed_form(self, cusp41):
        # sqrt(r^0 sin^2 / cos^8) at theta0 = pi/4 equals 2 sqrt(2)
        got = cusp41.volume_density_at([0.5, math.pi / 4, 0.3, 0.2])
        assert got == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-12)

    def test_collar_power(self):
        chart = Chart.collar(3)
        got = chart.volume_density_at([0.1, 0.0, 0.0])
        assert got == pytest.approx(1000.0, rel=1e-12)

    def test_matches_determinant(self, rng):
        charts = [
            Chart.intermediate_cusp(4, 1),
            Chart.intermediate_cusp(5, 1),
            Chart.maximal_cusp(4),
            Chart.collar(4, h_u="round_sphere"),
            Chart.upper_half_space(4, 2),
        ]
        for chart in charts:
            for p in sample_points(chart, 8, rng):
                dens = chart.volume_density_at(p)
                det = np.linalg.det(chart.metric_at(p))
                assert dens ** 2 == pytest.approx(det, rel=1e-12)


class TestSigma:
    def test_cusp_product(self, cusp41):
        got = cusp41.sigma_at([0.2, math.pi / 3, 0.1, 0.0])
        assert got == pytest.approx(0.1, rel=1e-12)

    def test_collar_is_rho(self):
        chart = Chart.collar(4)
        assert chart.sigma_at([0.05, 0.1, 0.0, 0.2]) == pytest.approx(0.05)

    def test_truncates_to_one_at_edge(self):
        chart = Chart.maximal_cusp(4)
        assert chart.sigma_at([1.0, 0.0, 0.0, 0.0]) == 1.0

    def test_truncation_profile_smooth_and_monotone(self):
        xs = np.linspace(0.01, 1.0, 400)
        vals = [truncate_bdf(x, 1.0, 0.2) for x in xs]
        assert np.all(np.diff(vals) >= -1e-14)
        assert vals[0] == xs[0]
        assert vals[-1] == 1.0

    def test_in_exhaustion(self, cusp41):
        p_in = [0.2, math.pi / 3, 0.1, 0.0]  # sigma = 0.1
        assert cusp41.in_exhaustion(p_in, 0.05)
        assert cusp41.in_exhaustion(p_in, 0.1)  # boundary included
        assert not cusp41.in_exhaustion(p_in, 0.2)
        with pytest.raises(ValueError):
            cusp41.in_exhaustion(p_in, 0.0)


class TestRescaling:
    def test_near_axis_origin_is_identity(self):
        case = RescalingCase("cusp_near_axis", 4, eps=0.01, v0=[0.0, 0.0], f=1)
        got = rescaled_metric_at(case, [0.0, 0.0, 0.0, 0.0])
        assert np.allclose(got, np.eye(4), atol=1e-14)

    def test_off_axis_origin_is_identity(self):
        case = RescalingCase("cusp_off_axis", 4, eps=0.01, v0=[0.3, 0.0], f=1)
        got = rescaled_metric_at(case, [0.0, 0.0, 0.0, 0.0])
        assert np.allclose(got, np.eye(4), atol=1e-14)

    def test_eigenvalue_band_uniform_in_eps(self):
        # fixed shape parameter v0 = 0: the pulled-back metric has no eps
        # dependence at all, so the band is literally constant
        bands = []
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            case = RescalingCase("cusp_near_axis", 4, eps=eps, v0=[0.0, 0.0], f=1)
            eigs = []
            for s in (0.0, 0.4, 0.8):
                for t in (-0.5, 0.0, 0.5):
                    q = [s, t, 0.0, 0.1]
                    if s * s + t * t + 0.01 < 1:
                        eigs += list(np.linalg.eigvalsh(rescaled_metric_at(case, q)))
            bands.append((min(eigs), max(eigs)))
        assert np.allclose(bands, bands[0])

    def test_invariants_enforced(self):
        with pytest.raises(RescalingCaseError):
            RescalingCase("cusp_near_axis", 4, eps=0.01, v0=[0.5, 0.0], f=1)
        with pytest.raises(RescalingCaseError):
            RescalingCase("cusp_off_axis", 4, eps=0.01, v0=[0.005, 0.0], f=1)
        with pytest.raises(RescalingCaseError):
            RescalingCase("cusp_off_axis", 4, eps=0.01, v0=[1.5, 0.0], f=1)
        case = RescalingCase("cusp_near_axis", 4, eps=0.01, v0=[0.0, 0.0], f=1)
        with pytest.raises(ChartDomainError):
            rescaled_metric_at(case, [0.9, 0.9, 0.0, 0.0])
        with pytest.raises(ChartDomainError):
            rescaled_metric_at(case, [-0.1, 0.0, 0.0, 0.0])


class TestConfig:
    def test_round_trip(self):
        text = """
        # cusp example
        kind = intermediate_cusp
        n = 5
        f = 2
        edge = 0.8
        pole_margin = 1e-4
        """
        chart = chart_from_config(text)
        assert chart.kind == "intermediate_cusp"
        assert (chart.n, chart.f, chart.edge) == (5, 2, 0.8)
        assert chart.pole_margin == 1e-4

    def test_collar_family_choice(self):
        chart = chart_from_config("kind = collar\nn = 4\nh_u = round_sphere")
        y = np.array([1.2, 1.0, 0.4])
        assert np.allclose(chart.h_u(0.0, y), round_sphere_metric(y))

    def test_missing_keys(self):
        with pytest.raises(ValueError):
            chart_from_config("kind = collar")
        with pytest.raises(ValueError):
            chart_from_config("n = 4")


def sample_points(chart, count, rng):
    pts = []
    ranges = chart.coordinate_ranges()
    while len(pts) < count:
        p = []
        for lo, hi in ranges:
            if math.isinf(lo) or math.isinf(hi):
                p.append(rng.uniform(-0.8, 0.8))
            else:
                span = hi - lo
                p.append(rng.uniform(lo + 0.2 * span, hi - 0.2 * span))
        p = np.array(p)
        if chart.contains(p):
            pts.append(p)
    return pts
