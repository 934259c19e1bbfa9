import math

import numpy as np
import pytest

from cusplab.charts import Chart
from cusplab.solver import (
    DiscreteField,
    IndefiniteOperator,
    NonConvergence,
    SupportViolation,
    assemble,
    collar_grid,
    compact_patch_grid,
    condition_number_spread,
    cusp_grid,
    default_bump_recipe,
    default_scan_families,
    exhaustion_sweep,
    koiso_quadrature,
    maximal_grid,
    maximum_principle_check,
    plateau_factor,
    random_bump_tensor,
    sample_field,
    schauder_coefficient_scan,
    solve_dirichlet,
    weighted_sup_norm,
)
from cusplab.weights import WeightVector, admissible_weights

CUSP = Chart.intermediate_cusp(4, 1)
W41, _ = admissible_weights(4, (1,))


class TestGrids:
    def test_cusp_grid_stays_in_exhaustion(self):
        g = cusp_grid(CUSP, 0.1, nodes=16)
        assert g.sigma().min() >= 0.1 - 1e-12
        # the inscribed corner touches the exhaustion boundary
        assert g.sigma().min() == pytest.approx(0.1, rel=1e-12)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            cusp_grid(CUSP, 0.1, nodes=4)

    def test_collar_and_maximal(self):
        g = collar_grid(Chart.collar(4), 0.05, nodes=12)
        assert g.sigma().min() == pytest.approx(0.05)
        m = maximal_grid(Chart.maximal_cusp(4), 0.05, nodes=16)
        assert m.ndim == 1


class TestAssembly:
    def test_constant_maps_to_K_exactly(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        op = assemble(grid, -2.0)
        out = op.apply_to_values(np.full(grid.shape, 3.0))
        assert np.abs(out + 6.0).max() < 1e-11
        assert op.pattern_symmetric

    @pytest.mark.parametrize("K", [-2.0, 6.0])
    def test_cusp_barrier_consistency_order(self, K):
        mu, nu = 0.5, 1.75
        errs = []
        for nodes in (17, 33, 65):
            grid = cusp_grid(CUSP, 0.1, nodes=nodes)
            op = assemble(grid, K)
            r, th = grid.meshes()
            vals = r ** mu * np.cos(th) ** nu
            got = op.apply_to_values(vals)
            cc = K - (mu * mu + mu - 2 * nu)
            cs = K - nu * (nu - 3)
            want = ((cc * np.cos(th) ** 2 + cs * np.sin(th) ** 2) * vals)[
                grid.interior_mask()
            ]
            errs.append(np.abs(got - want).max())
        order = math.log2(errs[0] / errs[1])
        order2 = math.log2(errs[1] / errs[2])
        assert min(order, order2) >= 1.9

    def test_collar_barrier_consistency(self):
        chart = Chart.collar(4)
        nu, K = 1.6, -2.0
        errs = []
        for nodes in (17, 33):
            grid = collar_grid(chart, 0.1, nodes=nodes, y_range=(-0.5, 0.5))
            op = assemble(grid, K)
            rho = grid.meshes()[0]
            vals = rho ** nu
            got = op.apply_to_values(vals)
            want = ((K - nu * (nu - 3)) * vals)[grid.interior_mask()]
            errs.append(np.abs(got - want).max())
        assert math.log2(errs[0] / errs[1]) >= 1.9

    def test_maximal_barrier_consistency(self):
        chart = Chart.maximal_cusp(4)
        mu, K = 0.8, -2.0
        grid = maximal_grid(chart, 0.1, nodes=129)
        op = assemble(grid, K)
        r = grid.axes[0]
        vals = r ** mu
        got = op.apply_to_values(vals)
        want = ((K - mu * (mu + 3)) * vals)[grid.interior_mask()]
        assert np.abs(got - want).max() < 5e-3


class TestSolve:
    def test_zero_source(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        op = assemble(grid, -2.0)
        u = solve_dirichlet(op, np.zeros(grid.shape))
        assert np.abs(u.values).max() == 0.0

    def test_manufactured_solution(self):
        grid = cusp_grid(CUSP, 0.1, nodes=32)
        op = assemble(grid, -2.0)
        u_star = sample_field(grid, default_bump_recipe(W41))
        rhs = np.zeros(grid.shape)
        rhs[grid.interior_mask()] = op.apply_to_values(u_star.values)
        u = solve_dirichlet(op, DiscreteField(grid, rhs))
        err = np.abs(u.values - u_star.values).max() / np.abs(u_star.values).max()
        assert err < 1e-6

    def test_cg_agrees_with_direct(self):
        grid = cusp_grid(CUSP, 0.1, nodes=24)
        op = assemble(grid, -2.0)
        f = sample_field(grid, default_bump_recipe(W41))
        ud = solve_dirichlet(op, f, method="direct")
        uc = solve_dirichlet(op, f, method="cg")
        scale = np.abs(ud.values).max()
        assert np.abs(ud.values - uc.values).max() < 1e-7 * scale

    def test_discrete_maximum_principle(self):
        # monotone flux discretization: K >= 0 and f >= 0 give u >= 0
        grid = cusp_grid(CUSP, 0.1, nodes=24)
        op = assemble(grid, 1.0)
        r, th = grid.meshes()
        f = np.exp(-((r - 0.7) ** 2 + (th - 0.8) ** 2) / 0.05)
        u = solve_dirichlet(op, f)
        assert u.values.min() >= -1e-12

    def test_indefinite_detected(self):
        grid = cusp_grid(CUSP, 0.1, nodes=20)
        op = assemble(grid, -50.0)
        with pytest.raises(IndefiniteOperator) as exc:
            solve_dirichlet(op, np.ones(grid.shape))
        assert isinstance(exc.value, NonConvergence)

    def test_nonconvergence_reports_residual(self):
        grid = cusp_grid(CUSP, 0.1, nodes=24)
        op = assemble(grid, -2.0)
        f = sample_field(grid, default_bump_recipe(W41))
        import scipy.sparse.linalg as spla
        import cusplab.solver as sv

        orig = spla.cg

        def capped(A, b, **kw):
            kw["maxiter"] = 2
            return orig(A, b, **kw)

        sv.spla.cg = capped
        try:
            with pytest.raises(NonConvergence) as exc:
                solve_dirichlet(op, f, method="cg")
            assert math.isfinite(exc.value.residual)
        finally:
            sv.spla.cg = orig


class TestWeightedNorm:
    def test_homogeneity(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        smu = grid.sigma_mu(W41)
        u1 = DiscreteField(grid, smu)
        u2 = DiscreteField(grid, 2.0 * smu)
        assert weighted_sup_norm(u1, W41) == pytest.approx(1.0, rel=1e-12)
        assert weighted_sup_norm(u2, W41) == pytest.approx(2.0, rel=1e-12)

    def test_extra_decay_attained_at_largest_sigma(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        w = W41
        smu = grid.sigma_mu(w)
        extra = grid.sigma() ** 0.5  # sigma <= 1 on this grid
        u = DiscreteField(grid, smu * extra)
        idx = np.unravel_index(np.argmax(extra / 1.0), grid.shape)
        assert weighted_sup_norm(u, w) == pytest.approx(extra.max(), rel=1e-12)
        assert extra[idx] == extra.max()


class TestSweep:
    def test_ratio_table_and_plateau(self):
        rows = exhaustion_sweep(
            CUSP, -2.0, W41, default_bump_recipe(W41), [0.2, 0.1, 0.05],
            nodes=24,
        )
        assert [r.eps for r in rows] == [0.2, 0.1, 0.05]
        for r in rows:
            assert r.ratio == pytest.approx(r.norm_u / r.norm_f)
            assert r.mms_error < 1e-6
        assert plateau_factor(rows) <= 2.0

    def test_eps_must_decrease(self):
        with pytest.raises(ValueError):
            exhaustion_sweep(CUSP, -2.0, W41, default_bump_recipe(W41),
                             [0.1, 0.2], nodes=16)


class TestMaximumPrincipleCheck:
    def test_zero_weight_gives_K_exactly(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        w0 = WeightVector(mu0=0.0, mus=(0.0,), ranks=(1,), n=4)
        rep = maximum_principle_check(grid, -2.0, w0)
        assert rep.min_ratio == pytest.approx(-2.0, abs=1e-11)

    def test_admissible_weights_match_closed_form(self):
        grid = cusp_grid(CUSP, 0.1, nodes=48)
        rep = maximum_principle_check(grid, -2.0, W41)
        assert rep.passed
        assert rep.min_ratio >= rep.closed_form_delta - rep.tolerance
        # the discrete infimum approaches but does not undershoot the margin
        assert rep.min_ratio < rep.closed_form_delta + 1.0

    def test_maximal_rank_obstruction_witnessed(self):
        chart = Chart.maximal_cusp(4)
        grid = maximal_grid(chart, 0.05, nodes=64)
        w = WeightVector(mu0=1.75, mus=(0.5,), ranks=(3,), n=4)
        rep = maximum_principle_check(grid, -2.0, w)
        op = assemble(grid, -2.0)
        smu = grid.sigma_mu(w)
        ratio = op.apply_to_values(smu) / smu[op.interior]
        assert ratio.max() < 0  # negative everywhere: no positive weights work
        assert rep.closed_form_delta < 0


class TestKoiso:
    def patch(self, nodes):
        chart = Chart.collar(4, edge=2.5)
        return compact_patch_grid(chart, nodes, (1.0, 2.0), (-0.5, 0.5))

    def test_zero_field(self):
        grid = self.patch(17)
        res = koiso_quadrature(grid, DiscreteField(grid, np.zeros(grid.shape + (4, 4))))
        assert res.lhs == res.rhs == 0.0

    def test_identity_gap_shrinks_second_order(self):
        # holds for general symmetric bumps, not only trace-free ones
        gaps = []
        for nodes in (17, 33):
            grid = self.patch(nodes)
            u = random_bump_tensor(grid, np.random.default_rng(1), trace_free=False)
            res = koiso_quadrature(grid, u)
            gaps.append(res.gap)
        assert math.log2(gaps[0] / gaps[1]) >= 1.8

    def test_lower_bound_slack_nonnegative(self):
        grid = self.patch(33)
        for seed in range(5):
            u = random_bump_tensor(grid, np.random.default_rng(seed))
            res = koiso_quadrature(grid, u, K=-2.0)
            assert res.slack >= -10.0 * res.gap

    def test_support_violation(self):
        grid = self.patch(17)
        vals = np.zeros(grid.shape + (4, 4))
        vals[1, 5, 0, 0] = 1.0  # one node away from the rho side
        with pytest.raises(SupportViolation):
            koiso_quadrature(grid, DiscreteField(grid, vals))

    def test_divergence_adjointness_by_quadrature(self):
        # the sign convention ties the divergence to the symmetrized
        # gradient: <delta* w, t> = <w, delta t> for compact support
        grid = self.patch(49)
        rho, y = grid.meshes()
        n = 4
        from cusplab.solver import (
            _collar_christoffels,
            _covariant_derivative,
            _trapezoid_weights,
        )

        u = random_bump_tensor(grid, np.random.default_rng(3), trace_free=False)
        bump_w = random_bump_tensor(grid, np.random.default_rng(4), trace_free=False)
        w = bump_w.values[..., 0, :]  # a compactly supported 1-form

        dv = rho ** (-4.0) * _trapezoid_weights(grid)
        up2 = rho ** 2
        gam = _collar_christoffels(n, rho)

        dw = np.stack(
            [np.gradient(w, grid.spacing[a], axis=a, edge_order=2) for a in (0, 1)],
            axis=-2,
        )
        nab_w = np.zeros(grid.shape + (n, n))
        nab_w[..., 0, :] = dw[..., 0, :]
        nab_w[..., 1, :] = dw[..., 1, :]
        nab_w -= np.einsum("...mij,...m->...ij", gam, w)
        dstar = 0.5 * (nab_w + np.einsum("...ij->...ji", nab_w))

        nab_u = _covariant_derivative(grid, u.values)
        div_u = -np.einsum("xy,xykkj->xyj", up2, nab_u)

        lhs = float(np.sum(dv * up2 ** 2 *
                           np.einsum("xyij,xyij->xy", dstar, u.values)))
        rhs = float(np.sum(dv * up2 * np.einsum("xyj,xyj->xy", w, div_u)))
        assert lhs == pytest.approx(rhs, rel=5e-3)


class TestSchauderScan:
    def test_uniform_condition_numbers(self):
        rows = schauder_coefficient_scan(
            default_scan_families(4, 1), [1e-1, 1e-2, 1e-3, 1e-4]
        )
        spread = condition_number_spread(rows)
        assert set(spread) == {"near_axis", "off_axis", "collar"}
        assert max(spread.values()) < 0.05

    def test_off_axis_bands_live_in_one_interval(self):
        # several shape ratios, one common eigenvalue band
        from cusplab.solver import ScanFamily

        fams = [
            ScanFamily(f"off_{r}", "cusp_off_axis", 4, f=1, ratio=r)
            for r in (2.0, 10.0, 100.0)
        ]
        rows = schauder_coefficient_scan(fams, [1e-3])
        lo = min(r.min_eig for r in rows)
        hi = max(r.max_eig for r in rows)
        assert lo > 0.05 and hi < 50.0

    def test_base_point_identity(self):
        from cusplab.charts import RescalingCase, rescaled_metric_at

        case = RescalingCase("collar", 4, eps=1e-2, v0=np.zeros(3))
        got = rescaled_metric_at(case, np.zeros(4))
        assert np.allclose(got, np.eye(4))


class TestOperatorInvariants:
    def test_diagonal_positive_for_nonnegative_K(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        for K in (0.0, 1.0, 6.0):
            op = assemble(grid, K)
            assert op.matrix.diagonal().min() > 0

    def test_symmetry_flag(self):
        grid = cusp_grid(CUSP, 0.1, nodes=16)
        assert assemble(grid, -2.0).pattern_symmetric


class TestSweepErrorRecording:
    def test_record_mode_keeps_partial_rows(self):
        rows = exhaustion_sweep(
            CUSP, -50.0, W41, default_bump_recipe(W41), [0.2, 0.1],
            nodes=16, on_error="record",
        )
        assert len(rows) == 2
        assert all(r.error is not None for r in rows)
        assert math.isnan(plateau_factor(rows))

    def test_raise_mode_propagates(self):
        with pytest.raises(NonConvergence):
            exhaustion_sweep(CUSP, -50.0, W41, default_bump_recipe(W41),
                             [0.2], nodes=16)


class TestTensorModeNorm:
    def test_pointwise_metric_norm_reduction(self):
        chart = Chart.collar(4, edge=2.5)
        grid = compact_patch_grid(chart, 17, (1.0, 2.0), (-0.5, 0.5))
        rho = grid.meshes()[0]
        w = WeightVector(mu0=1.75, mus=(), ranks=(), n=4)
        vals = np.zeros(grid.shape + (4, 4))
        vals[..., 0, 0] = 1.0  # |u|_h = rho^2 pointwise
        u = DiscreteField(grid, vals)
        want = float((rho ** 2 / rho ** 1.75).max())
        assert weighted_sup_norm(u, w) == pytest.approx(want, rel=1e-12)
