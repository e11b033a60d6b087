import numpy as np
import pytest

from fluotomo import eta as eta_mod, fem
from fluotomo.eta import EtaOperator, NearSingularError, apply_A, solve_eta
from fluotomo.fem import NonConvergenceError, ScalarField
from fluotomo.harness import compare_fields


@pytest.fixture(scope="module")
def case11_op(case11_small):
    cfg, mesh, state, data = case11_small
    op = EtaOperator(mesh, cfg.model, cfg.elasto, state.u0, state.v)
    return cfg, mesh, state, data, op


def _eta_true(cfg, mesh):
    return ScalarField.from_callable(mesh, cfg.model.eta)


class TestInnerSolves:
    def test_T0_matches_forward_emission(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        w = op.apply_T0(_eta_true(cfg, mesh).coeffs)
        np.testing.assert_allclose(w, state.w0.coeffs, rtol=1e-10, atol=1e-13)

    def test_T1_matches_forward_auxiliary(self, case11_op):
        # the operator samples sigma_xf through its nodal interpolant while
        # the forward solver uses the closed form, so agreement is up to the
        # coefficient interpolation error, not machine precision
        cfg, mesh, state, data, op = case11_op
        p = op.apply_T1(_eta_true(cfg, mesh).coeffs)
        rel = (np.linalg.norm(p - state.p.coeffs)
               / np.linalg.norm(state.p.coeffs))
        assert rel < 1e-5

    def test_T0_zero_input(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        np.testing.assert_allclose(op.apply_T0(np.zeros(mesh.n_dofs)), 0.0,
                                   atol=1e-14)


class TestOperator:
    def test_linearity(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        rng = np.random.default_rng(2)
        x = rng.standard_normal(mesh.n_dofs)
        y = rng.standard_normal(mesh.n_dofs)
        lhs = op.apply_A(1.3 * x - 0.7 * y)
        rhs = 1.3 * op.apply_A(x) - 0.7 * op.apply_A(y)
        scale = np.linalg.norm(rhs)
        assert np.linalg.norm(lhs - rhs) <= 1e-11 * scale

    def test_zero_eta_maps_to_zero(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        out = op.apply_A(np.zeros(mesh.n_dofs))
        np.testing.assert_allclose(out, 0.0, atol=1e-14)

    def test_identity_against_synthesized_datum(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        S_op = apply_A(_eta_true(cfg, mesh), op)
        num = fem.norms(ScalarField(mesh, S_op.coeffs - data.S.coeffs))["L2"]
        den = fem.norms(data.S)["L2"]
        assert num / den < 5e-3

    def test_reconstructed_sigma_variant_stays_close(self, case11_small):
        from fluotomo.sigma import reconstruct_sigma
        cfg, mesh, state, data = case11_small
        sig, u0_rec, _ = reconstruct_sigma(data.Q, cfg.model, cfg.elasto)
        op = EtaOperator(mesh, cfg.model, cfg.elasto, u0_rec, state.v,
                         sigma_xf=sig)
        S_op = apply_A(_eta_true(cfg, mesh), op)
        num = fem.norms(ScalarField(mesh, S_op.coeffs - data.S.coeffs))["L2"]
        den = fem.norms(data.S)["L2"]
        assert num / den < 5e-3


class TestSolve:
    def test_zero_datum_gives_zero_eta(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        eta, trace = solve_eta(ScalarField(mesh, np.zeros(mesh.n_dofs)), op)
        assert trace.converged
        np.testing.assert_allclose(eta.coeffs, 0.0)

    def test_round_trip(self, case11_op):
        cfg, mesh, state, data, op = case11_op
        eta, trace = solve_eta(data.S, op)
        assert trace.converged
        assert trace.final_residual <= 1e-10
        assert compare_fields(eta, cfg.model.eta)["L2"] < 5e-3

    def test_residual_certificate_is_verified(self, case11_op):
        # a hopeless iteration budget must raise, not return a bad answer
        cfg, mesh, state, data, op = case11_op
        with pytest.raises(NonConvergenceError) as err:
            solve_eta(data.S, op, tol=1e-10, restart=2, max_iter=1)
        assert err.value.residual > 1e-10

    def test_near_singular_multiplier_rejected(self, case11_small):
        cfg, mesh, state, data = case11_small
        x, y = mesh.dof_coords.T
        sig_vals = np.array(cfg.model.sigma_xf(x, y), dtype=float)
        sig_vals[7] = 0.0          # zero-order multiplier vanishes at a node
        op = EtaOperator(mesh, cfg.model, cfg.elasto, state.u0, state.v,
                         sigma_xf=sig_vals)
        with pytest.raises(NearSingularError):
            solve_eta(data.S, op)

    def test_round_trip_case2(self, case2_small):
        cfg, mesh, state, data = case2_small
        op = EtaOperator(mesh, cfg.model, cfg.elasto, state.u0, state.v)
        eta, trace = solve_eta(data.S, op)
        assert trace.converged
        assert compare_fields(eta, cfg.model.eta)["L2"] < 5e-3
