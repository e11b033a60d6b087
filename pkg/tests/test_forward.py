import dataclasses

import numpy as np
import pytest

from fluotomo import fem, forward
from fluotomo.config import OpticalModel
from fluotomo.fem import ScalarField

from fd_oracle import fd_solve, relative_l2_on_grid


def make_model(**overrides):
    base = dict(
        D_x=lambda x, y: 0.1 + 0 * x,
        D_m=lambda x, y: 0.1 + 0.02 * np.cos(2 * x) * np.cos(2 * y),
        sigma_xa=lambda x, y: 0.1 + 0 * x,
        sigma_ma=lambda x, y: 0.1 + 0.02 * np.cos(4 * x ** 2 + 4 * y ** 2),
        sigma_xf=lambda x, y: 0.2 + 0 * x,
        eta=lambda x, y: 0.5 + 0 * x,
        g=lambda x, y: np.exp(2 * x) + np.exp(-2 * y),
        h=lambda x, y: 1.0 + 0 * x)
    base.update(overrides)
    return OpticalModel(**base)


ZERO = lambda x, y: 0.0 * x
ONE = lambda x, y: 1.0 + 0 * x


class TestTrivialSolutions:
    def test_zero_absorption_constant_excitation(self, mesh32):
        model = make_model(sigma_xa=ZERO, sigma_xf=ZERO, g=ONE)
        u0 = forward.solve_excitation(model, mesh32)
        np.testing.assert_allclose(u0.coeffs, 1.0, atol=1e-10)

    def test_zero_eta_gives_zero_emission_and_p(self, mesh32):
        model = make_model(eta=ZERO)
        state = forward.solve_forward(model, mesh32)
        np.testing.assert_allclose(state.w0.coeffs, 0.0, atol=1e-12)
        np.testing.assert_allclose(state.p.coeffs, 0.0, atol=1e-12)

    def test_zero_reaction_constant_v(self, mesh32):
        model = make_model(sigma_ma=ZERO, h=ONE)
        v = forward.solve_auxiliary_v(model, mesh32)
        np.testing.assert_allclose(v.coeffs, 1.0, atol=1e-10)


class TestMaximumPrincipleAndPositivity:
    def test_constant_absorption_interior_below_one(self, mesh64):
        model = make_model(sigma_xa=lambda x, y: 0.1 + 0 * x,
                           sigma_xf=lambda x, y: 0.2 + 0 * x, g=ONE)
        u0 = forward.solve_excitation(model, mesh64)
        interior = u0.coeffs[mesh64.interior_dofs]
        assert np.all(interior > 0.0)
        assert np.all(interior < 1.0)
        boundary = u0.coeffs[mesh64.boundary_dofs]
        np.testing.assert_allclose(boundary, 1.0, atol=1e-14)

    def test_v_interior_in_unit_interval(self, mesh64):
        v = forward.solve_auxiliary_v(make_model(), mesh64)
        interior = v.coeffs[mesh64.interior_dofs]
        assert np.all(interior > 0.0)
        assert np.all(interior < 1.0)

    def test_nonnegative_sources_give_nonnegative_fields(self, mesh64):
        state = forward.solve_forward(make_model(), mesh64)
        assert np.min(state.w0.coeffs) >= -1e-14
        assert np.min(state.p.coeffs) >= -1e-14


class TestLinearity:
    def test_boundary_scaling(self, mesh32):
        model = make_model()
        doubled = dataclasses.replace(
            model, g=lambda x, y: 2 * (np.exp(2 * x) + np.exp(-2 * y)))
        u1 = forward.solve_excitation(model, mesh32)
        u2 = forward.solve_excitation(doubled, mesh32)
        np.testing.assert_allclose(u2.coeffs, 2 * u1.coeffs, rtol=1e-12,
                                   atol=1e-14)

    def test_h_scaling(self, mesh32):
        model = make_model()
        doubled = dataclasses.replace(model, h=lambda x, y: 2.0 + 0 * x)
        v1 = forward.solve_auxiliary_v(model, mesh32)
        v2 = forward.solve_auxiliary_v(doubled, mesh32)
        np.testing.assert_allclose(v2.coeffs, 2 * v1.coeffs, rtol=1e-12,
                                   atol=1e-14)

    def test_emission_source_superposition(self, mesh32):
        model = make_model()
        u0 = forward.solve_excitation(model, mesh32)
        ua = ScalarField(mesh32, u0.coeffs * 0.3)
        ub = ScalarField(mesh32, u0.coeffs * 0.7)
        wa = forward.solve_emission(model, mesh32, ua)
        wb = forward.solve_emission(model, mesh32, ub)
        w = forward.solve_emission(model, mesh32, u0)
        np.testing.assert_allclose(w.coeffs, wa.coeffs + wb.coeffs,
                                   rtol=1e-12, atol=1e-14)


class TestAgainstFiniteDifferenceOracle:
    def test_excitation(self):
        model = make_model()
        mesh = fem.build_structured_mesh(0.5, 64, 2)
        u0 = forward.solve_excitation(model, mesh)
        g, uref = fd_solve(model.D_x,
                           lambda x, y: model.sigma_xa(x, y) + model.sigma_xf(x, y),
                           None, model.g, m=513)
        assert relative_l2_on_grid(u0, g, uref) < 1e-3

    def test_auxiliary_v(self):
        model = make_model()
        mesh = fem.build_structured_mesh(0.5, 64, 2)
        v = forward.solve_auxiliary_v(model, mesh)
        g, vref = fd_solve(model.D_m, model.sigma_ma, None, model.h, m=513)
        assert relative_l2_on_grid(v, g, vref) < 1e-3

    def test_emission_chain(self):
        model = make_model()
        mesh = fem.build_structured_mesh(0.5, 64, 2)
        state = forward.solve_forward(model, mesh)
        # oracle recomputes u0 and then w0 entirely on its own grid
        g, u_fd = fd_solve(model.D_x,
                           lambda x, y: model.sigma_xa(x, y) + model.sigma_xf(x, y),
                           None, model.g, m=513)
        X, Y = np.meshgrid(g, g, indexing="xy")
        src = model.eta(X, Y) * model.sigma_xf(X, Y) * u_fd
        g2, w_fd = fd_solve(model.D_m, model.sigma_ma,
                            lambda x, y: src, 0.0, m=513)
        assert relative_l2_on_grid(state.w0, g2, w_fd) < 2e-3
