"""Unmodulated forward solves: excitation/emission photon densities and the
two auxiliary fields feeding the second internal datum."""

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import PositivityViolationError, ScalarField


@dataclass
class ForwardState:
    u0: ScalarField
    w0: ScalarField
    v: ScalarField
    p: ScalarField


def _total_absorption(model):
    return lambda x, y: model.sigma_xa(x, y) + model.sigma_xf(x, y)


def solve_excitation(model, mesh):
    """Excitation density: -div(D_x grad u0) + (sigma_xa + sigma_xf) u0 = 0,
    u0 = g on the boundary.  Positivity is enforced at all DOF nodes."""
    system = fem.assemble(mesh, model.D_x, _total_absorption(model), None, model.g)
    u0 = system.solve()
    if np.min(u0.coeffs) <= 0.0:
        raise PositivityViolationError(
            "excitation field has nonpositive nodal minimum %g; mesh too "
            "coarse or invalid coefficients" % np.min(u0.coeffs))
    return u0


def solve_emission(model, mesh, u0):
    """Emission density driven by eta sigma_xf u0, zero Dirichlet."""
    source = ScalarField(mesh, model.eta(*mesh.dof_coords.T)
                         * model.sigma_xf(*mesh.dof_coords.T) * u0.coeffs)
    system = fem.assemble(mesh, model.D_m, model.sigma_ma, source, 0.0)
    return system.solve()


def solve_auxiliary_v(model, mesh):
    """Adjoint-like auxiliary field with boundary data h > 0."""
    system = fem.assemble(mesh, model.D_m, model.sigma_ma, None, model.h)
    v = system.solve()
    if np.min(v.coeffs) <= 0.0:
        raise PositivityViolationError(
            "auxiliary field v has nonpositive nodal minimum %g"
            % np.min(v.coeffs))
    return v


def solve_auxiliary_p(model, mesh, v, eta_field=None):
    """Auxiliary field driven by eta sigma_xf v, zero Dirichlet."""
    x, y = mesh.dof_coords.T
    eta_vals = eta_field.coeffs if eta_field is not None else model.eta(x, y)
    source = ScalarField(mesh, eta_vals * model.sigma_xf(x, y) * v.coeffs)
    system = fem.assemble(mesh, model.D_x, _total_absorption(model), source, 0.0)
    return system.solve()


def solve_forward(model, mesh):
    """All four forward fields for a validated model."""
    u0 = solve_excitation(model, mesh)
    w0 = solve_emission(model, mesh, u0)
    v = solve_auxiliary_v(model, mesh)
    p = solve_auxiliary_p(model, mesh, v)
    return ForwardState(u0=u0, w0=w0, v=v, p=p)
