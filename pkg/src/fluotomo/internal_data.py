"""Internal data fields Q and S, the first-order measurement probe J1, and
the seeded noise model used by the experiments."""

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import ScalarField


@dataclass(frozen=True)
class Provenance:
    kind: str            # "clean" or "noised"
    level: float = 0.0
    seed: int = 0


@dataclass
class InternalData:
    Q: ScalarField
    S: ScalarField
    provenance: Provenance


def compute_Q(u0, model, elasto):
    """First internal datum:
    Q = gamma_x D_x |grad u0|^2 + (beta_x sigma_xa + beta_f sigma_xf) u0^2.

    Gradients are discontinuous across element edges, so they are recovered
    at each node by area-weighted averaging before evaluating the formula.
    """
    mesh = u0.mesh
    x, y = mesh.dof_coords.T
    gx, gy = u0.recovered_gradient()
    grad2 = gx ** 2 + gy ** 2
    vals = (elasto.gamma_x * model.D_x(x, y) * grad2
            + (elasto.beta_x * model.sigma_xa(x, y)
               + elasto.beta_f * model.sigma_xf(x, y)) * u0.coeffs ** 2)
    return ScalarField(mesh, vals)


def compute_S(state, model, elasto, eta_field=None):
    """Second internal datum built from all four forward fields."""
    mesh = state.u0.mesh
    x, y = mesh.dof_coords.T
    eta_vals = eta_field.coeffs if eta_field is not None else model.eta(x, y)
    gw = state.w0.recovered_gradient()
    gv = state.v.recovered_gradient()
    gp = state.p.recovered_gradient()
    gu = state.u0.recovered_gradient()
    vals = (elasto.gamma_m * model.D_m(x, y) * (gw[0] * gv[0] + gw[1] * gv[1])
            + elasto.beta_m * model.sigma_ma(x, y) * state.w0.coeffs * state.v.coeffs
            + elasto.gamma_x * model.D_x(x, y) * (gp[0] * gu[0] + gp[1] * gu[1])
            + (elasto.beta_x * model.sigma_xa(x, y)
               + elasto.beta_f * model.sigma_xf(x, y)) * state.p.coeffs * state.u0.coeffs
            - eta_vals * elasto.beta_f * model.sigma_xf(x, y)
            * state.u0.coeffs * state.v.coeffs)
    return ScalarField(mesh, vals)


def compute_J1(Q, q, phi):
    """First-order measurement functional: integral of Q cos(q.x + phi)."""
    qx, qy = q
    return fem.integrate(Q, weight=lambda x, y: np.cos(qx * x + qy * y + phi))


def add_noise(field, level, seed):
    """Multiplicative nodal noise: value <- value (1 + level xi), xi ~ U[-1, 1]
    from a seeded deterministic generator."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return ScalarField(field.mesh, field.coeffs.copy())
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=field.coeffs.shape)
    return ScalarField(field.mesh, field.coeffs * (1.0 + level * xi))
