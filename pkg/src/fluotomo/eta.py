"""Reconstruction of the quantum efficiency from the second internal datum.

The datum satisfies a linear Fredholm equation (A0 + A1 + A2) eta = S where
A0 is multiplication by -beta_f sigma_xf u0 v and A1, A2 wrap two cached
elliptic solves.  The equation is solved matrix-free with restarted GMRES on
the nodal coefficient vectors.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .fem import NonConvergenceError, ScalarField


class NearSingularError(Exception):
    """The zero-order multiplier of the operator is not bounded away from 0."""


@dataclass
class SolveTrace:
    residuals: list = dc_field(default_factory=list)
    final_residual: float = np.nan
    iterations: int = 0
    converged: bool = False


class EtaOperator:
    """Discrete (A0 + A1 + A2) with cached inner factorizations.

    ``sigma_xf`` may be the true coefficient or a reconstruction; it enters
    both the sources and the excitation operator.  The two inner solves each
    reuse one LU factorization across all Krylov iterations.
    """

    def __init__(self, mesh, model, elasto, u0, v, sigma_xf=None):
        self.mesh = mesh
        self.model = model
        self.elasto = elasto
        self.u0 = u0
        self.v = v
        x, y = mesh.dof_coords.T
        if sigma_xf is None:
            self.sigma_xf = np.asarray(model.sigma_xf(x, y), dtype=float)
        elif isinstance(sigma_xf, ScalarField):
            self.sigma_xf = sigma_xf.coeffs
        else:
            self.sigma_xf = np.asarray(sigma_xf, dtype=float)

        self._M = mesh.mass_matrix()
        self._Gx, self._Gy = mesh.recovery_matrices()

        A_em = fem.assemble_matrix(mesh, diff=model.D_m, react=model.sigma_ma)
        react_ex = ScalarField(mesh, model.sigma_xa(x, y) + self.sigma_xf)
        A_ex = fem.assemble_matrix(mesh, diff=model.D_x, react=react_ex)
        zeros = np.zeros(len(mesh.boundary_dofs))
        self._emission = fem.LinearSystem(mesh, A_em, np.zeros(mesh.n_dofs), zeros)
        self._excitation = fem.LinearSystem(mesh, A_ex, np.zeros(mesh.n_dofs), zeros)
        self._emission.factorize()
        self._excitation.factorize()

        gv = self._Gx @ v.coeffs, self._Gy @ v.coeffs
        gu = self._Gx @ u0.coeffs, self._Gy @ u0.coeffs
        self._grad_v = gv
        self._grad_u0 = gu
        self._Dm = model.D_m(x, y)
        self._Dx = model.D_x(x, y)
        self._sma = model.sigma_ma(x, y)
        self._sxa = model.sigma_xa(x, y)
        self._mult_a0 = -elasto.beta_f * self.sigma_xf * u0.coeffs * v.coeffs
        self._react_em = elasto.beta_m * self._sma * v.coeffs
        self._react_ex = ((elasto.beta_x * self._sxa
                           + elasto.beta_f * self.sigma_xf) * u0.coeffs)

    def _inner_solve(self, system, source_vals):
        system.rhs = self._M @ source_vals
        return system.solve().coeffs

    def apply_T0(self, eta_vals):
        """Emission solve with source eta sigma_xf u0, zero Dirichlet."""
        return self._inner_solve(self._emission,
                                 eta_vals * self.sigma_xf * self.u0.coeffs)

    def apply_T1(self, eta_vals):
        """Excitation solve with source eta sigma_xf v, zero Dirichlet."""
        return self._inner_solve(self._excitation,
                                 eta_vals * self.sigma_xf * self.v.coeffs)

    def apply_A(self, eta_vals):
        """(A0 + A1 + A2) eta on nodal coefficients."""
        eta_vals = np.asarray(eta_vals, dtype=float)
        w = self.apply_T0(eta_vals)
        p = self.apply_T1(eta_vals)
        gw = self._Gx @ w, self._Gy @ w
        gp = self._Gx @ p, self._Gy @ p
        a0 = self._mult_a0 * eta_vals
        a1 = (self.elasto.gamma_m * self._Dm
              * (self._grad_v[0] * gw[0] + self._grad_v[1] * gw[1])
              + self._react_em * w)
        a2 = (self.elasto.gamma_x * self._Dx
              * (self._grad_u0[0] * gp[0] + self._grad_u0[1] * gp[1])
              + self._react_ex * p)
        return a0 + a1 + a2


def apply_T0(eta, op):
    return ScalarField(op.mesh, op.apply_T0(_vals(eta)))


def apply_T1(eta, op):
    return ScalarField(op.mesh, op.apply_T1(_vals(eta)))


def apply_A(eta, op):
    return ScalarField(op.mesh, op.apply_A(_vals(eta)))


def _vals(eta):
    return eta.coeffs if isinstance(eta, ScalarField) else np.asarray(eta, dtype=float)


def solve_eta(S, op, tol=1e-10, restart=30, max_iter=500,
              singular_rtol=1e-8):
    """Matrix-free restarted GMRES solve of (A0 + A1 + A2) eta = S.

    The zero-order multiplier -beta_f sigma_xf u0 v acts as the invertibility
    surrogate: if it is not bounded away from zero relative to its maximum,
    the Fredholm equation is flagged as near singular.

    Returns (eta field, SolveTrace); the returned field carries a verified
    residual certificate ||A eta - S|| / ||S|| <= tol.
    """
    mult = np.abs(op._mult_a0)
    if np.min(mult) <= singular_rtol * np.max(mult):
        raise NearSingularError(
            "zero-order multiplier min/max ratio %.3e below %g"
            % (np.min(mult) / max(np.max(mult), 1e-300), singular_rtol))

    svals = _vals(S)
    trace = SolveTrace()
    n = op.mesh.n_dofs
    A = spla.LinearOperator((n, n), matvec=op.apply_A)

    if np.linalg.norm(svals) == 0.0:
        trace.converged = True
        trace.final_residual = 0.0
        return ScalarField(op.mesh, np.zeros(n)), trace

    def callback(pr_norm):
        trace.residuals.append(float(pr_norm))

    eta_vals, info = spla.gmres(A, svals, rtol=tol, atol=0.0,
                                restart=restart, maxiter=max_iter,
                                callback=callback, callback_type="pr_norm")
    residual = (np.linalg.norm(op.apply_A(eta_vals) - svals)
                / np.linalg.norm(svals))
    trace.final_residual = float(residual)
    trace.iterations = len(trace.residuals)
    trace.converged = info == 0 and residual <= tol
    if not trace.converged:
        raise NonConvergenceError(
            "GMRES did not reach tolerance (info=%d, residual=%.3e)"
            % (info, residual),
            iterations=trace.iterations, residual=trace.final_residual)
    return ScalarField(op.mesh, eta_vals), trace
