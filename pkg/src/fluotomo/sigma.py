"""Reconstruction of the fluorophore absorption coefficient from the first
internal datum.

The datum is turned into a semilinear Dirichlet problem for the transformed
unknown Psi = u0^(2/(1+theta)); depending on the sign regime of (theta, b, c)
one of three globally convergent monotone iterations (or a single linear
solve at theta = 0) produces Psi, from which u0 and then the absorption
coefficient follow pointwise.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fem
from .config import CaseKind, CaseTag, classify_case
from .fem import LinearSystem, PositivityViolationError, ScalarField


class UnsupportedCaseError(Exception):
    """The (theta, b, c) sign pattern matches none of the solve regimes."""


class DegenerateKappaError(Exception):
    """The running lower bound of the iterates fell below the positivity floor."""


@dataclass
class SemilinearProblem:
    mesh: object
    a: object                  # diffusion coefficient, callable
    b: ScalarField             # linear reaction coefficient, nonnegative in-case
    c: ScalarField             # nonlinear coefficient derived from the datum
    theta: float
    boundary: object           # callable, trace g^(2/(1+theta))
    case: CaseTag
    sign_violation_fraction: float = 0.0


@dataclass
class IterationTrace:
    residuals: list = dc_field(default_factory=list)
    psi_min: list = dc_field(default_factory=list)
    psi_max: list = dc_field(default_factory=list)
    kappa: list = dc_field(default_factory=list)
    nu: list = dc_field(default_factory=list)
    monotone: list = dc_field(default_factory=list)
    converged: bool = False
    sign_violation_fraction: float = 0.0

    @property
    def iterations(self):
        return len(self.residuals)


def build_problem(Q, model, elasto, g=None):
    """Assemble the semilinear problem a = D_x, b = -(2/(1+theta)) sigma_xa mu,
    c = (2/(1+theta)) Q / beta_f with boundary trace g^(2/(1+theta))."""
    mesh = Q.mesh
    theta = elasto.theta
    if g is None:
        g = model.g
    x, y = mesh.dof_coords.T
    scale = 2.0 / (1.0 + theta)
    b = ScalarField(mesh, -scale * model.sigma_xa(x, y) * elasto.mu)
    c = ScalarField(mesh, scale * Q.coeffs / elasto.beta_f)
    case = classify_case(theta, b.coeffs, c.coeffs)
    cmax = max(np.max(np.abs(c.coeffs)), 1.0)
    if case.kind is CaseKind.UNSUPPORTED:
        # noisy data may violate the case's sign condition at scattered
        # nodes; fall back on the regime theta alone dictates when the
        # violating fraction is small, recording it instead of failing
        if theta > 0.0:
            kind, bad = CaseKind.CASE2, np.sum(c.coeffs > 1e-12 * cmax)
        elif -1.0 < theta < 0.0:
            kind, bad = CaseKind.CASE11, np.sum(c.coeffs < -1e-12 * cmax)
        elif theta < -1.0:
            kind, bad = CaseKind.CASE12, np.sum(c.coeffs < -1e-12 * cmax)
        else:
            raise UnsupportedCaseError(case.reason)
        frac = float(bad) / mesh.n_dofs
        b_ok = classify_case(theta, b.coeffs, np.zeros(1)).kind is not \
            CaseKind.UNSUPPORTED
        if not b_ok or frac > 0.05:
            raise UnsupportedCaseError(case.reason)
        case = CaseTag(kind, "sign condition violated at %.3g%% of nodes"
                       % (100 * frac))
    else:
        if case.kind in (CaseKind.CASE11, CaseKind.CASE12):
            bad = np.sum(c.coeffs < -1e-12 * cmax)
        elif case.kind is CaseKind.CASE2:
            bad = np.sum(c.coeffs > 1e-12 * cmax)
        else:
            bad = 0
        frac = float(bad) / mesh.n_dofs

    exponent = scale

    def boundary(xb, yb):
        return np.asarray(g(xb, yb), dtype=float) ** exponent

    return SemilinearProblem(mesh=mesh, a=model.D_x,
                             b=b, c=c, theta=theta, boundary=boundary,
                             case=case, sign_violation_fraction=frac)


def _relative_change(mesh, new, old):
    diff = fem.norms(ScalarField(mesh, new - old))["L2"]
    denom = fem.norms(ScalarField(mesh, new))["L2"]
    return diff / denom if denom > 0 else 0.0


def _record(trace, psi, r, monotone, kappa=np.nan, nu=np.nan):
    trace.residuals.append(r)
    trace.psi_min.append(float(np.min(psi)))
    trace.psi_max.append(float(np.max(psi)))
    trace.kappa.append(kappa)
    trace.nu.append(nu)
    trace.monotone.append(monotone)


def solve_psi_case11(problem, tol=1e-8, max_iter=200, positivity_floor=1e-12):
    """Monotone nonincreasing iteration for -1 < theta < 0, b >= 0, c >= 0.

    Psi_0 solves the problem without the nonlinear term; each step freezes
    Psi_{n-1}^{-(theta+1)} inside the reaction coefficient.
    """
    mesh = problem.mesh
    trace = IterationTrace(sign_violation_fraction=problem.sign_violation_fraction)
    K = fem.assemble_matrix(mesh, diff=problem.a)
    Mb = fem.assemble_matrix(mesh, react=problem.b)
    gvals = fem.boundary_values(mesh, problem.boundary)
    zero = np.zeros(mesh.n_dofs)

    psi = LinearSystem(mesh, K + Mb, zero, gvals).solve().coeffs
    slack = 1e-10 * np.max(np.abs(psi))
    power = -(problem.theta + 1.0)
    for _ in range(max_iter):
        if np.min(psi) <= positivity_floor:
            raise PositivityViolationError(
                "iterate nodal minimum %g at or below positivity floor"
                % np.min(psi))
        frozen = ScalarField(mesh, problem.c.coeffs * psi ** power)
        A = K + Mb + fem.assemble_matrix(mesh, react=frozen)
        new = LinearSystem(mesh, A, zero, gvals).solve().coeffs
        r = _relative_change(mesh, new, psi)
        _record(trace, new, r, bool(np.all(new <= psi + slack)))
        psi = new
        if r <= tol:
            trace.converged = True
            return ScalarField(mesh, psi), trace
    raise fem.NonConvergenceError("case (1.1) iteration did not converge",
                                  iterations=max_iter,
                                  residual=trace.residuals[-1])


def solve_psi_case12(problem, tol=1e-8, max_iter=200, positivity_floor=1e-12):
    """Monotone nondecreasing iteration for theta < -1, b >= 0, c >= 0.

    nu is fixed from the boundary maximum h_bar of the transformed trace; the
    matrix K + M(b + c nu) is factorized once and reused.
    """
    mesh = problem.mesh
    trace = IterationTrace(sign_violation_fraction=problem.sign_violation_fraction)
    gvals = fem.boundary_values(mesh, problem.boundary)
    h_bar = float(np.max(gvals))
    nu = -problem.theta * h_bar ** (-(1.0 + problem.theta))

    K = fem.assemble_matrix(mesh, diff=problem.a)
    react = ScalarField(mesh, problem.b.coeffs + nu * problem.c.coeffs)
    system = LinearSystem(mesh, K + fem.assemble_matrix(mesh, react=react),
                          np.zeros(mesh.n_dofs), gvals)
    M = mesh.mass_matrix()

    psi = system.solve().coeffs
    slack = 1e-10 * np.max(np.abs(psi))
    for _ in range(max_iter):
        if np.min(psi) <= positivity_floor:
            raise PositivityViolationError(
                "iterate nodal minimum %g at or below positivity floor"
                % np.min(psi))
        rhs_field = -problem.c.coeffs * (psi ** (-problem.theta) - nu * psi)
        system.rhs = M @ rhs_field
        new = system.solve().coeffs
        r = _relative_change(mesh, new, psi)
        _record(trace, new, r, bool(np.all(new >= psi - slack)),
                kappa=h_bar, nu=nu)
        psi = new
        if r <= tol:
            trace.converged = True
            return ScalarField(mesh, psi), trace
    raise fem.NonConvergenceError("case (1.2) iteration did not converge",
                                  iterations=max_iter,
                                  residual=trace.residuals[-1])


def solve_psi_case2(problem, tol=1e-8, max_iter=200, positivity_floor=1e-12):
    """Monotone nondecreasing iteration for theta >= 0, b >= 0, c <= 0.

    kappa tracks the running nodal minimum of the iterates (initialized from
    the boundary trace) and retunes nu = -theta kappa^(-(1+theta)) each step.
    """
    mesh = problem.mesh
    theta = problem.theta
    trace = IterationTrace(sign_violation_fraction=problem.sign_violation_fraction)
    gvals = fem.boundary_values(mesh, problem.boundary)
    K = fem.assemble_matrix(mesh, diff=problem.a)
    Mb = fem.assemble_matrix(mesh, react=problem.b)
    Mc = fem.assemble_matrix(mesh, react=problem.c)
    M = mesh.mass_matrix()
    zero = np.zeros(mesh.n_dofs)

    psi = LinearSystem(mesh, K + Mb, zero, gvals).solve().coeffs
    slack = 1e-10 * np.max(np.abs(psi))
    kappa = float(np.min(gvals))
    for _ in range(max_iter):
        if kappa <= positivity_floor:
            raise DegenerateKappaError(
                "kappa = %g at or below the positivity floor" % kappa)
        if np.min(psi) <= positivity_floor:
            raise PositivityViolationError(
                "iterate nodal minimum %g at or below positivity floor"
                % np.min(psi))
        nu = -theta * kappa ** (-(1.0 + theta))
        A = K + Mb + nu * Mc
        rhs_field = -problem.c.coeffs * (psi ** (-theta) - nu * psi)
        new = LinearSystem(mesh, A, M @ rhs_field, gvals).solve().coeffs
        r = _relative_change(mesh, new, psi)
        _record(trace, new, r, bool(np.all(new >= psi - slack)),
                kappa=kappa, nu=nu)
        psi = new
        kappa = float(np.min(psi))
        if r <= tol:
            trace.converged = True
            return ScalarField(mesh, psi), trace
    raise fem.NonConvergenceError("case (2) iteration did not converge",
                                  iterations=max_iter,
                                  residual=trace.residuals[-1])


def solve_psi_linear(problem):
    """Direct solve of the theta = 0 reduction: -div(a grad Psi) + b Psi = -c."""
    mesh = problem.mesh
    M = mesh.mass_matrix()
    K = fem.assemble_matrix(mesh, diff=problem.a)
    Mb = fem.assemble_matrix(mesh, react=problem.b)
    gvals = fem.boundary_values(mesh, problem.boundary)
    return LinearSystem(mesh, K + Mb, -(M @ problem.c.coeffs), gvals).solve()


def solve_psi(problem, tol=1e-8, max_iter=200, positivity_floor=1e-12):
    """Dispatch on the classified case; returns (Psi, trace)."""
    kind = problem.case.kind
    if kind is CaseKind.CASE11:
        return solve_psi_case11(problem, tol, max_iter, positivity_floor)
    if kind is CaseKind.CASE12:
        return solve_psi_case12(problem, tol, max_iter, positivity_floor)
    if kind is CaseKind.CASE2:
        return solve_psi_case2(problem, tol, max_iter, positivity_floor)
    if kind is CaseKind.LINEAR_THETA0:
        psi = solve_psi_linear(problem)
        trace = IterationTrace(converged=True,
                               sign_violation_fraction=problem.sign_violation_fraction)
        _record(trace, psi.coeffs, 0.0, True)
        return psi, trace
    raise UnsupportedCaseError(problem.case.reason)


def recover_u0(psi, theta, positivity_floor=1e-12):
    """Invert the change of variables: u0 = Psi^((1+theta)/2) nodally."""
    if np.min(psi.coeffs) <= positivity_floor:
        raise PositivityViolationError(
            "Psi nodal minimum %g at or below positivity floor"
            % np.min(psi.coeffs))
    return ScalarField(psi.mesh, psi.coeffs ** ((1.0 + theta) / 2.0))


def recover_sigma(Q, u0, model, elasto, positivity_floor=1e-12):
    """Pointwise inversion of the first-datum formula for sigma_xf, using
    recovered nodal gradients of u0."""
    if np.min(u0.coeffs) <= positivity_floor:
        raise PositivityViolationError(
            "u0 nodal minimum %g at or below positivity floor"
            % np.min(u0.coeffs))
    mesh = u0.mesh
    x, y = mesh.dof_coords.T
    gx, gy = u0.recovered_gradient()
    grad2 = gx ** 2 + gy ** 2
    num = (Q.coeffs - elasto.gamma_x * model.D_x(x, y) * grad2
           - elasto.beta_x * model.sigma_xa(x, y) * u0.coeffs ** 2)
    return ScalarField(mesh, num / (elasto.beta_f * u0.coeffs ** 2))


def reconstruct_sigma(Q, model, elasto, tol=1e-8, max_iter=200,
                      positivity_floor=1e-12):
    """Full first-stage pipeline: datum -> Psi -> u0 -> sigma_xf.

    Returns (sigma_xf, u0, trace).
    """
    problem = build_problem(Q, model, elasto)
    psi, trace = solve_psi(problem, tol, max_iter, positivity_floor)
    u0 = recover_u0(psi, elasto.theta, positivity_floor)
    sigma_xf = recover_sigma(Q, u0, model, elasto, positivity_floor)
    return sigma_xf, u0, trace
