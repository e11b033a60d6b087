"""Structured triangular meshes and a Lagrange finite element kernel.

Provides meshing of the square domain, assembly of variable-coefficient
reaction-diffusion operators, Dirichlet elimination, sparse solves, field
evaluation, nodal gradient recovery, quadrature and norms.  Everything is
2D, order 1 through 4 Lagrange elements on a diagonal-split structured
triangulation.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi


class SingularSystemError(Exception):
    """Raised when the reduced linear system cannot be solved reliably."""


class NonConvergenceError(Exception):
    """Raised when an iterative solve fails to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PositivityViolationError(Exception):
    """Raised when a field that must be positive dips below its floor."""


def triangle_quadrature(degree):
    """Collapsed Gauss-Legendre x Gauss-Jacobi rule on the reference triangle.

    Exact for polynomials of total degree <= ``degree`` on the triangle with
    vertices (0,0), (1,0), (0,1).

    Returns
    -------
    points : (nq, 2) array
    weights : (nq,) array, summing to 1/2
    """
    n = max(1, (degree + 2) // 2)
    # Legendre in the collapsed coordinate, Jacobi(1,0) absorbs the (1-v) factor
    xu, wu = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (xu + 1.0)
    wu = 0.5 * wu
    xv, wv = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xv + 1.0)
    wv = 0.25 * wv

    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    wts = (WU * WV).ravel()
    return pts, wts


def _monomial_exponents(k):
    return [(i, j) for total in range(k + 1) for i in range(total, -1, -1)
            for j in (total - i,)]


def _monomials(points, exps):
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([x ** a * y ** b for a, b in exps])


def _monomial_gradients(points, exps):
    x, y = points[:, 0], points[:, 1]
    gx = np.column_stack([a * x ** max(a - 1, 0) * y ** b if a else np.zeros_like(x)
                          for a, b in exps])
    gy = np.column_stack([b * x ** a * y ** max(b - 1, 0) if b else np.zeros_like(x)
                          for a, b in exps])
    return gx, gy


class _Reference:
    """Reference-triangle Lagrange basis of order k with tabulated values."""

    def __init__(self, k):
        self.k = k
        self.exps = _monomial_exponents(k)
        self.nodes = np.array([(i / k, j / k) for j in range(k + 1)
                               for i in range(k + 1 - j)])
        V = _monomials(self.nodes, self.exps)
        self.coeff = np.linalg.inv(V)  # monomial -> nodal basis
        self.n_local = len(self.nodes)

        self.quad_pts, self.quad_wts = triangle_quadrature(2 * k)
        self.B = _monomials(self.quad_pts, self.exps) @ self.coeff
        gx, gy = _monomial_gradients(self.quad_pts, self.exps)
        self.Gref = np.stack([gx @ self.coeff, gy @ self.coeff])  # (2, nq, nl)
        # basis gradients at the reference nodes, for gradient recovery
        ngx, ngy = _monomial_gradients(self.nodes, self.exps)
        self.Gref_nodes = np.stack([ngx @ self.coeff, ngy @ self.coeff])

    def basis_at(self, ref_points):
        return _monomials(ref_points, self.exps) @ self.coeff

    def basis_grad_at(self, ref_points):
        gx, gy = _monomial_gradients(ref_points, self.exps)
        return np.stack([gx @ self.coeff, gy @ self.coeff])


_REFERENCE_CACHE = {}


def _reference(k):
    if k not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[k] = _Reference(k)
    return _REFERENCE_CACHE[k]


class Mesh:
    """Diagonal-split structured triangulation of [-hw, hw]^2.

    The n x n grid of squares is split along the same diagonal into 2 n^2
    triangles.  Degrees of freedom of the order-k Lagrange space coincide
    with the uniform (n k + 1)^2 grid, which keeps the global enumeration
    trivial.
    """

    def __init__(self, half_width, n, k=2):
        if n < 2:
            raise ValueError("need at least 2 subdivisions per side, got %d" % n)
        if not 1 <= k <= 4:
            raise ValueError("element order must be in [1, 4], got %d" % k)
        self.half_width = float(half_width)
        self.n = int(n)
        self.k = int(k)
        self.ref = _reference(k)

        hw, h = self.half_width, 2.0 * self.half_width / n
        self.h_cell = h
        nf = n * k
        self.h_fine = 2.0 * hw / nf
        self.n_fine = nf + 1

        # vertex grid and triangle connectivity
        g1 = np.linspace(-hw, hw, n + 1)
        VX, VY = np.meshgrid(g1, g1, indexing="xy")
        self.vertices = np.column_stack([VX.ravel(), VY.ravel()])
        cells_i, cells_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ci, cj = cells_i.ravel(), cells_j.ravel()
        a = cj * (n + 1) + ci
        b = a + 1
        c = b + (n + 1)
        d = a + (n + 1)
        lower = np.column_stack([a, b, c])
        upper = np.column_stack([a, c, d])
        self.triangles = np.empty((2 * n * n, 3), dtype=np.int64)
        self.triangles[0::2] = lower
        self.triangles[1::2] = upper
        self.n_triangles = 2 * n * n

        # per-element affine map: x = v0 + J xi, two orientations only
        self.orientation = np.tile(np.array([0, 1]), n * n)
        self.J = np.array([[[h, h], [0.0, h]], [[h, 0.0], [h, h]]])
        self.Jinv = np.array([np.linalg.inv(self.J[0]), np.linalg.inv(self.J[1])])
        self.detJ = h * h
        self.cell_origin = self.vertices[self.triangles[:, 0]]

        # physical gradients of the reference basis, per orientation: (2, nq, nl)
        self.Gphys = np.stack([
            np.einsum("dc,cql->dql", self.Jinv[o].T, self.ref.Gref)
            for o in range(2)])
        self.Gphys_nodes = np.stack([
            np.einsum("dc,cql->dql", self.Jinv[o].T, self.ref.Gref_nodes)
            for o in range(2)])

        # global DOFs on the fine grid
        gf = np.linspace(-hw, hw, self.n_fine)
        FX, FY = np.meshgrid(gf, gf, indexing="xy")
        self.dof_coords = np.column_stack([FX.ravel(), FY.ravel()])
        self.n_dofs = self.n_fine ** 2

        local_phys = (self.cell_origin[:, None, :]
                      + np.einsum("odc,lc->old", self.J, self.ref.nodes)[self.orientation])
        idx = np.rint((local_phys + hw) / self.h_fine).astype(np.int64)
        self.elem_dofs = idx[:, :, 1] * self.n_fine + idx[:, :, 0]

        ix = np.arange(self.n_dofs) % self.n_fine
        iy = np.arange(self.n_dofs) // self.n_fine
        self.boundary_mask = (ix == 0) | (ix == nf) | (iy == 0) | (iy == nf)
        self.boundary_dofs = np.nonzero(self.boundary_mask)[0]
        self.interior_dofs = np.nonzero(~self.boundary_mask)[0]

        # boundary edges as vertex index pairs, counterclockwise
        bot = [(i, i + 1) for i in range(n)]
        right = [(n + i * (n + 1), n + (i + 1) * (n + 1)) for i in range(n)]
        top = [((n + 1) * (n + 1) - 1 - i, (n + 1) * (n + 1) - 2 - i) for i in range(n)]
        left = [((n - i) * (n + 1), (n - 1 - i) * (n + 1)) for i in range(n)]
        self.boundary_edges = np.array(bot + right + top + left, dtype=np.int64)

        self._area_weight = None
        self._recovery = None
        self._mass = None

    # -- geometry helpers -------------------------------------------------

    def quad_points_physical(self):
        """Physical quadrature points, shape (n_triangles, nq, 2)."""
        shifted = np.einsum("odc,qc->oqd", self.J, self.ref.quad_pts)
        return self.cell_origin[:, None, :] + shifted[self.orientation]

    def locate(self, points):
        """Map physical points to (element index, reference coordinates)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hw, h, n = self.half_width, self.h_cell, self.n
        cx = np.clip(((pts[:, 0] + hw) / h).astype(np.int64), 0, n - 1)
        cy = np.clip(((pts[:, 1] + hw) / h).astype(np.int64), 0, n - 1)
        u = (pts[:, 0] + hw) / h - cx
        v = (pts[:, 1] + hw) / h - cy
        is_lower = u >= v
        elem = 2 * (cx * n + cy) + np.where(is_lower, 0, 1)
        ref = np.where(is_lower[:, None],
                       np.column_stack([u - v, v]),
                       np.column_stack([u, v - u]))
        return elem, ref

    # -- cached operators -------------------------------------------------

    def mass_matrix(self):
        """Unweighted mass matrix (cached)."""
        if self._mass is None:
            self._mass = assemble_matrix(self, diff=None, react=1.0)
        return self._mass

    def recovery_matrices(self):
        """Sparse operators mapping nodal coefficients to recovered nodal
        gradients, area-weighted average over elements sharing each node."""
        if self._recovery is not None:
            return self._recovery
        nl = self.ref.n_local
        rows = np.repeat(self.elem_dofs, nl, axis=1).ravel()
        cols = np.tile(self.elem_dofs, nl).ravel()
        Gn = self.Gphys_nodes[self.orientation]  # (nt, 2, nl_pts, nl_basis)
        w = self.detJ
        data_x = (w * Gn[:, 0]).ravel()
        data_y = (w * Gn[:, 1]).ravel()
        shape = (self.n_dofs, self.n_dofs)
        Gx = sp.csr_matrix((data_x, (rows, cols)), shape=shape)
        Gy = sp.csr_matrix((data_y, (rows, cols)), shape=shape)
        counts = np.zeros(self.n_dofs)
        np.add.at(counts, self.elem_dofs.ravel(), w)
        Dinv = sp.diags(1.0 / counts)
        self._recovery = (Dinv @ Gx, Dinv @ Gy)
        return self._recovery

    def export_csv(self, path):
        """Write vertices and connectivity for debugging."""
        with open(path, "w") as f:
            f.write("# vertices: x,y\n")
            for x, y in self.vertices:
                f.write("%.17g,%.17g\n" % (x, y))
            f.write("# triangles: v0,v1,v2\n")
            for t in self.triangles:
                f.write("%d,%d,%d\n" % tuple(t))


def build_structured_mesh(half_width, n, k=2):
    """Build the diagonal-split structured mesh of [-half_width, half_width]^2."""
    return Mesh(half_width, n, k)


class ScalarField:
    """A function on the mesh given by Lagrange nodal coefficients."""

    def __init__(self, mesh, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (mesh.n_dofs,):
            raise ValueError("coefficient count %s does not match DOF count %d"
                             % (coeffs.shape, mesh.n_dofs))
        self.mesh = mesh
        self.coeffs = coeffs

    @classmethod
    def from_callable(cls, mesh, f):
        """Nodal interpolant of a closed-form function f(x, y)."""
        x, y = mesh.dof_coords[:, 0], mesh.dof_coords[:, 1]
        vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
        return cls(mesh, np.array(vals))

    def eval_at(self, points):
        """Point evaluation of the piecewise polynomial."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elem, ref = self.mesh.locate(pts)
        B = self.mesh.ref.basis_at(ref)  # (npts, nl)
        vals = np.einsum("pl,pl->p", B, self.coeffs[self.mesh.elem_dofs[elem]])
        return vals if np.asarray(points).ndim > 1 else vals[0]

    def gradient_at_points(self, points):
        """Exact piecewise-polynomial gradient at physical points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elem, ref = self.mesh.locate(pts)
        G = self.mesh.ref.basis_grad_at(ref)  # (2, npts, nl)
        o = self.mesh.orientation[elem]
        JiT = np.transpose(self.mesh.Jinv, (0, 2, 1))[o]  # (npts, 2, 2)
        local = np.einsum("dpl,pl->pd", G, self.coeffs[self.mesh.elem_dofs[elem]])
        return np.einsum("pdc,pc->pd", JiT, local)

    def recovered_gradient(self):
        """Nodal gradient by area-weighted averaging over adjacent elements.

        Returns two nodal coefficient vectors (d/dx, d/dy).
        """
        Gx, Gy = self.mesh.recovery_matrices()
        return Gx @ self.coeffs, Gy @ self.coeffs

    def __add__(self, other):
        return ScalarField(self.mesh, self.coeffs + _coeffs_of(other, self.mesh))

    def __sub__(self, other):
        return ScalarField(self.mesh, self.coeffs - _coeffs_of(other, self.mesh))

    def __mul__(self, scalar):
        return ScalarField(self.mesh, self.coeffs * scalar)

    __rmul__ = __mul__


def _coeffs_of(obj, mesh):
    if isinstance(obj, ScalarField):
        return obj.coeffs
    return np.asarray(obj, dtype=float)


def gradient_at(field, element, local_point):
    """Exact gradient of ``field`` at a reference point of one element."""
    mesh = field.mesh
    ref = np.atleast_2d(np.asarray(local_point, dtype=float))
    G = mesh.ref.basis_grad_at(ref)[:, 0, :]  # (2, nl)
    o = mesh.orientation[element]
    local = G @ field.coeffs[mesh.elem_dofs[element]]
    return mesh.Jinv[o].T @ local


def _values_at_quad(mesh, coef):
    """Evaluate a coefficient (scalar, callable, or field) at element
    quadrature points.  Returns (n_triangles, nq) or a scalar."""
    if coef is None:
        return 0.0
    if np.isscalar(coef):
        return float(coef)
    if isinstance(coef, ScalarField):
        if coef.mesh is not mesh:
            Xq = mesh.quad_points_physical()
            return coef.eval_at(Xq.reshape(-1, 2)).reshape(Xq.shape[:2])
        return np.einsum("el,ql->eq", coef.coeffs[mesh.elem_dofs], mesh.ref.B)
    Xq = mesh.quad_points_physical()
    vals = coef(Xq[..., 0], Xq[..., 1])
    return np.broadcast_to(np.asarray(vals, dtype=float), Xq.shape[:2])


def assemble_matrix(mesh, diff=None, react=None):
    """Assemble the sparse matrix of -div(diff grad u) + react u.

    ``diff`` and ``react`` may be scalars, callables of (x, y), ScalarFields,
    or None (omitted term).
    """
    ref = mesh.ref
    nl = ref.n_local
    wd = ref.quad_wts * mesh.detJ  # constant-Jacobian rule
    local = np.zeros((mesh.n_triangles, nl, nl))

    if diff is not None:
        a = _values_at_quad(mesh, diff)
        for o in range(2):
            sel = mesh.orientation == o
            G = mesh.Gphys[o]  # (2, nq, nl)
            a_sel = a[sel] if not np.isscalar(a) else np.full((sel.sum(), len(wd)), a)
            local[sel] += np.einsum("eq,dqi,dqj->eij", a_sel * wd, G, G)
    if react is not None:
        r = _values_at_quad(mesh, react)
        if np.isscalar(r):
            r = np.full((mesh.n_triangles, len(wd)), r)
        local += np.einsum("eq,qi,qj->eij", r * wd, ref.B, ref.B)

    rows = np.repeat(mesh.elem_dofs, nl, axis=1).ravel()
    cols = np.tile(mesh.elem_dofs, nl).ravel()
    A = sp.csr_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_dofs, mesh.n_dofs))
    A.sum_duplicates()
    return A


def assemble_load(mesh, source):
    """Assemble the load vector of a source term."""
    if source is None:
        return np.zeros(mesh.n_dofs)
    ref = mesh.ref
    wd = ref.quad_wts * mesh.detJ
    f = _values_at_quad(mesh, source)
    if np.isscalar(f):
        f = np.full((mesh.n_triangles, len(wd)), f)
    local = np.einsum("eq,qi->ei", f * wd, ref.B)
    b = np.zeros(mesh.n_dofs)
    np.add.at(b, mesh.elem_dofs.ravel(), local.ravel())
    return b


def boundary_values(mesh, dirichlet):
    """Evaluate Dirichlet data on the boundary DOFs."""
    xb = mesh.dof_coords[mesh.boundary_dofs]
    if np.isscalar(dirichlet):
        return np.full(len(xb), float(dirichlet))
    if isinstance(dirichlet, ScalarField):
        return dirichlet.coeffs[mesh.boundary_dofs]
    vals = dirichlet(xb[:, 0], xb[:, 1])
    return np.array(np.broadcast_to(np.asarray(vals, dtype=float), (len(xb),)))


class LinearSystem:
    """Assembled reaction-diffusion system with Dirichlet elimination."""

    def __init__(self, mesh, matrix, rhs, dirichlet_values,
                 indefinite_reaction=False):
        self.mesh = mesh
        self.matrix = matrix
        self.rhs = rhs
        self.dirichlet_values = dirichlet_values
        self.indefinite_reaction = indefinite_reaction
        self._lu = None

    def _reduced(self):
        I, B = self.mesh.interior_dofs, self.mesh.boundary_dofs
        A_II = self.matrix[I][:, I]
        A_IB = self.matrix[I][:, B]
        rhs = self.rhs[I] - A_IB @ self.dirichlet_values
        return A_II, rhs

    def factorize(self):
        if self._lu is None:
            A_II, _ = self._reduced()
            try:
                self._lu = spla.splu(A_II.tocsc())
            except RuntimeError as exc:
                raise SingularSystemError(str(exc)) from exc
        return self._lu

    def solve(self):
        """Direct sparse solve; verifies the relative residual."""
        A_II, rhs = self._reduced()
        lu = self.factorize()
        x = lu.solve(rhs)
        scale = np.linalg.norm(rhs)
        if scale > 0:
            res = np.linalg.norm(A_II @ x - rhs) / scale
            if not np.isfinite(res) or res > 1e-10:
                raise SingularSystemError(
                    "reduced solve residual %.3e exceeds tolerance" % res)
        full = np.zeros(self.mesh.n_dofs)
        full[self.mesh.interior_dofs] = x
        full[self.mesh.boundary_dofs] = self.dirichlet_values
        return ScalarField(self.mesh, full)


def assemble(mesh, diff, react, source, dirichlet):
    """Assemble -div(diff grad u) + react u = source with Dirichlet data."""
    A = assemble_matrix(mesh, diff, react)
    b = assemble_load(mesh, source)
    g = boundary_values(mesh, dirichlet)
    indefinite = False
    if react is not None and not (np.isscalar(react) and react >= 0):
        r = _values_at_quad(mesh, react)
        indefinite = bool(np.min(r) < 0)
    return LinearSystem(mesh, A, b, g, indefinite_reaction=indefinite)


def solve(system):
    """Solve an assembled system, returning the full-mesh field."""
    return system.solve()


def norms(field):
    """L1, L2, H1-seminorm by quadrature and nodal Linf of a field."""
    mesh = field.mesh
    ref = mesh.ref
    wd = ref.quad_wts * mesh.detJ
    vals = np.einsum("el,ql->eq", field.coeffs[mesh.elem_dofs], ref.B)
    l1 = float(np.sum(np.abs(vals) * wd))
    l2 = float(np.sqrt(np.sum(vals ** 2 * wd)))
    grads = np.einsum("edql,el->eqd",
                      np.transpose(mesh.Gphys[mesh.orientation], (0, 1, 2, 3)),
                      field.coeffs[mesh.elem_dofs])
    h1 = float(np.sqrt(np.sum(np.sum(grads ** 2, axis=2) * wd)))
    linf = float(np.max(np.abs(field.coeffs)))
    return {"L1": l1, "L2": l2, "H1": h1, "Linf": linf}


def l2_error(field, exact):
    """True L2 distance between a field and a closed-form function,
    with the function evaluated at the quadrature points (no interpolation
    of the reference on the way)."""
    mesh = field.mesh
    wd = mesh.ref.quad_wts * mesh.detJ
    vals = np.einsum("el,ql->eq", field.coeffs[mesh.elem_dofs], mesh.ref.B)
    Xq = mesh.quad_points_physical()
    ref_vals = exact(Xq[..., 0], Xq[..., 1])
    return float(np.sqrt(np.sum((vals - ref_vals) ** 2 * wd)))


def integrate(field_or_callable, mesh=None, weight=None):
    """Quadrature of a field (optionally times a pointwise weight w(x, y))."""
    if isinstance(field_or_callable, ScalarField):
        mesh = field_or_callable.mesh
    vals = _values_at_quad(mesh, field_or_callable)
    if np.isscalar(vals):
        vals = np.full((mesh.n_triangles, len(mesh.ref.quad_wts)), vals)
    if weight is not None:
        Xq = mesh.quad_points_physical()
        vals = vals * weight(Xq[..., 0], Xq[..., 1])
    wd = mesh.ref.quad_wts * mesh.detJ
    return float(np.sum(vals * wd))


def export_field_csv(field, path, grid_m):
    """Sample the field on a uniform grid and write x,y,value rows."""
    hw = field.mesh.half_width
    g = np.linspace(-hw, hw, grid_m)
    X, Y = np.meshgrid(g, g, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = field.eval_at(pts)
    with open(path, "w") as f:
        f.write("x,y,value\n")
        for (x, y), v in zip(pts, vals):
            f.write("%.17g,%.17g,%.17g\n" % (x, y, v))
