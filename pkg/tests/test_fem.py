import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluotomo import fem
from fluotomo.fem import ScalarField

from fd_oracle import fd_solve, relative_l2_on_grid


class TestQuadrature:
    def _exact_monomial(self, a, b):
        # integral of x^a y^b over the unit reference triangle
        return (math.factorial(a) * math.factorial(b)
                / math.factorial(a + b + 2))

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 7, 8])
    def test_exactness(self, degree):
        pts, wts = fem.triangle_quadrature(degree)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                val = np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b)
                assert val == pytest.approx(self._exact_monomial(a, b),
                                            rel=1e-13, abs=1e-15)

    def test_weights_sum_to_area(self):
        _, wts = fem.triangle_quadrature(4)
        assert np.sum(wts) == pytest.approx(0.5, rel=1e-14)


class TestMeshStructure:
    def test_smallest_mesh_counts(self):
        mesh = fem.build_structured_mesh(0.5, 2, 1)
        assert len(mesh.vertices) == 9
        assert mesh.n_triangles == 8
        assert len(mesh.boundary_edges) == 8
        assert mesh.n_dofs == 9

    def test_dof_count_order2(self):
        mesh = fem.build_structured_mesh(0.5, 4, 2)
        assert mesh.n_dofs == 81          # (4*2 + 1)^2
        assert mesh.n_triangles == 32

    def test_boundary_dof_count(self):
        mesh = fem.build_structured_mesh(0.5, 8, 3)
        nf = 8 * 3
        assert len(mesh.boundary_dofs) == 4 * nf
        assert len(mesh.interior_dofs) == (nf + 1) ** 2 - 4 * nf

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            fem.build_structured_mesh(0.5, 1, 2)
        with pytest.raises(ValueError):
            fem.build_structured_mesh(0.5, 4, 0)
        with pytest.raises(ValueError):
            fem.build_structured_mesh(0.5, 4, 5)

    def test_element_dof_coordinates_consistent(self, mesh32):
        # each local DOF's global coordinate equals the mapped reference node
        e = 17
        o = mesh32.orientation[e]
        mapped = (mesh32.cell_origin[e]
                  + mesh32.ref.nodes @ mesh32.J[o].T)
        np.testing.assert_allclose(mesh32.dof_coords[mesh32.elem_dofs[e]],
                                   mapped, atol=1e-13)

    def test_locate_roundtrip(self, mesh32):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.5, 0.5, size=(200, 2))
        elem, ref = mesh32.locate(pts)
        o = mesh32.orientation[elem]
        back = (mesh32.cell_origin[elem]
                + np.einsum("pdc,pc->pd", mesh32.J[o], ref))
        np.testing.assert_allclose(back, pts, atol=1e-12)


class TestFieldEvaluation:
    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_reproduces_polynomials_of_order_k(self, k):
        mesh = fem.build_structured_mesh(0.5, 4, k)
        poly = lambda x, y: (1 + x) ** k + (x - y) ** max(k - 1, 1)
        f = ScalarField.from_callable(mesh, poly)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.5, 0.5, size=(100, 2))
        np.testing.assert_allclose(f.eval_at(pts), poly(pts[:, 0], pts[:, 1]),
                                   atol=1e-12)

    def test_eval_at_nodes_matches_coefficients(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: np.cos(x) * y)
        sub = np.arange(0, mesh32.n_dofs, 97)
        np.testing.assert_allclose(f.eval_at(mesh32.dof_coords[sub]),
                                   f.coeffs[sub], atol=1e-12)

    def test_gradient_of_linear_field_exact(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: 3 * x - 2 * y + 1)
        pts = np.array([[0.1, -0.2], [0.49, 0.49], [-0.5, 0.0]])
        g = f.gradient_at_points(pts)
        np.testing.assert_allclose(g, np.tile([3.0, -2.0], (3, 1)), atol=1e-11)

    def test_gradient_at_single_element(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: 3 * x - 2 * y + 1)
        g = fem.gradient_at(f, 5, (0.25, 0.25))
        np.testing.assert_allclose(g, [3.0, -2.0], atol=1e-11)

    def test_recovered_gradient_linear_exact(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: 3 * x - 2 * y + 1)
        gx, gy = f.recovered_gradient()
        np.testing.assert_allclose(gx, 3.0, atol=1e-10)
        np.testing.assert_allclose(gy, -2.0, atol=1e-10)

    def test_field_arithmetic(self, mesh32):
        a = ScalarField.from_callable(mesh32, lambda x, y: x)
        b = ScalarField.from_callable(mesh32, lambda x, y: y)
        s = 2.0 * a + b - a
        np.testing.assert_allclose(
            s.coeffs, mesh32.dof_coords[:, 0] + mesh32.dof_coords[:, 1],
            atol=1e-14)

    def test_coefficient_shape_checked(self, mesh32):
        with pytest.raises(ValueError):
            ScalarField(mesh32, np.zeros(5))


class TestNormsAndIntegration:
    def test_integral_of_one_is_domain_area(self, mesh32):
        assert fem.integrate(1.0, mesh32) == pytest.approx(1.0, rel=1e-13)

    def test_norms_of_coordinate_field(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: x)
        n = fem.norms(f)
        assert n["L2"] == pytest.approx(1 / math.sqrt(12), rel=1e-12)
        assert n["H1"] == pytest.approx(1.0, rel=1e-12)
        assert n["Linf"] == pytest.approx(0.5, rel=1e-14)
        assert n["L1"] == pytest.approx(0.25, rel=1e-12)

    def test_l1_of_sine(self):
        mesh = fem.build_structured_mesh(0.5, 32, 3)
        f = ScalarField.from_callable(mesh, lambda x, y: np.sin(np.pi * x))
        assert fem.norms(f)["L1"] == pytest.approx(2 / np.pi, rel=1e-6)

    def test_integrate_with_weight(self, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: 1.0 + 0 * x)
        val = fem.integrate(f, weight=lambda x, y: np.cos(np.pi * x))
        assert val == pytest.approx(2 / np.pi, rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2))
    def test_integral_linearity(self, alpha, beta):
        mesh = fem.build_structured_mesh(0.5, 8, 2)
        f = ScalarField.from_callable(mesh, lambda x, y: x * y + 1)
        g = ScalarField.from_callable(mesh, lambda x, y: np.exp(x))
        lhs = fem.integrate(alpha * f + beta * g)
        rhs = alpha * fem.integrate(f) + beta * fem.integrate(g)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)


class TestAssemblyAndSolve:
    def test_mass_matrix_total(self, mesh32):
        M = mesh32.mass_matrix()
        assert M.sum() == pytest.approx(1.0, rel=1e-12)

    def test_constant_solution_reproduced(self, mesh32):
        # -div(D grad u) + sigma u = sigma * 3 with u = 3 on the boundary
        system = fem.assemble(mesh32, diff=0.1, react=0.2,
                              source=lambda x, y: 0.6 + 0 * x, dirichlet=3.0)
        u = fem.solve(system)
        np.testing.assert_allclose(u.coeffs, 3.0, atol=1e-10)

    def test_linear_solution_reproduced(self, mesh32):
        # harmonic linear function, no reaction: reproduced exactly
        exact = lambda x, y: 2 * x - y + 0.5
        system = fem.assemble(mesh32, diff=1.0, react=None,
                              source=None, dirichlet=exact)
        u = fem.solve(system)
        np.testing.assert_allclose(
            u.coeffs, exact(*mesh32.dof_coords.T), atol=1e-10)

    def test_galerkin_residual_small(self, mesh32):
        system = fem.assemble(mesh32, diff=1.0, react=1.0,
                              source=lambda x, y: np.cos(x + y),
                              dirichlet=lambda x, y: x * y)
        u = fem.solve(system)
        I = mesh32.interior_dofs
        res = (system.matrix @ u.coeffs - system.rhs)[I]
        assert np.max(np.abs(res)) <= 1e-10 * max(np.max(np.abs(system.rhs)), 1)

    def test_discrete_maximum_bound(self, mesh64):
        # homogeneous equation with nonnegative reaction: interior values
        # stay below the boundary maximum
        g = lambda x, y: np.exp(2 * x) + np.exp(-2 * y)
        system = fem.assemble(mesh64, diff=0.1, react=0.3, source=None,
                              dirichlet=g)
        u = fem.solve(system)
        bmax = np.max(u.coeffs[mesh64.boundary_dofs])
        assert np.max(u.coeffs) <= bmax * (1 + 1e-10)

    @pytest.mark.parametrize("k", [1, 2])
    def test_manufactured_convergence_order(self, k):
        exact = lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y)
        source = lambda x, y: (0.1 * 2 * np.pi ** 2 + 0.4) * exact(x, y)
        errs = []
        for n in (8, 16, 32):
            mesh = fem.build_structured_mesh(0.5, n, k)
            u = fem.solve(fem.assemble(mesh, 0.1, 0.4, source, exact))
            errs.append(fem.l2_error(u, exact))
        rates = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(rates) >= k + 0.7

    def test_variable_coefficients_vs_fd_oracle(self):
        D = lambda x, y: 0.1 + 0.02 * np.cos(2 * x) * np.cos(2 * y)
        sig = lambda x, y: 0.1 + 0.02 * np.cos(4 * x ** 2 + 4 * y ** 2)
        src = lambda x, y: 1.0 + 0 * x
        mesh = fem.build_structured_mesh(0.5, 48, 2)
        u = fem.solve(fem.assemble(mesh, D, sig, src, 0.0))
        g, uref = fd_solve(D, sig, src, 0.0, m=257)
        assert relative_l2_on_grid(u, g, uref) < 2e-3

    def test_singular_system_raises(self):
        mesh = fem.build_structured_mesh(0.5, 4, 1)
        # pure reaction with a sign that zeroes the interior block is hard to
        # arrange; instead poison the matrix directly
        system = fem.assemble(mesh, diff=1.0, react=None, source=None,
                              dirichlet=0.0)
        system.matrix = system.matrix * 0.0
        with pytest.raises(fem.SingularSystemError):
            system.solve()


class TestExport:
    def test_field_csv_format(self, tmp_path, mesh32):
        f = ScalarField.from_callable(mesh32, lambda x, y: x + 2 * y)
        path = tmp_path / "field.csv"
        fem.export_field_csv(f, str(path), 5)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "y", "value"]
        assert len(rows) == 1 + 25
        x, y, v = map(float, rows[7])
        assert v == pytest.approx(x + 2 * y, abs=1e-12)
        # 17 significant digits survive a write for an irrational value
        g = ScalarField.from_callable(mesh32, lambda x, y: np.pi + 0 * x)
        fem.export_field_csv(g, str(path), 3)
        with open(path) as fh:
            val = float(list(csv.reader(fh))[1][2])
        assert val == np.pi

    def test_mesh_csv(self, tmp_path):
        mesh = fem.build_structured_mesh(0.5, 2, 1)
        path = tmp_path / "mesh.csv"
        mesh.export_csv(str(path))
        text = path.read_text()
        assert "# vertices: x,y" in text
        assert "# triangles: v0,v1,v2" in text
