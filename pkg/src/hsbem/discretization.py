"""Tensor-product ansatz spaces, basis evaluation, and L2 projections.

Spatial degree p in {0, 1}: p=0 panelwise constants; p=1 continuous hats
(restricted to interior vertices on screens).  Temporal degree q in {0, 1}:
q=0 interval indicators; q=1 nodal hats vanishing at t=0.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .timeshapes import TimeShape, gauss01

# 7-point symmetric triangle rule, exact for degree 5
_TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [0.797426985353087, 0.101286507323456, 0.101286507323456],
    [0.101286507323456, 0.797426985353087, 0.101286507323456],
    [0.101286507323456, 0.101286507323456, 0.797426985353087],
    [0.059715871789770, 0.470142064105115, 0.470142064105115],
    [0.470142064105115, 0.059715871789770, 0.470142064105115],
    [0.470142064105115, 0.470142064105115, 0.059715871789770]])
_TRI7_W = np.array([0.225,
                    0.125939180544827, 0.125939180544827, 0.125939180544827,
                    0.132394152788506, 0.132394152788506, 0.132394152788506])

# 6-point degree-4 rule (cheaper inner rule for smooth correction tails)
_TRI6_BARY = np.array([
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070]])
_TRI6_W = np.array([0.109951743655322, 0.109951743655322, 0.109951743655322,
                    0.223381589678011, 0.223381589678011, 0.223381589678011])


def triangle_rule(n=7):
    if n == 7:
        return _TRI7_BARY, _TRI7_W
    if n == 6:
        return _TRI6_BARY, _TRI6_W
    raise ValueError("supported triangle rules: 6, 7 points")


def panel_points(mesh, i, bary):
    """Map barycentric points onto panel i; returns (npts, 3)."""
    vv = mesh.vertices[mesh.triangles[i]]
    return bary @ vv


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    nt: int
    sigma: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.nt < 1:
            raise ValueError("need dt > 0 and nt >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def T(self):
        return self.dt * self.nt

    def times(self):
        return self.dt * np.arange(self.nt + 1)


class SpaceTimeBasis:
    """Tensor-product basis V_h^p x V_dt^q over a mesh and time grid."""

    def __init__(self, mesh, grid, p, q):
        if p not in (0, 1) or q not in (0, 1):
            raise ValueError("supported degrees: p, q in {0, 1}")
        self.mesh = mesh
        self.grid = grid
        self.p = p
        self.q = q
        if p == 0:
            self.space_dofs = np.arange(mesh.n_triangles)
        else:
            self.space_dofs = (np.arange(mesh.n_vertices) if mesh.closed
                               else mesh.interior_vertices)
        self._dof_of_vertex = None
        if p == 1:
            self._dof_of_vertex = -np.ones(mesh.n_vertices, dtype=np.int64)
            self._dof_of_vertex[self.space_dofs] = np.arange(len(self.space_dofs))

    @property
    def n_space(self):
        return len(self.space_dofs)

    @property
    def n_time(self):
        # q=1 hats at t_1..t_nt (vanish at t=0); q=0 indicators of I_1..I_nt
        return self.grid.nt

    def time_shape(self):
        return TimeShape.hat(self.grid.dt) if self.q == 1 else TimeShape.box(self.grid.dt)

    def time_node(self, n):
        """Center of the n-th temporal shape (1-based grid node t_{n+1})."""
        return (n + 1) * self.grid.dt

    def time_values(self, t, deriv=0):
        """Matrix (n_time, len(t)) of temporal basis (derivative) values."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        shape = self.time_shape().derivatives(deriv)
        nodes = self.grid.dt * (1 + np.arange(self.n_time))
        if shape.deltas:
            raise ValueError("pointwise evaluation of a distributional derivative")
        return shape.pp.eval((t[None, :] - nodes[:, None]).ravel()).reshape(
            self.n_time, len(t))

    def space_values_on_panel(self, i, bary):
        """Values of the global spatial dofs supported on panel i at the given
        barycentric points.  Returns (dof indices, values (ndof, npts))."""
        if self.p == 0:
            return np.array([i]), np.ones((1, len(bary)))
        tri = self.mesh.triangles[i]
        dofs, vals = [], []
        for loc, v in enumerate(tri):
            d = self._dof_of_vertex[v]
            if d >= 0:
                dofs.append(d)
                vals.append(bary[:, loc])
        if not dofs:
            return np.array([], dtype=np.int64), np.zeros((0, len(bary)))
        return np.array(dofs), np.array(vals)

    def gram_space(self):
        """Spatial L2 Gram matrix (sparse)."""
        mesh = self.mesh
        if self.p == 0:
            n = mesh.n_triangles
            return coo_matrix((mesh.areas, (np.arange(n), np.arange(n))),
                              shape=(n, n)).tocsr()
        bary, w = triangle_rule()
        rows, cols, vals = [], [], []
        for i in range(mesh.n_triangles):
            dofs, phi = self.space_values_on_panel(i, bary)
            if len(dofs) == 0:
                continue
            m = (phi * w) @ phi.T * mesh.areas[i]
            rows.extend(np.repeat(dofs, len(dofs)))
            cols.extend(np.tile(dofs, len(dofs)))
            vals.extend(m.ravel())
        n = self.n_space
        return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@dataclass
class Density:
    """Space-time coefficient array over a SpaceTimeBasis."""
    coeffs: np.ndarray  # (n_time, n_space)
    basis: SpaceTimeBasis

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.basis.n_time, self.basis.n_space):
            raise ValueError("coefficient array does not match the basis")


def project_space(f, mesh, p, basis=None):
    """L2(Gamma)-orthogonal projection of f onto V_h^p (coefficients)."""
    basis = basis or SpaceTimeBasis(mesh, TimeGrid(1.0, 1), p, 0)
    bary, w = triangle_rule()
    rhs = np.zeros(basis.n_space)
    for i in range(mesh.n_triangles):
        pts = panel_points(mesh, i, bary)
        fv = np.asarray(f(pts), dtype=float)
        dofs, phi = basis.space_values_on_panel(i, bary)
        if len(dofs):
            rhs[dofs] += mesh.areas[i] * (phi * w) @ fv
    G = basis.gram_space()
    if p == 0:
        return rhs / G.diagonal()
    return spsolve(G.tocsc(), rhs)


def project_time(g, grid, q):
    """L2(0, T)-orthogonal projection of g onto V_dt^q (coefficients)."""
    x, w = gauss01(8)
    dt = grid.dt
    if q == 0:
        t = dt * (np.arange(grid.nt)[:, None] + x[None, :])
        return np.asarray(g(t.ravel()), dtype=float).reshape(grid.nt, -1) @ w
    basis = _hat_time_matrix(grid, x)
    t = dt * (np.arange(grid.nt)[:, None] + x[None, :])
    gv = np.asarray(g(t.ravel()), dtype=float).reshape(grid.nt, len(x))
    rhs = np.einsum('ncg,cg,g->n', basis, gv, w * dt)
    G = np.einsum('ncg,mcg,g->nm', basis, basis, w * dt)
    return np.linalg.solve(G, rhs)


def _hat_time_matrix(grid, x):
    """(n_time, ncell, ngauss) values of the q=1 hats on each cell."""
    nt = grid.nt
    vals = np.zeros((nt, nt, len(x)))
    for n in range(1, nt + 1):
        # rising on cell n-1, falling on cell n
        vals[n - 1, n - 1] = x
        if n < nt:
            vals[n - 1, n] = 1 - x
    return vals


def eval_density(d, t, x, panel=None, tol=1e-9):
    """Evaluate a density at time t and surface point x (must lie on Gamma).
    Passing `panel` skips the point-location search."""
    basis = d.basis
    mesh = basis.mesh
    if panel is None:
        panel = locate_panel(mesh, x, tol)
    bary = barycentric(mesh, panel, x)
    dofs, phi = basis.space_values_on_panel(panel, bary[None, :])
    tv = basis.time_values([t])
    return float(tv[:, 0] @ d.coeffs[:, dofs] @ phi[:, 0])


def locate_panel(mesh, x, tol=1e-9):
    x = np.asarray(x, dtype=float)
    scale = max(mesh.h, 1.0)
    for i in range(mesh.n_triangles):
        vv = mesh.vertices[mesh.triangles[i]]
        n = mesh.normals[i]
        if abs(np.dot(x - vv[0], n)) > tol * scale:
            continue
        lam = barycentric(mesh, i, x)
        if np.all(lam >= -tol):
            return i
    raise ValueError("point does not lie on the surface")


def barycentric(mesh, i, x):
    vv = mesh.vertices[mesh.triangles[i]]
    T = np.column_stack([vv[1] - vv[0], vv[2] - vv[0]])
    sol, *_ = np.linalg.lstsq(T, np.asarray(x) - vv[0], rcond=None)
    return np.array([1 - sol[0] - sol[1], sol[0], sol[1]])
