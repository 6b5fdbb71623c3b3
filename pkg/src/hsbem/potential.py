"""Layer potentials of space-time densities at exterior observation points.

The single layer S p(t, x) integrates the retarded kernel against the
density; the double layer D phi applies the source-normal derivative.  The
kernel's delta terms reduce to the density's time trace at the retarded
times t - r+ (free) and t - r- (image); the absorbing correction's delta'
structure is integrated by parts onto the time basis, leaving the smooth
cone amplitude u(tau) = 1/D(tau) integrated against the density's time
derivative from the reflected arrival onward.

Evaluation points must be off the surface (plain quadrature, no boundary
layer resolution) and in the open half-space x3 > 0.
"""

import csv

import numpy as np

from .kernel import TWO_PI, FOUR_PI
from .discretization import Density
from .timeshapes import gauss01
from .radial import radial_integrate
from .frequency import J_REFLECT, _panel_data, _trial_vals
from .assembly import _point_triangle_distance, _u_partials


def eval_single_layer(d, x, t, mesh, params):
    """Single-layer potential of the density at point x and time(s) t."""
    return _eval_layer("S", d, x, t, mesh, params)


def eval_double_layer(d, x, t, mesh, params):
    """Double-layer potential (source-normal kernel derivative)."""
    return _eval_layer("D", d, x, t, mesh, params)


def _eval_layer(op, d, x, t, mesh, params):
    if not isinstance(d, Density):
        raise TypeError("expected a Density")
    basis = d.basis
    x = np.asarray(x, dtype=float)
    if x[2] <= 0:
        raise ValueError("observation points must satisfy x3 > 0")
    for j in range(mesh.n_triangles):
        if _point_triangle_distance(x, mesh.vertices[mesh.triangles[j]]) \
                < 1e-9 * mesh.h:
            raise ValueError("observation point lies on the surface")
    alpha = params.real_alpha_inf()
    dt = basis.grid.dt
    shape = basis.time_shape()
    dshape = shape.derivative()
    if op == "D" and alpha > 0 and dshape.deltas:
        raise ValueError("double-layer correction needs a continuous-in-time "
                         "density (q=1)")
    pd = _panel_data(mesh, basis, basis, 7)
    nodes = dt * (1 + np.arange(basis.n_time))
    tarr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(len(tarr))
    for m, ti in enumerate(tarr):
        acc = 0.0
        for dj in pd:
            if len(dj["jdofs"]) == 0:
                continue
            cof = d.coeffs[:, dj["jdofs"]]                  # (nt, ndof)
            acc += _panel_contribution(op, x, ti, dj, cof, nodes, shape,
                                       dshape, dt, alpha)
        out[m] = acc
    return out if np.ndim(t) else float(out[0])


def _time_trace(cof, nodes, pp, s, deriv_sign=1.0):
    """Density time series sum_n c_n shape(s - node_n) at the points s;
    returns (ndof, npts)."""
    vals = pp.eval((s[None, :] - nodes[:, None]).ravel()).reshape(
        len(nodes), len(s))
    return deriv_sign * (cof.T @ vals)


def _panel_contribution(op, x, ti, dj, cof, nodes, shape, dshape, dt, alpha):
    total = 0.0
    rmax_all = max(np.linalg.norm(dj["verts"] - x, axis=1).max(),
                   np.linalg.norm(dj["rverts"] - x, axis=1).max())
    # retarded-time kinks: t - r crossing the time-grid cells
    ms = np.arange(int(np.ceil((ti - rmax_all) / dt)),
                   int(np.floor(ti / dt)) + 1)
    bps = ti - dt * ms[::-1]
    bps = bps[bps > 0]
    jlocs = dj["jlocs"]
    for image in (False, True):
        sverts = dj["rverts"] if image else dj["verts"]
        bfun = dj["rbary"] if image else dj["bary"]
        n_in = J_REFLECT @ dj["n"] if image else dj["n"]
        if ti <= np.linalg.norm(sverts - x, axis=1).min() \
                - _panel_spread(sverts):
            continue

        if op == "D":
            dot = float((sverts[0] - x) @ n_in)

        def fun(y, r, image=image, bfun=bfun):
            r = np.maximum(r, 1e-300)
            s = ti - r
            phi = _trial_vals(bfun, jlocs, y)              # (ndof, npts)
            g0 = _time_trace(cof, nodes, shape.pp, s)
            if op == "S":
                ker = g0 / (FOUR_PI * r)
            else:
                g1 = _time_trace(cof, nodes, dshape.pp, s)
                ker = (-g1 / (FOUR_PI * r) - g0 / (FOUR_PI * r * r)) * (dot / r)
            row = (phi * ker).sum(axis=0)
            if image and alpha > 0:
                row = row + (phi * _correction_channel(
                    op, x, y, r, dj["n"], ti, cof, nodes, dshape, dt,
                    alpha)).sum(axis=0)
            return row[None, :]

        total += radial_integrate(x, sverts, fun, breakpoints=bps)[0]
    return total


def _panel_spread(verts):
    c = verts.mean(axis=0)
    return float(np.linalg.norm(verts - c, axis=1).max())


def _correction_channel(op, x, y, r, n_orig, ti, cof, nodes, dshape, dt,
                        alpha):
    """Absorbing-correction integrand on the image panel, per point:
    -(alpha/2pi) * int_{s <= ti - r} g'(s) u(ti - s) ds with the cone
    amplitude u (its source-normal derivative for the double layer), plus
    the boundary term of the moving arrival for the double layer and the
    jump contributions of indicator-in-time densities for the single layer."""
    npts = len(r)
    ndof = cof.shape[1]
    a = x[2] - y[:, 2]
    R2 = np.maximum(r * r - a * a, 0.0)
    s_hi = ti - r                      # upper limit in the s variable
    gs, gw = gauss01(6)
    pp = dshape.pp
    # g' cell boundaries: grid-aligned because the nodes sit on the grid
    m_lo = int(round((nodes[0] + pp.support[0]) / dt))
    m_hi = int(round((nodes[-1] + pp.support[1]) / dt))
    a_y = n_orig[2]
    R2_y = 2.0 * ((y[:, :2] - x[:2]) @ n_orig[:2])
    out_dof = np.zeros((ndof, npts))
    for mcell in range(max(m_lo, 0), m_hi):
        slo = mcell * dt
        if slo >= s_hi.max():
            break
        ln = np.maximum(np.minimum((mcell + 1) * dt, s_hi) - slo, 0.0)
        if not np.any(ln > 0):
            continue
        s = slo + ln[:, None] * gs                          # (npts, ng)
        gp = _time_trace(cof, nodes, pp, s.ravel()).reshape(ndof, npts,
                                                            len(gs))
        # clipped-out points get a safe tau; their zero length removes them
        tau = np.where(ln[:, None] > 0, ti - s, r[:, None] + 1.0)
        up = _u_partials(tau, a[:, None], R2[:, None], alpha)
        uch = up["u"] if op == "S" else (up["a"] * a_y
                                         + up["R2"] * R2_y[:, None])
        out_dof += (gp * (uch * gw)[None, :, :]).sum(axis=2) * ln[None, :]
    if op == "S":
        for loc, wt in dshape.deltas:
            spos = nodes[:, None] + loc                     # (nt, 1)
            active = spos < s_hi[None, :]
            tau = np.where(active, ti - spos, r[None, :] + 1.0)
            upd = _u_partials(tau, a[None, :], R2[None, :], alpha)
            out_dof += (cof.T[:, :, None]
                        * np.where(active, wt * upd["u"], 0.0)[None]).sum(axis=1)
    else:
        # boundary term of the moving lower limit tau = r-
        gpc = _time_trace(cof, nodes, pp, s_hi)             # g'(ti - c)
        upc = _u_partials(r, a, R2, alpha)
        c_y = (a * a_y + 0.5 * R2_y) / np.maximum(r, 1e-300)
        out_dof = out_dof - gpc * (upc["u"] * c_y)[None, :]
    return -(alpha / TWO_PI) * out_dof


def write_signal_csv(path, t, values):
    """Observation-point signal as CSV rows t,value."""
    t = np.atleast_1d(t)
    values = np.atleast_1d(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for ti, vi in zip(t, values):
            w.writerow([repr(float(ti)), repr(float(vi))])


def read_signal_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "value"]:
        raise ValueError("not a signal file (expected header t,value)")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if len(data) == 0:
        return np.zeros(0), np.zeros(0)
    return data[:, 0], data[:, 1]
