"""Radial panel integration for retarded kernels.

Integrals over a source triangle T of F(y, r) ds_y, where r = |x - y| and F
is piecewise smooth in r with known breakpoints (light-cone radii on the time
grid), are computed by projecting x onto the triangle plane, fanning T into
signed sub-triangles around the projection, and substituting the radial
variable rho -> r (rho drho = r dr).  The substitution cancels the 1/(4 pi r)
kernel singularity exactly: the integrand seen by the Gauss rules is
F(y, r) * r per segment, polynomial in r for the delta-term kernels.
"""

import numpy as np

from .timeshapes import gauss01


def radial_integrate(x, tri, fun, breakpoints=(), n_theta=8, n_r=4,
                     theta_res=0.45):
    """integral over the triangle `tri` (3x3 vertex rows) of fun(y, r).

    fun maps (points (npts, 3), r (npts,)) -> (..., npts); leading axes are
    integrated independently (e.g. lag indices x local trial functions).
    `breakpoints` are radii where F may kink/jump; Gauss segments never
    straddle them.
    """
    tri = np.asarray(tri, dtype=float)
    x = np.asarray(x, dtype=float)
    u, v = tri[1] - tri[0], tri[2] - tri[0]
    nrm = np.array([u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0]])
    nrm = nrm / np.linalg.norm(nrm)
    dist = float(np.dot(x - tri[0], nrm))
    c = x - dist * nrm
    d = abs(dist)
    # roundoff-level plane offsets would otherwise trigger spurious
    # sub-roundoff radial refinement; treat the point as in-plane
    scale = max(np.linalg.norm(tri - x, axis=1).max(), 1e-30)
    if d < 1e-12 * scale:
        d = 0.0
    # in-plane frame
    e1 = tri[1] - tri[0]
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.array([nrm[1] * e1[2] - nrm[2] * e1[1],
                   nrm[2] * e1[0] - nrm[0] * e1[2],
                   nrm[0] * e1[1] - nrm[1] * e1[0]])
    V2 = np.column_stack([(tri - c) @ e1, (tri - c) @ e2])
    # CCW ordering in the (e1, e2) frame
    area2 = ((V2[1, 0] - V2[0, 0]) * (V2[2, 1] - V2[0, 1])
             - (V2[1, 1] - V2[0, 1]) * (V2[2, 0] - V2[0, 0]))
    if area2 < 0:
        V2 = V2[::-1]
    bp_all = np.asarray(breakpoints, dtype=float)

    out = None
    for k in range(3):
        a2, b2 = V2[k], V2[(k + 1) % 3]
        cr = a2[0] * b2[1] - a2[1] * b2[0]
        la, lb = np.hypot(*a2), np.hypot(*b2)
        if la * lb == 0 or abs(cr) < 1e-14 * max(la * lb, 1e-30):
            continue  # projection lies on the edge line: zero-measure sector
        sign = 1.0 if cr > 0 else -1.0
        dth = np.arctan2(abs(cr), float(a2 @ b2))  # sweep angle in (0, pi)
        th0 = np.arctan2(a2[1], a2[0])
        # split the sweep where a breakpoint circle crosses the edge line,
        # since the segment clipping kinks the theta-integrand there
        edge_v = b2 - a2
        edge_u = edge_v / np.hypot(*edge_v)
        p_line = abs(a2[0] * edge_u[1] - a2[1] * edge_u[0])
        phi = np.arctan2(*(a2 - (a2 @ edge_u) * edge_u)[::-1])
        splits = np.array([0.0, 1.0])
        if p_line > 0 and len(bp_all):
            rho2 = bp_all * bp_all - d * d
            sel = rho2 > p_line * p_line
            if np.any(sel):
                dlt = np.arccos(np.clip(p_line / np.sqrt(rho2[sel]), -1, 1))
                th_star = np.concatenate([phi - dlt, phi + dlt])
                ang = (th_star - th0 + np.pi) % (2 * np.pi) - np.pi
                rel = ang / (sign * dth)
                rel = rel[(rel > 1e-9) & (rel < 1 - 1e-9)]
                splits = np.concatenate([splits, rel])
        splits = np.unique(splits)
        ts0, tw0 = gauss01(n_theta)
        seg = np.diff(splits)
        nth = np.maximum(1, np.ceil(seg * dth / theta_res).astype(np.int64))
        widths = np.repeat(seg / nth, nth)
        starts = np.repeat(splits[:-1], nth) \
            + widths * np.concatenate([np.arange(n) for n in nth])
        ts = (starts[:, None] + widths[:, None] * ts0).ravel()
        tw = (widths[:, None] * tw0).ravel()
        theta = th0 + sign * dth * ts
        wth = tw * dth
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        edge = b2 - a2
        denom = dirs[:, 0] * edge[1] - dirs[:, 1] * edge[0]
        rho_out = (a2[0] * edge[1] - a2[1] * edge[0]) / denom
        # segment in the in-plane radius rho (integrand stays smooth at the
        # projection point); breakpoints in r convert to rho levels
        rho_max = float(rho_out.max())
        bp = np.asarray(breakpoints, dtype=float)
        bp = np.sqrt(np.maximum(bp[bp > d + 1e-14] ** 2 - d * d, 0.0))
        # geometric refinement at scale d resolves the sqrt(rho^2+d^2)
        # curvature of near-panel evaluations
        if d > 0:
            bp = np.concatenate([bp, d * 3.0 ** np.arange(6)])
        bp = np.unique(bp[(bp > 1e-14) & (bp < rho_max * (1 - 1e-12))])
        edges = np.concatenate([[0.0], bp, [rho_max]])
        lo = np.minimum(edges[:-1], rho_out[:, None])
        hi = np.minimum(edges[1:], rho_out[:, None])
        ln = hi - lo  # (nth, nseg), zero-length segments weight out
        rs, rw = gauss01(n_r)
        rho = lo[..., None] + rs * ln[..., None]          # (nth, nseg, n_r)
        w = (rw * ln[..., None]) * rho
        w = w * wth[:, None, None]
        r = np.sqrt(rho * rho + d * d)
        dir3 = dirs[:, 0][:, None, None, None] * e1 + dirs[:, 1][:, None, None, None] * e2
        y = c + rho[..., None] * dir3
        rflat = r.ravel()
        vals = np.asarray(fun(y.reshape(-1, 3), rflat))
        contrib = sign * (vals.reshape(vals.shape[:-1] + r.shape) * w).sum(
            axis=(-1, -2, -3))
        out = contrib if out is None else out + contrib
    if out is None:
        shp = np.asarray(fun(tri[:1], np.array([1.0]))).shape[:-1]
        out = np.zeros(shp)
    return out
