"""Frequency-domain boundary operators for the absorbing half-space.

Galerkin matrices of the layer operators at a fixed complex frequency omega
with Im omega >= sigma > 0.  With G_omega the half-space Green's function
(free term + image term + absorbing correction C), the operators carry a
factor 2:

    V  p   = 2 int G_omega p            (weakly singular)
    K  p   = 2 int d G_omega / dn_y p
    K' phi = 2 int d G_omega / dn_x phi
    W  phi = 2 int d^2 G_omega / dn_x dn_y phi

The free and image parts of W are reduced by integration by parts to surface
curls of the densities against the weakly singular kernel; note the overall
sign W = -2 * (curl-curl form - omega^2 normal-normal form).  The smooth
correction term C(a, R^2) is differentiated under its integral sign in the
geometric variables a = x3 + y3 and R^2 = |x_h - y_h|^2.

These matrices serve as reference symbols for the time-domain block system
and as quadratic forms for coercivity and continuity diagnostics.
"""

import numpy as np

from .kernel import TWO_PI, FOUR_PI, correction_decay_rate
from .discretization import SpaceTimeBasis, TimeGrid, triangle_rule, panel_points
from .radial import radial_integrate
from .timeshapes import gauss01

#: reflection across the ground plane x3 = 0
J_REFLECT = np.diag([1.0, 1.0, -1.0])

#: default (trial, test) spatial degrees of the acoustic system operators
OPERATOR_SPACES = {"V": (0, 0), "K": (1, 0), "Kp": (0, 1), "W": (1, 1)}


def helmholtz_g(r, omega, deriv=0):
    """The free-space kernel g(r) = e^{i omega r} / (4 pi r) or its first or
    second radial derivative."""
    g = np.exp(1j * omega * r) / (FOUR_PI * r)
    if deriv == 0:
        return g
    if deriv == 1:
        return (1j * omega - 1.0 / r) * g
    if deriv == 2:
        return ((1j * omega - 1.0 / r) ** 2 + 1.0 / r ** 2) * g
    raise ValueError("deriv must be 0, 1 or 2")


def correction_channels(a, R2, omega, alpha_inf, orders=("c",),
                        n_panels=48, n_gauss=8):
    """Correction term C(a, R^2) and its partial derivatives, vectorized.

    C = (beta/2pi) int_0^inf e^{beta s} q(r) ds with beta = i omega alpha_inf,
    q(r) = e^{i omega r}/r and r = sqrt(R^2 + (a+s)^2).  Differentiation under
    the integral gives the channels keyed by
        'c'                the correction itself (4 pi times the kernel value)
        'a', 'R2'          first partials in a and R^2
        'aa', 'aR2', 'R2R2' second partials.
    Note 'c' integrates q/ (2 pi), i.e. the returned 'c' equals the additive
    correction in G_omega directly (no 1/4pi normalization pending).
    """
    a = np.asarray(a, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    shape = np.broadcast(a, R2).shape
    alpha_inf = complex(alpha_inf)
    if alpha_inf == 0:
        return {k: np.zeros(shape, dtype=complex) for k in orders}
    beta = 1j * omega * alpha_inf
    rate = correction_decay_rate(complex(omega), alpha_inf)
    if rate <= 0:
        raise ValueError("correction integrand does not decay for omega="
                         f"{omega}, alpha_inf={alpha_inf}")
    cut = 45.0 / rate
    x, w = gauss01(n_gauss)
    edges = cut * np.linspace(0.0, 1.0, n_panels + 1) ** 1.5
    lo, hi = edges[:-1], edges[1:]
    s = (lo[:, None] + x[None, :] * (hi - lo)[:, None]).ravel()
    ws = ((hi - lo)[:, None] * w[None, :]).ravel()
    eta = a[..., None] + s
    r = np.sqrt(R2[..., None] + eta ** 2)
    E = np.exp(beta * s + 1j * omega * r)
    q = E / r
    F = {"c": q}
    if any(k != "c" for k in orders):
        qp = (1j * omega / r - 1.0 / r ** 2) * E
        F["a"] = qp * eta / r
        F["R2"] = qp / (2.0 * r)
        if any(k in ("aa", "aR2", "R2R2") for k in orders):
            qpp = (-omega ** 2 / r - 2j * omega / r ** 2 + 2.0 / r ** 3) * E
            F["aa"] = qpp * eta ** 2 / r ** 2 + qp * (1.0 / r - eta ** 2 / r ** 3)
            F["aR2"] = eta * (qpp - qp / r) / (2.0 * r ** 2)
            F["R2R2"] = qpp / (4.0 * r ** 2) - qp / (4.0 * r ** 3)
    pref = beta / TWO_PI
    return {k: pref * np.sum(F[k] * ws, axis=-1) for k in orders}


# ----------------------------------------------------------- panel utilities

def bary_evaluator(verts):
    """Barycentric coordinates on the (possibly reflected) panel with the
    given vertex rows; returns a function (npts, 3) -> (3, npts)."""
    verts = np.asarray(verts, dtype=float)
    T = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    P = np.linalg.pinv(T)
    v0 = verts[0]

    def f(y):
        st = (np.asarray(y) - v0) @ P.T
        return np.vstack([1.0 - st[:, 0] - st[:, 1], st[:, 0], st[:, 1]])
    return f


def p1_gradients(verts):
    """Constant in-plane gradients of the three barycentric hats, rows (3, 3)."""
    verts = np.asarray(verts, dtype=float)
    T = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    P = np.linalg.pinv(T)  # rows: grad lambda_1, grad lambda_2
    return np.vstack([-P[0] - P[1], P[0], P[1]])


def p1_curls(verts, normal):
    """Surface curls n x grad(lambda_k) of the barycentric hats, rows (3, 3)."""
    return np.cross(normal, p1_gradients(verts))


def panel_trial_info(basis, j):
    """Global dofs supported on panel j and the local vertex index of each
    (None for piecewise constants)."""
    dofs, vals = basis.space_values_on_panel(j, np.eye(3))
    if basis.p == 0:
        return dofs, None
    locs = np.argmax(vals, axis=1)
    return dofs, locs


def _space_basis(mesh, p):
    return SpaceTimeBasis(mesh, TimeGrid(1.0, 1), p, 0)


def mass_matrix(mesh, coef, basis_trial, basis_test):
    """Dense Galerkin matrix of int_Gamma coef(x) phi_j(x) psi_i(x) ds_x."""
    bary, w = triangle_rule()
    out = np.zeros((basis_test.n_space, basis_trial.n_space), dtype=complex)
    for i in range(mesh.n_triangles):
        pts = panel_points(mesh, i, bary)
        c = np.asarray(coef(pts))
        dt_, psi = basis_test.space_values_on_panel(i, bary)
        dj_, phi = basis_trial.space_values_on_panel(i, bary)
        if len(dt_) and len(dj_):
            out[np.ix_(dt_, dj_)] += mesh.areas[i] * (psi * (w * c)) @ phi.T
    if np.all(out.imag == 0):
        return out.real
    return out


# ----------------------------------------------------- operator assembly

def _panel_data(mesh, basis_trial, basis_test, n_outer):
    bary, w = triangle_rule(n_outer)
    data = []
    for i in range(mesh.n_triangles):
        verts = mesh.vertices[mesh.triangles[i]]
        X = bary @ verts
        tdofs, tvals = basis_test.space_values_on_panel(i, bary)
        _, tlocs = panel_trial_info(basis_test, i)
        jdofs, jlocs = panel_trial_info(basis_trial, i)
        cr = np.max(np.linalg.norm(verts - verts.mean(axis=0), axis=1))
        data.append(dict(
            verts=verts, rverts=verts @ J_REFLECT, X=X,
            wx=w * mesh.areas[i], n=mesh.normals[i],
            tdofs=tdofs, tvals=tvals, tlocs=tlocs, jdofs=jdofs, jlocs=jlocs,
            bary=bary_evaluator(verts), rbary=bary_evaluator(verts @ J_REFLECT),
            curls=p1_curls(verts, mesh.normals[i]), cr=cr))
    return data


def _min_vertex_distance(va, vb):
    d = va[:, None, :] - vb[None, :, :]
    return float(np.sqrt((d * d).sum(axis=-1).min()))


def outer_subdivision(verts, other_verts, max_depth=3):
    """Adaptive 4-way subdivision of the test panel, graded toward the
    trial panel: children touching (or close to) the trial panel are split
    further.  Returns a list of leaf triangles (3, 3)."""
    other = np.asarray(other_verts, dtype=float)
    leaves = []

    def rec(v, depth):
        size = max(np.linalg.norm(v[0] - v[1]), np.linalg.norm(v[1] - v[2]),
                   np.linalg.norm(v[2] - v[0]))
        if depth >= max_depth or _min_vertex_distance(v, other) > 0.5 * size:
            leaves.append(v)
            return
        m01 = 0.5 * (v[0] + v[1])
        m12 = 0.5 * (v[1] + v[2])
        m20 = 0.5 * (v[2] + v[0])
        for child in (np.array([v[0], m01, m20]), np.array([m01, v[1], m12]),
                      np.array([m20, m12, v[2]]), np.array([m01, m12, m20])):
            rec(child, depth + 1)

    rec(np.asarray(verts, dtype=float), 0)
    return leaves


def _graded_outer_nodes(di, other_verts, bary, w, max_depth):
    """Outer quadrature nodes/weights graded toward the trial panel, with
    test function values evaluated at the nodes."""
    leaves = outer_subdivision(di["verts"], other_verts, max_depth)
    Xs, ws = [], []
    for v in leaves:
        area = 0.5 * np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
        Xs.append(bary @ v)
        ws.append(w * area)
    X = np.vstack(Xs)
    wx = np.concatenate(ws)
    lam = di["bary"](X)
    tvals = (np.ones((len(di["tdofs"]), len(X))) if di["tlocs"] is None
             else lam[di["tlocs"]])
    return X, wx, tvals


def assemble_freq_operator(op, mesh, omega, params, p_trial=None, p_test=None,
                           n_outer=7, far_factor=1.5, near_depth=3):
    """Dense complex Galerkin matrix (n_test, n_trial) of the operator
    op in {"V", "K", "Kp", "W"} at frequency omega.

    Near panel pairs use a test-panel subdivision graded toward the trial
    panel, with singularity-cancelling radial quadrature at outer nodes close
    to the trial panel and tensor rules elsewhere; well-separated pairs use a
    plain tensor product of triangle rules.  The smooth correction term
    always uses the tensor rule.
    """
    if op not in OPERATOR_SPACES:
        raise ValueError(f"unknown operator {op!r}")
    omega = complex(omega)
    if omega.imag < params.sigma:
        raise ValueError("Im omega must be >= sigma")
    dflt = OPERATOR_SPACES[op]
    p_trial = dflt[0] if p_trial is None else p_trial
    p_test = dflt[1] if p_test is None else p_test
    if op == "Kp":
        # by reciprocity of G the n_x-derivative operator is the transpose of
        # the n_y-derivative one with trial and test roles swapped; the n_y
        # form integrates much more accurately (the normal-distance factor is
        # constant over the flat inner panel)
        return assemble_freq_operator("K", mesh, omega, params,
                                      p_trial=p_test, p_test=p_trial,
                                      n_outer=n_outer, far_factor=far_factor,
                                      near_depth=near_depth).T
    if op == "W" and (p_trial, p_test) != (1, 1):
        raise ValueError("the integrated-by-parts hypersingular form needs "
                         "continuous (p=1) trial and test spaces")
    trial = _space_basis(mesh, p_trial)
    test = _space_basis(mesh, p_test)
    pd = _panel_data(mesh, trial, test, n_outer)
    alpha_inf = complex(params.alpha_inf)
    A = np.zeros((test.n_space, trial.n_space), dtype=complex)
    bary_in, w_in = triangle_rule(7)

    bary_out, w_out = triangle_rule(n_outer)
    for i, di in enumerate(pd):
        if len(di["tdofs"]) == 0:
            continue
        X, wx = di["X"], di["wx"]
        tw = di["tvals"] * wx  # (ndt, n_outer)
        for j, dj in enumerate(pd):
            if len(dj["jdofs"]) == 0:
                continue
            block = np.zeros((len(di["tdofs"]), len(dj["jdofs"])), dtype=complex)
            size = far_factor * (di["cr"] + dj["cr"])
            for image in (False, True):
                verts = dj["rverts"] if image else dj["verts"]
                bfun = dj["rbary"] if image else dj["bary"]
                n_y = J_REFLECT @ dj["n"] if image else dj["n"]
                near = _min_vertex_distance(di["X"], verts) < size
                if near:
                    Xo, wxo, tvo = _graded_outer_nodes(di, verts, bary_out,
                                                       w_out, near_depth)
                else:
                    Xo, wxo, tvo = X, wx, di["tvals"]
                inner = _inner_integrals(op, Xo, verts, bfun, dj["jlocs"],
                                         n_y, di["n"], omega, dj["cr"],
                                         near, bary_in, w_in)
                block += _combine(op, inner, tvo * wxo, wxo, di, dj,
                                  image, omega)
            if alpha_inf != 0:
                block += _correction_block(op, di, dj, omega, alpha_inf,
                                           bary_in, w_in, tw)
            A[np.ix_(di["tdofs"], dj["jdofs"])] += 2.0 * block
    return A


def _trial_vals(bfun, jlocs, y):
    lam = bfun(y)
    return np.ones((1, y.shape[0])) if jlocs is None else lam[jlocs]


def _inner_integrals(op, X, verts, bfun, jlocs, n_y, n_x, omega, cr_j,
                     near, bary_in, w_in):
    """Inner panel integrals for each outer node.

    Outer nodes within a couple of panel radii of the trial panel use the
    singularity-cancelling radial rule; the rest use the tensor rule,
    vectorized over nodes.  Returns, per outer node, the integrals of the
    kernel channel against each trial function; for W additionally the plain
    integral of g (for the curl-curl term)."""
    ndj = 1 if jlocs is None else len(jlocs)
    nrows = ndj + 1 if op == "W" else ndj
    nx = len(X)

    def channel(x, y, r, phi):
        if op == "V":
            return helmholtz_g(r, omega) * phi
        if op == "K":
            # (y - x) . n_y is constant on the flat trial panel; evaluating
            # it from the plane equation avoids roundoff noise near r -> 0
            fac = float((verts[0] - x) @ n_y) / r
            return helmholtz_g(r, omega, 1) * fac * phi
        if op == "Kp":
            fac = ((x - y) @ n_x) / r
            return helmholtz_g(r, omega, 1) * fac * phi
        # W: rows = g * phi_b, last row = g
        g = helmholtz_g(r, omega)
        return np.vstack([g * phi, g[None, :]])

    out = np.zeros((nx, nrows), dtype=complex)
    Y = bary_in @ verts
    area = 0.5 * np.linalg.norm(np.cross(verts[1] - verts[0],
                                         verts[2] - verts[0]))
    wyy = w_in * area
    if near:
        dmin = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)).min(1)
        singular = dmin < 1.5 * cr_j
    else:
        singular = np.zeros(nx, dtype=bool)
    if np.any(~singular):
        phi = _trial_vals(bfun, jlocs, Y)
        for k in np.nonzero(~singular)[0]:
            r = np.linalg.norm(Y - X[k], axis=1)
            out[k] = channel(X[k], Y, r, phi) @ wyy
    for k in np.nonzero(singular)[0]:
        x = X[k]

        def fun(y, r):
            r = np.maximum(r, 1e-300)
            return channel(x, y, r, _trial_vals(bfun, jlocs, y))
        out[k] = radial_integrate(x, verts, fun)
    if op == "W":
        return out[:, :-1], out[:, -1]
    return out, None


def _combine(op, inner, tw, wx, di, dj, image, omega):
    vals, gplain = inner
    if op != "W":
        return tw @ vals
    # W = -2 D with D the curl-curl minus omega^2 normal-normal form; the
    # leading factor 2 is applied by the caller, leaving -1 here.
    curls_j = dj["curls"][dj["jlocs"]]
    if image:
        curls_j = -(curls_j @ J_REFLECT)
        n_dot = di["n"] @ (J_REFLECT @ dj["n"])
    else:
        n_dot = di["n"] @ dj["n"]
    cc = di["curls"][di["tlocs"]] @ curls_j.T  # (ndt, ndj)
    gg = float(wx @ gplain.real) + 1j * float(wx @ gplain.imag)
    mass_like = tw @ vals  # (ndt, ndj) of int int g psi phi
    return -(cc * gg) + omega ** 2 * n_dot * mass_like


def _correction_block(op, di, dj, omega, alpha_inf, bary_in, w_in, tw):
    X = di["X"]
    Y = bary_in @ dj["verts"]
    area = 0.5 * np.linalg.norm(np.cross(dj["verts"][1] - dj["verts"][0],
                                         dj["verts"][2] - dj["verts"][0]))
    wyy = w_in * area
    phi = _trial_vals(dj["bary"], dj["jlocs"], Y)
    a = X[:, 2][:, None] + Y[:, 2][None, :]
    dh = X[:, None, :2] - Y[None, :, :2]
    R2 = (dh ** 2).sum(axis=-1)
    n_x, n_y = di["n"], dj["n"]
    if op == "V":
        ch = correction_channels(a, R2, omega, alpha_inf, ("c",))
        kern = ch["c"]
    elif op == "K":
        ch = correction_channels(a, R2, omega, alpha_inf, ("a", "R2"))
        a_y = n_y[2]
        R2_y = -2.0 * (dh @ n_y[:2])
        kern = ch["a"] * a_y + ch["R2"] * R2_y
    elif op == "Kp":
        ch = correction_channels(a, R2, omega, alpha_inf, ("a", "R2"))
        a_x = n_x[2]
        R2_x = 2.0 * (dh @ n_x[:2])
        kern = ch["a"] * a_x + ch["R2"] * R2_x
    else:  # W: full second mixed derivative (a_xy = 0)
        ch = correction_channels(a, R2, omega, alpha_inf,
                                 ("a", "R2", "aa", "aR2", "R2R2"))
        a_x, a_y = n_x[2], n_y[2]
        R2_x = 2.0 * (dh @ n_x[:2])
        R2_y = -2.0 * (dh @ n_y[:2])
        R2_xy = -2.0 * (n_x[0] * n_y[0] + n_x[1] * n_y[1])
        kern = (ch["aa"] * a_x * a_y + ch["aR2"] * (a_x * R2_y + a_y * R2_x)
                + ch["R2R2"] * R2_x * R2_y + ch["R2"] * R2_xy)
    return tw @ kern @ (phi * wyy).T
