"""Galerkin assembly of retarded boundary operators in block-Toeplitz form.

Space-time Galerkin entries of the retarded layer operators factor over a
uniform time grid into lag-dependent blocks A^k (k = test index - trial
index).  For the wavefront terms of the kernel (direct and reflected
arrivals) the time pairing collapses to a piecewise-polynomial lag function
C evaluated at the travel radius, so A^k entries are surface integrals of
C(r - k dt) times geometric kernel factors; these are computed by an outer
rule on the test panel and a radial decomposition of the source panel with
breakpoints at the arrival radii (exact across the light-cone kinks).  The
absorbing correction contributes a term supported behind the reflected
arrival: its jump part (deltas of C') is integrated over the image panel
with the same radial breakpoints while the arrival circles still cross the
panel, and by tensor rules once every point is inside the cone; its smooth
part is assembled by exact polynomial-moment contraction against C'.

Time discretization is Petrov-Galerkin: trial densities use hats (q=1) or
interval indicators (q=0); all operator rows are tested with interval
indicators, which makes the block sequence causal (A^k = 0 for k < 0) and
the marching solver exact forward substitution.

Weighted (sigma > 0) assembly for diagnostics reuses the same pipeline: the
full space-time matrix factors as e^{-2 sigma t_m} times Toeplitz blocks
built from exponentially weighted lag correlations.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .kernel import TWO_PI, FOUR_PI, KernelParams
from .discretization import SpaceTimeBasis, TimeGrid, triangle_rule, panel_points
from .timeshapes import LagKernel, TimeShape, gauss01
from .radial import radial_integrate
from .frequency import (J_REFLECT, _panel_data, _graded_outer_nodes,
                        _min_vertex_distance, mass_matrix)

_OPS = ("V", "K", "Kp", "W", "M_alpha", "M_inv_alpha")


@dataclass
class MaterialField:
    """Panelwise obstacle impedance alpha."""
    alpha: np.ndarray
    invertible: bool = True

    @classmethod
    def constant(cls, mesh, value):
        return cls(np.full(mesh.n_triangles, complex(value)))

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=complex))
        self.invertible = bool(np.all(self.alpha != 0))
        if not self.invertible:
            raise ValueError("alpha must be nonzero on every panel")

    def require_positive(self):
        if np.any(self.alpha.real <= 0):
            raise ValueError("the acoustic system requires Re alpha > 0 "
                             "on every panel")

    def values(self, mesh):
        if len(self.alpha) == 1:
            return np.full(mesh.n_triangles, self.alpha[0])
        if len(self.alpha) != mesh.n_triangles:
            raise ValueError("alpha length does not match the mesh")
        return self.alpha


@dataclass
class ToeplitzBlocks:
    """Lower-triangular block-Toeplitz operator: blocks[k] couples trial time
    index n to test time index m = n + k."""
    operator: str
    blocks: list
    grid: TimeGrid
    basis_trial: SpaceTimeBasis
    basis_test: SpaceTimeBasis
    params: KernelParams = None
    lag: LagKernel = None

    def __post_init__(self):
        if self.operator not in _OPS:
            raise ValueError(f"unknown operator tag {self.operator!r}")

    @property
    def dt(self):
        return self.grid.dt

    @property
    def L(self):
        return len(self.blocks) - 1

    @property
    def shape(self):
        return self.blocks[0].shape

    def symbol(self, omega):
        """Discrete symbol sum_k A^k e^{i omega k dt} (dense, complex)."""
        z = np.exp(1j * complex(omega) * self.dt)
        out = np.zeros(self.shape, dtype=complex)
        for k, A in enumerate(self.blocks):
            out += (z ** k) * A.toarray()
        return out

    def check_causality(self, tol=0.0):
        """Without absorption the blocks vanish exactly once the lag exceeds
        the last reflected arrival; with absorption the correction has
        unbounded memory and only the pre-arrival zeros hold.  Returns the
        largest post-arrival magnitude (checked against tol when the
        half-space is non-absorbing)."""
        mesh = self.basis_trial.mesh
        rmax = mesh.diameter() + 2 * mesh.vertices[:, 2].max()
        absorbing = (self.params is not None
                     and complex(self.params.alpha_inf) != 0)
        hi = self.lag.support()[1] if self.lag is not None else self.dt
        worst = 0.0
        for k, A in enumerate(self.blocks):
            if k * self.dt - hi > rmax:
                m = float(abs(A).max()) if A.nnz else 0.0
                worst = max(worst, m)
        if not absorbing and worst > tol:
            raise AssertionError(f"causality violation of size {worst}")
        return worst


def horizon_blocks(mesh, grid):
    """Number of lag blocks covering the marching horizon plus the latest
    reflected arrival."""
    span = grid.T + mesh.diameter() + 2 * mesh.vertices[:, 2].max()
    return int(np.ceil(span / grid.dt)) + 2


# --------------------------------------------------------------- lag helpers

def _lag_for(basis_trial, basis_test, time_deriv, sigma):
    if basis_test.q != 0:
        raise ValueError("operator rows are tested with interval indicators "
                         "(q=0 test basis)")
    return LagKernel(basis_test.time_shape(), basis_trial.time_shape(),
                     d=time_deriv, sigma=sigma)


def _lag_tail_parts(lag):
    """M = C' (the lag derivative, as piecewise polynomial plus jump deltas)
    and the function part of M' for the hypersingular boundary terms."""
    Cpp, _ = lag.piece(0)
    M = TimeShape(Cpp, []).derivative()
    return M, M.pp.derivative()


# ------------------------------------------------------- retarded assembly

def _assemble_retarded(op, mesh, grid, basis_inner, basis_outer, params, lag,
                       n_blocks, far_factor=1.5, near_depth=3,
                       symmetric=False):
    """Blocks B^k[outer_dof, inner_dof] of the retarded operator; the normal
    derivative of op 'K' acts on the inner panel (constant over its plane).
    With symmetric=True only pairs j >= i are computed and mirrored."""
    alpha = params.real_alpha_inf()
    dt = grid.dt
    L = n_blocks - 1
    lo_s, hi_s = lag.support()
    pd = _panel_data(mesh, basis_inner, basis_outer, 7)
    bary_out, w_out = triangle_rule(7)
    bary_in6, w_in6 = triangle_rule(6)
    B = np.zeros((n_blocks, basis_outer.n_space, basis_inner.n_space))
    M_tail, M2_tail, deltas = None, None, ()
    if alpha > 0:
        M_tail, M2_tail = _lag_tail_parts(lag)
        deltas = M_tail.deltas
        if op == "W" and deltas:
            raise ValueError("hypersingular assembly needs a continuously "
                             "differentiable lag function")

    for i, di in enumerate(pd):
        if len(di["tdofs"]) == 0:
            continue
        for j, dj in enumerate(pd):
            if len(dj["jdofs"]) == 0:
                continue
            if symmetric and j < i:
                continue
            block = np.zeros((n_blocks, len(di["tdofs"]), len(dj["jdofs"])))
            size = far_factor * (di["cr"] + dj["cr"])
            rmax_im = _max_vertex_distance(di["verts"], dj["rverts"])
            for image in (False, True):
                sverts = dj["rverts"] if image else dj["verts"]
                bfun = dj["rbary"] if image else dj["bary"]
                n_in = J_REFLECT @ dj["n"] if image else dj["n"]
                near = _min_vertex_distance(di["X"], sverts) < size
                if near:
                    Xo, wxo, tvo = _graded_outer_nodes(di, sverts, bary_out,
                                                       w_out, near_depth)
                else:
                    Xo, wxo, tvo = di["X"], di["wx"], di["tvals"]
                _delta_terms(op, block, Xo, wxo, tvo, di, dj, sverts, bfun,
                             n_in, image, lag, dt, L, lo_s, hi_s,
                             deltas if image else (), alpha, rmax_im)
            if alpha > 0:
                _tail_terms(op, block, di, dj, alpha, M_tail, M2_tail,
                            dt, L, bary_in6, w_in6, rmax_im)
            ix = np.ix_(di["tdofs"], dj["jdofs"])
            B[(slice(None),) + ix] += block
            if symmetric and j > i:
                ixT = np.ix_(dj["jdofs"], di["tdofs"])
                B[(slice(None),) + ixT] += np.transpose(block, (0, 2, 1))
    B *= 2.0  # trace conventions carry a factor 2 on every layer operator
    return [csr_matrix(B[k]) for k in range(n_blocks)]


def _max_vertex_distance(va, vb):
    d = va[:, None, :] - vb[None, :, :]
    return float(np.sqrt((d * d).sum(axis=-1).max()))


def _point_triangle_distance(x, tri):
    """Exact distance from a point to a (filled) triangle."""
    e0, e1 = tri[1] - tri[0], tri[2] - tri[0]
    w = x - tri[0]
    a, b, c = e0 @ e0, e0 @ e1, e1 @ e1
    d, e = e0 @ w, e1 @ w
    det = a * c - b * b
    s, t = (c * d - b * e) / det, (a * e - b * d) / det
    if s >= 0 and t >= 0 and s + t <= 1:
        p = tri[0] + s * e0 + t * e1
        return float(np.linalg.norm(x - p))
    best = np.inf
    for p0, p1 in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
        seg = p1 - p0
        u = np.clip(((x - p0) @ seg) / (seg @ seg), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(x - (p0 + u * seg))))
    return best


def _lag_rows(lag, deriv, r, ks, dt):
    """lag.eval(r - k dt, deriv) for all k in ks as a (len(ks), len(r))
    array.  The lag kernel vanishes outside a support band a few cells wide,
    so only that band is evaluated."""
    pp, sign = lag.piece(deriv)
    lo, hi = pp.support
    nk = len(ks)
    out = np.zeros((nk, len(r)))
    if nk == 0 or len(r) == 0:
        return out
    k0, k1 = int(ks[0]), int(ks[-1])
    kmin = np.floor((r - hi) / dt).astype(np.int64)
    nband = int(np.ceil((hi - lo) / dt)) + 2
    cols = np.arange(len(r))
    for b in range(nband):
        kk = kmin + b
        valid = (kk >= k0) & (kk <= k1)
        if not np.any(valid):
            continue
        kv = kk[valid]
        cv = cols[valid]
        out[kv - k0, cv] = sign * pp.eval(r[valid] - kv * dt)
    return out


def _delta_terms(op, block, Xo, wxo, tvo, di, dj, sverts, bfun, n_in, image,
                 lag, dt, L, lo_s, hi_s, tail_deltas, alpha, rmax_im):
    """Wavefront contributions C(r - k dt) x kernel factor, plus (on the
    image panel) the correction jumps while their arrival circles still
    cross the panel.  Radial inner quadrature with grid-radius breakpoints."""
    d = Xo[:, None, :] - sverts[None, :, :]
    dist = np.sqrt((d * d).sum(axis=-1))
    # the exact node-panel distance keeps pre-arrival blocks out of the
    # window entirely, so their entries stay exactly zero
    rmin = min(_point_triangle_distance(x, sverts) for x in Xo)
    rmax = float(dist.max())
    k_lo = max(0, int(np.ceil((rmin - hi_s) / dt)))
    k_hi = min(L, int(np.floor((rmax - lo_s) / dt)))
    if tail_deltas:
        # jump circles keep crossing the image panel up to the largest vertex
        # distance even after the wavefront window has closed
        loc_min = min(loc for loc, _ in tail_deltas)
        k_hi = max(k_hi, min(L, int(np.floor((rmax_im - loc_min) / dt))))
    if k_hi < k_lo:
        return
    ks = np.arange(k_lo, k_hi + 1)
    nk = len(ks)
    jlocs = dj["jlocs"]
    ndj = block.shape[2]
    bps = dt * np.arange(1, int(np.floor(rmax / dt)) + 1)
    tw = tvo * wxo
    sl = slice(k_lo, k_hi + 1)
    # correction jumps are handled here (with radial breakpoints) only while
    # their arrival circle can cross the panel; beyond rmax_im the integrand
    # is smooth and the tensor tail takes over
    jump_terms = [(loc, wt, ks * dt + loc)
                  for loc, wt in tail_deltas
                  if (k_lo * dt + loc) <= rmax_im]

    if op == "W":
        curls_j = dj["curls"][jlocs]
        if image:
            curls_j = -(curls_j @ J_REFLECT)
            n_dot = float(di["n"] @ (J_REFLECT @ dj["n"]))
        else:
            n_dot = float(di["n"] @ dj["n"])
        cc = di["curls"][di["tlocs"]] @ curls_j.T  # (ndt, ndj)

    for m, x in enumerate(Xo):
        if op == "K":
            dot = float((sverts[0] - x) @ n_in)

        def fun(y, r):
            r = np.maximum(r, 1e-300)
            phi = (np.ones((1, len(r))) if jlocs is None
                   else bfun(y)[jlocs])
            if op == "V":
                ker = _lag_rows(lag, 0, r, ks, dt) / (FOUR_PI * r)
            elif op == "K":
                c0 = _lag_rows(lag, 0, r, ks, dt)
                c1 = _lag_rows(lag, 1, r, ks, dt)
                ker = (c1 / (FOUR_PI * r) - c0 / (FOUR_PI * r * r)) * (dot / r)
            else:
                # W: rows = lag''/(4 pi r) * phi_b, extra row = lag/(4 pi r)
                c0 = _lag_rows(lag, 0, r, ks, dt) / (FOUR_PI * r)
                c2 = _lag_rows(lag, 2, r, ks, dt) / (FOUR_PI * r)
                rows = c2[:, None, :] * phi[None, :, :]
                return np.concatenate([rows, c0[:, None, :]], axis=1)
            if jump_terms:
                ker = ker + _jump_channel(op, x, y, r, dj["n"], jump_terms,
                                          alpha, rmax_im)
            return ker[:, None, :] * phi[None, :, :]

        vals = radial_integrate(x, sverts, fun, breakpoints=bps)  # (nk, nch)
        if op == "W":
            block[sl] += (-n_dot) * tw[:, m][None, :, None] * vals[:, None, :ndj]
            block[sl] += (-wxo[m]) * vals[:, ndj][:, None, None] * cc[None, :, :]
        else:
            block[sl] += tw[:, m][None, :, None] * vals[:, None, :]


def _jump_channel(op, x, y, r, n_orig, jump_terms, alpha, rmax_im):
    """Correction-jump integrand over the image panel: each delta of C' at
    lag offset loc with weight wt contributes wt * u(k dt + loc) behind the
    arrival circle r < k dt + loc, with u = 1/D the cone amplitude (its
    inner-normal derivative for op 'K')."""
    a = x[2] - y[:, 2]               # original y3 equals -y3 on the image
    R2 = np.maximum(r * r - a * a, 0.0)
    nk = len(jump_terms[0][2])
    out = np.zeros((nk, len(r)))
    for loc, wt, tstar in jump_terms:
        active = tstar <= rmax_im
        if not np.any(active):
            continue
        ts = tstar[:, None]
        mask = (r[None, :] < ts) & active[:, None]
        s = ts + alpha * a[None, :]
        P = s * s + (alpha ** 2 - 1.0) * R2[None, :]
        P = np.where(mask, P, 1.0)
        if op == "V":
            val = 1.0 / np.sqrt(P)
        else:  # K: derivative along the inner panel's own normal
            Pm32 = P ** -1.5
            R2_n = 2.0 * ((y[:, :2] - x[:2]) @ n_orig[:2])
            val = (-alpha * s * n_orig[2]
                   - 0.5 * (alpha ** 2 - 1.0) * R2_n[None, :]) * Pm32
        out += np.where(mask, wt * val, 0.0)
    return (alpha / TWO_PI) * out


def _u_partials(tau, a, R2, alpha, need_second=False):
    """Partial derivatives of the cone amplitude u(tau) = P^{-1/2},
    P = (tau + alpha a)^2 + (alpha^2 - 1) R^2, in the geometric variables
    a = x3 + y3 and R^2 = |x_h - y_h|^2."""
    s = tau + alpha * a
    P = s * s + (alpha ** 2 - 1.0) * R2
    Pm12 = 1.0 / np.sqrt(P)
    Pm32 = Pm12 / P
    out = {"u": Pm12,
           "a": -alpha * s * Pm32,
           "R2": -0.5 * (alpha ** 2 - 1.0) * Pm32,
           "tau": -s * Pm32}
    if need_second:
        Pm52 = Pm32 / P
        out["aa"] = 3.0 * alpha ** 2 * s * s * Pm52 - alpha ** 2 * Pm32
        out["aR2"] = 1.5 * alpha * s * (alpha ** 2 - 1.0) * Pm52
        out["R2R2"] = 0.75 * (alpha ** 2 - 1.0) ** 2 * Pm52
    return out


def _u_channel(op, up, a_x, a_y, R2_x, R2_y, R2_xy):
    if op == "V":
        return up["u"]
    if op == "K":
        return up["a"] * a_y + up["R2"] * R2_y
    return (up["aa"] * (a_x * a_y) + up["aR2"] * (a_x * R2_y + a_y * R2_x)
            + up["R2R2"] * (R2_x * R2_y) + up["R2"] * R2_xy)


def _tail_terms(op, block, di, dj, alpha, M, M2pp, dt, L,
                bary_in, w_in, rmax_im):
    """Smooth part of the absorbing correction, all lags at once.

    Every entry's correction is (alpha/2pi) times a tau-integral of
    M(tau - k dt) (M = C') against the cone amplitude from the reflected
    arrival r- upward; normal derivatives add boundary terms at tau = r-.
    The jump deltas of M are tensor-integrated here only in their smooth
    regime (every point past the arrival); crossing circles were handled
    radially with the wavefront terms."""
    X = di["X"]
    Y = bary_in @ dj["verts"]
    area_j = 0.5 * np.linalg.norm(np.cross(dj["verts"][1] - dj["verts"][0],
                                           dj["verts"][2] - dj["verts"][0]))
    wxy = np.outer(di["wx"], w_in * area_j)                    # (7, 6)
    a = X[:, 2][:, None] + Y[:, 2][None, :]
    dh = X[:, None, :2] - Y[None, :, :2]
    R2 = (dh ** 2).sum(axis=-1)
    c = np.sqrt(R2 + a * a)
    nq = a.size
    a_f, R2_f, c_f = a.ravel(), R2.ravel(), c.ravel()
    n_x, n_y = di["n"], dj["n"]
    need2 = op == "W"
    a_x, a_y = n_x[2], n_y[2]
    R2_x = 2.0 * (dh @ n_x[:2]).ravel()
    R2_y = -2.0 * (dh @ n_y[:2]).ravel()
    R2_xy = -2.0 * (n_x[0] * n_y[0] + n_x[1] * n_y[1])
    ks = np.arange(L + 1)
    tails = np.zeros((nq, L + 1))

    Mpp = M.pp
    if np.any(Mpp.coef):
        ncells, ndeg = Mpp.coef.shape
        m_idx = np.arange(0, max(L + Mpp.j0 + ncells + 1, 1))
        gs, gw = gauss01(6)
        lo = np.maximum(m_idx[None, :] * dt, c_f[:, None])     # (nq, nm)
        ln = np.maximum((m_idx[None, :] + 1) * dt - lo, 0.0)
        tau = lo[..., None] + ln[..., None] * gs               # (nq, nm, ng)
        wq = ln[..., None] * gw
        s_loc = tau / dt - m_idx[None, :, None]                # in [0, 1]
        up = _u_partials(tau, a_f[:, None, None], R2_f[:, None, None], alpha,
                         need_second=need2)
        uch = _u_channel(op, up, a_x, a_y, R2_x[:, None, None],
                         R2_y[:, None, None], R2_xy)
        # moments mu[q, m, p] = int_cell u_channel(tau) s_loc^p dtau
        mu = np.empty((nq, len(m_idx), ndeg))
        pw = np.ones_like(s_loc)
        for p in range(ndeg):
            mu[:, :, p] = (uch * pw * wq).sum(axis=-1)
            if p + 1 < ndeg:
                pw = pw * s_loc
        for cell in range(ncells):
            m_of_k = ks + Mpp.j0 + cell
            valid = (m_of_k >= 0) & (m_of_k < len(m_idx))
            if np.any(valid):
                tails[:, valid] += mu[:, m_of_k[valid], :] @ Mpp.coef[cell]
    for loc, wt in M.deltas:
        t_eval = ks * dt + loc
        sm = t_eval > rmax_im
        if not np.any(sm):
            continue
        up_d = _u_partials(np.broadcast_to(t_eval[sm], (nq, int(sm.sum()))),
                           a_f[:, None], R2_f[:, None], alpha,
                           need_second=need2)
        tails[:, sm] += wt * _u_channel(op, up_d, a_x, a_y, R2_x[:, None],
                                        R2_y[:, None], R2_xy)
    # boundary terms at tau = r- for the normal derivatives
    if op in ("K", "W"):
        Mc = Mpp.eval((c_f[:, None] - ks * dt).ravel()).reshape(nq, L + 1)
        upc = _u_partials(c_f, a_f, R2_f, alpha)
        c_y = (a_f * a_y + 0.5 * R2_y) / c_f
        if op == "K":
            tails -= Mc * (upc["u"] * c_y)[:, None]
        else:
            c_x = (a_f * a_x + 0.5 * R2_x) / c_f
            c_xy = (a_x * a_y + 0.5 * R2_xy) / c_f - c_x * c_y / c_f
            u_xc = upc["a"] * a_x + upc["R2"] * R2_x
            u_yc = upc["a"] * a_y + upc["R2"] * R2_y
            bnd = (c_x * u_yc + c_y * u_xc + c_xy * upc["u"]
                   + c_x * c_y * upc["tau"])
            tails -= Mc * bnd[:, None]
            M2c = M2pp.eval((c_f[:, None] - ks * dt).ravel()).reshape(nq, L + 1)
            tails -= M2c * (c_x * c_y * upc["u"])[:, None]
    tails *= alpha / TWO_PI
    jlocs = dj["jlocs"]
    phi = (np.ones((1, Y.shape[0])) if jlocs is None
           else dj["bary"](Y)[jlocs])
    psi = di["tvals"]                                           # (ndt, 7)
    T = tails.reshape(X.shape[0], Y.shape[0], -1)
    block += np.einsum('am,mnk,bn->kab', psi, wxy[:, :, None] * T, phi)


# ----------------------------------------------------------- public assembly

def assemble_V_blocks(mesh, grid, basis_trial, basis_test, params,
                      time_deriv=1, n_blocks=None, far_factor=1.5,
                      near_depth=3):
    """Retarded single-layer blocks; by default the operator is applied to
    the time derivative of the trial density (the coercive formulation)."""
    lag = _lag_for(basis_trial, basis_test, time_deriv, grid.sigma)
    if n_blocks is None:
        n_blocks = horizon_blocks(mesh, grid)
    blocks = _assemble_retarded("V", mesh, grid, basis_trial, basis_test,
                                params, lag, n_blocks, far_factor, near_depth,
                                symmetric=basis_trial.p == basis_test.p)
    return ToeplitzBlocks("V", blocks, grid, basis_trial, basis_test,
                          params, lag)


def assemble_K_blocks(mesh, grid, basis_trial, basis_test, params,
                      time_deriv=1, n_blocks=None, **kw):
    """Retarded double-layer blocks (normal derivative on the trial side)."""
    lag = _lag_for(basis_trial, basis_test, time_deriv, grid.sigma)
    if n_blocks is None:
        n_blocks = horizon_blocks(mesh, grid)
    blocks = _assemble_retarded("K", mesh, grid, basis_trial, basis_test,
                                params, lag, n_blocks, **kw)
    return ToeplitzBlocks("K", blocks, grid, basis_trial, basis_test,
                          params, lag)


def assemble_Kp_blocks(mesh, grid, basis_trial, basis_test, params,
                       time_deriv=0, n_blocks=None, **kw):
    """Adjoint double-layer blocks (normal derivative on the test side).
    Assembled in the transposed order - outer rule over the trial panels,
    radial rule over the test panels carrying the (then panelwise-constant)
    normal-distance factor - and transposed back, exact by the symmetry of
    the kernel in its two arguments."""
    lag = _lag_for(basis_trial, basis_test, time_deriv, grid.sigma)
    if n_blocks is None:
        n_blocks = horizon_blocks(mesh, grid)
    blocks_T = _assemble_retarded("K", mesh, grid, basis_test, basis_trial,
                                  params, lag, n_blocks, **kw)
    return ToeplitzBlocks("Kp", [csr_matrix(b.T) for b in blocks_T], grid,
                          basis_trial, basis_test, params, lag)


def assemble_W_blocks(mesh, grid, basis_trial, basis_test, params,
                      time_deriv=0, n_blocks=None, **kw):
    """Hypersingular blocks; the wavefront terms use the integrated-by-parts
    surface-curl form, the smooth correction is differentiated directly."""
    if basis_trial.p != 1 or basis_test.p != 1:
        raise ValueError("the hypersingular operator needs continuous (p=1) "
                         "trial and test spaces")
    lag = _lag_for(basis_trial, basis_test, time_deriv, grid.sigma)
    if n_blocks is None:
        n_blocks = horizon_blocks(mesh, grid)
    blocks = _assemble_retarded("W", mesh, grid, basis_trial, basis_test,
                                params, lag, n_blocks, symmetric=True, **kw)
    return ToeplitzBlocks("W", blocks, grid, basis_trial, basis_test,
                          params, lag)


def _weighted_mass_factor(grid):
    """Cell integral of e^{-2 sigma t} relative to dt, with the row factor
    e^{-2 sigma t_m} split off."""
    s = grid.sigma
    if s == 0.0:
        return 1.0
    return (np.exp(2 * s * grid.dt) - 1.0) / (2 * s * grid.dt)


@dataclass
class AcousticSystem:
    """The term families of the acoustic space-time bilinear form:

    phi-row (continuous tests):      + K' p - W phi + alpha d/dt phi = F
    p-row (panel-indicator tests): (1/alpha) p + V d/dt p - K d/dt phi = G/alpha
    """
    V: ToeplitzBlocks
    K: ToeplitzBlocks
    Kp: ToeplitzBlocks
    W: ToeplitzBlocks
    M_alpha: np.ndarray
    M_inv_alpha: np.ndarray
    grid: TimeGrid
    basis_phi: SpaceTimeBasis
    basis_p: SpaceTimeBasis
    material: MaterialField = None

    @property
    def n_phi(self):
        return self.basis_phi.n_space

    @property
    def n_p(self):
        return self.basis_p.n_space

    @property
    def L(self):
        return self.W.L

    def stacked_block(self, k):
        """Coupled block S^k acting on the stacked unknown (phi_n, p_n)."""
        wbar = _weighted_mass_factor(self.grid)
        A = np.zeros((self.n_phi + self.n_p, self.n_phi + self.n_p))
        if k <= self.L:
            A[:self.n_phi, :self.n_phi] -= self.W.blocks[k].toarray()
            A[:self.n_phi, self.n_phi:] += self.Kp.blocks[k].toarray()
            A[self.n_phi:, :self.n_phi] -= self.K.blocks[k].toarray()
            A[self.n_phi:, self.n_phi:] += self.V.blocks[k].toarray()
        if k == 0:
            A[:self.n_phi, :self.n_phi] += wbar * self.M_alpha
            A[self.n_phi:, self.n_phi:] += self.grid.dt * wbar * self.M_inv_alpha
        elif k == 1:
            A[:self.n_phi, :self.n_phi] -= wbar * self.M_alpha
        return A


def assemble_acoustic_blocks(mesh, grid, bases, params, material,
                             n_blocks=None, **kw):
    """Assemble the acoustic system: bases = (basis_phi, basis_p) with
    basis_phi the continuous-in-space, hat-in-time (p=1, q=1) space and
    basis_p panelwise constants with interval indicators (p=0, q=0)."""
    basis_phi, basis_p = bases
    if basis_phi.p != 1 or basis_phi.q != 1:
        raise ValueError("phi needs the (p=1, q=1) basis")
    if basis_p.p != 0 or basis_p.q != 0:
        raise ValueError("p needs the (p=0, q=0) basis")
    material.require_positive()
    params.real_alpha_inf()
    basis_p_test = SpaceTimeBasis(mesh, grid, 0, 0)
    basis_phi_test = SpaceTimeBasis(mesh, grid, 1, 0)
    if n_blocks is None:
        n_blocks = horizon_blocks(mesh, grid)
    V = assemble_V_blocks(mesh, grid, basis_p, basis_p_test, params,
                          time_deriv=1, n_blocks=n_blocks, **kw)
    K = assemble_K_blocks(mesh, grid, basis_phi, basis_p_test, params,
                          time_deriv=1, n_blocks=n_blocks, **kw)
    Kp = assemble_Kp_blocks(mesh, grid, basis_p, basis_phi_test, params,
                            time_deriv=0, n_blocks=n_blocks, **kw)
    W = assemble_W_blocks(mesh, grid, basis_phi, basis_phi_test, params,
                          time_deriv=0, n_blocks=n_blocks, **kw)
    av = material.values(mesh)
    M_alpha = _real_strict(mass_matrix(
        mesh, _panel_coef(mesh, av), basis_phi, basis_phi))
    M_inv = _real_strict(mass_matrix(
        mesh, _panel_coef(mesh, 1.0 / av), basis_p, basis_p_test))
    return AcousticSystem(V, K, Kp, W, M_alpha, M_inv, grid,
                          basis_phi, basis_p, material)


def _panel_coef(mesh, values):
    centroids = mesh.centroids

    def coef(pts):
        d = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        return values[np.argmin(d, axis=1)]
    return coef


def _real_strict(M):
    M = np.asarray(M)
    if np.iscomplexobj(M):
        if np.any(M.imag != 0):
            raise ValueError("the time-domain system requires real alpha")
        return M.real.copy()
    return M


# --------------------------------------------------------------- right sides

def assemble_rhs_dirichlet(f, mesh, grid, basis_test, sigma=0.0, dfdt=None,
                           n_gauss=8):
    """Block vector of the time-differentiated boundary data against the test
    basis: entries int_{I_m} e^{-2 sigma t} int_Gamma (df/dt) psi_i ds dt.
    f maps (t, points (n, 3)) -> (n,); it must vanish at t = 0."""
    bary, w = triangle_rule()
    pts = np.vstack([panel_points(mesh, i, bary)
                     for i in range(mesh.n_triangles)])
    if np.max(np.abs(np.asarray(f(0.0, pts)))) > 1e-10:
        raise ValueError("boundary data must vanish at t = 0")
    if dfdt is None:
        h = 1e-2 * grid.dt

        def dfdt(t, p):
            return (-np.asarray(f(t + 2 * h, p)) + 8 * np.asarray(f(t + h, p))
                    - 8 * np.asarray(f(t - h, p))
                    + np.asarray(f(t - 2 * h, p))) / (12 * h)
    return _time_cell_pairing([dfdt], mesh, grid, [basis_test], sigma,
                              n_gauss, pts, bary, w)[0]


def assemble_rhs_acoustic(F, G, mesh, grid, bases, material, sigma=0.0,
                          n_gauss=8):
    """Right-hand side pair: the phi-row pairs F against the continuous test
    functions, the p-row pairs G with weight 1/alpha against the panel
    indicators."""
    basis_phi, _ = bases
    basis_p_test = SpaceTimeBasis(mesh, grid, 0, 0)
    inv_alpha = _real_strict(1.0 / material.values(mesh))
    bary, w = triangle_rule()
    pts = np.vstack([panel_points(mesh, i, bary)
                     for i in range(mesh.n_triangles)])
    npts = len(bary)

    def G_weighted(t, p):
        return np.asarray(G(t, p)) * np.repeat(inv_alpha, npts)

    out = _time_cell_pairing([F, G_weighted], mesh, grid,
                             [basis_phi, basis_p_test], sigma,
                             n_gauss, pts, bary, w)
    return out[0], out[1]


def _time_cell_pairing(funcs, mesh, grid, bases, sigma, n_gauss, pts, bary, w):
    gs, gw = gauss01(n_gauss)
    spatial = []
    for b in bases:
        per_panel = []
        for i in range(mesh.n_triangles):
            dofs, psi = b.space_values_on_panel(i, bary)
            per_panel.append((dofs, psi * w * mesh.areas[i]))
        spatial.append(per_panel)
    outs = [np.zeros((grid.nt, b.n_space)) for b in bases]
    npts = len(bary)
    for m in range(grid.nt):
        tq = grid.dt * (m + gs)
        wt = grid.dt * gw * np.exp(-2.0 * sigma * tq)
        for g, t in enumerate(tq):
            for fn, per_panel, out in zip(funcs, spatial, outs):
                vals = np.asarray(fn(t, pts))
                for i in range(mesh.n_triangles):
                    dofs, pw = per_panel[i]
                    if len(dofs):
                        out[m, dofs] += wt[g] * (pw @ vals[i * npts:(i + 1) * npts])
    return outs


# ------------------------------------------------------------- binary cache

_MAGIC = b"RTBLK1\x00\x00"


def dump_blocks(tb, path):
    """Binary cache of a block sequence: header (operator tag, L, dims, dt),
    then per-block CSR triplets, little-endian 64-bit."""
    tag = tb.operator.encode().ljust(8, b"\x00")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(tag)
        n_test, n_trial = tb.shape
        fh.write(struct.pack("<qqq", tb.L, n_test, n_trial))
        fh.write(struct.pack("<d", tb.dt))
        for A in tb.blocks:
            coo = A.tocoo()
            fh.write(struct.pack("<q", coo.nnz))
            fh.write(coo.row.astype("<i8").tobytes())
            fh.write(coo.col.astype("<i8").tobytes())
            fh.write(coo.data.astype("<f8").tobytes())


def load_blocks(path, grid, basis_trial, basis_test, params=None, lag=None):
    """Read back a dump_blocks cache; grid and bases are supplied by the
    caller, with dt consistency checked."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a block cache file")
        tag = fh.read(8).rstrip(b"\x00").decode()
        L, n_test, n_trial = struct.unpack("<qqq", fh.read(24))
        dt, = struct.unpack("<d", fh.read(8))
        if abs(dt - grid.dt) > 1e-14:
            raise ValueError("cached dt does not match the grid")
        blocks = []
        for _ in range(L + 1):
            nnz, = struct.unpack("<q", fh.read(8))
            rows = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
            cols = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
            data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
            blocks.append(csr_matrix((data, (rows, cols)),
                                     shape=(n_test, n_trial)))
    return ToeplitzBlocks(tag, blocks, grid, basis_trial, basis_test,
                          params, lag)
