import numpy as np
import pytest

from hsbem.kernel import TWO_PI, FOUR_PI, KernelParams
from hsbem.mesh import SurfaceMesh, octahedron
from hsbem.discretization import SpaceTimeBasis, TimeGrid, triangle_rule
from hsbem.timeshapes import gauss01
from hsbem.radial import radial_integrate
from hsbem.frequency import assemble_freq_operator
from hsbem.assembly import (MaterialField, horizon_blocks,
                            assemble_V_blocks, assemble_K_blocks,
                            assemble_Kp_blocks, assemble_W_blocks,
                            assemble_acoustic_blocks, assemble_rhs_dirichlet,
                            assemble_rhs_acoustic, dump_blocks, load_blocks,
                            _u_partials, _jump_channel, _panel_data)

MESH = octahedron(center=(0.0, 0.0, 1.0), radius=0.5)
OMEGA = 1.3 + 1.0j
ALPHA_INF = 0.3
PARAMS = KernelParams(alpha_inf=ALPHA_INF, sigma=0.5)
PARAMS0 = KernelParams(alpha_inf=0.0, sigma=0.5)


def two_separated_panels(dist=2.5, z=1.0):
    verts = np.array([
        [0.0, 0.0, z], [0.6, 0.0, z], [0.0, 0.6, z],
        [dist, 0.0, z], [dist + 0.6, 0.0, z], [dist, 0.6, z]])
    tris = np.array([[0, 1, 2], [3, 4, 5]])
    return SurfaceMesh(verts, tris)


def bases_pair(mesh, grid):
    return (SpaceTimeBasis(mesh, grid, 1, 1), SpaceTimeBasis(mesh, grid, 0, 0))


# ------------------------------------------------------------ symbol oracle

def symbol_vs_frequency(op, time_deriv, p_tr, q_tr, p_te, dt, rtol,
                        n_blocks=None):
    """The summed blocks weighted by e^{i omega k dt} must reproduce the
    frequency-domain Galerkin matrix times the transformed lag function."""
    grid = TimeGrid(dt, 4)
    trial = SpaceTimeBasis(MESH, grid, p_tr, q_tr)
    test = SpaceTimeBasis(MESH, grid, p_te, 0)
    if n_blocks is None:
        n_blocks = int(np.ceil(22.0 / dt))  # e^{-Im omega L dt} ~ 1e-10
    asm = {"V": assemble_V_blocks, "K": assemble_K_blocks,
           "Kp": assemble_Kp_blocks, "W": assemble_W_blocks}[op]
    tb = asm(MESH, grid, trial, test, PARAMS, time_deriv=time_deriv,
             n_blocks=n_blocks)
    S = tb.symbol(OMEGA)
    ref = (tb.lag.fl_transform(OMEGA) / dt) * assemble_freq_operator(
        op, MESH, OMEGA, PARAMS, p_trial=p_tr, p_test=p_te)
    err = np.linalg.norm(S - ref) / np.linalg.norm(ref)
    assert err < rtol, f"{op}: symbol mismatch {err:.2e}"
    return err


def test_symbol_V_single_layer_and_refinement():
    """Single-layer symbol at omega = 1.3 + 1.0i within 1e-3 relative
    Frobenius error, improving when the time step is halved."""
    e1 = symbol_vs_frequency("V", 1, 0, 1, 0, 0.1, 1e-3)
    e2 = symbol_vs_frequency("V", 1, 0, 1, 0, 0.05, 1e-3)
    assert e2 < e1


def test_symbol_V_indicator_trial():
    # indicator (q=0) trial shapes alias at first order only
    symbol_vs_frequency("V", 1, 0, 0, 0, 0.1, 6e-2, n_blocks=260)


def test_symbol_K():
    symbol_vs_frequency("K", 1, 1, 1, 0, 0.1, 3e-3)


def test_symbol_Kp():
    symbol_vs_frequency("Kp", 0, 0, 0, 1, 0.1, 3e-3)


def test_symbol_W():
    symbol_vs_frequency("W", 0, 1, 1, 1, 0.1, 3e-3)


# ----------------------------------------------------- entry-level oracles

def single_layer_entry_oracle(mesh, lag, dt, i, j, k, params):
    """Independent inner formulation at the assembly's own outer nodes: the
    absorbing correction uses the jump + smooth split (boundary value of the
    cone amplitude plus a per-cell tau integral against the lag function)
    instead of moment contraction."""
    alpha = params.real_alpha_inf()
    b0 = SpaceTimeBasis(mesh, TimeGrid(dt, 1), 0, 0)
    pd = _panel_data(mesh, b0, b0, 7)
    di, dj = pd[i], pd[j]
    pp = lag.piece(0)[0]
    edges = (pp.j0 + np.arange(pp.ncells + 1)) * dt
    gs, gw = gauss01(24)
    total = 0.0
    for x, wx in zip(di["X"], di["wx"]):
        rmax = np.linalg.norm(dj["rverts"] - x, axis=1).max() + 2 * dt

        def free_fun(y, r):
            r = np.maximum(r, 1e-300)
            return (lag.eval(r - k * dt) / (FOUR_PI * r))[None, :]

        def image_fun(y, r):
            r = np.maximum(r, 1e-300)
            val = lag.eval(r - k * dt) / (FOUR_PI * r)
            if alpha > 0:
                a = x[2] - y[:, 2]
                R2 = np.maximum(r * r - a * a, 0.0)
                D0 = a + alpha * r  # cone amplitude denominator at arrival
                val = val - lag.eval(r - k * dt) * (alpha / TWO_PI) / D0
                # smooth remainder: per lag cell, int C(tau - k dt) sigma dtau
                for e0, e1 in zip(edges[:-1], edges[1:]):
                    lo = np.maximum(r, k * dt + e0)
                    ln = np.maximum(k * dt + e1 - lo, 0.0)
                    tau = lo[:, None] + ln[:, None] * gs
                    P = ((tau + alpha * a[:, None]) ** 2
                         + (alpha ** 2 - 1) * R2[:, None])
                    sig = (alpha / TWO_PI) * (tau + alpha * a[:, None]) / P ** 1.5
                    cvals = lag.eval((tau - k * dt).ravel()).reshape(tau.shape)
                    val = val + (cvals * sig * gw).sum(axis=1) * ln
            return val[None, :]

        bps = dt * np.arange(1, int(rmax / dt) + 2)
        total += wx * radial_integrate(x, dj["verts"], free_fun,
                                       breakpoints=bps, n_r=8)[0]
        total += wx * radial_integrate(x, dj["rverts"], image_fun,
                                       breakpoints=bps, n_r=8, n_theta=12)[0]
    return 2.0 * total


@pytest.mark.parametrize("params", [PARAMS0, KernelParams(alpha_inf=0.4,
                                                          sigma=0.5)])
def test_V_block_entries_against_independent_inner(params):
    """Far-pair single-layer entries across the whole lag range (before,
    during and after the arrivals) against the jump + smooth oracle."""
    dt = 0.3
    grid = TimeGrid(dt, 4)
    trial = SpaceTimeBasis(MESH, grid, 0, 0)
    test = SpaceTimeBasis(MESH, grid, 0, 0)
    i, j = 0, 6  # opposite octants
    tb = assemble_V_blocks(MESH, grid, trial, test, params, time_deriv=1,
                           n_blocks=16, far_factor=0.0)
    lag = tb.lag
    got = np.array([tb.blocks[k][i, j] for k in range(16)])
    want = np.array([single_layer_entry_oracle(MESH, lag, dt, i, j, k, params)
                     for k in range(16)])
    scale = np.abs(want).max()
    assert scale > 0
    assert np.abs(got - want).max() < 2e-3 * scale


def test_u_partials_finite_differences():
    rng = np.random.default_rng(3)
    alpha = 0.45
    for _ in range(5):
        a = rng.uniform(1.0, 3.0)
        R2 = rng.uniform(0.0, 2.0)
        tau = np.sqrt(R2 + a * a) + rng.uniform(0.1, 2.0)
        up = _u_partials(tau, a, R2, alpha, need_second=True)
        eps = 1e-6

        def u(aa=a, rr=R2, tt=tau):
            return _u_partials(tt, aa, rr, alpha)["u"]

        assert up["a"] == pytest.approx(
            (u(aa=a + eps) - u(aa=a - eps)) / (2 * eps), rel=1e-6)
        assert up["R2"] == pytest.approx(
            (u(rr=R2 + eps) - u(rr=R2 - eps)) / (2 * eps), rel=1e-6)
        assert up["tau"] == pytest.approx(
            (u(tt=tau + eps) - u(tt=tau - eps)) / (2 * eps), rel=1e-6)
        da = lambda aa, rr: _u_partials(tau, aa, rr, alpha)["a"]
        dr = lambda aa, rr: _u_partials(tau, aa, rr, alpha)["R2"]
        assert up["aa"] == pytest.approx(
            (da(a + eps, R2) - da(a - eps, R2)) / (2 * eps), rel=1e-5)
        assert up["aR2"] == pytest.approx(
            (da(a, R2 + eps) - da(a, R2 - eps)) / (2 * eps), rel=1e-5)
        assert up["R2R2"] == pytest.approx(
            (dr(a, R2 + eps) - dr(a, R2 - eps)) / (2 * eps), rel=1e-5)


def test_jump_channel_normal_derivative_fd():
    """The 'K' jump channel equals the derivative of the 'V' channel when the
    original source point moves along its panel normal."""
    alpha = 0.4
    x = np.array([0.2, -0.1, 1.3])
    y0 = np.array([[0.5, 0.4, 0.9], [-0.3, 0.2, 1.1]])  # original points
    n = np.array([0.3, -0.2, 0.933])
    n = n / np.linalg.norm(n)
    J = np.diag([1.0, 1.0, -1.0])
    # circle radii safely beyond the evaluation distances (~2.3)
    jump_terms = [(0.0, 1.7, np.array([3.0, 5.0]))]

    def chan(op, yo):
        yi = yo @ J
        r = np.linalg.norm(yi - x, axis=1)
        return _jump_channel(op, x, yi, r, n, jump_terms, alpha, rmax_im=1e9)

    eps = 1e-6
    fd = (chan("V", y0 + eps * n) - chan("V", y0 - eps * n)) / (2 * eps)
    assert np.abs(chan("V", y0)).max() > 0
    assert np.allclose(chan("K", y0), fd, rtol=1e-6)


# --------------------------------------------------- structural invariants

def test_prearrival_entries_vanish_exactly():
    mesh = two_separated_panels(dist=2.5)
    dt = 0.3
    grid = TimeGrid(dt, 4)
    b0 = SpaceTimeBasis(mesh, grid, 0, 0)
    b1 = SpaceTimeBasis(mesh, grid, 0, 1)
    tb = assemble_V_blocks(mesh, grid, b1, b0, PARAMS, n_blocks=40)
    d = 2.5 - 0.6  # closest approach of the two panels
    for k in range(40):
        if (k + 2) * dt < d:
            assert tb.blocks[k][0, 1] == 0.0
            assert tb.blocks[k][1, 0] == 0.0
    arrival = int(np.ceil(2.5 / dt))
    assert abs(tb.blocks[arrival][0, 1]) > 0
    # absorbing half-space: unbounded memory behind the reflected arrival
    assert abs(tb.blocks[39][0, 1]) > 0
    assert tb.check_causality() > 0


def test_causality_without_absorption():
    mesh = two_separated_panels(dist=1.2)
    grid = TimeGrid(0.3, 4)
    b0 = SpaceTimeBasis(mesh, grid, 0, 0)
    b1 = SpaceTimeBasis(mesh, grid, 0, 1)
    tb = assemble_V_blocks(mesh, grid, b1, b0, PARAMS0, n_blocks=60)
    assert tb.check_causality() == 0.0


def test_toeplitz_horizon_prefix_identical():
    grid1 = TimeGrid(0.25, 4)
    grid2 = TimeGrid(0.25, 8)
    b = lambda g: (SpaceTimeBasis(MESH, g, 0, 1), SpaceTimeBasis(MESH, g, 0, 0))
    t1, s1 = b(grid1)
    t2, s2 = b(grid2)
    tb1 = assemble_V_blocks(MESH, grid1, t1, s1, PARAMS)
    tb2 = assemble_V_blocks(MESH, grid2, t2, s2, PARAMS)
    assert tb2.L > tb1.L
    for k in range(tb1.L + 1):
        assert np.array_equal(tb1.blocks[k].toarray(), tb2.blocks[k].toarray())


def test_dump_load_roundtrip(tmp_path):
    grid = TimeGrid(0.25, 3)
    bt = SpaceTimeBasis(MESH, grid, 0, 1)
    bs = SpaceTimeBasis(MESH, grid, 0, 0)
    tb = assemble_V_blocks(MESH, grid, bt, bs, PARAMS, n_blocks=12)
    path = tmp_path / "v.blk"
    dump_blocks(tb, path)
    back = load_blocks(path, grid, bt, bs, PARAMS, tb.lag)
    assert back.operator == "V"
    assert back.L == tb.L
    for A, B in zip(tb.blocks, back.blocks):
        assert np.array_equal(A.toarray(), B.toarray())
    with pytest.raises(ValueError):
        load_blocks(path, TimeGrid(0.3, 3), bt, bs)
    bad = tmp_path / "bad.blk"
    bad.write_bytes(b"garbage-")
    with pytest.raises(ValueError):
        load_blocks(bad, grid, bt, bs)


# ----------------------------------------------------- acoustic system

def test_acoustic_system_masses_and_structure():
    grid = TimeGrid(0.4, 2)
    bases = bases_pair(MESH, grid)
    mat = MaterialField.constant(MESH, 2.0)
    sys = assemble_acoustic_blocks(MESH, grid, bases, PARAMS0, mat,
                                   n_blocks=8)
    gram1 = bases[0].gram_space().toarray()
    assert np.allclose(sys.M_alpha, 2.0 * gram1)
    assert np.allclose(sys.M_inv_alpha, np.diag(MESH.areas / 2.0))
    nph = sys.n_phi
    S0, S1, S2 = (sys.stacked_block(k) for k in range(3))
    # mass couplings: +M_alpha at lag 0, -M_alpha at lag 1, dt M_{1/alpha}
    assert np.allclose(S0[:nph, :nph] + sys.W.blocks[0].toarray(),
                       2.0 * gram1)
    assert np.allclose(S1[:nph, :nph] + sys.W.blocks[1].toarray(),
                       -2.0 * gram1)
    assert np.allclose(S0[nph:, nph:] - sys.V.blocks[0].toarray(),
                       grid.dt * np.diag(MESH.areas / 2.0))
    assert np.allclose(S2[:nph, :nph], -sys.W.blocks[2].toarray())
    assert np.allclose(S0[:nph, nph:], sys.Kp.blocks[0].toarray())
    assert np.allclose(S0[nph:, :nph], -sys.K.blocks[0].toarray())


def test_acoustic_system_validation_errors():
    grid = TimeGrid(0.4, 2)
    bases = bases_pair(MESH, grid)
    bad_mat = MaterialField.constant(MESH, -1.0)
    with pytest.raises(ValueError):
        assemble_acoustic_blocks(MESH, grid, bases, PARAMS0, bad_mat)
    with pytest.raises(ValueError):
        assemble_acoustic_blocks(MESH, grid, (bases[1], bases[1]), PARAMS0,
                                 MaterialField.constant(MESH, 1.0))
    with pytest.raises(ValueError):
        MaterialField.constant(MESH, 0.0)
    with pytest.raises(ValueError):
        assemble_W_blocks(MESH, grid, bases[1], bases[1], PARAMS0)


def test_Kp_blocks_transpose_of_K_for_matching_shapes():
    """With identical spatial and temporal roles on both sides, the adjoint
    double layer must be the exact transpose of the double layer."""
    grid = TimeGrid(0.3, 2)
    b0 = SpaceTimeBasis(MESH, grid, 0, 0)
    K = assemble_K_blocks(MESH, grid, b0, b0, PARAMS, time_deriv=0,
                          n_blocks=10)
    Kp = assemble_Kp_blocks(MESH, grid, b0, b0, PARAMS, time_deriv=0,
                            n_blocks=10)
    for a, b in zip(K.blocks, Kp.blocks):
        assert np.array_equal(a.toarray().T, b.toarray())


# ------------------------------------------------------------- right sides

def dense_panel_integral(mesh, i, g, n=120):
    vv = mesh.vertices[mesh.triangles[i]]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    keep = (ii + jj) < n
    ii, jj = ii[keep], jj[keep]
    area = mesh.areas[i] / n ** 2
    c1 = ((ii + 1 / 3)[:, None] * vv[1] + (jj + 1 / 3)[:, None] * vv[2]
          + (n - ii - jj - 2 / 3)[:, None] * vv[0]) / n
    up = (ii + jj) < n - 1
    c2 = ((ii + 2 / 3)[:, None] * vv[1] + (jj + 2 / 3)[:, None] * vv[2]
          + (n - ii - jj - 4 / 3)[:, None] * vv[0]) / n
    return area * (np.sum(g(c1)) + np.sum(g(c2[up])))


def test_rhs_dirichlet_separable_oracle():
    grid = TimeGrid(0.3, 4)
    btest = SpaceTimeBasis(MESH, grid, 0, 0)
    lam = lambda t: np.sin(t) ** 2
    f = lambda t, p: lam(t) * p[:, 0]
    rhs = assemble_rhs_dirichlet(f, MESH, grid, btest)
    # separable data: entry (m, i) = [lam(t_{m+1}) - lam(t_m)] * int_panel x1
    for m in range(grid.nt):
        dl = lam((m + 1) * grid.dt) - lam(m * grid.dt)
        for i in [0, 5]:
            space = dense_panel_integral(MESH, i, lambda q: q[:, 0])
            assert rhs[m, i] == pytest.approx(dl * space, rel=1e-7)
    # analytic derivative path agrees with the finite-difference path
    dfdt = lambda t, p: np.sin(2 * t) * p[:, 0]
    rhs2 = assemble_rhs_dirichlet(f, MESH, grid, btest, dfdt=dfdt)
    assert np.allclose(rhs, rhs2, atol=1e-9)
    with pytest.raises(ValueError):
        assemble_rhs_dirichlet(lambda t, p: np.ones(len(p)), MESH, grid, btest)


def test_rhs_acoustic_weights_and_pairing():
    grid = TimeGrid(0.3, 3)
    bases = bases_pair(MESH, grid)
    alphas = 1.0 + 0.5 * np.arange(MESH.n_triangles)
    mat = MaterialField(alphas)
    lam = lambda t: t * np.exp(-t)
    F = lambda t, p: lam(t) * p[:, 2]
    G = lambda t, p: lam(t) * np.ones(len(p))
    rphi, rp = assemble_rhs_acoustic(F, G, MESH, grid, bases, mat)
    gs, gw = gauss01(8)
    for m in range(grid.nt):
        tcell = grid.dt * (lam(grid.dt * (m + gs)) @ gw)
        # p-row: indicator tests with 1/alpha weight
        assert np.allclose(rp[m], tcell * MESH.areas / alphas, rtol=1e-10)
    # phi-row: dense oracle for int x3 * hat_vtx over the vertex star
    vtx = 4
    star = np.where(np.any(MESH.triangles == vtx, axis=1))[0]
    space = 0.0
    for i in star:
        vv = MESH.vertices[MESH.triangles[i]]
        loc = np.where(MESH.triangles[i] == vtx)[0][0]

        def g(q, vv=vv, loc=loc):
            T = np.column_stack([vv[1] - vv[0], vv[2] - vv[0]])
            st = np.linalg.lstsq(T, (q - vv[0]).T, rcond=None)[0]
            lamb = np.vstack([1 - st[0] - st[1], st[0], st[1]])
            return q[:, 2] * lamb[loc]
        space += dense_panel_integral(MESH, i, g)
    for m in range(grid.nt):
        tcell = grid.dt * (lam(grid.dt * (m + gs)) @ gw)
        assert rphi[m, vtx] == pytest.approx(tcell * space, rel=2e-4)


def test_horizon_covers_late_arrivals():
    grid = TimeGrid(0.2, 10)
    n = horizon_blocks(MESH, grid)
    span = grid.T + MESH.diameter() + 2 * MESH.vertices[:, 2].max()
    assert n * grid.dt >= span
