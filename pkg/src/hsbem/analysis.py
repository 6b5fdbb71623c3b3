"""Norms, frequency-domain diagnostics and convergence-rate estimation.

Continuous Sobolev norms of the half-space theory are not computable; this
module fixes discrete surrogates and states all checks in them:

* exponentially weighted space-time L2 norms by quadrature (optionally of
  the time derivative);
* the -1/2 energy surrogate sqrt(b(d, d)) built from the assembled
  single-layer blocks with exponential row weights;
* the +1/2 duality surrogate sup over test densities normalized in a
  single-layer spatial energy, realized by one factorization of that
  energy matrix;
* coercivity and continuity checks of the frequency-domain variational
  form on random discrete vectors;
* the discrete-symbol versus direct frequency assembly consistency check;
* least-squares convergence slopes in log-log coordinates.
"""

import json

import numpy as np
import scipy.linalg

from .kernel import KernelParams
from .discretization import SpaceTimeBasis
from .timeshapes import gauss01
from .frequency import assemble_freq_operator, mass_matrix
from .assembly import assemble_V_blocks


class NormSpec:
    """Discrete surrogate norm selector: time index s in {0, 1}, space index
    r in {-1/2, 0, 1/2}, exponential weight sigma (weight e^{-2 sigma t})."""

    def __init__(self, s=0, r=0.0, sigma=0.0):
        if s not in (0, 1):
            raise ValueError("time index s must be 0 or 1")
        if r not in (-0.5, 0.0, 0.5):
            raise ValueError("space index r must be -1/2, 0 or 1/2")
        if s == 1 and r != 0.0:
            raise ValueError("unsupported index pair (s=1 combines only "
                             "with r=0)")
        self.s = int(s)
        self.r = float(r)
        self.sigma = float(sigma)


def _time_quadrature(d, n_gauss=8):
    """Quadrature nodes/weights covering the density's full time support,
    one Gauss panel per grid cell, and the basis value table at the nodes."""
    basis = d.basis
    dt = basis.grid.dt
    shape = basis.time_shape()
    t_hi = basis.n_time * dt + shape.support()[1]
    n_cells = int(round(t_hi / dt))
    gs, gw = gauss01(n_gauss)
    t = (np.arange(n_cells)[:, None] * dt + dt * gs).ravel()
    w = np.tile(dt * gw, n_cells)
    return t, w


def _slice_values(d, t, deriv=0):
    """Spatial coefficient vectors d(t_k) (or of the time derivative),
    shape (npts, n_space)."""
    basis = d.basis
    dt = basis.grid.dt
    nodes = dt * (1 + np.arange(basis.n_time))
    shape = basis.time_shape()
    for _ in range(deriv):
        shape = shape.derivative()
    if shape.deltas:
        raise ValueError("time derivative of an interval-indicator density "
                         "is not square-integrable")
    vals = shape.pp.eval((t[:, None] - nodes[None, :]).ravel()).reshape(
        len(t), len(nodes))
    return vals @ d.coeffs


def _half_norm_matrix(mesh, p):
    """Duality-surrogate matrix of the +1/2 norm on the degree-p space:
    N = M B^{-1} M with M the mass matrix and B the (real, positive
    definite) single-layer spatial energy at a purely damped frequency."""
    params0 = KernelParams(alpha_inf=0.0)
    B = assemble_freq_operator("V", mesh, 1.0j, params0, p, p).real
    B = 0.5 * (B + B.T)
    M = _space_mass(mesh, p)
    cho = scipy.linalg.cho_factor(B)
    return M @ scipy.linalg.cho_solve(cho, M)


def _space_mass(mesh, p, coef=None):
    from .discretization import TimeGrid
    b = SpaceTimeBasis(mesh, TimeGrid(1.0, 1), p, 0)
    fun = coef if coef is not None else (lambda pts: np.ones(len(pts)))
    M = mass_matrix(mesh, fun, b, b)
    return M.real if np.all(np.asarray(M).imag == 0) else M


def weighted_st_norm(d, spec, mesh, grid, params=None):
    """Exponentially weighted space-time surrogate norm of a density."""
    if not isinstance(spec, NormSpec):
        spec = NormSpec(*spec)
    if d.basis.grid.dt != grid.dt or d.basis.grid.nt != grid.nt:
        raise ValueError("density does not live on the given time grid")
    if spec.r == -0.5:
        return np.sqrt(max(single_layer_energy(d, mesh, grid, spec.sigma,
                                               params), 0.0))
    t, w = _time_quadrature(d)
    w = w * np.exp(-2.0 * spec.sigma * t)
    vals = _slice_values(d, t)
    if spec.r == 0.5:
        G = _half_norm_matrix(mesh, d.basis.p)
    else:
        G = _space_mass(mesh, d.basis.p)
    total = float(np.einsum("k,ki,ij,kj->", w, vals, G, vals))
    if spec.s == 1:
        dvals = _slice_values(d, t, deriv=1)
        total += float(np.einsum("k,ki,ij,kj->", w, dvals, G, dvals))
    return float(np.sqrt(max(total, 0.0)))


def single_layer_energy(d, mesh, grid, sigma, params=None, blocks=None):
    """Quadratic -1/2 energy surrogate b(d, d): the single-layer Galerkin
    pairing of the density with itself, rows weighted by e^{-2 sigma t_m}.
    Pass pre-assembled single-layer blocks to amortize over many densities."""
    basis = d.basis
    if basis.q != 1:
        raise ValueError("the -1/2 energy surrogate needs a continuous-in-"
                         "time density (q=1)")
    if params is None:
        params = KernelParams(alpha_inf=0.0, sigma=sigma)
    if blocks is None:
        test = SpaceTimeBasis(mesh, grid, basis.p, 0)
        blocks = assemble_V_blocks(mesh, grid, basis, test, params)
    tb = blocks
    X = d.coeffs
    dt = grid.dt
    total = 0.0
    for m in range(grid.nt):
        r = np.zeros(X.shape[1])
        for k in range(0, min(m, tb.L) + 1):
            r += tb.blocks[k] @ X[m - k]
        total += np.exp(-2.0 * sigma * (m + 1) * dt) * float(X[m] @ r)
    return total


def acoustic_form_energy(X, asys):
    """Quadratic value of the coupled acoustic Galerkin form: the stacked
    coefficient array X of shape (nt, n_phi + n_p) paired with the marching
    operator applied to itself, rows weighted by e^{-2 sigma t_m}."""
    grid = asys.grid
    X = np.asarray(X, dtype=float)
    if X.shape != (grid.nt, asys.n_phi + asys.n_p):
        raise ValueError("coefficient stack does not match the system")
    S = [asys.stacked_block(k) for k in range(min(grid.nt, asys.L + 2))]
    total = 0.0
    for m in range(grid.nt):
        r = np.zeros(X.shape[1])
        for k in range(0, min(m, len(S) - 1) + 1):
            r += S[k] @ X[m - k]
        total += np.exp(-2.0 * grid.sigma * (m + 1) * grid.dt) \
            * float(X[m] @ r)
    return total


def energy_norm_acoustic(phi, p, mesh, grid, sigma=1.0):
    """Root-sum-square energy of the acoustic pair: the L2 norm of p, the
    +1/2 duality surrogate of phi and the L2 norm of the time derivative
    of phi, all exponentially weighted in time."""
    if phi.basis.grid.dt != p.basis.grid.dt \
            or phi.basis.grid.nt != p.basis.grid.nt \
            or phi.basis.grid.dt != grid.dt:
        raise ValueError("phi and p must share the given time grid")
    np_ = weighted_st_norm(p, NormSpec(0, 0.0, sigma), mesh, grid)
    nphi = weighted_st_norm(phi, NormSpec(0, 0.5, sigma), mesh, grid)
    t, w = _time_quadrature(phi)
    w = w * np.exp(-2.0 * sigma * t)
    dvals = _slice_values(phi, t, deriv=1)
    G = _space_mass(mesh, phi.basis.p)
    ndphi2 = float(np.einsum("k,ki,ij,kj->", w, dvals, G, dvals))
    return float(np.sqrt(np_ ** 2 + nphi ** 2 + max(ndphi2, 0.0)))


# ------------------------------------------------- frequency-domain checks

def _freq_form_matrices(mesh, omega, params, material):
    alpha = material.values(mesh)

    def coef_alpha(pts):
        return np.full(len(pts), complex(alpha[0]))

    def coef_inv(pts):
        return np.full(len(pts), 1.0 / complex(alpha[0]))

    if len(set(alpha.tolist())) > 1:
        raise ValueError("frequency checks support constant impedance only")
    return dict(
        V=assemble_freq_operator("V", mesh, omega, params, 0, 0),
        K=assemble_freq_operator("K", mesh, omega, params, 1, 0),
        Kp=assemble_freq_operator("Kp", mesh, omega, params, 0, 1),
        W=assemble_freq_operator("W", mesh, omega, params, 1, 1),
        Ma=np.asarray(_space_mass(mesh, 1, coef_alpha), dtype=complex),
        Mi=np.asarray(_space_mass(mesh, 0, coef_inv), dtype=complex),
        M1=np.asarray(_space_mass(mesh, 1), dtype=complex),
        M0=np.asarray(_space_mass(mesh, 0), dtype=complex),
        alpha=complex(alpha[0]))


def freq_form_value(mats, omega, cphi, cp, dphi=None, dp=None):
    """Sesquilinear frequency form a_omega((phi, p), (psi, q)) on coefficient
    vectors; the second argument defaults to the first (quadratic form)."""
    dphi = cphi if dphi is None else dphi
    dp = cp if dp is None else dp
    om = complex(omega)
    return (abs(om) ** 2 * (dphi.conj() @ mats["Ma"] @ cphi)
            + dp.conj() @ mats["Mi"] @ cp
            + 1j * np.conj(om) * (dphi.conj() @ mats["Kp"] @ cp)
            - 1j * np.conj(om) * (dphi.conj() @ mats["W"] @ cphi)
            - 1j * om * (dp.conj() @ mats["V"] @ cp)
            + 1j * om * (dp.conj() @ mats["K"] @ cphi))


def coercivity_check(mesh, omega, params, material, trials=100, seed=0):
    """Minimum of the real part of the frequency form (and of the dissipative
    single-layer pairing Re <-i omega V_omega p, p>) over random discrete
    vectors.  Hypothesis violations are flagged in the report, not fatal:
    they demonstrate where positivity is lost."""
    omega = complex(omega)
    alpha = material.values(mesh)[0]
    hypothesis_ok = (omega.imag >= params.sigma > 0
                     and alpha.real > 0
                     and complex(params.alpha_inf).real >= 0)
    mats = _freq_form_matrices(mesh, omega, params, material)
    n1, n0 = mats["W"].shape[0], mats["V"].shape[0]
    rng = np.random.default_rng(seed)
    min_a = np.inf
    min_v = np.inf
    for _ in range(trials):
        cphi = rng.normal(size=n1) + 1j * rng.normal(size=n1)
        cp = rng.normal(size=n0) + 1j * rng.normal(size=n0)
        min_a = min(min_a, freq_form_value(mats, omega, cphi, cp).real)
        min_v = min(min_v, (-1j * omega * (cp.conj() @ mats["V"] @ cp)).real)
    return dict(operation="coercivity_check",
                omega=[omega.real, omega.imag],
                alpha=[complex(alpha).real, complex(alpha).imag],
                alpha_inf=[complex(params.alpha_inf).real,
                           complex(params.alpha_inf).imag],
                sigma=params.sigma, trials=int(trials),
                hypothesis_ok=bool(hypothesis_ok),
                min_re_a=float(min_a), min_re_v=float(min_v),
                all_positive=bool(min_a > 0 and min_v > 0))


def continuity_check(mesh, omega, params, material, trials=100, seed=0):
    """Maximum ratio |a_omega(U, V)| / (|||U||| |||V|||) over random discrete
    pairs, in the surrogate norm |||(phi,p)|||^2 = |omega|^2 |phi|_0^2
    + |phi|_{1/2}^2 + |p|_0^2."""
    omega = complex(omega)
    mats = _freq_form_matrices(mesh, omega, params, material)
    n1, n0 = mats["W"].shape[0], mats["V"].shape[0]
    H = _half_norm_matrix(mesh, 1)
    rng = np.random.default_rng(seed)

    def nrm(cphi, cp):
        v = (abs(omega) ** 2 * (cphi.conj() @ mats["M1"] @ cphi)
             + cphi.conj() @ H.astype(complex) @ cphi
             + cp.conj() @ mats["M0"] @ cp)
        return np.sqrt(v.real)

    worst = 0.0
    for _ in range(trials):
        U = (rng.normal(size=n1) + 1j * rng.normal(size=n1),
             rng.normal(size=n0) + 1j * rng.normal(size=n0))
        V = (rng.normal(size=n1) + 1j * rng.normal(size=n1),
             rng.normal(size=n0) + 1j * rng.normal(size=n0))
        den = nrm(*U) * nrm(*V)
        if den == 0:
            continue
        num = abs(freq_form_value(mats, omega, V[0], V[1], U[0], U[1]))
        worst = max(worst, num / den)
    return dict(operation="continuity_check",
                omega=[omega.real, omega.imag],
                sigma=params.sigma, trials=int(trials),
                max_ratio=float(worst))


def transform_consistency(blocks, omega_list):
    """Worst-case Frobenius relative deviation between the discrete time
    symbol of the assembled blocks and direct frequency assembly."""
    basis = blocks.basis_trial
    mesh = basis.mesh
    worst = 0.0
    for omega in omega_list:
        omega = complex(omega)
        if omega.imag < 0.5:
            raise ValueError("transform comparison needs Im omega >= 0.5 "
                             "(symbol truncation)")
        sym = blocks.symbol(omega)
        ref = (blocks.lag.fl_transform(omega) / blocks.dt) \
            * assemble_freq_operator(blocks.operator, mesh, omega,
                                     blocks.params, basis.p,
                                     blocks.basis_test.p)
        worst = max(worst, np.linalg.norm(sym - ref)
                    / max(np.linalg.norm(ref), 1e-300))
    return float(worst)


def estimate_rate(errors, steps):
    """Least-squares slope of log(error) against log(step)."""
    errors = np.asarray(errors, dtype=float)
    steps = np.asarray(steps, dtype=float)
    if len(errors) < 3 or len(errors) != len(steps):
        raise ValueError("need at least 3 matching (error, step) points")
    if np.any(errors <= 0) or np.any(steps <= 0):
        raise ValueError("errors and steps must be positive")
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def append_report(report, path):
    """Append one diagnostic record to a JSON-lines run log."""
    with open(path, "a") as fh:
        fh.write(json.dumps(report, sort_keys=True) + "\n")


def read_reports(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
