"""Experiment driver: manufactured point-source problems, convergence studies
and report emission.

A smooth causal pulse is emitted from a point inside the obstacle.  For the
Dirichlet problem the pulse's half-space field supplies the boundary data,
and the solved single-layer density must reproduce that field at exterior
observation points.  For the acoustic (impedance) problem the same field
acts as the exterior solution: its traces build the data pair (F, G) and
the solved pair (phi, p) reproduces the field through S p - D phi.

Densities embed exactly across uniform refinements, so convergence in the
energy surrogates is measured by level-to-level Cauchy differences on the
finer discretization.
"""

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import Delaunay

from . import __version__
from .kernel import TWO_PI, FOUR_PI, KernelParams
from .mesh import load_mesh, refine_uniform
from .discretization import SpaceTimeBasis, TimeGrid, Density
from .timeshapes import gauss01
from .assembly import (MaterialField, AcousticSystem, assemble_V_blocks,
                       assemble_K_blocks, assemble_Kp_blocks,
                       assemble_W_blocks, assemble_acoustic_blocks,
                       assemble_rhs_dirichlet, assemble_rhs_acoustic,
                       dump_blocks, load_blocks, horizon_blocks, _lag_for,
                       _point_triangle_distance, _u_partials)
from .solver import MOTSystem, mot_solve
from .potential import eval_single_layer, eval_double_layer
from .analysis import estimate_rate, single_layer_energy, energy_norm_acoustic


@dataclass
class ExperimentConfig:
    problem: str = "dirichlet"
    mesh: str = ""
    levels: int = 3
    dt0: float = None
    dt_over_h: float = 0.5
    alpha_inf: float = 0.0
    alpha: float = 1.0
    sigma: float = 0.0
    source: tuple = (0.0, 0.0, 1.0)
    pulse_tau: float = 0.5
    pulse_amplitude: float = 1.0
    horizon: float = 4.0
    observation_points: tuple = ((2.0, 0.0, 1.0),)
    output_dir: str = "."
    cache_dir: str = None

    def __post_init__(self):
        if self.problem not in ("dirichlet", "acoustic"):
            raise ValueError("problem must be 'dirichlet' or 'acoustic'")
        if self.levels < 1:
            raise ValueError("need at least one level")
        self.source = tuple(float(c) for c in self.source)
        if self.source[2] <= 0:
            raise ValueError("source must lie in the open half-space z3 > 0")
        if self.pulse_tau <= 0 or self.horizon <= 0:
            raise ValueError("pulse_tau and horizon must be positive")
        self.observation_points = tuple(
            tuple(float(c) for c in p) for p in self.observation_points)
        lam, dlam, _ = pulse_functions(self)
        if abs(lam(0.0)) > 1e-300 or abs(dlam(0.0)) > 1e-300:
            raise ValueError("pulse must vanish (with its derivative) at t=0")


def pulse_functions(cfg):
    """Smooth causal ramp lam(t) = A (t/tau)^4 e^{-t/tau} and its first two
    derivatives; identically zero for t <= 0."""
    tau = cfg.pulse_tau
    A = cfg.pulse_amplitude

    def lam(t):
        s = np.asarray(t, dtype=float) / tau
        with np.errstate(over="ignore"):
            v = np.where(s > 0, A * s ** 4 * np.exp(-np.maximum(s, 0)), 0.0)
        return v if np.ndim(t) else float(v)

    def dlam(t):
        s = np.asarray(t, dtype=float) / tau
        with np.errstate(over="ignore"):
            v = np.where(s > 0, A / tau * (4 * s ** 3 - s ** 4)
                         * np.exp(-np.maximum(s, 0)), 0.0)
        return v if np.ndim(t) else float(v)

    def d2lam(t):
        s = np.asarray(t, dtype=float) / tau
        with np.errstate(over="ignore"):
            v = np.where(s > 0, A / tau ** 2
                         * (12 * s ** 2 - 8 * s ** 3 + s ** 4)
                         * np.exp(-np.maximum(s, 0)), 0.0)
        return v if np.ndim(t) else float(v)

    return lam, dlam, d2lam


class PointSourceField:
    """Half-space field of a causal point source: the pulse convolved with
    the free, image and absorbing-correction kernel channels.  Provides the
    field, its time derivative and its normal derivative on a surface."""

    def __init__(self, cfg, n_gauss=16):
        self.z = np.asarray(cfg.source, dtype=float)
        self.alpha = KernelParams(alpha_inf=cfg.alpha_inf).real_alpha_inf()
        self.lam, self.dlam, self.d2lam = pulse_functions(cfg)
        self.tau = cfg.pulse_tau
        self.n_gauss = n_gauss

    def __call__(self, t, pts):
        return self.u(t, pts)

    # -------------------------------------------------------------- channels

    def _geometry(self, pts):
        zi = self.z * np.array([1.0, 1.0, -1.0])
        dp = pts - self.z
        dm = pts - zi
        rp = np.linalg.norm(dp, axis=1)
        rm = np.linalg.norm(dm, axis=1)
        a = pts[:, 2] + self.z[2]
        R2 = np.maximum(rm * rm - a * a, 0.0)
        return dp, dm, rp, rm, a, R2

    def _correction(self, t, pts, g, channel, normals=None):
        """int_{r-}^{t} (correction channel)(tau) g(t - tau) dtau per point,
        composite Gauss on per-point intervals."""
        dp, dm, rp, rm, a, R2 = self._geometry(pts)
        length = np.maximum(t - rm, 0.0)
        if not np.any(length > 0):
            return np.zeros(len(pts))
        n_cells = min(400, max(6, int(np.ceil(length.max() / (self.tau / 4)))))
        gs, gw = gauss01(self.n_gauss)
        frac = ((np.arange(n_cells)[:, None] + gs) / n_cells).ravel()
        wfrac = np.tile(gw / n_cells, n_cells)
        tau = rm[:, None] + length[:, None] * frac[None, :]
        w = length[:, None] * wfrac[None, :]
        up = _u_partials(tau, a[:, None], R2[:, None], self.alpha)
        if channel == "u":
            ch = up["u"]
        else:
            ch = (up["a"] * normals[:, 2][:, None]
                  + up["R2"] * (2.0 * (dm[:, :2] * normals[:, :2])
                                .sum(axis=1))[:, None])
        vals = -(self.alpha / TWO_PI) * ch * g(t - tau)
        out = (vals * w).sum(axis=1)
        if channel != "u":
            # moving lower limit tau = r-
            upc = _u_partials(rm, a, R2, self.alpha)
            u0c = -(self.alpha / TWO_PI) * upc["u"]
            drdn = (dm * normals).sum(axis=1) / np.maximum(rm, 1e-300)
            out = out - np.where(length > 0, u0c * g(t - rm) * drdn, 0.0)
        return out

    # ------------------------------------------------------------ field data

    def u(self, t, pts):
        """Field at time t and the given points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dp, dm, rp, rm, a, R2 = self._geometry(pts)
        out = self.lam(t - rp) / (FOUR_PI * rp) \
            + self.lam(t - rm) / (FOUR_PI * rm)
        if self.alpha > 0:
            out = out + self._correction(t, pts, self.dlam, "u")
        return out

    def dudt(self, t, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dp, dm, rp, rm, a, R2 = self._geometry(pts)
        out = self.dlam(t - rp) / (FOUR_PI * rp) \
            + self.dlam(t - rm) / (FOUR_PI * rm)
        if self.alpha > 0:
            out = out + self._correction(t, pts, self.d2lam, "u")
        return out

    def dudn(self, t, pts, normals):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        dp, dm, rp, rm, a, R2 = self._geometry(pts)
        out = np.zeros(len(pts))
        for dv, r in ((dp, rp), (dm, rm)):
            radial = (-self.dlam(t - r) / (FOUR_PI * r)
                      - self.lam(t - r) / (FOUR_PI * r * r))
            out += radial * (dv * normals).sum(axis=1) / r
        if self.alpha > 0:
            out = out + self._correction(t, pts, self.dlam, "n", normals)
        return out


def _panel_normals_lookup(mesh):
    """Maps arbitrary surface points to their panel normal (nearest
    centroid; exact for quadrature points interior to panels)."""
    centroids = mesh.centroids
    normals = mesh.normals

    def lookup(pts):
        d = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        return normals[np.argmin(d, axis=1)]
    return lookup


def manufactured_dirichlet_data(cfg, mesh):
    """Boundary trace of the interior point-source field; returns the field
    object (callables u, dudt, dudn) after validating the source location."""
    field_obj = PointSourceField(cfg)
    z = field_obj.z
    dist = min(_point_triangle_distance(z, mesh.vertices[mesh.triangles[j]])
               for j in range(mesh.n_triangles))
    if dist < 0.2 * mesh.h:
        raise ValueError(f"source is too close to the surface "
                         f"(distance {dist:.3g} < 0.2 h = {0.2 * mesh.h:.3g})")
    if mesh.closed and Delaunay(mesh.vertices).find_simplex(z) < 0:
        raise ValueError("source must lie inside the obstacle")
    return field_obj


# ---------------------------------------------------------------- reporting

@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name):
        return [row.get(name) for row in self.rows]


def emit_report(tables, path, config=None, timings=None, signals=None):
    """CSV per table plus a JSON manifest (config echo, version, timings);
    optional observation-point signals as t,value CSV files.  Output is
    deterministic for identical inputs."""
    os.makedirs(path, exist_ok=True)
    written = []
    for name, table in sorted(tables.items()):
        fname = os.path.join(path, f"{name}.csv")
        with open(fname, "w", newline="") as fh:
            fh.write(",".join(table.columns) + "\n")
            for row in table.rows:
                fh.write(",".join(_cell(row.get(c)) for c in table.columns)
                         + "\n")
        written.append(fname)
    if signals:
        from .potential import write_signal_csv
        for name, (t, v) in sorted(signals.items()):
            fname = os.path.join(path, f"{name}.csv")
            write_signal_csv(fname, t, v)
            written.append(fname)
    manifest = dict(version=__version__,
                    config=asdict(config) if config is not None else None,
                    timings=timings or {},
                    tables=sorted(tables.keys()))
    mname = os.path.join(path, "manifest.json")
    with open(mname, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    written.append(mname)
    return written


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ------------------------------------------------------------- level ladder

def _level_meshes(cfg):
    mesh = load_mesh(cfg.mesh)
    meshes = [mesh]
    for _ in range(cfg.levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def _level_grid(cfg, h, h0):
    dt = (cfg.dt0 * (h / h0)) if cfg.dt0 else cfg.dt_over_h * h
    nt = int(math.ceil(cfg.horizon / dt - 1e-12))
    return TimeGrid(dt, nt, cfg.sigma)


def _prolong_time(coeffs, basis_c, grid_f):
    """Evaluate a coarse time series at the fine node/cell positions
    (exact for nested grids)."""
    nodes_f = grid_f.dt * (1 + np.arange(grid_f.nt))
    if basis_c.q == 1:
        tv = basis_c.time_values(nodes_f)          # (nt_c, nt_f)
    else:
        # cell values: sample the coarse indicator at fine cell midpoints
        tv = basis_c.time_values(nodes_f - 0.5 * grid_f.dt)
    return tv.T @ coeffs


def _prolong_space(coeffs, basis_c, mesh_f):
    if basis_c.p == 0:
        return np.repeat(coeffs, 4, axis=1)
    pv = np.asarray(mesh_f.parent_vertex)
    return 0.5 * (coeffs[:, pv[:, 0]] + coeffs[:, pv[:, 1]])


def prolong_density(d, mesh_f, grid_f):
    """Exact embedding of a density into the next uniform refinement level
    (children 4j..4j+3 of panel j; fine vertices from parent vertex pairs)."""
    basis_f = SpaceTimeBasis(mesh_f, grid_f, d.basis.p, d.basis.q)
    X = _prolong_time(d.coeffs, d.basis, grid_f)
    X = _prolong_space(X, d.basis, mesh_f)
    return Density(X, basis_f)


def _relative_signal_error(computed, reference):
    num = np.linalg.norm(computed - reference)
    den = np.linalg.norm(reference)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


def _rate_column(errors, hs):
    pts = [(e, h) for e, h in zip(errors, hs) if e is not None and e > 0]
    if len(pts) < 2:
        return None
    if len(pts) == 2:
        (e0, h0), (e1, h1) = pts
        return float(np.log(e0 / e1) / np.log(h0 / h1))
    return estimate_rate([p[0] for p in pts], [p[1] for p in pts])


# ---------------------------------------------------------------- caching

def _cache_key(op, mesh, grid, params, time_deriv):
    import hashlib
    h = hashlib.md5()
    h.update(mesh.vertices.tobytes())
    h.update(mesh.triangles.tobytes())
    h.update(f"{grid.dt!r}_{grid.nt}_{grid.sigma!r}_"
             f"{complex(params.alpha_inf)!r}_{time_deriv}".encode())
    return f"{op}_{h.hexdigest()[:16]}"


def _cached_blocks(cfg, op, assemble_fn, mesh, grid, trial, test, params,
                   time_deriv, n_blocks=None):
    """Assemble retarded blocks, reusing a binary cache when the config
    names a cache directory."""
    cache_dir = getattr(cfg, "cache_dir", None)
    if not cache_dir:
        return assemble_fn(mesh, grid, trial, test, params,
                           time_deriv=time_deriv,
                           **({} if n_blocks is None
                              else {"n_blocks": n_blocks}))
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir,
                        _cache_key(op, mesh, grid, params, time_deriv)
                        + ".blk")
    lag = _lag_for(trial, test, time_deriv, grid.sigma)
    if os.path.exists(path):
        return load_blocks(path, grid, trial, test, params, lag=lag)
    tb = assemble_fn(mesh, grid, trial, test, params, time_deriv=time_deriv,
                     **({} if n_blocks is None else {"n_blocks": n_blocks}))
    dump_blocks(tb, path)
    return tb


def _cached_V_blocks(cfg, mesh, grid, trial, test, params):
    return _cached_blocks(cfg, "V", assemble_V_blocks, mesh, grid, trial,
                          test, params, time_deriv=1)


def _cached_acoustic_blocks(cfg, mesh, grid, bases, params, material):
    if not getattr(cfg, "cache_dir", None):
        return assemble_acoustic_blocks(mesh, grid, bases, params, material)
    basis_phi, basis_p = bases
    material.require_positive()
    basis_p_test = SpaceTimeBasis(mesh, grid, 0, 0)
    basis_phi_test = SpaceTimeBasis(mesh, grid, 1, 0)
    nb = horizon_blocks(mesh, grid)
    V = _cached_blocks(cfg, "V", assemble_V_blocks, mesh, grid, basis_p,
                       basis_p_test, params, 1, nb)
    K = _cached_blocks(cfg, "K", assemble_K_blocks, mesh, grid, basis_phi,
                       basis_p_test, params, 1, nb)
    Kp = _cached_blocks(cfg, "Kp", assemble_Kp_blocks, mesh, grid, basis_p,
                        basis_phi_test, params, 0, nb)
    W = _cached_blocks(cfg, "W", assemble_W_blocks, mesh, grid, basis_phi,
                       basis_phi_test, params, 0, nb)
    from .frequency import mass_matrix
    from .assembly import _panel_coef, _real_strict
    av = material.values(mesh)
    M_alpha = _real_strict(mass_matrix(
        mesh, _panel_coef(mesh, av), basis_phi, basis_phi))
    M_inv = _real_strict(mass_matrix(
        mesh, _panel_coef(mesh, 1.0 / av), basis_p, basis_p_test))
    return AcousticSystem(V, K, Kp, W, M_alpha, M_inv, grid,
                          basis_phi, basis_p, material)


# ------------------------------------------------------------ Dirichlet run

def _solve_dirichlet_level(cfg, mesh, grid, field_obj, params):
    trial = SpaceTimeBasis(mesh, grid, 0, 1)
    test = SpaceTimeBasis(mesh, grid, 0, 0)
    tb = _cached_V_blocks(cfg, mesh, grid, trial, test, params)
    # the single-layer trace carries a factor 2 relative to the potential,
    # so the equation for a plain field trace f reads V p = 2 f
    f2 = lambda t, p: 2.0 * field_obj.u(t, p)
    df2 = lambda t, p: 2.0 * field_obj.dudt(t, p)
    rhs = assemble_rhs_dirichlet(f2, mesh, grid, test, sigma=cfg.sigma,
                                 dfdt=df2)
    dens = mot_solve(MOTSystem.from_toeplitz(tb, rhs))
    return dens, tb


def _field_signals(cfg, mesh, grid, field_obj, params, dens_p, dens_phi=None):
    """Computed and reference signals at the observation points."""
    tk = grid.dt * np.arange(1, grid.nt + 1)
    signals = {}
    for k, obs in enumerate(cfg.observation_points):
        x = np.asarray(obs, dtype=float)
        comp = eval_single_layer(dens_p, x, tk, mesh, params)
        if dens_phi is not None:
            comp = comp - eval_double_layer(dens_phi, x, tk, mesh, params)
        ref = np.array([field_obj.u(t, x[None, :])[0] for t in tk])
        signals[f"obs{k}"] = (tk, comp)
        signals[f"obs{k}_ref"] = (tk, ref)
    return signals


def _aggregate_field_error(signals, n_obs):
    comp = np.concatenate([signals[f"obs{k}"][1] for k in range(n_obs)])
    ref = np.concatenate([signals[f"obs{k}_ref"][1] for k in range(n_obs)])
    return _relative_signal_error(comp, ref)


def run_dirichlet_convergence(cfg):
    """Level table for the single-layer Dirichlet problem: Cauchy differences
    of the densities in the -1/2 energy surrogate and field-reproduction
    errors at the observation points."""
    params = KernelParams(alpha_inf=cfg.alpha_inf)
    meshes = _level_meshes(cfg)
    h0 = meshes[0].h
    levels = []
    for lvl, mesh in enumerate(meshes):
        grid = _level_grid(cfg, mesh.h, h0)
        field_obj = manufactured_dirichlet_data(cfg, mesh)
        try:
            dens, tb = _solve_dirichlet_level(cfg, mesh, grid, field_obj,
                                              params)
        except Exception as exc:
            raise RuntimeError(f"level {lvl} (h={mesh.h:.4g}) failed: {exc}") \
                from exc
        signals = _field_signals(cfg, mesh, grid, field_obj, params, dens)
        levels.append(dict(mesh=mesh, grid=grid, dens=dens, tb=tb,
                           field_err=_aggregate_field_error(
                               signals, len(cfg.observation_points)),
                           signals=signals))
    cauchy = [None] * len(levels)
    for lvl in range(len(levels) - 1):
        fine = levels[lvl + 1]
        coarse = prolong_density(levels[lvl]["dens"], fine["mesh"],
                                 fine["grid"])
        diff = Density(coarse.coeffs - fine["dens"].coeffs,
                       fine["dens"].basis)
        e2 = single_layer_energy(diff, fine["mesh"], fine["grid"], cfg.sigma,
                                 params, blocks=fine["tb"])
        cauchy[lvl] = float(np.sqrt(max(e2, 0.0)))
    hs = [lv["mesh"].h for lv in levels]
    c_rate = _rate_column(cauchy[:-1], hs[:-1])
    f_rate = _rate_column([lv["field_err"] for lv in levels], hs)
    table = Table(columns=["level", "h", "dt", "nt", "cauchy_err",
                           "field_err", "cauchy_rate", "field_rate"])
    for lvl, lv in enumerate(levels):
        table.rows.append(dict(
            level=lvl, h=lv["mesh"].h, dt=lv["grid"].dt, nt=lv["grid"].nt,
            cauchy_err=cauchy[lvl], field_err=lv["field_err"],
            cauchy_rate=c_rate, field_rate=f_rate))
    return table, levels[-1]["signals"]


# ------------------------------------------------------------- acoustic run

def _acoustic_data(cfg, mesh, field_obj):
    """Data pair for the impedance problem whose exterior solution is the
    point-source field (and whose interior solution vanishes):
    F = du/dn - alpha du/dt on the surface, G = -F."""
    lookup = _panel_normals_lookup(mesh)
    alpha = float(cfg.alpha)

    def F(t, pts):
        n = lookup(pts)
        return field_obj.dudn(t, pts, n) - alpha * field_obj.dudt(t, pts)

    def G(t, pts):
        return -F(t, pts)

    return F, G


def run_acoustic_convergence(cfg):
    """Level table for the coupled impedance problem: Cauchy differences of
    (phi, p) in the energy surrogate and field reproduction via S p - D phi."""
    params = KernelParams(alpha_inf=cfg.alpha_inf)
    meshes = _level_meshes(cfg)
    if not meshes[0].closed:
        raise ValueError("the acoustic problem needs a closed surface")
    material = MaterialField.constant(meshes[0], cfg.alpha)
    material.require_positive()
    h0 = meshes[0].h
    levels = []
    for lvl, mesh in enumerate(meshes):
        grid = _level_grid(cfg, mesh.h, h0)
        field_obj = manufactured_dirichlet_data(cfg, mesh)
        bases = (SpaceTimeBasis(mesh, grid, 1, 1),
                 SpaceTimeBasis(mesh, grid, 0, 0))
        mat = MaterialField.constant(mesh, cfg.alpha)
        try:
            asys = _cached_acoustic_blocks(cfg, mesh, grid, bases, params,
                                           mat)
            F, G = _acoustic_data(cfg, mesh, field_obj)
            rphi, rp = assemble_rhs_acoustic(F, G, mesh, grid, bases, mat,
                                             sigma=cfg.sigma)
            phi, p = mot_solve(MOTSystem.from_acoustic(asys, rphi, rp))
        except Exception as exc:
            raise RuntimeError(f"level {lvl} (h={mesh.h:.4g}) failed: {exc}") \
                from exc
        signals = _field_signals(cfg, mesh, grid, field_obj, params, p,
                                 dens_phi=phi)
        levels.append(dict(mesh=mesh, grid=grid, phi=phi, p=p,
                           field_err=_aggregate_field_error(
                               signals, len(cfg.observation_points)),
                           signals=signals))
    cauchy = [None] * len(levels)
    for lvl in range(len(levels) - 1):
        fine = levels[lvl + 1]
        phi_c = prolong_density(levels[lvl]["phi"], fine["mesh"],
                                fine["grid"])
        p_c = prolong_density(levels[lvl]["p"], fine["mesh"], fine["grid"])
        dphi = Density(phi_c.coeffs - fine["phi"].coeffs, fine["phi"].basis)
        dp = Density(p_c.coeffs - fine["p"].coeffs, fine["p"].basis)
        cauchy[lvl] = energy_norm_acoustic(dphi, dp, fine["mesh"],
                                           fine["grid"], sigma=cfg.sigma)
    hs = [lv["mesh"].h for lv in levels]
    c_rate = _rate_column(cauchy[:-1], hs[:-1])
    f_rate = _rate_column([lv["field_err"] for lv in levels], hs)
    table = Table(columns=["level", "h", "dt", "nt", "cauchy_err",
                           "field_err", "cauchy_rate", "field_rate"])
    for lvl, lv in enumerate(levels):
        table.rows.append(dict(
            level=lvl, h=lv["mesh"].h, dt=lv["grid"].dt, nt=lv["grid"].nt,
            cauchy_err=cauchy[lvl], field_err=lv["field_err"],
            cauchy_rate=c_rate, field_rate=f_rate))
    return table, levels[-1]["signals"]


def run_solve(cfg):
    """Single solve on the unrefined mesh; returns a one-row summary table
    and the observation-point signals."""
    single = ExperimentConfig(**{**asdict(cfg), "levels": 1})
    if cfg.problem == "dirichlet":
        table, signals = run_dirichlet_convergence(single)
    else:
        table, signals = run_acoustic_convergence(single)
    return table, signals


def run_convergence(cfg):
    if cfg.problem == "dirichlet":
        return run_dirichlet_convergence(cfg)
    return run_acoustic_convergence(cfg)


# ------------------------------------------------------------ configuration

_CONFIG_TYPES = dict(problem=str, mesh=str, levels=int, dt0=float,
                     dt_over_h=float, alpha_inf=float, alpha=float,
                     sigma=float, pulse_tau=float, pulse_amplitude=float,
                     horizon=float, output_dir=str, cache_dir=str)


def parse_config(path):
    """Flat key-value experiment file: `key = value` lines, '#' comments;
    `source` is three floats, `observation_points` semicolon-separated
    triples."""
    kwargs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key in _CONFIG_TYPES:
                kwargs[key] = _CONFIG_TYPES[key](val)
            elif key == "source":
                kwargs[key] = tuple(float(c) for c in val.split())
            elif key == "observation_points":
                kwargs[key] = tuple(tuple(float(c) for c in part.split())
                                    for part in val.split(";") if part.strip())
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    if "mesh" not in kwargs:
        raise ValueError("config must set the mesh path")
    return ExperimentConfig(**kwargs)
