"""Piecewise-polynomial time basis shapes on a uniform grid and their
(weighted) cross-correlations.

Every Galerkin entry of a retarded operator reduces to surface integrals of
the kernel against a "lag kernel"

    L(tau) = integral  w(t) * test(t) * trial^(d)(t - tau) dt,

a piecewise polynomial (or, with weight w(t) = exp(-2*sigma*t), a piecewise
smooth function) whose breakpoints sit on the time grid.  This module builds
those lag kernels once per operator term and evaluates them vectorized.
"""

import numpy as np

_GL = {}


def gauss01(n):
    """Gauss-Legendre nodes/weights on [0, 1], cached."""
    if n not in _GL:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL[n]


class GridPiecewisePoly:
    """Piecewise polynomial on uniform cells [j*dt, (j+1)*dt], j0 <= j < j0+ncells.

    Coefficients are stored per cell in the scaled local variable
    s = (tau - j*dt)/dt in [0, 1] (monomial basis), which keeps Vandermonde
    fits well conditioned.
    """

    def __init__(self, dt, j0, coef):
        self.dt = float(dt)
        self.j0 = int(j0)
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))
        self.ncells = self.coef.shape[0]

    @property
    def support(self):
        return self.j0 * self.dt, (self.j0 + self.ncells) * self.dt

    @classmethod
    def from_sampler(cls, fun, dt, j0, ncells, degree):
        """Fit each cell from samples at Chebyshev points (exact if fun is a
        polynomial of the given degree per cell)."""
        n = degree + 1
        s = 0.5 * (1.0 - np.cos(np.pi * (2 * np.arange(n) + 1) / (2 * n)))
        V = np.vander(s, n, increasing=True)
        cells = np.arange(j0, j0 + ncells)
        tau = (cells[:, None] + s[None, :]) * dt
        vals = fun(tau.ravel()).reshape(ncells, n)
        coef = np.linalg.solve(V, vals.T).T
        coef[np.abs(coef) < 1e-14 * max(1.0, np.abs(coef).max())] = 0.0
        return cls(dt, j0, coef)

    def eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        idx = np.floor(tau / self.dt).astype(np.int64) - self.j0
        inside = (idx >= 0) & (idx < self.ncells)
        out = np.zeros(tau.shape)
        if np.any(inside):
            ii = idx[inside]
            s = tau[inside] / self.dt - (ii + self.j0)
            c = self.coef[ii]
            acc = c[:, -1].copy()
            for d in range(self.coef.shape[1] - 2, -1, -1):
                acc = acc * s + c[:, d]
            out[inside] = acc
        return out

    __call__ = eval

    def derivative(self):
        if self.coef.shape[1] == 1:
            return GridPiecewisePoly(self.dt, self.j0, np.zeros((self.ncells, 1)))
        k = np.arange(1, self.coef.shape[1])
        return GridPiecewisePoly(self.dt, self.j0, self.coef[:, 1:] * k / self.dt)

    def boundary_jumps(self):
        """Jumps [value(b+) - value(b-)] at the cell boundaries j0*dt, ..., including
        the outer edges (against 0 outside). Returns (locations, jumps)."""
        left = np.concatenate([[0.0], self.coef.sum(axis=1)])   # values at s=1
        right = np.concatenate([self.coef[:, 0], [0.0]])        # values at s=0
        locs = (self.j0 + np.arange(self.ncells + 1)) * self.dt
        return locs, right - left

    def fl_transform(self, omega, n_gauss=16):
        """integral of p(u) * exp(-i*omega*u) du over the support."""
        x, w = gauss01(n_gauss)
        cells = np.arange(self.j0, self.j0 + self.ncells)
        u = (cells[:, None] + x[None, :]) * self.dt
        vals = self.eval(u.ravel()).reshape(u.shape)
        return np.sum(vals * np.exp(-1j * omega * u) * (w[None, :] * self.dt))


class TimeShape:
    """A time basis shape: piecewise polynomial plus optional Dirac deltas
    (deltas appear when distributional derivatives of discontinuous shapes
    are taken; they always sit on grid points)."""

    def __init__(self, pp, deltas=()):
        self.pp = pp
        self.deltas = tuple(deltas)

    @property
    def dt(self):
        return self.pp.dt

    @classmethod
    def hat(cls, dt):
        """Nodal hat centered at 0, support [-dt, dt]."""
        return cls(GridPiecewisePoly(dt, -1, [[0.0, 1.0], [1.0, -1.0]]))

    @classmethod
    def box(cls, dt):
        """Interval indicator of (-dt, 0] (the P0 shape trailing its node)."""
        return cls(GridPiecewisePoly(dt, -1, [[1.0]]))

    def derivative(self):
        if self.deltas:
            raise ValueError("second distributional derivative of a jump "
                             "(delta') is not representable")
        locs, jumps = self.pp.boundary_jumps()
        deltas = [(l, j) for l, j in zip(locs, jumps) if abs(j) > 1e-14]
        return TimeShape(self.pp.derivative(), deltas)

    def derivatives(self, n):
        s = self
        for _ in range(n):
            s = s.derivative()
        return s

    def support(self):
        lo, hi = self.pp.support
        if self.deltas:
            locs = [l for l, _ in self.deltas]
            lo, hi = min(lo, min(locs)), max(hi, max(locs))
        return lo, hi

    def max_degree(self):
        return self.pp.coef.shape[1] - 1


def correlation(test, trial, sigma=0.0, degree=None, n_gauss=12):
    """C(u) = integral exp(-2*sigma*t) * test(t) * trial(t-u) dt as a
    GridPiecewisePoly in u.

    `test` must be delta-free; deltas in `trial` are integrated out exactly.
    For sigma = 0 the result is exact (polynomial integrand); for sigma > 0
    each cell is fitted to high degree (error ~ machine precision for
    sigma*dt <~ 1).
    """
    if test.deltas:
        raise ValueError("test shape must be an ordinary function")
    dt = test.dt
    tlo, thi = test.pp.support
    slo, shi = trial.support()
    ulo, uhi = tlo - shi, thi - slo
    j0 = int(round(ulo / dt))
    ncells = int(round((uhi - ulo) / dt))
    if ncells <= 0:
        return GridPiecewisePoly(dt, 0, [[0.0]])
    if degree is None:
        degree = (test.max_degree() + trial.max_degree() + 1) if sigma == 0.0 else 10
    x01, w01 = gauss01(n_gauss)

    def sampler(u):
        u = np.asarray(u)
        val = np.zeros(u.shape)
        for ct in range(test.pp.ncells):
            a0 = (test.pp.j0 + ct) * dt
            a1 = a0 + dt
            for cs in range(trial.pp.ncells):
                b0 = (trial.pp.j0 + cs) * dt
                b1 = b0 + dt
                lo = np.maximum(a0, u + b0)
                hi = np.minimum(a1, u + b1)
                ln = hi - lo
                mask = ln > 0
                if not np.any(mask):
                    continue
                t = lo[..., None] + x01 * ln[..., None]
                integ = test.pp.eval(t.ravel()) * trial.pp.eval((t - u[..., None]).ravel())
                integ = integ.reshape(t.shape)
                if sigma != 0.0:
                    integ = integ * np.exp(-2.0 * sigma * t)
                val += np.where(mask, np.sum(integ * w01, axis=-1) * ln, 0.0)
        for loc, wt in trial.deltas:
            t = u + loc
            v = wt * test.pp.eval(t)
            if sigma != 0.0:
                v = v * np.exp(-2.0 * sigma * t)
            val += v
        return val

    return GridPiecewisePoly.from_sampler(sampler, dt, j0, ncells, degree)


class LagKernel:
    """Lag kernel L(tau) = integral w(t) test(t) trial^(d)(t - tau) dt together
    with its tau-derivatives, as evaluable piecewise polynomials.

    eval(tau, deriv=j) returns L^(j)(tau) = (-1)^j * C[test, trial^(d+j)](tau).
    """

    def __init__(self, test, trial, d=0, sigma=0.0):
        self.test = test
        self.trial = trial
        self.d = int(d)
        self.sigma = float(sigma)
        self.dt = test.dt
        self._pp = {}

    def piece(self, deriv=0):
        if deriv not in self._pp:
            tr = self.trial.derivatives(self.d + deriv)
            pp = correlation(self.test, tr, sigma=self.sigma)
            self._pp[deriv] = (pp, (-1) ** deriv)
        return self._pp[deriv]

    def eval(self, tau, deriv=0):
        pp, sign = self.piece(deriv)
        return sign * pp.eval(tau)

    def support(self, deriv=0):
        return self.piece(deriv)[0].support

    def fl_transform(self, omega):
        """Fourier-Laplace transform of L (deriv 0)."""
        return self.piece(0)[0].fl_transform(omega)
