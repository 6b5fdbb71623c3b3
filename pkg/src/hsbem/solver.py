"""Marching-on-in-time solution of block lower-triangular Toeplitz systems.

The space-time Galerkin systems produced by the assembly module couple the
unknown at time index n to its full history through lag blocks A^k, but
never to the future: the monolithic matrix is block lower-triangular with
constant block diagonals.  Marching-on-in-time is exact forward block
substitution: x_n = (A^0)^{-1} (b_n - sum_{k>=1} A^k x_{n-k}), with the
diagonal block factorized once and reused for every step.
"""

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Density

DENSE_THRESHOLD = 2000      # rows; above this the diagonal block is kept sparse
COND_LIMIT = 1e12
DENSE_SOLVE_CAP = 10 ** 4   # total unknowns for the monolithic oracle solve


class MOTSystem:
    """A block lower-triangular Toeplitz system: lag blocks A^0..A^L, right
    side b_n for n = 0..nt-1.  The diagonal block is factorized on
    construction (dense or sparse LU by size) and its condition estimated."""

    def __init__(self, blocks, rhs, bases=None):
        if len(blocks) == 0:
            raise ValueError("need at least the diagonal block A^0")
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim != 2:
            raise ValueError("rhs must be a (nt, n) block vector")
        n = rhs.shape[1]
        for A in blocks:
            if A.shape != (n, n):
                raise ValueError("block shapes inconsistent with the rhs")
        self.blocks = list(blocks)
        self.rhs = rhs
        self.nt = rhs.shape[0]
        self.n = n
        self.bases = bases
        self._factorize()

    # ------------------------------------------------------------ factories

    @classmethod
    def from_toeplitz(cls, tb, rhs):
        """System for a single retarded operator (e.g. the single-layer
        Dirichlet equation); rhs is the (nt, n_test) block vector."""
        return cls(tb.blocks, rhs, bases=(tb.basis_trial,))

    @classmethod
    def from_acoustic(cls, sys, rhs_phi, rhs_p):
        """Monolithic system for the coupled acoustic unknown (phi_n, p_n)."""
        rhs_phi = np.asarray(rhs_phi, dtype=float)
        rhs_p = np.asarray(rhs_p, dtype=float)
        if rhs_phi.shape[0] != rhs_p.shape[0]:
            raise ValueError("phi and p right sides disagree in step count")
        blocks = [sys.stacked_block(k) for k in range(max(sys.L + 1, 2))]
        rhs = np.hstack([rhs_phi, rhs_p])
        return cls(blocks, rhs, bases=(sys.basis_phi, sys.basis_p))

    # -------------------------------------------------------- factorization

    def _factorize(self):
        A0 = self.blocks[0]
        if self.n > DENSE_THRESHOLD and sp.issparse(A0):
            lu = spla.splu(A0.tocsc())
            self._solve0 = lu.solve
            op = spla.LinearOperator(
                (self.n, self.n), matvec=lu.solve,
                rmatvec=lambda b: lu.solve(b, trans="T"))
            inv_norm = spla.onenormest(op)
            a_norm = spla.norm(A0, 1)
        else:
            A0 = A0.toarray() if sp.issparse(A0) else np.asarray(A0, float)
            with warnings.catch_warnings():
                # exact singularity surfaces through the condition estimate
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(A0)
            self._solve0 = lambda b: scipy.linalg.lu_solve((lu, piv), b)
            a_norm = np.linalg.norm(A0, 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_norm = np.linalg.norm(
                    scipy.linalg.lu_solve((lu, piv), np.eye(self.n)), 1)
        self.cond_estimate = float(a_norm * inv_norm)
        if not np.isfinite(self.cond_estimate) or self.cond_estimate > COND_LIMIT:
            raise np.linalg.LinAlgError(
                f"diagonal block is numerically singular "
                f"(condition estimate {self.cond_estimate:.2e})")

    def matvec_lag(self, k, x):
        A = self.blocks[k]
        return A @ x

    def residual(self, X):
        """Relative residual of the full lower-triangular system."""
        L = len(self.blocks) - 1
        worst = 0.0
        for n in range(self.nt):
            r = self.rhs[n].copy()
            for k in range(0, min(n, L) + 1):
                r -= self.matvec_lag(k, X[n - k])
            worst = max(worst, float(np.linalg.norm(r)))
        scale = max(float(np.linalg.norm(self.rhs)), 1e-300)
        return worst / scale

    def wrap(self, X):
        """Package a raw (nt, n) solution in Density objects when the system
        carries basis information."""
        if self.bases is None:
            return X
        if len(self.bases) == 1:
            return Density(X, self.bases[0])
        bphi, bp = self.bases
        return (Density(X[:, :bphi.n_space], bphi),
                Density(X[:, bphi.n_space:], bp))


def mot_solve(sys, residual_tol=1e-10):
    """Forward block substitution over the time steps; verifies the residual
    of the full system afterwards."""
    L = len(sys.blocks) - 1
    X = np.zeros((sys.nt, sys.n))
    for n in range(sys.nt):
        b = sys.rhs[n].copy()
        for k in range(1, min(n, L) + 1):
            b -= sys.matvec_lag(k, X[n - k])
        X[n] = sys._solve0(b)
    res = sys.residual(X)
    if res > residual_tol:
        raise RuntimeError(f"marching residual {res:.2e} exceeds "
                           f"{residual_tol:.0e}")
    return sys.wrap(X)


def dense_solve(sys):
    """Oracle: assemble the monolithic block lower-triangular matrix and
    solve it directly.  Capped to keep memory and runtime bounded."""
    total = sys.nt * sys.n
    if total > DENSE_SOLVE_CAP:
        raise ValueError(f"dense solve capped at {DENSE_SOLVE_CAP} unknowns "
                         f"(got {total})")
    L = len(sys.blocks) - 1
    M = np.zeros((total, total))
    dense = [A.toarray() if sp.issparse(A) else np.asarray(A, float)
             for A in sys.blocks]
    for n in range(sys.nt):
        for k in range(0, min(n, L) + 1):
            M[n * sys.n:(n + 1) * sys.n,
              (n - k) * sys.n:(n - k + 1) * sys.n] = dense[k]
    x = scipy.linalg.solve(M, sys.rhs.ravel())
    return sys.wrap(x.reshape(sys.nt, sys.n))


def energy_history(X):
    """Per-step Euclidean magnitudes of the solution blocks."""
    X = X.coeffs if isinstance(X, Density) else np.asarray(X)
    return np.linalg.norm(X, axis=1)


def growth_rate(X):
    """Empirical geometric growth rate of the step energies over the second
    half of the time interval; > 1 signals exponential instability.  Marching
    schemes can be unstable in practice, so this is monitored as a diagnostic
    and reported, never silently ignored."""
    e = energy_history(X)
    e = e[len(e) // 2:]
    pos = e > 0
    if pos.sum() < 3:
        return 0.0
    idx = np.nonzero(pos)[0]
    slope = np.polyfit(idx, np.log(e[idx]), 1)[0]
    return float(np.exp(slope))
