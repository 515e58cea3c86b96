"""Linear solves for Dirichlet-reduced and grounded graph Laplacians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import DimensionError, IncompatibleDataError, SingularSystemError

DENSE_LIMIT = 2000
RESIDUAL_RTOL = 1e-10
COMPAT_RTOL = 1e-12

DIRICHLET = "dirichlet"
GROUNDED = "grounded"


class SPDSolver:
    """Factor once, solve many times.

    Dense Cholesky up to ``DENSE_LIMIT`` unknowns, Jacobi-preconditioned CG
    above that.
    """

    def __init__(self, matrix, dense_limit=DENSE_LIMIT, cg_maxiter=None):
        A = sp.csr_matrix(matrix) if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        self.size = A.shape[0]
        self.matrix = A
        self.direct = self.size <= dense_limit
        if self.size == 0:
            return
        if self.direct:
            dense = A.toarray() if sp.issparse(A) else A
            try:
                self._factor = sla.cho_factor(dense, lower=True, check_finite=False)
            except sla.LinAlgError as exc:
                raise SingularSystemError(f"matrix is not positive definite: {exc}") from None
            if not np.isfinite(self._factor[0]).all():
                raise SingularSystemError("Cholesky factor is not finite")
        else:
            A = sp.csr_matrix(A)
            self.matrix = A
            diag = A.diagonal()
            if (diag <= 0).any():
                raise SingularSystemError("matrix has a nonpositive diagonal entry")
            self._precond = sp.diags(1.0 / diag)
            self._cg_maxiter = cg_maxiter or 10 * self.size

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.size == 0:
            return np.zeros(0)
        if self.direct:
            return sla.cho_solve(self._factor, rhs, check_finite=False)
        x, info = spla.cg(
            self.matrix, rhs, rtol=1e-13, atol=0.0, M=self._precond, maxiter=self._cg_maxiter
        )
        if info != 0 or not self._residual_ok(x, rhs):
            raise SingularSystemError("conjugate gradient did not reach the residual budget")
        return x

    def _residual_ok(self, x, rhs):
        r = self.matrix @ x - rhs
        return np.linalg.norm(r) <= RESIDUAL_RTOL * max(np.linalg.norm(rhs), 1e-300)


@dataclass(frozen=True)
class LinearSystemSpec:
    """A Laplacian system ``A x = rhs``.

    ``role`` is ``"dirichlet"`` for an already-reduced nonsingular matrix, or
    ``"grounded"`` for a full singular Laplacian whose kernel is the
    constants; the grounded variant fixes ``x[ground] = 0``.
    """

    matrix: object
    rhs: np.ndarray
    role: str = DIRICHLET
    ground: int = 0


def solve_linear(spec, dense_limit=DENSE_LIMIT):
    A = spec.matrix
    rhs = np.asarray(spec.rhs, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or rhs.shape != (n,):
        raise DimensionError(f"system of shape {A.shape} with rhs {rhs.shape}")
    if spec.role == DIRICHLET:
        x = SPDSolver(A, dense_limit).solve(rhs)
    elif spec.role == GROUNDED:
        if abs(rhs.sum()) > COMPAT_RTOL * np.abs(rhs).sum():
            raise IncompatibleDataError(
                f"grounded Laplacian system needs a zero-sum right-hand side (sum = {rhs.sum():.3e})"
            )
        keep = np.delete(np.arange(n), spec.ground)
        A_csr = sp.csr_matrix(A)
        reduced = A_csr[keep][:, keep]
        x = np.zeros(n)
        x[keep] = SPDSolver(reduced, dense_limit).solve(rhs[keep])
    else:
        raise ValueError(f"unknown system role {spec.role!r}")
    r = A @ x - rhs
    if np.linalg.norm(r) > RESIDUAL_RTOL * np.linalg.norm(rhs):
        raise SingularSystemError(f"residual {np.linalg.norm(r):.3e} above budget")
    return x
