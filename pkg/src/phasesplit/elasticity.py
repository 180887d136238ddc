"""Periodic cell problems of linear elasticity on a phase-field splitting.

For a macroscopic strain ``A`` and stiffness factor ``f(v)`` the periodic
corrector ``u`` minimizes

    E(u) = 1/2 int f(v) C (A + eps[u]) : (A + eps[u]) dx

over mean-zero periodic displacements.  Displacements are stored node-major:
dof ``j * d + c`` is component ``c`` at canonical node ``j``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .material import energy_density, stress
from .mesh import PeriodicMesh
from .phase_field import (
    DEFAULT_DELTA,
    DEFAULT_INTERPOLATION,
    stiffness_factor,
    stiffness_factor_derivative,
)


class CGNotConverged(RuntimeError):
    """Raised when PCG hits its iteration cap; keeps the last iterate."""

    def __init__(self, residual, iterations, x):
        super().__init__(
            f"CG did not converge in {iterations} iterations (relative residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations
        self.x = x


@dataclass(frozen=True)
class LoadCase:
    """Macroscopic strain (``beta`` already applied) with a display label."""

    A: np.ndarray
    label: str = ""

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("load strain must be a square matrix")
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
            raise ValueError(f"load strain {self.label!r} is not symmetric")
        if not np.any(A):
            raise ValueError(f"load strain {self.label!r} is zero")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def d(self):
        return self.A.shape[0]


class ElementKernel:
    """Reference element matrices and the sparse pattern for one mesh.

    Element stiffness matrices are weighted sums of per-quadrature-point
    matrices, so assembly for a new factor field is a single matrix product
    followed by a ``bincount`` into a fixed CSR pattern.
    """

    def __init__(self, mesh: PeriodicMesh):
        self.mesh = mesh
        d = mesh.d
        nloc = 2**d
        self.ndof_e = nloc * d
        self.ndof = mesh.n_nodes * d
        nq = mesh.n_qp

        # grad[q, i, j, a*d + c] = d u_i / d x_j from dof (a, c)
        grad = np.zeros((nq, d, d, self.ndof_e))
        for a in range(nloc):
            for c in range(d):
                grad[:, c, :, a * d + c] = mesh.qp_grads[:, a, :]
        self.sym = 0.5 * (grad + grad.transpose(0, 2, 1, 3))
        self._sym_flat = np.ascontiguousarray(self.sym.reshape(-1, self.ndof_e).T)
        self.div = np.einsum("qiin->qn", grad)

        w = mesh.qp_weights
        bb = np.einsum("qijm,qijn->qmn", self.sym, self.sym)
        self.k_mu = (2.0 * w[:, None, None] * bb).reshape(nq, -1)
        self.k_lam = (w[:, None, None] * self.div[:, :, None] * self.div[:, None, :]).reshape(nq, -1)

        self.edofs = (mesh.conn[:, :, None] * d + np.arange(d)).reshape(mesh.n_elements, -1)
        rows = np.repeat(self.edofs, self.ndof_e, axis=1).ravel()
        cols = np.tile(self.edofs, (1, self.ndof_e)).ravel()
        keys, self._slot = np.unique(rows * self.ndof + cols, return_inverse=True)
        self._slot = self._slot.astype(np.int64).ravel()
        self._indices = (keys % self.ndof).astype(np.int32)
        counts = np.bincount(keys // self.ndof, minlength=self.ndof)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self._nnz = keys.size
        diag_slot = np.searchsorted(keys, np.arange(self.ndof) * (self.ndof + 1))
        self._diag_slot = diag_slot

    def element_matrices(self, factor, mat):
        kq = mat.mu * self.k_mu + mat.lam * self.k_lam
        return factor @ kq

    def matrix(self, factor, mat):
        data = np.bincount(self._slot, weights=self.element_matrices(factor, mat).ravel(), minlength=self._nnz)
        K = sp.csr_matrix((data, self._indices, self._indptr), shape=(self.ndof, self.ndof))
        return K, data[self._diag_slot]

    def dense_element_matrix(self, factor_e, mat):
        return (factor_e @ (mat.mu * self.k_mu + mat.lam * self.k_lam)).reshape(self.ndof_e, self.ndof_e)

    def load_vector(self, factor, mat, A):
        """Right-hand side ``-int f C A : eps[phi_j]`` and its cancellation-free scale."""
        CA = stress(mat, A)
        gq = self.mesh.qp_weights[:, None] * np.einsum("qijn,ij->qn", self.sym, CA)
        local = factor @ gq
        f = -np.bincount(self.edofs.ravel(), weights=local.ravel(), minlength=self.ndof)
        return f, float(np.linalg.norm(local))

    def strain(self, u, A):
        """Total strain ``A + eps[u]`` at quadrature points, ``(n_el, n_qp, d, d)``."""
        d = self.mesh.d
        eps = (u[self.edofs] @ self._sym_flat).reshape(-1, self.mesh.n_qp, d, d)
        return eps + A


@functools.lru_cache(maxsize=4)
def _kernel(d, N):
    return ElementKernel(PeriodicMesh(d, N))


def element_kernel(mesh):
    k = _kernel(mesh.d, mesh.N)
    return k


@dataclass(eq=False)
class CellOperator:
    """Assembled stiffness of one phase on a given phase field."""

    mesh: PeriodicMesh
    material: object
    phase: int
    delta: float
    interpolation: str
    v_qp: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    diag: np.ndarray = field(repr=False)

    @property
    def kernel(self):
        return element_kernel(self.mesh)

    def apply(self, u):
        return self.matrix @ u


def assemble_operator(mesh, v, mat, phase, delta=DEFAULT_DELTA, interpolation=DEFAULT_INTERPOLATION):
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError(f"phase field has {v.size} values but the mesh has {mesh.n_nodes} nodes")
    v_qp = mesh.at_qp(v)
    factor = stiffness_factor(v_qp, phase, delta, interpolation)
    K, diag = element_kernel(mesh).matrix(factor, mat)
    return CellOperator(mesh, mat, phase, delta, interpolation, v_qp, factor, K, diag)


@dataclass
class CorrectorSolution:
    u: np.ndarray
    energy: float
    iterations: int
    residual: float
    load: LoadCase | None = None
    density: np.ndarray | None = field(default=None, repr=False)


def remove_mean(x, d):
    y = x.reshape(-1, d)
    return (y - y.mean(axis=0)).ravel()


def pcg(matvec, b, diag, d, x0=None, tol=1e-8, max_iter=None, callback=None):
    """Jacobi-preconditioned CG on the mean-zero subspace of periodic displacements.

    Iterates, residuals and preconditioned residuals are projected onto
    mean-zero fields, which removes the translation kernel.  Converged when
    ``sqrt(r.D^-1 r) <= tol * sqrt(b.D^-1 b)``.

    Returns ``(x, iterations, relative_residual)``.
    """
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    dinv = 1.0 / diag
    b = remove_mean(b, d)
    bnorm = np.sqrt(b @ (dinv * b))
    x = np.zeros(n) if x0 is None else remove_mean(np.asarray(x0, dtype=float), d)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    r = remove_mean(b - matvec(x), d)
    z = remove_mean(dinv * r, d)
    rz = r @ z
    p = z.copy()
    it = 0
    res = np.sqrt(max(rz, 0.0)) / bnorm
    while res > tol:
        if it >= max_iter:
            raise CGNotConverged(res, it, x)
        Kp = matvec(p)
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        z = remove_mean(dinv * r, d)
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
        it += 1
        res = np.sqrt(max(rz, 0.0)) / bnorm
        if callback is not None:
            callback(x)
    return x, it, res


def cell_energy(op, load, u):
    """``1/2 int f C (A + eps[u]) : (A + eps[u])`` by Simpson quadrature."""
    return 0.5 * op.mesh.integrate(op.factor * energy_density_at_qp(op, load, u))


def solve_corrector(op, load, tol=1e-8, max_iter=None, x0=None, callback=None):
    if load.d != op.mesh.d:
        raise ValueError(f"load {load.label!r} is {load.d}D but the mesh is {op.mesh.d}D")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    kern = op.kernel
    f, scale = kern.load_vector(op.factor, op.material, load.A)
    d = op.mesh.d
    if np.linalg.norm(f) <= 1e-13 * scale:
        # uniform coefficients: the affine field is already in equilibrium
        u, it, res = np.zeros(kern.ndof), 0, 0.0
    else:
        u, it, res = pcg(op.matrix.dot, f, op.diag, d, x0=x0, tol=tol, max_iter=max_iter, callback=callback)
    W = energy_density_at_qp(op, load, u)
    return CorrectorSolution(u, 0.5 * op.mesh.integrate(op.factor * W), it, res, load, W)


def energy_density_at_qp(op, load, u):
    return energy_density(op.material, op.kernel.strain(u, load.A))


def energy_and_field_gradient(op, load, sol):
    """Energy at the corrector and its derivative w.r.t. the nodal phase field.

    The corrector minimizes the energy, so only the explicit dependence
    through the stiffness factor contributes to the derivative.
    """
    W = sol.density if sol.density is not None else energy_density_at_qp(op, load, sol.u)
    E = 0.5 * op.mesh.integrate(op.factor * W)
    dfactor = stiffness_factor_derivative(op.v_qp, op.phase, op.delta, op.interpolation)
    grad = op.mesh.integrate_against_shapes(0.5 * dfactor * W)
    return E, grad


def stress_at_qp(op, load, u):
    """Stress ``f(v) C (A + eps[u])`` at quadrature points, ``(n_el, n_qp, d, d)``."""
    return op.factor[..., None, None] * stress(op.material, op.kernel.strain(u, load.A))
