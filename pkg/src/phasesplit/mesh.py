"""Uniform periodic grids on the unit cell with multilinear elements.

Nodes sit at ``x = i * h`` for ``i = 0 .. N-1`` along each axis.  Nodes on a
max face are aliases of their min-face partners, so a nodal field on an
``N^d`` grid is stored as ``(N-1)^d`` canonical values in C order (axis 0
slowest).  Element ``e`` with multi-index ``(e_0, .., e_{d-1})`` covers
``[e_k h, (e_k + 1) h]`` along each axis and uses the same C-order ranking,
so element and canonical node counts coincide.

Local node ``a`` of an element has offsets ``bit_k(a)`` along axis ``k``
(axis 0 is the least significant bit).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SIMPSON_POINTS = np.array([0.0, 0.5, 1.0])
SIMPSON_WEIGHTS = np.array([1.0, 4.0, 1.0]) / 6.0


def local_offsets(d):
    """Offsets ``(2**d, d)`` of the element corners, axis 0 least significant."""
    return np.array([[(a >> k) & 1 for k in range(d)] for a in range(2**d)], dtype=np.int64)


def shape_eval(xi):
    """Multilinear shape functions on the reference element ``[0, 1]^d``.

    Parameters
    ----------
    xi : array_like, shape (d,) or (npts, d)
        Reference coordinates.

    Returns
    -------
    values : ndarray, shape (2**d,) or (npts, 2**d)
    gradients : ndarray, shape (2**d, d) or (npts, 2**d, d)
        Derivatives with respect to the reference coordinates.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    d = pts.shape[1]
    offs = local_offsets(d)
    # 1D factors: bit 1 -> xi, bit 0 -> 1 - xi
    fac = np.where(offs[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    dfac = np.where(offs == 1, 1.0, -1.0)[None, :, :] * np.ones_like(fac)
    values = fac.prod(axis=2)
    grads = np.empty(fac.shape)
    for k in range(d):
        others = np.delete(fac, k, axis=2).prod(axis=2)
        grads[:, :, k] = dfac[:, :, k] * others
    if single:
        return values[0], grads[0]
    return values, grads


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    """Periodic uniform mesh of ``[0, 1]^d`` with ``N`` nodes per axis.

    All arrays are computed at construction and flagged read-only.
    """

    d: int
    N: int
    conn: np.ndarray = field(init=False, repr=False)
    qp_values: np.ndarray = field(init=False, repr=False)
    qp_grads: np.ndarray = field(init=False, repr=False)
    qp_weights: np.ndarray = field(init=False, repr=False)
    qp_ref: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"need at least 3 nodes per axis, got N={self.N}")
        n = self.N - 1
        shape = (n,) * self.d
        elem = np.array(np.unravel_index(np.arange(n**self.d), shape)).T
        offs = local_offsets(self.d)
        corners = (elem[:, None, :] + offs[None, :, :]) % n
        conn = np.ravel_multi_index(tuple(corners[..., k] for k in range(self.d)), shape)

        qp_ref = np.array(list(itertools.product(SIMPSON_POINTS, repeat=self.d)))
        w1 = np.array(list(itertools.product(SIMPSON_WEIGHTS, repeat=self.d))).prod(axis=1)
        vals, grads = shape_eval(qp_ref)
        h = 1.0 / n
        for name, arr in (
            ("conn", conn),
            ("qp_ref", qp_ref),
            ("qp_values", vals),
            ("qp_grads", grads / h),
            ("qp_weights", w1 * h**self.d),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        """Elements (and canonical nodes) per axis."""
        return self.N - 1

    @property
    def h(self):
        return 1.0 / (self.N - 1)

    @property
    def shape(self):
        return (self.N - 1,) * self.d

    @property
    def n_nodes(self):
        return (self.N - 1) ** self.d

    @property
    def n_elements(self):
        return (self.N - 1) ** self.d

    @property
    def n_qp(self):
        return 3**self.d

    def node_coords(self):
        """Coordinates ``(n_nodes, d)`` of the canonical nodes."""
        idx = np.array(np.unravel_index(np.arange(self.n_nodes), self.shape)).T
        return idx * self.h

    def qp_coords(self):
        """Physical coordinates ``(n_elements, n_qp, d)`` of all quadrature points."""
        idx = np.array(np.unravel_index(np.arange(self.n_elements), self.shape)).T
        return (idx[:, None, :] + self.qp_ref[None, :, :]) * self.h

    def sample(self, func):
        """Evaluate ``func(x)`` with ``x`` of shape ``(n_nodes, d)`` at the canonical nodes."""
        return np.asarray(func(self.node_coords()), dtype=float)

    def at_qp(self, v):
        """Interpolate a nodal field to quadrature points, shape ``(n_elements, n_qp)``."""
        return v[self.conn] @ self.qp_values.T

    def grad_at_qp(self, v):
        """Gradient of the interpolant at quadrature points, ``(n_elements, n_qp, d)``."""
        gmat = self.qp_grads.transpose(1, 0, 2).reshape(2**self.d, -1)
        return (v[self.conn] @ gmat).reshape(-1, self.n_qp, self.d)

    def scatter(self, local):
        """Sum element-local nodal contributions ``(n_elements, 2**d)`` into nodes."""
        return np.bincount(self.conn.ravel(), weights=local.ravel(), minlength=self.n_nodes)

    def integrate(self, f_qp):
        """Simpson integral of a quadrature-point field over the cell."""
        return float(np.sum(f_qp @ self.qp_weights))

    def integrate_against_shapes(self, f_qp):
        """Nodal vector ``int f * phi_j dx`` for a quadrature-point field ``f``."""
        return self.scatter((f_qp * self.qp_weights) @ self.qp_values)

    def full_grid(self, v):
        """Nodal values on the full ``N^d`` grid including the aliased max faces."""
        arr = np.asarray(v).reshape(self.shape)
        return np.pad(arr, [(0, 1)] * self.d, mode="wrap")


def build_mesh(d, N):
    return PeriodicMesh(d, N)


def prolongate(v, coarse, fine):
    """Multilinear interpolation of a coarse nodal field onto a finer mesh.

    ``fine.N - 1`` must be an integer multiple of ``coarse.N - 1``.
    """
    if coarse.d != fine.d:
        raise ValueError("meshes differ in dimension")
    if fine.n % coarse.n:
        raise ValueError(
            f"cannot prolongate from N={coarse.N} to N={fine.N}: "
            f"{fine.n} is not a multiple of {coarse.n}"
        )
    r = fine.n // coarse.n
    v = np.asarray(v, dtype=float)
    if v.shape != (coarse.n_nodes,):
        raise ValueError(f"field has {v.size} values, mesh has {coarse.n_nodes} nodes")
    out = v.reshape(coarse.shape)
    # separable: refine one axis at a time with periodic wrap
    t = np.arange(r) / r
    for axis in range(coarse.d):
        nxt = np.roll(out, -1, axis=axis)
        lo = np.repeat(out, r, axis=axis)
        hi = np.repeat(nxt, r, axis=axis)
        bshape = [1] * coarse.d
        bshape[axis] = -1
        frac = np.tile(t, coarse.n).reshape(bshape)
        out = (1.0 - frac) * lo + frac * hi
    return out.ravel()
