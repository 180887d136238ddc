"""Independent reference implementations used by the tests."""
import numpy as np
from scipy.integrate import quad

from phasesplit.material import stress
from phasesplit.mesh import SIMPSON_POINTS, SIMPSON_WEIGHTS, local_offsets
from phasesplit.phase_field import stiffness_factor


def _shape(xi, offs):
    # plain-loop multilinear shape functions and reference gradients
    nloc, d = offs.shape
    vals = np.ones(nloc)
    grads = np.ones((nloc, d))
    for a in range(nloc):
        for k in range(d):
            f = xi[k] if offs[a, k] else 1 - xi[k]
            vals[a] *= f
            for j in range(d):
                grads[a, j] *= (1.0 if offs[a, k] else -1.0) if j == k else f
    return vals, grads


def dense_system(mesh, v, mat, phase, A, delta=1e-4, interpolation="quadratic"):
    """Dense stiffness ``K`` and right-hand side ``b`` by element loops."""
    d, n, h = mesh.d, mesh.n, mesh.h
    offs = local_offsets(d)
    nloc = len(offs)
    ndof = mesh.n_nodes * d
    K = np.zeros((ndof, ndof))
    b = np.zeros(ndof)
    pts = np.array(np.meshgrid(*[SIMPSON_POINTS] * d, indexing="ij")).reshape(d, -1).T
    wts = np.array(np.meshgrid(*[SIMPSON_WEIGHTS] * d, indexing="ij")).reshape(d, -1).T.prod(axis=1) * h**d
    CA = stress(mat, A)
    for e in range(mesh.n_elements):
        idx = np.unravel_index(e, mesh.shape)
        nodes = [np.ravel_multi_index(tuple((np.array(idx) + o) % n), mesh.shape) for o in offs]
        for xi, w in zip(pts, wts):
            vals, grads = _shape(xi, offs)
            grads = grads / h
            f = stiffness_factor(vals @ v[nodes], phase, delta, interpolation)
            # strain of each basis displacement
            B = np.zeros((nloc * d, d, d))
            for a in range(nloc):
                for c in range(d):
                    g = np.zeros((d, d))
                    g[c, :] = grads[a]
                    B[a * d + c] = 0.5 * (g + g.T)
            dofs = np.array([nd * d + c for nd in nodes for c in range(d)])
            S = np.array([stress(mat, Bi) for Bi in B])
            K[np.ix_(dofs, dofs)] += w * f * np.einsum("mij,nij->mn", S, B)
            np.add.at(b, dofs, -w * f * np.einsum("mij,ij->m", B, CA))
    return K, b


def dense_corrector(K, b, d):
    """Solve ``K u = b`` with mean-zero constraints by a bordered direct solve."""
    ndof = K.shape[0]
    C = np.zeros((d, ndof))
    for c in range(d):
        C[c, c::d] = 1.0
    big = np.block([[K, C.T], [C, np.zeros((d, d))]])
    sol = np.linalg.solve(big, np.concatenate([b, np.zeros(d)]))
    return sol[:ndof]


def dense_energy(K, b, u, e0):
    """``E(u) = e0 - b.u + 1/2 u.K.u`` with ``e0`` the energy of ``u = 0``."""
    return e0 - b @ u + 0.5 * u @ K @ u


def layered_components(profile, nodes, mat, breaks=None):
    """Closed-form homogenized components of a 2D laminate with normal ``e_2``.

    ``profile(y)`` is the stiffness factor as a function of ``x_2``.  Returns
    the normalized components for loads ``A11``, ``A22`` and ``A12``.
    """
    mu, lam = mat.mu, mat.lam
    k = 2 * mu + lam
    pieces = list(zip(nodes[:-1], nodes[1:]))

    def avg(g):
        return sum(quad(g, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0] for a, b in pieces)

    F = avg(profile)
    R = avg(lambda y: 1.0 / profile(y))
    return {
        "A11": (k - lam**2 / k) * F + (lam / k) ** 2 * k / R,
        "A22": k / R,
        "A12": 4 * mu / R,
    }
