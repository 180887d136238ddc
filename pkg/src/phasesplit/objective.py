"""Worst-case two-phase compliance objective with perimeter regularization.

    J[v] = smoothmax_q( g(E^0_1..E^0_L), g(E^1_1..E^1_L) ) + eta * L_eps[v]

where ``E^m_l`` is the minimal cell energy of phase ``m`` under load ``l`` and
``g(E) = (sum_l E_l^-p)^(1/p)``.
"""
from __future__ import annotations

import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .elasticity import assemble_operator, energy_and_field_gradient, solve_corrector
from .phase_field import DEFAULT_DELTA, DEFAULT_INTERPOLATION, modica_mortola

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    p: float = 2.0
    q_max: float = 8.0
    eta: float = 2.0
    aggregation: str = "pnorm"

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not self.q_max >= 1:
            raise ValueError(f"q_max must be >= 1, got {self.q_max}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.aggregation not in ("pnorm", "sum"):
            raise ValueError(f"aggregation must be 'pnorm' or 'sum', got {self.aggregation!r}")


def aggregate_cost(energies, p):
    """``J = (sum E_l^-p)^(1/p)`` and ``dJ/dE_l = -J^(1-p) E_l^(-p-1)``."""
    E = np.asarray(energies, dtype=float)
    if E.size == 0:
        raise ValueError("need at least one energy")
    if not np.all(np.isfinite(E)) or np.any(E <= 0):
        raise ValueError(f"energies must be positive and finite, got {E}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    # scale by the smallest energy so that large p does not overflow
    emin = E.min()
    r = (emin / E) ** p
    J = (1.0 / emin) * r.sum() ** (1.0 / p)
    dJ = -(J / E) * r / r.sum()
    return J, dJ


def smooth_max(a, b, q):
    """``M = (a^q + b^q)^(1/q)`` with partial derivatives, for ``a, b > 0``."""
    if not (a > 0 and b > 0):
        raise ValueError(f"smooth_max needs positive arguments, got {a}, {b}")
    m = max(a, b)
    ra, rb = (a / m) ** q, (b / m) ** q
    s = ra + rb
    M = m * s ** (1.0 / q)
    return M, ra / s * M / a, rb / s * M / b


def _combine(J0, J1, q):
    if J0 > 0 and J1 > 0:
        return smooth_max(J0, J1, q)
    if J0 < 0 and J1 < 0:
        # max(-S0, -S1) = -min(S0, S1) = -1 / max(1/S0, 1/S1)
        S0, S1 = -J0, -J1
        R, dR0, dR1 = smooth_max(1.0 / S0, 1.0 / S1, q)
        return -1.0 / R, dR0 / (R * S0) ** 2, dR1 / (R * S1) ** 2
    raise ValueError(f"phase costs must share a sign, got {J0}, {J1}")


@functools.lru_cache(maxsize=8)
def _moments(d, N):
    from .mesh import PeriodicMesh

    mesh = PeriodicMesh(d, N)
    xq = mesh.qp_coords()
    M = np.stack([mesh.integrate_against_shapes(xq[..., i] - 0.5) for i in range(d)])
    M.setflags(write=False)
    return M


def moment_vectors(mesh):
    """Rows ``int phi_j (x_i - 1/2) dx``; ``M @ v`` is the first moment of ``v``."""
    return _moments(mesh.d, mesh.N)


def center_of_mass(mesh, v):
    """First moments ``c_i = int v (x_i - 1/2) dx`` and their constant gradients."""
    M = moment_vectors(mesh)
    return M @ np.asarray(v, dtype=float), M


@dataclass
class ObjectiveEvaluation:
    energies: list
    costs: tuple
    smooth_max: float
    perimeter: float
    total: float
    gradient: np.ndarray = field(repr=False)
    com: np.ndarray = field(default=None, repr=False)
    com_gradients: np.ndarray = field(default=None, repr=False)
    cg_iterations: int = 0


class Objective:
    """Evaluates ``J`` and ``dJ/dv`` for nodal phase fields on one mesh.

    Correctors from the previous call are reused as initial CG guesses.
    """

    def __init__(self, mesh, materials, loads, params=None, delta=DEFAULT_DELTA, eps=None,
                 interpolation=DEFAULT_INTERPOLATION, tol=1e-8, max_iter=None,
                 warm_start=True, workers=1):
        self.mesh = mesh
        self.materials = tuple(materials)
        if len(self.materials) != 2:
            raise ValueError("need one material per phase")
        if loads and not isinstance(loads[0], (list, tuple)):
            loads = (loads, loads)
        self.loads = tuple(tuple(ls) for ls in loads)
        if len(self.loads) != 2 or not all(self.loads):
            raise ValueError("each phase needs a non-empty load list")
        self.params = params or CostParams()
        self.delta = delta
        self.eps = 2.0 * mesh.h if eps is None else eps
        self.interpolation = interpolation
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start
        self.workers = workers
        self._cache = {}
        self.n_evaluations = 0

    def reset(self):
        self._cache.clear()

    def _solve(self, op, load):
        key = (op.phase, load.label)
        x0 = self._cache.get(key) if self.warm_start else None
        sol = solve_corrector(op, load, tol=self.tol, max_iter=self.max_iter, x0=x0)
        E, g = energy_and_field_gradient(op, load, sol)
        return key, sol, E, g

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has {v.size} values, mesh has {self.mesh.n_nodes} nodes")
        ops = [assemble_operator(self.mesh, v, self.materials[m], m, self.delta, self.interpolation)
               for m in (0, 1)]
        jobs = [(ops[m], ld) for m in (0, 1) for ld in self.loads[m]]
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(lambda job: self._solve(*job), jobs))
        else:
            results = [self._solve(*job) for job in jobs]

        energies = [[], []]
        egrads = [[], []]
        cg_its = 0
        for (key, sol, E, g) in results:
            energies[key[0]].append(E)
            egrads[key[0]].append(g)
            cg_its += sol.iterations
            self._cache[key] = sol.u

        costs, cost_grads = [], []
        for m in (0, 1):
            if self.params.aggregation == "pnorm":
                Jm, dJm = aggregate_cost(energies[m], self.params.p)
            else:
                Jm, dJm = -float(np.sum(energies[m])), -np.ones(len(energies[m]))
            costs.append(Jm)
            cost_grads.append(dJm)
        M, dM0, dM1 = _combine(costs[0], costs[1], self.params.q_max)
        L, dL = modica_mortola(self.mesh, v, self.eps)
        total = M + self.params.eta * L
        if not np.isfinite(total):
            raise FloatingPointError(f"objective is not finite ({total})")

        grad = self.params.eta * dL
        for m, dM in ((0, dM0), (1, dM1)):
            for dJ, g in zip(cost_grads[m], egrads[m]):
                grad = grad + (dM * dJ) * g
        com, com_grads = center_of_mass(self.mesh, v)
        self.n_evaluations += 1
        return ObjectiveEvaluation(
            energies=energies, costs=tuple(costs), smooth_max=M, perimeter=L, total=total,
            gradient=grad, com=com, com_gradients=com_grads, cg_iterations=cg_its,
        )

    def __call__(self, v):
        ev = self.evaluate(v)
        return ev.total, ev.gradient
