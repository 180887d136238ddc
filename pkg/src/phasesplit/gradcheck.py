"""Finite-difference verification of the objective gradient."""
from __future__ import annotations

import itertools

import numpy as np

from .mesh import build_mesh
from .objective import CostParams, Objective


def finite_difference(fun, v, step=1e-5, indices=None):
    """Central differences of a scalar function at ``v``."""
    v = np.asarray(v, dtype=float)
    idx = range(v.size) if indices is None else indices
    out = np.zeros(v.size)
    for j in idx:
        e = np.zeros(v.size)
        e[j] = step
        out[j] = (fun(v + e) - fun(v - e)) / (2.0 * step)
    return out


def relative_error(analytic, reference):
    """``max |a - r| / max |r|``."""
    return float(np.abs(analytic - reference).max() / max(np.abs(reference).max(), 1e-300))


def check_objective(materials, loads, d=2, N=5, p=2.0, q_max=8.0, eta=2.0, seed=0,
                    step=1e-5, tol=1e-11, delta=1e-4, interpolation="quadratic"):
    """Analytic vs central-difference gradient of ``J`` on a random field.

    Field values are drawn in ``[-0.9, 0.9]`` to stay clear of the
    interpolation kinks at ``+-1``.  Warm starts are disabled so every
    evaluation solves from zero.
    """
    mesh = build_mesh(d, N)
    obj = Objective(mesh, materials, loads, CostParams(p=p, q_max=q_max, eta=eta), delta=delta,
                    interpolation=interpolation, tol=tol, warm_start=False)
    v = np.random.default_rng(seed).uniform(-0.9, 0.9, mesh.n_nodes)
    grad = obj.evaluate(v).gradient
    fd = finite_difference(lambda w: obj.evaluate(w).total, v, step)
    return relative_error(grad, fd)


def gradcheck_suite(materials, loads3, seed=0, dims=(2, 3), N=5, ps=(2.0, 8.0), etas=(0.0, 2.0),
                    q_max=8.0, **kw):
    """Run :func:`check_objective` over dimensions and ``(p, eta)`` pairs.

    ``loads3`` is a function ``d -> list of LoadCase``.  Returns a list of
    ``(d, p, eta, error)``.
    """
    out = []
    for d, p, eta in itertools.product(dims, ps, etas):
        err = check_objective(materials, loads3(d), d=d, N=N, p=p, q_max=q_max, eta=eta, seed=seed, **kw)
        out.append((d, p, eta, err))
    return out
