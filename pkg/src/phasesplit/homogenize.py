"""Effective elasticity of the two phases on a periodic cell.

The normalized component reported for a load ``A = beta * B`` is
``beta**-2 * C* A : A = beta**-2 * 2 E`` with ``E`` the minimal cell energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elasticity import LoadCase, assemble_operator, solve_corrector
from .phase_field import DEFAULT_DELTA, DEFAULT_INTERPOLATION, fraction

LOAD_LABELS = ("A11", "A22", "A33", "A12", "A13", "A23")


def load_case(label, beta=-0.25, d=3):
    """Canonical load ``A_ii = beta e_i e_i^T`` or ``A_ij = beta (e_i e_j^T + e_j e_i^T)``."""
    if len(label) != 3 or label[0] != "A" or not label[1:].isdigit():
        raise ValueError(f"unknown load label {label!r}")
    i, j = int(label[1]) - 1, int(label[2]) - 1
    if not (0 <= i < d and 0 <= j < d):
        raise ValueError(f"load {label!r} does not exist in {d}D")
    if beta == 0:
        raise ValueError("beta must be nonzero")
    A = np.zeros((d, d))
    A[i, j] += beta
    if i != j:
        A[j, i] += beta
    return LoadCase(A, label)


def canonical_loads(d=3, beta=-0.25):
    return [load_case(lab, beta, d) for lab in LOAD_LABELS if max(int(lab[1]), int(lab[2])) <= d]


def load_scale(load):
    """The ``beta`` of a canonical load (its largest-magnitude entry)."""
    A = load.A
    return float(A.flat[np.argmax(np.abs(A))])


def volume_fractions(mesh, v):
    vq = mesh.at_qp(np.asarray(v, dtype=float))
    vol0 = mesh.integrate(fraction(vq, 0))
    return vol0, 1.0 - vol0


def effective_component(mesh, v, mat, phase, load, delta=DEFAULT_DELTA,
                        interpolation=DEFAULT_INTERPOLATION, tol=1e-8, beta=None):
    op = assemble_operator(mesh, v, mat, phase, delta, interpolation)
    sol = solve_corrector(op, load, tol=tol)
    b = load_scale(load) if beta is None else beta
    return 2.0 * sol.energy / b**2


def polarization(quad, A, B):
    """Bilinear value ``C* A : B`` from a quadratic form ``quad(X) = C* X : X``."""
    return 0.25 * (quad(A + B) - quad(A - B))


@dataclass
class EffectiveTensor:
    """Normalized components per phase, keyed by load label."""

    beta: float
    components: list = field(default_factory=lambda: [{}, {}])
    raw: list = field(default_factory=lambda: [{}, {}])
    volumes: tuple = (0.0, 0.0)

    def rows(self):
        """``(phase, load, component, value, volume)`` tuples in a fixed order."""
        out = []
        for m in (0, 1):
            for lab, val in self.components[m].items():
                out.append((m, lab, f"C{lab[1]}{lab[2]}{lab[1]}{lab[2]}", val, self.volumes[m]))
        return out


def effective_table(mesh, v, materials, loads=None, delta=DEFAULT_DELTA,
                    interpolation=DEFAULT_INTERPOLATION, tol=1e-8, beta=-0.25):
    """Normalized effective components for both phases plus phase volumes."""
    if loads is None:
        loads = canonical_loads(mesh.d, beta)
    labels = [ld.label for ld in loads]
    if len(set(labels)) != len(labels):
        raise ValueError("loads must be distinct")
    table = EffectiveTensor(beta=beta, volumes=volume_fractions(mesh, v))
    for m in (0, 1):
        op = assemble_operator(mesh, v, materials[m], m, delta, interpolation)
        for ld in loads:
            sol = solve_corrector(op, ld, tol=tol)
            b = load_scale(ld)
            table.raw[m][ld.label] = 2.0 * sol.energy
            table.components[m][ld.label] = 2.0 * sol.energy / b**2
    return table
