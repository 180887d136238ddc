"""Projected first-order minimization of the phase-field objective.

The feasible set is the box ``lower <= v <= upper`` intersected with the
linear center-of-mass constraints ``M v = 0``.  Search directions use the
lumped-mass (L2) gradient ``G = g / h^d`` so that step sizes and stopping
tolerances do not depend on the resolution; sufficient decrease is always
checked with the exact nodal gradient ``g``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .elasticity import CGNotConverged
from .mesh import build_mesh, prolongate
from .objective import moment_vectors

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    max_iter: int = 500
    gtol: float = 1e-4
    ftol: float = 1e-7
    window: int = 10
    step0: float | None = None
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    min_step: float = 1e-12
    lower: float = -1.25
    upper: float = 1.25
    method: str = "pgd"
    memory: int = 8
    schedule: tuple = (17, 33, 65)
    seed: int = 0
    eps_factor: float = 2.0
    eps_mode: str = "finest"

    def __post_init__(self):
        if not (self.gtol > 0 and self.armijo > 0 and 0 < self.shrink < 1):
            raise ValueError("tolerances must be positive and shrink must lie in (0, 1)")
        if not self.lower < self.upper:
            raise ValueError("box lower bound must be below the upper bound")
        if self.method not in ("pgd", "lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.eps_mode not in ("finest", "per-level"):
            raise ValueError(f"unknown eps_mode {self.eps_mode!r}")
        self.schedule = tuple(int(n) for n in self.schedule)
        if not self.schedule:
            raise ValueError("schedule must not be empty")
        for a, b in zip(self.schedule, self.schedule[1:]):
            if b <= a or (b - 1) % (a - 1):
                raise ValueError(f"schedule step {a} -> {b} is not a compatible refinement")


class Projector:
    """Euclidean projection onto ``{lower <= v <= upper, M v = 0}``.

    The projection is ``clip(v - M^T lam)`` with the multiplier ``lam``
    solving the ``d``-dimensional piecewise-linear system ``M clip(v - M^T
    lam) = 0`` by semismooth Newton.  Without active bounds this is the
    closed-form rank-``d`` correction.
    """

    def __init__(self, M, lower=-1.25, upper=1.25):
        self.M = np.asarray(M)
        self.lower, self.upper = lower, upper
        self._gram = self.M @ self.M.T
        self._scale = float(np.abs(self.M).sum(axis=1).max())

    def residual(self, v):
        return self.M @ v

    def tangent(self, x, free=None):
        """Remove the constraint-normal part of a direction (on free entries only)."""
        if free is None:
            return x - self.M.T @ np.linalg.solve(self._gram, self.M @ x)
        Mf = self.M * free
        lam = np.linalg.lstsq(Mf @ Mf.T, Mf @ x, rcond=None)[0]
        return x - (Mf.T @ lam)

    def _line_search(self, z, a):
        """Exact minimizer ``t >= 0`` of the dual along a direction.

        The directional derivative is ``-g(t)`` with ``g(t) = a . clip(z - t a)``,
        which is piecewise linear and nonincreasing in ``t``; its root lies
        between two consecutive breakpoints.
        """
        nz = a != 0
        z, a = z[nz], a[nz]

        def g(t):
            return float(a @ np.clip(z - t * a, self.lower, self.upper))

        g0 = g(0.0)
        if g0 <= 0:
            return 0.0
        bps = np.concatenate([(z - self.lower) / a, (z - self.upper) / a])
        bps = np.unique(bps[bps > 0])
        if bps.size == 0 or g(bps[-1]) > 0:
            return float(bps[-1]) if bps.size else 0.0
        lo, hi = -1, bps.size - 1  # g(bps[hi]) <= 0; lo indexes t = 0 when -1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if g(bps[mid]) > 0:
                lo = mid
            else:
                hi = mid
        ta = 0.0 if lo < 0 else float(bps[lo])
        tb = float(bps[hi])
        ga, gb = (g0 if lo < 0 else g(ta)), g(tb)
        return ta + ga * (tb - ta) / (ga - gb) if ga > gb else tb

    def __call__(self, v, tol=1e-14):
        v = np.asarray(v, dtype=float)
        # cancellation in v - M^T lam makes the attainable residual scale with |v|
        atol = tol * self._scale * max(1.0, float(np.abs(v).max()))
        w = np.clip(v, self.lower, self.upper)
        if np.abs(self.M @ w).max() <= atol:
            return w
        lam = np.linalg.solve(self._gram, self.M @ v)
        reg = 1e-12 * np.trace(self._gram)
        for _ in range(100):
            z = v - self.M.T @ lam
            w = np.clip(z, self.lower, self.upper)
            r = self.M @ w
            if np.abs(r).max() <= atol:
                return w
            free = (w > self.lower) & (w < self.upper)
            Mf = self.M[:, free]
            # regularized semismooth Newton direction for M clip(v - M^T lam) = 0
            step = np.linalg.solve(Mf @ Mf.T + reg * np.eye(len(r)), r)
            full = np.clip(z - self.M.T @ step, self.lower, self.upper)
            if np.abs(self.M @ full).max() <= atol:
                return full
            lam = lam + self._line_search(z, self.M.T @ step) * step
        w = np.clip(v - self.M.T @ lam, self.lower, self.upper)
        if np.abs(self.M @ w).max() <= 1e3 * atol:
            return w
        raise RuntimeError("projection onto the feasible set did not converge")


def project(v, mesh, lower=-1.25, upper=1.25):
    return Projector(moment_vectors(mesh), lower, upper)(v)


@dataclass
class RunRecord:
    history: list = field(default_factory=list)
    v: np.ndarray | None = field(default=None, repr=False)
    N: int | None = None
    d: int | None = None
    status: str = ""
    iterations: int = 0
    evaluations: int = 0
    wall_time: float = 0.0
    table: object = None
    levels: list = field(default_factory=list)

    @property
    def final_J(self):
        return self.history[-1]["J"] if self.history else None


def _log_row(it, ev, step, pg_norm, com_res, cg_total):
    return {
        "iter": it,
        "J": ev.total,
        "M": ev.smooth_max,
        "J0": ev.costs[0],
        "J1": ev.costs[1],
        "L": ev.perimeter,
        "step": step,
        "pg_norm": pg_norm,
        "com": com_res,
        "cg_iterations": cg_total,
    }


def minimize(v0, objective, config=None, callback=None):
    """Projected descent with Armijo backtracking along the projection arc.

    ``objective.evaluate(v)`` must return an object with ``total`` and
    ``gradient``.  Every iterate is feasible and accepted objective values
    never increase.
    """
    cfg = config or OptimizerConfig()
    mesh = objective.mesh
    proj = Projector(moment_vectors(mesh), cfg.lower, cfg.upper)
    mass = mesh.h**mesh.d
    t0 = time.perf_counter()
    rec = RunRecord(N=mesh.N, d=mesh.d)

    v = proj(v0)
    try:
        ev = objective.evaluate(v)
    except (CGNotConverged, FloatingPointError, ValueError) as exc:
        rec.v, rec.status = v, f"failed: {exc}"
        return rec
    n_eval = 1
    step = None
    s_hist, y_hist = [], []
    status = "max_iter"
    it = 0

    while True:
        g = ev.gradient
        G = g / mass
        pg = proj(v - G) - v
        pg_norm = float(np.abs(pg).max())
        com_res = float(np.abs(proj.residual(v)).max())
        rec.history.append(_log_row(it, ev, step, pg_norm, com_res, ev.cg_iterations))
        if callback is not None:
            callback(it, v, ev)
        log.info("it %4d  J %.8g  M %.6g  J0 %.6g  J1 %.6g  L %.5g  |pg| %.3e  com %.1e  cg %d",
                 it, ev.total, ev.smooth_max, ev.costs[0], ev.costs[1], ev.perimeter,
                 pg_norm, com_res, ev.cg_iterations)
        if pg_norm <= cfg.gtol * (1.0 + abs(ev.total)):
            status = "converged"
            break
        # nodes pinned at the kinks v = +-1 keep |pg| finite, so also stop on stagnation
        if it >= cfg.window:
            drop = rec.history[-1 - cfg.window]["J"] - ev.total
            if drop <= cfg.ftol * (1.0 + abs(ev.total)):
                status = "stagnated"
                break
        if it >= cfg.max_iter:
            break

        at_lo = (v <= cfg.lower) & (G > 0)
        at_hi = (v >= cfg.upper) & (G < 0)
        free = ~(at_lo | at_hi)
        if cfg.method == "lbfgs" and s_hist:
            direction = -_two_loop(G * free, s_hist, y_hist) * free
            direction = proj.tangent(direction, free if not free.all() else None)
            if g @ direction >= 0:
                s_hist.clear()
                y_hist.clear()
                direction = -G
            t = 1.0
        else:
            direction = -G
            if step is None:
                t = cfg.step0 if cfg.step0 is not None else 1.0 / max(np.abs(G).max(), 1e-300)
            else:
                t = step

        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = proj(v + t * direction)
            dv = cand - v
            if not np.any(dv):
                break
            try:
                ev_c = objective.evaluate(cand)
            except (CGNotConverged, FloatingPointError, ValueError) as exc:
                rec.v, rec.status = v, f"failed: {exc}"
                rec.iterations, rec.evaluations = it, n_eval + 1
                rec.wall_time = time.perf_counter() - t0
                return rec
            n_eval += 1
            if ev_c.total <= ev.total + cfg.armijo * float(g @ dv):
                accepted = True
                break
            t *= cfg.shrink
            if t < cfg.min_step:
                break
        if not accepted:
            status = "step_collapse"
            break

        G_new = ev_c.gradient / mass
        s_vec, y_vec = dv, G_new - G
        sy = float(s_vec @ y_vec)
        if cfg.method == "lbfgs":
            if sy > 1e-12 * float(np.sqrt((s_vec @ s_vec) * (y_vec @ y_vec))):
                s_hist.append(s_vec)
                y_hist.append(y_vec)
                if len(s_hist) > cfg.memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
        else:
            # Barzilai-Borwein trial step for the next iteration
            step = float(s_vec @ s_vec) / sy if sy > 0 else 2.0 * t
            step = min(max(step, 1e-3 * t), 1e3 * t)
        v, ev = cand, ev_c
        it += 1

    rec.v = v
    rec.status = status
    rec.iterations = it
    rec.evaluations = n_eval
    rec.wall_time = time.perf_counter() - t0
    return rec


def _two_loop(q, s_hist, y_hist):
    q = q.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def random_init(mesh, seed):
    """Uniform random nodal values in ``[-1, 1]``."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, mesh.n_nodes)


def config_hash(payload):
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def continuation_run(make_objective, d, config=None, v0=None, checkpoint_dir=None,
                     hash_payload=None, callback=None):
    """Coarse-to-fine optimization over ``config.schedule``.

    ``make_objective(mesh, eps)`` builds the objective for one level.  The
    interface width is ``eps_factor * h`` of the finest mesh on every level
    (``eps_mode="finest"``) or of the current mesh (``"per-level"``).  With a
    per-level width the coarse levels of a short schedule tend to settle in
    the uniform mixed state ``v = 0``.  The coarsest level starts from
    ``v0`` or a seeded uniform random field.  Returns the finest-level
    record; ``record.levels`` holds per-level summaries including the jump
    in ``J`` caused by prolongation and the width refresh.
    """
    cfg = config or OptimizerConfig()
    chash = config_hash(hash_payload if hash_payload is not None else asdict(cfg))
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    levels = []
    prev_mesh, prev_v, prev_J = None, None, None
    rec = None
    for N in cfg.schedule:
        mesh = build_mesh(d, N)
        n_ref = cfg.schedule[-1] if cfg.eps_mode == "finest" else N
        obj = make_objective(mesh, cfg.eps_factor / (n_ref - 1))
        if prev_v is None:
            start = random_init(mesh, cfg.seed) if v0 is None else np.asarray(v0, dtype=float)
        else:
            start = prolongate(prev_v, prev_mesh, mesh)
        ck = ckdir / f"level_N{N}.npz" if ckdir is not None else None
        if ck is not None and ck.exists():
            data = np.load(ck)
            if str(data["config_hash"]) == chash:
                log.info("resuming level N=%d from %s", N, ck)
                rec = RunRecord(v=data["v"], N=N, d=d, status="resumed")
                ev = obj.evaluate(rec.v)
                rec.history.append(_log_row(0, ev, None, float("nan"), float("nan"), ev.cg_iterations))
                levels.append({"N": N, "status": "resumed", "J_start": ev.total, "J_final": ev.total})
                prev_mesh, prev_v, prev_J = mesh, rec.v, ev.total
                continue
        rec = minimize(start, obj, cfg, callback=callback)
        J_start = rec.history[0]["J"] if rec.history else float("nan")
        info = {"N": N, "status": rec.status, "iterations": rec.iterations,
                "evaluations": rec.evaluations, "J_start": J_start, "J_final": rec.final_J,
                "wall_time": rec.wall_time}
        if prev_J is not None:
            info["J_coarse_final"] = prev_J
            info["refresh_jump"] = J_start - prev_J
            log.info("level N=%d: prolongated start J %.6g vs coarse final %.6g", N, J_start, prev_J)
        levels.append(info)
        if ck is not None and rec.v is not None:
            np.savez(ck, v=rec.v, N=N, d=d, config_hash=chash)
        if rec.status.startswith("failed"):
            break
        prev_mesh, prev_v, prev_J = mesh, rec.v, rec.final_J
    rec.levels = levels
    rec.wall_time = time.perf_counter() - t0
    return rec
