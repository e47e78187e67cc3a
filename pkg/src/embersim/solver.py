"""Projected Newton time stepping with CCD-filtered backtracking line search.

One ``step`` call advances the state by one backward-Euler step. Scripted
DoFs are driven to their end-of-step targets through CCD-guarded advance
rounds interleaved with Newton relaxation of the free DoFs, so every
iterate stays strictly intersection free.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .ccd import max_step
from .errors import LinearSolveFailure
from .reduction import SimState, StepContext, System, make_context

LINE_SEARCH_FLOOR = 1e-12
MAX_SCRIPTED_ROUNDS = 100


@dataclass(frozen=True)
class SolverConfig:
    h: float
    tol_v: float = 1e-3  # Newton termination, m/s
    max_newton: int = 100
    beta: float = 0.5  # backtracking shrink factor
    c1: float = 0.0  # sufficient-decrease constant (0 = pure decrease)
    ccd_slack: float = 0.1
    ccd_conservative: float = 0.9

    def __post_init__(self):
        if self.h <= 0.0 or self.tol_v <= 0.0:
            raise ValueError("h and tol_v must be positive")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("line search shrink factor must lie in (0, 1)")


@dataclass
class StepStats:
    newton_iters: int = 0
    ls_trials: int = 0
    grad_norm: float = 0.0
    min_dist: float = np.inf
    wall_ms: float = 0.0
    n_pairs: int = 0
    converged: bool = True
    stalled: bool = False
    max_iters_hit: bool = False
    scripted_rounds: int = 0
    descent_violations: int = 0
    energy_trace: list = field(default_factory=list)


def check_convergence(p, h, tol_v):
    """Newton termination: direction infinity-norm per unit time below tol_v."""
    p = np.asarray(p)
    return bool(np.max(np.abs(p)) / h <= tol_v) if p.size else True


def newton_direction(hess_ff, grad_f):
    """Solve the SPD reduced system H p = -g for the free DoFs."""
    if grad_f.size == 0:
        return grad_f.copy()
    p = spla.spsolve(hess_ff.tocsc(), -grad_f)
    if not np.all(np.isfinite(p)):
        raise LinearSolveFailure("sparse solve returned non-finite direction")
    return p


def filtered_line_search(energy_fn, e0, alpha_max, beta, c1, slope=0.0):
    """Backtrack from the CCD clamp until the energy strictly decreases.

    Returns (alpha, trials, stalled, e_accepted); ``stalled`` flags an
    underflow below the floor, treated by the caller as
    converged-with-warning.
    """
    alpha = alpha_max
    trials = 0
    while True:
        trials += 1
        e_new = energy_fn(alpha)
        if e_new < e0 + c1 * alpha * slope:
            return alpha, trials, False, e_new
        alpha *= beta
        if alpha < LINE_SEARCH_FLOOR:
            return 0.0, trials, True, e0


def step(system: System, state: SimState, config: SolverConfig, ctx: StepContext | None = None):
    """Advance one backward-Euler step; returns (new_state, StepStats)."""
    t_start = time.perf_counter()
    h = config.h
    if ctx is None:
        ctx = make_context(system, state, h)
    stats = StepStats()

    q = state.q.copy()
    # recompute from the index where possible so time never accumulates error
    if state.time == state.step_index * h:
        t_next = (state.step_index + 1) * h
    else:
        t_next = state.time + h
    s_ids, s_target = system.scripted_targets(t_next)
    free = system.free_dofs

    for _ in range(MAX_SCRIPTED_ROUNDS):
        scripted_done = _advance_scripted(system, q, s_ids, s_target, config)
        stats.scripted_rounds += 1
        converged = _newton_loop(system, q, ctx, config, stats, free)
        if converged and scripted_done:
            break
        if stats.newton_iters >= config.max_newton:
            stats.max_iters_hit = True
            stats.converged = False
            break
    else:
        stats.max_iters_hit = True
        stats.converged = False

    qdot = (q - state.q) / h
    x = system.embed_all(q)
    pairs = system.collect(x)
    stats.n_pairs = pairs.count
    stats.min_dist = min(stats.min_dist, pairs.min_distance())
    stats.wall_ms = (time.perf_counter() - t_start) * 1e3
    new_state = SimState(q=q, qdot=qdot, x=x, step_index=state.step_index + 1, time=t_next)
    return new_state, stats


def _advance_scripted(system, q, s_ids, s_target, config):
    """CCD-guarded move of scripted DoFs toward their end-of-step targets."""
    if s_ids.size == 0:
        return True
    delta = s_target - q[s_ids]
    if np.max(np.abs(delta)) == 0.0:
        return True
    p = np.zeros_like(q)
    p[s_ids] = delta
    x = system.embed_all(q)
    dx = system.embed_all(q + p) - x
    alpha = max_step(x, dx, system.topology, config.ccd_slack, config.ccd_conservative)
    if alpha >= 1.0:
        q[s_ids] = s_target
        return True
    q[s_ids] += alpha * delta
    return False


def _newton_loop(system, q, ctx, config, stats, free):
    h = config.h
    grad_floor = None
    while stats.newton_iters < config.max_newton:
        ev = system.eval(q, ctx, order=2)
        stats.min_dist = min(stats.min_dist, ev.pairs.min_distance())
        g_free = ev.grad[free]
        gnorm = float(np.max(np.abs(g_free))) if g_free.size else 0.0
        stats.grad_norm = gnorm
        if grad_floor is None:
            grad_floor = 1e-14 * max(1.0, gnorm)
        if gnorm <= grad_floor:
            return True

        hff = ev.hess[free][:, free] if np.any(free) else ev.hess
        p_free = newton_direction(hff.tocsr(), g_free)
        p = np.zeros(q.size)
        p[free] = p_free
        p = p.reshape(-1, 3)
        # terminate on the direction before moving: below tol_v the update
        # is within the accepted velocity resolution
        if check_convergence(p, h, config.tol_v):
            return True

        dx = system.embed_all(q + p) - ev.x
        move_full = float(np.max(np.linalg.norm(dx, axis=1)))
        # pairs not in the active set sit at >= dhat, so when twice the
        # motion stays under the slack-reduced minimum distance no pair can
        # reach its conservative gap and the full step is provably safe
        dmin = min(ev.pairs.min_distance(), system.params.dhat)
        if 2.0 * move_full < (1.0 - config.ccd_slack) * dmin:
            alpha_max = 1.0
        else:
            alpha_max = max_step(ev.x, dx, system.topology, config.ccd_slack, config.ccd_conservative)

        # line-search probes reuse one margin-inflated candidate superset:
        # both primitives of an unseen pair can close at most 2*move
        move = move_full * alpha_max
        cands = system.collect(ev.x, margin=2.0 * move + 1e-12)

        def energy_at(a):
            return system.energy_candidates(q + a * p, ctx, cands)

        slope = float(np.dot(ev.grad[free], p_free)) if config.c1 > 0.0 else 0.0
        alpha, trials, stalled, e_new = filtered_line_search(
            energy_at, ev.energy, alpha_max, config.beta, config.c1, slope
        )
        stats.ls_trials += trials
        if stalled:
            stats.stalled = True
            return True
        if not e_new < ev.energy:
            stats.descent_violations += 1
        stats.energy_trace.append((ev.energy, e_new))
        q += alpha * p
        stats.newton_iters += 1
    return False
