"""Incremental loading with a modified Newton method and instability detection.

The Newton direction solves against an LDL^T-style factorization of the
tangent with non-positive pivots boosted, so iterates are repelled from
saddle points.  Failed steps halve the increment (up to 14 consecutive
halvings); converged steps grow the next increment by 1.5x.  The pivot count
of an unmodified factorization attempt at each converged state is recorded as
an inertia proxy, and its first sign change brackets the critical load of an
instability, optionally refined by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import postprocess
from .materials import InvalidStateError
from .mesh import THIRD_MEDIUM
from .postprocess import RunHistory, StepRecord

__all__ = [
    "NumericalError",
    "SolverConfig",
    "LoadProgram",
    "StepReport",
    "ModifiedCholesky",
    "modified_cholesky",
    "run_load_program",
    "detect_bifurcation",
]


class NumericalError(RuntimeError):
    """Factorization failed even after Hessian modification."""


@dataclass
class SolverConfig:
    """Tolerances and adaptation policy of the incremental solver.

    Residual convergence uses the free-dof force residual scaled by the
    external-force magnitude of the current leg (reaction magnitude under
    displacement control), with an absolute floor.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iterations: int = 20
    max_halvings: int = 14
    growth: float = 1.5
    min_step: float = 1e-12
    # Pivot floor delta_mc relative to max |K_ii|.  Kept at roundoff scale:
    # the bulk-to-medium stiffness ratio reaches 1e9, so a larger relative
    # floor would misread the medium's legitimately tiny pivots as negative
    # curvature and the boost would swamp its equations.
    mc_pivot_floor: float = 1e-14
    mc_shift_growth: float = 4.0  # escalation of the diagonal boost
    # Below this residual fraction the plain Newton direction takes over even
    # with negative pivots present: the quadratic endgame converges onto the
    # nearby stationary point, whose inertia the step report then records.
    # The boosted direction handles the exploratory phase further out.
    endgame_rel: float = 1e-3
    # Abort an attempt once the residual exceeds this multiple of its best
    # value; saddle-escape solves relax it, since leaving a stationary point
    # legitimately grows the residual before it falls into the next basin.
    divergence_guard: float = 1e4
    track_inertia: bool = True
    bisect_critical: bool = False
    bisect_resolution: float = 0.01  # fraction of the leg span
    # When a converged state carries negative curvature, nudge it along the
    # negative mode (fraction of the last increment) and re-solve, so the run
    # settles onto the adjacent stable branch instead of riding the saddle.
    branch_switch_kick: float = 0.0
    record_vtk_every: int = 0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class LoadProgram:
    """One monotone loading leg with an optional unload-to-zero return leg.

    control: "pressure" (Pa written into the third-medium model of every
    tagged void), "displacement" (scales the driven Dirichlet targets), or
    "point_load" (scales the external force vector).
    """

    control: str
    target: float
    initial_step: float = 0.1
    unload: bool = False
    max_step: float | None = None  # cap on the load-factor increment

    def __post_init__(self):
        if self.control not in ("pressure", "displacement", "point_load"):
            raise ValueError(f"unknown control {self.control!r}")
        if not (0 < self.initial_step <= 1):
            raise ValueError("initial_step must be in (0, 1]")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")

    def legs(self):
        yield (0.0, 1.0)
        if self.unload:
            yield (1.0, 0.0)


@dataclass
class StepReport:
    converged: bool
    iterations: int
    residual: float
    n_modified: int
    step_length: float
    reason: str = ""


class ModifiedCholesky:
    """LDL^T-style factorization with non-positive pivots boosted on demand.

    The unmodified attempt factors with symmetric ordering and diagonal
    pivoting only, so the signs of the U diagonal carry the matrix inertia;
    ``n_modified`` counts the pivots below the floor there.  When a modified
    solve is requested and pivots sit below the floor, a diagonal boost
    E = tau * I escalates geometrically until every pivot clears the floor,
    keeping those solves descent-producing.  The plain (unboosted) solve
    stays available for quadratic Newton endgames near equilibrium.
    """

    def __init__(self, K: sp.spmatrix, pivot_floor: float = 1e-14, shift_growth: float = 4.0):
        self._K = sp.csc_matrix(K)
        n = self._K.shape[0]
        diag = self._K.diagonal()
        scale = float(np.max(np.abs(diag))) if n else 1.0
        self.delta = pivot_floor * max(scale, 1e-30)
        self.n = n
        self._shift_growth = shift_growth

        lu, piv = self._attempt(self._K, 0.0)
        self._lu_pure = lu
        self.pivots = piv
        if piv is None:
            self.n_modified = n
            self._min_piv = -self.delta
        else:
            self.n_modified = int(np.count_nonzero(piv < self.delta))
            self._min_piv = float(piv.min())
        self.shift = 0.0
        self._lu_mod = lu if self.n_modified == 0 and lu is not None else None

    @property
    def pure_available(self) -> bool:
        return self._lu_pure is not None

    def _ensure_modified(self):
        if self._lu_mod is not None:
            return
        # The most negative unmodified pivot sets the search scale, but can
        # exceed the most negative eigenvalue by orders of magnitude, so the
        # first accepted boost is refined back down: an oversized shift would
        # crush the convergence rate of the softest (and the escaping
        # negative-curvature) modes.
        tau = max(self.delta, 1e-2 * abs(self._min_piv))
        accepted = None
        for _ in range(120):
            lu, piv = self._attempt(self._K, tau)
            if piv is not None and piv.min() >= self.delta:
                accepted = (lu, tau)
                break
            tau *= self._shift_growth
        if accepted is None:
            raise NumericalError("matrix stays singular under diagonal modification")
        lu, tau = accepted
        for _ in range(12):
            tau_try = tau / self._shift_growth
            if tau_try < self.delta:
                break
            lu_try, piv = self._attempt(self._K, tau_try)
            if piv is None or piv.min() < self.delta:
                break
            lu, tau = lu_try, tau_try
        self._lu_mod = lu
        self.shift = tau

    @staticmethod
    def _attempt(K: sp.csc_matrix, shift: float):
        Ks = K if shift == 0.0 else (K + shift * sp.identity(K.shape[0], format="csc")).tocsc()
        try:
            lu = splu(
                Ks,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True, IterRefine="NOREFINE"),
            )
        except RuntimeError:
            return None, None
        if not np.array_equal(lu.perm_r, lu.perm_c):
            # Row pivoting kicked in; the pivot signs no longer read inertia.
            return None, None
        return lu, lu.U.diagonal()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve against K + E (modified; a descent direction for -gradient)."""
        self._ensure_modified()
        return self._lu_mod.solve(rhs)

    def solve_pure(self, rhs: np.ndarray) -> np.ndarray:
        """Solve against the unmodified K (requires ``pure_available``)."""
        return self._lu_pure.solve(rhs)


def modified_cholesky(K, pivot_floor_scale: float = 1e-14):
    """Factor a symmetric matrix with non-positive pivots boosted.

    Returns (factorization, n_modified) where n_modified counts the pivots of
    the unmodified attempt that required boosting; the factorization solves
    against K + E with diagonal E >= 0, and E = 0 for safely positive
    definite K.
    """
    fact = ModifiedCholesky(K, pivot_floor=pivot_floor_scale)
    return fact, fact.n_modified


def equilibrium_inertia(K_ff: sp.spmatrix, pivot_floor: float = 1e-14) -> int:
    """Count of non-positive (sub-floor) pivots of an unmodified attempt."""
    K_ff = sp.csc_matrix(K_ff)
    diag = K_ff.diagonal()
    scale = float(np.max(np.abs(diag))) if K_ff.shape[0] else 1.0
    delta = pivot_floor * max(scale, 1e-30)
    _, piv = ModifiedCholesky._attempt(K_ff, 0.0)
    if piv is None:
        return K_ff.shape[0]
    return int(np.count_nonzero(piv < delta))


@dataclass
class _StepState:
    """Converged state snapshot: displacement plus committed history."""

    u: np.ndarray
    grad_ln_q: np.ndarray | None

    @classmethod
    def take(cls, problem) -> "_StepState":
        g = problem.states.grad_ln_q.copy() if problem.states is not None else None
        return cls(problem.last_u(), g)

    def restore(self, problem) -> None:
        problem.set_last_u(self.u)
        if self.grad_ln_q is not None:
            problem.states.grad_ln_q = self.grad_ln_q.copy()


def _newton_solve(problem, program: LoadProgram, lam: float, config: SolverConfig, u_init=None):
    """One equilibrium solve at load factor ``lam`` from the committed state.

    Returns (report, u, trial, K_free or None).  Failure (non-convergence or
    an invalid material state) is reported, not raised, so the caller can
    adapt the step.  ``u_init`` optionally overrides the starting iterate
    (prescribed dofs are still enforced).
    """
    free = problem.constraints.free_dofs()
    u_committed = problem.last_u()
    u = u_committed.copy() if u_init is None else np.asarray(u_init, dtype=float).copy()
    lam_c = lam if program.control == "displacement" else 1.0
    problem.constraints.apply(u, lam_c)
    pressure = lam * program.target if program.control == "pressure" else None
    f_ext = lam * problem.external_force if program.control == "point_load" else None

    ref = None
    energy0 = None
    sys0 = None
    best_rnorm = np.inf
    sticky_modified = False
    for it in range(config.max_iterations + 1):
        try:
            sys0 = problem.assemble(u, u_committed, pressure=pressure)
        except InvalidStateError as exc:
            return StepReport(False, it, np.inf, 0, 0.0, str(exc)), u, None, None, None
        if energy0 is None:
            energy0 = sys0.energy
        R = sys0.R.copy()
        if f_ext is not None:
            R -= f_ext
        r_free = R[free]
        rnorm = float(np.linalg.norm(r_free))
        if ref is None:
            ref = _external_scale(problem, program, lam, u, R, pressure)
            ref = max(ref, rnorm)
        if rnorm <= max(config.rel_tol * ref, config.abs_tol):
            return (
                StepReport(True, it, rnorm, 0, 0.0),
                u,
                sys0.trial_grad_ln_q,
                sys0,
                energy0,
            )
        if rnorm > config.divergence_guard * max(best_rnorm, 1e-3 * ref) and it > 2:
            return StepReport(False, it, rnorm, 0, 0.0, "residual diverged"), u, None, None, None
        if rnorm > 10.0 * best_rnorm:
            # The plain direction is wandering; insist on descent directions.
            sticky_modified = True
        best_rnorm = min(best_rnorm, rnorm)
        if it == config.max_iterations:
            break
        K_ff = sys0.K[free][:, free]
        fact = ModifiedCholesky(K_ff, config.mc_pivot_floor, config.mc_shift_growth)
        use_pure = fact.pure_available and (
            fact.n_modified == 0
            or (not sticky_modified and rnorm <= config.endgame_rel * ref)
        )
        try:
            d = fact.solve_pure(-r_free) if use_pure else fact.solve(-r_free)
        except NumericalError as exc:
            return StepReport(False, it, rnorm, 0, 0.0, str(exc)), u, None, None, None
        if not np.all(np.isfinite(d)):
            return StepReport(False, it, rnorm, 0, 0.0, "non-finite direction"), u, None, None, None
        u[free] += d
    return (
        StepReport(False, config.max_iterations, rnorm, 0, 0.0, "no convergence"),
        u,
        None,
        None,
        None,
    )


def _external_scale(problem, program, lam, u, R, pressure) -> float:
    if program.control == "pressure":
        f = problem.pneumatic_internal_force(u, pressure=pressure)
        return float(np.linalg.norm(f[problem.constraints.free_dofs()]))
    if program.control == "point_load":
        return float(abs(lam) * np.linalg.norm(problem.external_force))
    presc = problem.constraints.prescribed_dofs
    return float(np.linalg.norm(R[presc])) if presc.size else 0.0


def _record(problem, program, history, lam, t, report, sys_final, energy0, n_mod):
    mesh = problem.mesh
    u = problem.last_u()
    pressure = lam * program.target if program.control == "pressure" else problem.medium_model.p
    disp = lam * program.target if program.control == "displacement" else 0.0
    reaction = 0.0
    if problem.reaction_dofs is not None and problem.reaction_dofs.size:
        reaction = float(np.sum(sys_final.R[problem.reaction_dofs]))
    gap_val = 0.0
    if "gap" in mesh.probe_pairs:
        gap_val = postprocess.gap(mesh, u, mesh.probe_pairs["gap"])
    vol = postprocess.void_volume(mesh, u) if problem.medium_kernel is not None else 0.0

    history.rows.append(
        StepRecord(
            step=len(history.rows),
            time=t,
            load_factor=lam,
            pressure_pa=pressure,
            control_disp_m=disp,
            reaction_n=reaction,
            gap_m=gap_val,
            void_volume_m2=vol,
            newton_iters=report.iterations,
            n_modified=n_mod,
        )
    )
    history.add_extra("energy_start", energy0)
    history.add_extra("energy_end", sys_final.energy)
    for name, fn in problem.extra_probes.items():
        history.add_extra(name, fn(mesh, u))
    return n_mod


def run_load_program(problem, program: LoadProgram, config: SolverConfig) -> RunHistory:
    """Advance the load factor over the program's legs with adaptive stepping.

    Steps that fail (no convergence within the iteration cap, or an invalid
    deformation state) halve the increment, up to ``max_halvings`` times in a
    row before the run aborts with the partial history; successful steps grow
    the next increment by ``growth``.  Abort is a normal outcome: the history
    then ends at the last converged state.
    """
    problem.config_track_inertia = config.track_inertia
    problem.mc_pivot_floor = config.mc_pivot_floor
    history = RunHistory()
    t = 0.0

    # reference state row (step 0 at zero load)
    report0, u0, trial0, sys_f, e0 = _newton_solve(problem, program, 0.0, config)
    if not report0.converged:
        history.completed = False
        history.abort_reason = f"reference state: {report0.reason}"
        return history
    problem.commit(u0, trial0)
    free = problem.constraints.free_dofs()
    n_mod0 = (
        equilibrium_inertia(sys_f.K[free][:, free], config.mc_pivot_floor)
        if config.track_inertia
        else 0
    )
    _record(problem, program, history, 0.0, t, report0, sys_f, e0, n_mod0)

    bracket = None
    kick_failures = 0
    for lam_start, lam_end in program.legs():
        lam = lam_start
        span = lam_end - lam_start
        dlam = program.initial_step * abs(span)
        halvings = 0
        prev_inertia = history.rows[-1].n_modified if history.rows else 0
        prev_lam = lam
        while abs(lam - lam_end) > 1e-12:
            if program.max_step is not None:
                dlam = min(dlam, program.max_step * abs(span))
            step = min(dlam, abs(lam_end - lam))
            lam_try = lam + np.sign(span) * step
            report, u, trial, sys_f, e_start = _newton_solve(problem, program, lam_try, config)
            if not report.converged:
                halvings += 1
                if halvings > config.max_halvings or step < config.min_step:
                    history.completed = False
                    history.abort_reason = (
                        f"step to load factor {lam_try:.6g} failed after "
                        f"{halvings - 1} halvings: {report.reason}"
                    )
                    history.bifurcation = bracket
                    return history
                dlam = step / 2.0
                continue
            halvings = 0
            state_before = _StepState.take(problem)

            fact_eq = None
            n_mod = 0
            if config.track_inertia:
                fact_eq = ModifiedCholesky(
                    sys_f.K[free][:, free], config.mc_pivot_floor, config.mc_shift_growth
                )
                n_mod = fact_eq.n_modified

            if (
                config.bisect_critical
                and bracket is None
                and prev_inertia == 0
                and n_mod > 0
            ):
                bracket = _bisect_critical(
                    problem, program, config, state_before, prev_lam, lam_try
                )
                state_before.restore(problem)

            if (
                n_mod > 0
                and config.branch_switch_kick > 0
                and fact_eq is not None
                and kick_failures < 6
            ):
                switched = _branch_switch(
                    problem, program, config, lam_try, u, sys_f, fact_eq, free
                )
                if switched is not None:
                    u, trial, sys_f, fact_eq = switched
                    n_mod = fact_eq.n_modified
                else:
                    kick_failures += 1

            problem.commit(u, trial)
            t += step
            _record(problem, program, history, lam_try, t, report, sys_f, e_start, n_mod)

            prev_inertia = n_mod
            prev_lam = lam_try
            lam = lam_try
            dlam = step * config.growth
    history.completed = True
    history.bifurcation = bracket
    return history


def _negative_mode(fact: ModifiedCholesky, n: int, iterations: int = 12) -> np.ndarray | None:
    """Approximate eigenvector of the smallest-magnitude eigenvalue.

    Inverse iteration with the unmodified factorization; near a bifurcation
    the near-singular mode dominates after a few applications.
    """
    if not fact.pure_available:
        return None
    v = np.sin(3.7 * np.arange(1, n + 1))  # deterministic, unbiased seed
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        v = fact.solve_pure(v)
        norm = np.linalg.norm(v)
        if not np.isfinite(norm) or norm == 0.0:
            return None
        v /= norm
    return v


def _branch_switch(problem, program, config, lam, u_saddle, sys_saddle, fact_eq, free):
    """Kick a converged saddle state along its negative mode and re-solve.

    The kick amplitude scales with the displacement magnitude itself, so just
    past a pitchfork it reaches the nearby stable branch.  Returns the
    replacement (u, trial, system, factorization) when the re-solve lands on
    a fully positive-definite state without raising the energy, else None.
    """
    v = _negative_mode(fact_eq, free.size)
    if v is None:
        return None
    amp = config.branch_switch_kick * max(float(np.linalg.norm(u_saddle[free])), 1e-12)
    # The kicked residual lies along the near-null mode, so a plain Newton
    # endgame would pull straight back onto the saddle; forcing the boosted
    # (descent) direction walks the iterates out of the unstable mode.
    escape_cfg = replace(
        config,
        max_iterations=3 * config.max_iterations,
        endgame_rel=0.0,
        divergence_guard=1e12,
    )
    for sign in (1.0, -1.0):
        u_kick = u_saddle.copy()
        u_kick[free] += sign * amp * v
        report, u2, trial2, sys2, _ = _newton_solve(
            problem, program, lam, escape_cfg, u_init=u_kick
        )
        if not report.converged:
            continue
        fact2 = ModifiedCholesky(
            sys2.K[free][:, free], config.mc_pivot_floor, config.mc_shift_growth
        )
        if fact2.n_modified == 0 and sys2.energy <= sys_saddle.energy + 1e-9 * abs(
            sys_saddle.energy
        ):
            return u2, trial2, sys2, fact2
    return None


def _bisect_critical(problem, program, config, stable_state: _StepState, lam_lo, lam_hi):
    """Shrink the (stable, unstable) load-factor bracket by bisection.

    Each probe re-solves from the last stable state; non-convergence counts
    as the unstable side.  Returns the bracket in pressure units for pressure
    control, otherwise in control units.
    """
    res = config.bisect_resolution * max(abs(lam_hi - lam_lo), 1e-12)
    res = max(res, config.bisect_resolution * abs(lam_hi))
    lo, hi = lam_lo, lam_hi
    lo_state = stable_state
    free = problem.constraints.free_dofs()
    for _ in range(40):
        if abs(hi - lo) <= res:
            break
        mid = 0.5 * (lo + hi)
        lo_state.restore(problem)
        report, u, trial, sys_f, _ = _newton_solve(problem, program, mid, config)
        if not report.converged:
            hi = mid
            continue
        n_mod = equilibrium_inertia(sys_f.K[free][:, free], config.mc_pivot_floor)
        if n_mod > 0:
            hi = mid
        else:
            problem.commit(u, trial)
            lo_state = _StepState.take(problem)
            lo = mid
    scale = program.target if program.control in ("pressure", "displacement") else 1.0
    return (lo * scale, hi * scale)


def detect_bifurcation(history: RunHistory):
    """Critical-load estimate from the recorded inertia sequence.

    Returns the refined bracket boundary when bisection ran, else the load of
    the first converged step whose equilibrium factorization needed modified
    pivots.  Returns None when no instability was detected.
    """
    if history.bifurcation is not None:
        lo, hi = history.bifurcation
        return 0.5 * (lo + hi)
    n_mod = history.column("n_modified")
    if not len(n_mod):
        return None
    idx = np.flatnonzero(n_mod > 0)
    if idx.size == 0 or idx[0] == 0:
        return None
    i = idx[0]
    p = history.column("pressure_pa")
    if np.any(p != 0):
        return 0.5 * (p[i - 1] + p[i])
    d = history.column("control_disp_m")
    return 0.5 * (d[i - 1] + d[i])
