"""Condat-Vu primal-dual splitting for sparse reconstruction under box constraints.

The problem solved is

    minimize  || W K u ||_1   subject to   L u in box_T,   K u in box_TF

with ``(L, K) = (A*, Id)`` in the synthesis model (``u`` are coefficients) and
``(L, K) = (Id, A)`` in the analysis model (``u`` is the signal). ``A`` is the
Gabor analysis operator.

:func:`solve_general` works for any frame and treats both constraints as dual
blocks. :func:`solve_tight` needs a Parseval frame and handles the time-domain
constraint in the primal step instead, which halves the operator norm bound and
allows larger steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .feasible import BoxConstraint, distance, prox_distance, project
from .frame import (FrameSpec, Linop, analysis_op, diagonal_op, identity,
                    operator_norm, synthesis_op)

ANALYSIS = "analysis"
SYNTHESIS = "synthesis"
CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"

# slack on the step-size guard, matching the power-iteration accuracy
NORM_RTOL = 1e-6


class StepSizeError(ValueError):
    pass


class SolverDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tau: float = math.sqrt(2) / 2
    sigma: float = math.sqrt(2) / 2
    rho: float = 1.0
    max_iterations: int = 300
    rel_tolerance: float | None = None

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma > 0):
            raise StepSizeError("tau and sigma must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")

    @classmethod
    def for_tight(cls, **kw) -> "SolverConfig":
        """Step sizes for the two-operator assignment with ``W = Id``."""
        return cls(**kw)

    @classmethod
    def for_general(cls, **kw) -> "SolverConfig":
        """Step sizes for the three-operator assignment with ``W = Id``."""
        s = 1.0 / math.sqrt(3.0)
        kw.setdefault("tau", s)
        kw.setdefault("sigma", s)
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    frame: FrameSpec
    box_T: BoxConstraint
    box_TF: BoxConstraint
    model: str = ANALYSIS
    weights: np.ndarray | None = None
    mode: str = CONSISTENT
    # distance penalties, used only in inconsistent mode
    lambda_T: float = 1.0
    lambda_TF: float = 1.0

    def __post_init__(self):
        if self.model not in (ANALYSIS, SYNTHESIS):
            raise ValueError(f"unknown model {self.model!r}")
        if self.mode not in (CONSISTENT, INCONSISTENT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.box_T.domain != "time" or self.box_T.size != self.frame.P:
            raise ValueError(f"time box must constrain {self.frame.P} samples")
        if self.box_TF.domain != "tf" or self.box_TF.size != self.frame.Q:
            raise ValueError(f"TF box must constrain {self.frame.Q} coefficients")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.frame.Q,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be Q finite nonnegative values")
            object.__setattr__(self, "weights", w)
        if self.lambda_T <= 0 or self.lambda_TF <= 0:
            raise ValueError("distance penalties must be positive")

    @property
    def W(self) -> np.ndarray:
        return np.ones(self.frame.Q) if self.weights is None else self.weights

    def operators(self) -> tuple[Linop, Linop]:
        """``(L, K)`` for the chosen model."""
        if self.model == SYNTHESIS:
            return synthesis_op(self.frame), identity(self.frame.Q, complex_domain=True)
        return identity(self.frame.P), analysis_op(self.frame)

    def initial_point(self) -> np.ndarray:
        """The degraded observation, or its coefficients in the synthesis model."""
        x0 = self.box_T.center()
        return self.frame.analysis(x0) if self.model == SYNTHESIS else x0

    def to_signal(self, u: np.ndarray) -> np.ndarray:
        return self.frame.synthesis(u) if self.model == SYNTHESIS else np.array(u)


@dataclass
class SolveReport:
    iterations_run: int
    final_primal_change: float
    dist_T: float
    dist_TF: float
    objective: float
    primal: np.ndarray | None = field(default=None, repr=False)


@dataclass
class CVResult:
    u: np.ndarray
    duals: list
    iterations_run: int
    final_primal_change: float


def soft_threshold(z, t) -> np.ndarray:
    """Shrink magnitudes by ``t`` entrywise, keeping phase; prox of ``t * |.|``."""
    z = np.asarray(z)
    t = np.broadcast_to(np.asarray(t, dtype=float), z.shape)
    if np.any(t < 0):
        raise ValueError("negative threshold")
    mag = np.abs(z)
    gain = np.zeros(z.shape)
    nz = mag > t
    gain[nz] = 1.0 - t[nz] / mag[nz]
    return z * gain


def check_steps(config: SolverConfig, norm: float, lipschitz: float = 0.0) -> None:
    """Reject step sizes outside the convergence region of the CV iteration.

    With a smooth term of gradient Lipschitz constant ``lipschitz`` the condition is
    ``1/tau - sigma*norm >= lipschitz/2`` and ``0 < rho < delta``; for
    ``lipschitz = 0`` this reduces to ``tau*sigma*norm <= 1`` and ``0 < rho < 2``.
    """
    tau, sigma, rho = config.tau, config.sigma, config.rho
    slack = 1.0 / tau - sigma * norm
    if tau * sigma * norm > 1.0 + NORM_RTOL or (lipschitz > 0 and slack < lipschitz / 2):
        raise StepSizeError(
            f"step sizes violate convergence bound: tau*sigma*||sum L*L|| = "
            f"{tau * sigma * norm:.9g} (norm {norm:.9g})")
    delta = 2.0 if lipschitz == 0 else 2.0 - lipschitz / (2.0 * slack)
    if not 0.0 < rho < delta:
        raise StepSizeError(f"relaxation rho={rho} outside (0, {delta:.6g})")


def cv_generic(operators: Sequence[Linop], dual_proxes: Sequence[Callable],
               config: SolverConfig, u0: np.ndarray, *,
               prox_g: Callable | None = None, grad_f: Callable | None = None,
               lipschitz_f: float = 0.0, v0: Sequence[np.ndarray] | None = None,
               norm: float | None = None) -> CVResult:
    """Generic Condat-Vu iteration for ``f(u) + g(u) + sum_m h_m(L_m u)``.

    ``dual_proxes[m](x, gamma)`` must return ``prox_{gamma h_m}(x)``; the dual step
    uses it through the Moreau identity. ``prox_g(x, gamma)`` likewise, and
    ``grad_f`` the gradient of the smooth term. Dual variables start at zero unless
    ``v0`` is given.
    """
    if len(operators) != len(dual_proxes):
        raise ValueError("one prox per operator required")
    if norm is None:
        norm = operator_norm(operators)
    check_steps(config, norm, lipschitz_f)
    tau, sigma, rho = config.tau, config.sigma, config.rho

    u = np.array(u0, copy=True)
    if v0 is None:
        v = [np.zeros_like(op(u)) for op in operators]
    else:
        v = [np.array(x, copy=True) for x in v0]
    groups = _group_by_base(operators)

    change = 0.0
    it = 0
    for it in range(1, config.max_iterations + 1):
        Lu = _forward(groups, operators, u)
        vt = []
        for m, prox in enumerate(dual_proxes):
            x = v[m] + sigma * Lu[m]
            vt.append(x - sigma * prox(x / sigma, 1.0 / sigma))
        reflected = [2.0 * vt[m] - v[m] for m in range(len(operators))]
        step = _adjoint_sum(groups, operators, reflected)
        if grad_f is not None:
            step = step + grad_f(u)
        ut = u - tau * step
        if prox_g is not None:
            ut = prox_g(ut, tau)
        u_new = ut if rho == 1.0 else rho * ut + (1.0 - rho) * u
        v_new = vt if rho == 1.0 else [rho * a + (1.0 - rho) * b for a, b in zip(vt, v)]

        last = it == config.max_iterations
        if config.rel_tolerance is not None or last:
            change = float(np.linalg.norm(u_new - u))
            ref = float(np.linalg.norm(u))
        if config.rel_tolerance is not None:
            # the primal iterate can stall while duals still move, so both must settle
            dual_change = math.sqrt(sum(np.linalg.norm(a - b) ** 2
                                        for a, b in zip(v_new, v)))
            dual_ref = math.sqrt(sum(np.linalg.norm(b) ** 2 for b in v))
        u, v = u_new, v_new
        if it % 10 == 0 or last:
            if not (np.all(np.isfinite(u)) and all(np.all(np.isfinite(x)) for x in v)):
                raise SolverDivergence(
                    f"non-finite iterate at iteration {it}; tau={tau}, sigma={sigma}, "
                    f"rho={rho}, norm={norm:.6g}")
        if (config.rel_tolerance is not None
                and change <= config.rel_tolerance * ref
                and dual_change <= config.rel_tolerance * dual_ref):
            break
    return CVResult(u, v, it, change / max(float(np.linalg.norm(u)), 1e-300))


def _group_by_base(operators):
    """Map each operator to ``(base index, weight)`` sharing repeated base transforms."""
    bases, groups = [], []
    for op in operators:
        base = op.base if op.base is not None else op
        for j, b in enumerate(bases):
            if b is base:
                break
        else:
            bases.append(base)
            j = len(bases) - 1
        groups.append((j, op.weight if op.base is not None else None))
    return bases, groups


def _forward(grouping, operators, u):
    bases, groups = grouping
    out_base = [b.apply(u) for b in bases]
    return [out_base[j] if w is None else w * out_base[j] for j, w in groups]


def _adjoint_sum(grouping, operators, ys):
    bases, groups = grouping
    acc = [None] * len(bases)
    for (j, w), y in zip(groups, ys):
        term = y if w is None else w * y
        acc[j] = term if acc[j] is None else acc[j] + term
    return sum(b.adjoint(a) for b, a in zip(bases, acc) if a is not None)


def objective(problem: ProblemSpec, u: np.ndarray) -> float:
    """Weighted l1 norm of ``K u`` (sum of complex magnitudes)."""
    _, K = problem.operators()
    return float(np.sum(problem.W * np.abs(K(u))))


def _box_prox(box: BoxConstraint, mode: str, penalty: float) -> Callable:
    if mode == CONSISTENT:
        return lambda x, gamma: project(box, x)
    return lambda x, gamma: prox_distance(box, x, gamma * penalty)


def _report(problem: ProblemSpec, res: CVResult) -> SolveReport:
    L, K = problem.operators()
    return SolveReport(
        iterations_run=res.iterations_run,
        final_primal_change=res.final_primal_change,
        dist_T=distance(problem.box_T, L(res.u)),
        dist_TF=distance(problem.box_TF, K(res.u)),
        objective=objective(problem, res.u),
        primal=res.u,
    )


def _l1_prox(x, gamma):
    return soft_threshold(x, gamma)


def assignment(problem: ProblemSpec, algorithm: str) -> list[Linop]:
    """Operators ``L_m`` of the CV assignment for ``algorithm`` (general | tight)."""
    L, K = problem.operators()
    WK = diagonal_op(problem.W, K)
    if algorithm == "general":
        return [WK, L, K]
    if algorithm == "tight":
        return [WK, K]
    raise ValueError(f"unknown algorithm {algorithm!r}")


def solve_general(problem: ProblemSpec, config: SolverConfig | None = None,
                  init: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Three dual blocks: l1 prior, time box and TF box. Any frame."""
    config = config or SolverConfig.for_general()
    ops = assignment(problem, "general")
    proxes = [_l1_prox,
              _box_prox(problem.box_T, problem.mode, problem.lambda_T),
              _box_prox(problem.box_TF, problem.mode, problem.lambda_TF)]
    u0 = problem.initial_point() if init is None else init
    res = cv_generic(ops, proxes, config, u0)
    return problem.to_signal(res.u), _report(problem, res)


def solve_tight(problem: ProblemSpec, config: SolverConfig | None = None,
                init: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Two dual blocks (l1 prior, TF box); the time box enters through ``prox_g``.

    Requires a Parseval frame, for which ``L L* = Id`` and
    ``prox_{iota(L .)}(w) = w + L*(proj(L w) - L w)``.
    """
    if not problem.frame.is_tight(1e-8):
        raise ValueError("solve_tight requires a Parseval tight frame")
    config = config or SolverConfig.for_tight()
    L, _ = problem.operators()
    box_T = problem.box_T
    consistent = problem.mode == CONSISTENT

    def prox_g(w, gamma):
        Lw = L(w)
        if consistent:
            target = project(box_T, Lw)
        else:
            target = prox_distance(box_T, Lw, gamma * problem.lambda_T)
        if problem.model == ANALYSIS:
            return target
        return w + L.adjoint(target - Lw)

    ops = assignment(problem, "tight")
    proxes = [_l1_prox, _box_prox(problem.box_TF, problem.mode, problem.lambda_TF)]
    u0 = problem.initial_point() if init is None else init
    res = cv_generic(ops, proxes, config, u0, prox_g=prox_g)
    return problem.to_signal(res.u), _report(problem, res)


def solve(problem: ProblemSpec, config: SolverConfig | None = None,
          algorithm: str = "tight", init=None) -> tuple[np.ndarray, SolveReport]:
    if algorithm == "tight":
        return solve_tight(problem, config, init)
    if algorithm == "general":
        return solve_general(problem, config, init)
    raise ValueError(f"unknown algorithm {algorithm!r}")
