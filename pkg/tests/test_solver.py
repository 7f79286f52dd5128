import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualdomain.degradation import apply_mask, clip
from dualdomain.feasible import BoxConstraint, build_box, project
from dualdomain.frame import FrameSpec, Linop, identity, make_window
from dualdomain.solver import (ProblemSpec, SolverConfig, SolverDivergence,
                               StepSizeError, check_steps, cv_generic, objective,
                               soft_threshold, solve_general, solve_tight)
from instances import atom, desk_config, random_instance, tiny_frame, tiny_matrix
from oracles import convex_program


def matrix_op(M):
    return Linop(lambda u: M @ u, lambda v: M.T @ v, M.shape[1])


def l1(x, gamma):
    return soft_threshold(x, gamma)


def pinned_problem(model="analysis", P=16):
    frame = tiny_frame(P)
    y = np.random.default_rng(1).standard_normal(P)
    problem = ProblemSpec(frame, BoxConstraint.point(y),
                          BoxConstraint.point(frame.analysis(y), "tf"), model=model)
    return problem, y


@pytest.mark.parametrize("z, t, expected", [
    (0.0, 1.0, 0.0),
    (1.5, 1.0, 0.5),
    (-1.5, 1.0, -0.5),
    (3 + 4j, 2.5, 1.5 + 2j),
    (0.5j, 1.0, 0.0),
])
def test_soft_threshold_examples(z, t, expected):
    assert soft_threshold(np.array([z]), t)[0] == pytest.approx(expected, abs=1e-15)


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        soft_threshold(np.ones(2), np.array([1.0, -1.0]))


def test_soft_threshold_is_prox_of_magnitude():
    # prox of t|.| at z minimizes t|w| + |w - z|^2 / 2 over a grid in the plane
    z, t = 0.8 - 0.6j, 0.3
    g = np.linspace(-1.5, 1.5, 1201)
    W = g[:, None] + 1j * g[None, :]
    obj = t * np.abs(W) + 0.5 * np.abs(W - z) ** 2
    best = W.ravel()[np.argmin(obj)]
    assert abs(soft_threshold(np.array([z]), t)[0] - best) <= 2 * (g[1] - g[0])


def test_cv_generic_scalar_problem():
    box = BoxConstraint(np.array([1.0]), np.array([2.0]))
    I = identity(1)
    res = cv_generic([I, I], [l1, lambda x, g: project(box, x)],
                     SolverConfig(tau=0.5, sigma=1.0, max_iterations=500), np.array([5.0]))
    assert res.u[0] == pytest.approx(1.0, abs=1e-6)
    assert res.iterations_run <= 500


def test_cv_generic_fixed_point_with_zero_weight():
    problem, y = pinned_problem()
    problem = ProblemSpec(problem.frame, BoxConstraint.unbounded(16),
                          BoxConstraint.unbounded(problem.frame.Q, "tf"),
                          weights=np.zeros(problem.frame.Q))
    x, report = solve_tight(problem, SolverConfig(max_iterations=50), init=y)
    np.testing.assert_array_equal(x, y)
    assert report.final_primal_change == 0.0


def test_cv_generic_dense_random_instance():
    rng = np.random.default_rng(7)
    D = rng.standard_normal((6, 6))
    b = rng.standard_normal(6)
    lo, up = -0.3 * np.ones(6), 0.4 * np.ones(6)
    box = BoxConstraint(lo, up)
    # f = |u - b|^2 / 2 (gradient Lipschitz 1), g = box indicator, h = l1 of D u
    u = cp.Variable(6)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(u - b) + cp.norm1(D @ u)),
                      [u >= lo, u <= up])
    prob.solve(solver="CLARABEL")
    Dop = matrix_op(D)
    norm = np.linalg.norm(D, 2) ** 2
    tau = 1.0 / (0.5 + 1.0)
    sigma = 1.0 / (tau * norm) * 0.99 - 0.5 / norm
    cfg = SolverConfig(tau=tau, sigma=sigma, rho=1.0, max_iterations=20000,
                       rel_tolerance=1e-12)
    res = cv_generic([Dop], [l1], cfg, np.zeros(6), prox_g=lambda x, g: project(box, x),
                     grad_f=lambda u: u - b, lipschitz_f=1.0)
    value = 0.5 * np.sum((res.u - b) ** 2) + np.sum(np.abs(D @ res.u))
    assert value == pytest.approx(prob.value, abs=1e-5)


def test_cv_generic_detects_non_finite():
    I = identity(3)
    with pytest.raises(SolverDivergence):
        cv_generic([I], [lambda x, g: np.full_like(x, np.nan)],
                   SolverConfig(tau=0.5, sigma=0.5, max_iterations=20), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-5, 1.0))
def test_step_guard_boundary(eps):
    norm = 2.0
    tau = math.sqrt((1 + eps) / norm)
    with pytest.raises(StepSizeError):
        check_steps(SolverConfig(tau=tau, sigma=tau), norm)
    tau = math.sqrt((1 - min(eps, 0.5)) / norm)
    check_steps(SolverConfig(tau=tau, sigma=tau), norm)


@pytest.mark.parametrize("rho", [0.0, 2.0, 2.5, -1.0])
def test_relaxation_guard(rho):
    with pytest.raises(StepSizeError):
        check_steps(SolverConfig(rho=rho), 2.0)


def test_default_config_passes_validation():
    cfg = SolverConfig()
    assert (cfg.tau, cfg.sigma, cfg.rho, cfg.max_iterations) == (
        math.sqrt(2) / 2, math.sqrt(2) / 2, 1.0, 300)
    check_steps(cfg, 2.0)
    with pytest.raises(StepSizeError):
        check_steps(cfg, 3.0)
    check_steps(SolverConfig.for_general(), 3.0)


def test_general_defaults_rejected_by_wrong_assignment():
    problem, _ = pinned_problem()
    with pytest.raises(StepSizeError):
        solve_general(problem, SolverConfig())


@pytest.mark.parametrize("model", ["analysis", "synthesis"])
@pytest.mark.parametrize("solver", [solve_general, solve_tight])
def test_fully_pinned_returns_original(model, solver):
    problem, y = pinned_problem(model)
    norm = 3.0 if solver is solve_general else 2.0
    x, report = solver(problem, desk_config(norm))
    np.testing.assert_allclose(x, y, atol=1e-10)
    # an atol of 1e-10 on x moves the l1 sum over Q coefficients by up to ~1e-9
    assert report.objective == pytest.approx(np.sum(np.abs(problem.frame.analysis(y))),
                                             rel=1e-8)


def test_solve_tight_rejects_non_tight_frame():
    frame = FrameSpec(8, 4, 8, 16, make_window("hann", 8))
    problem = ProblemSpec(frame, BoxConstraint.unbounded(16),
                          BoxConstraint.unbounded(frame.Q, "tf"))
    with pytest.raises(ValueError, match="tight"):
        solve_tight(problem)
    # the general algorithm accepts any frame
    solve_general(problem, SolverConfig(tau=0.2, sigma=0.2, max_iterations=10))


def test_dimension_mismatch():
    frame = tiny_frame(16)
    with pytest.raises(ValueError):
        ProblemSpec(frame, BoxConstraint.unbounded(15), BoxConstraint.unbounded(frame.Q, "tf"))
    with pytest.raises(ValueError):
        ProblemSpec(frame, BoxConstraint.unbounded(16), BoxConstraint.unbounded(frame.Q))
    with pytest.raises(ValueError):
        ProblemSpec(frame, BoxConstraint.unbounded(16),
                    BoxConstraint.unbounded(frame.Q, "tf"), weights=-np.ones(frame.Q))


def test_inpainting_general_and_tight_agree():
    frame = tiny_frame(16)
    y = np.random.default_rng(2).standard_normal(16)
    _, rec = apply_mask(y, np.arange(0, 16, 2))
    problem = ProblemSpec(frame, build_box(rec), BoxConstraint.unbounded(frame.Q, "tf"))
    xg, _ = solve_general(problem, desk_config(3.0))
    xt, _ = solve_tight(problem, desk_config(2.0))
    assert np.linalg.norm(xg - xt) <= 1e-5 * np.linalg.norm(xt)


def test_exact_sparse_atom_recovery():
    # a single atom is 1-sparse in the synthesis model, where l1 recovery holds
    frame = tiny_frame(32)
    y = atom(frame, 2 * frame.channels + 2)
    y /= np.max(np.abs(y))
    keep = np.sort(np.random.default_rng(3).choice(32, 16, replace=False))
    _, rec = apply_mask(y, keep)
    problem = ProblemSpec(frame, build_box(rec), BoxConstraint.unbounded(frame.Q, "tf"),
                          model="synthesis")

    def sdr(x):
        return 10 * np.log10(np.sum(y ** 2) / np.sum((y - x) ** 2))

    x, _ = solve_general(problem, SolverConfig.for_general(max_iterations=300))
    assert sdr(x) >= 40
    x, _ = solve_tight(problem, SolverConfig(max_iterations=300))
    assert sdr(x) >= 40
    # the convex program itself recovers the atom
    _, u = convex_program(tiny_matrix(32), problem.box_T, problem.box_TF, "synthesis")
    assert sdr(frame.synthesis(u)) >= 40


def test_declipping_consistency():
    frame = tiny_frame(32)
    y = atom(frame, 8 + 1) + 0.7 * atom(frame, 3 * 8 + 3, phase=0.4)
    y /= np.max(np.abs(y))
    theta = 0.5
    _, rec = clip(y, theta)
    problem = ProblemSpec(frame, build_box(rec), BoxConstraint.unbounded(frame.Q, "tf"))
    x, report = solve_tight(problem)
    high = rec.tag == 3
    low = rec.tag == 2
    assert high.any() and low.any()
    assert np.all(x[high] >= theta - 1e-6)
    assert np.all(x[low] <= -theta + 1e-6)
    assert report.dist_T <= 1e-6


def test_objective_examples():
    problem, y = pinned_problem()
    assert objective(problem, np.zeros(16)) == 0.0
    zero_w = ProblemSpec(problem.frame, problem.box_T, problem.box_TF,
                         weights=np.zeros(problem.frame.Q))
    assert objective(zero_w, y) == 0.0
    a = atom(problem.frame, 9)
    A = tiny_matrix(16)
    direct = sum(abs(v) for v in A @ a)
    assert objective(problem, 2.5 * a) == pytest.approx(2.5 * direct, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_optimality_against_convex_program(seed):
    model = ("analysis", "synthesis")[seed % 2]
    problem, x_true = random_instance(100 + seed, model)
    opt, _ = convex_program(tiny_matrix(problem.frame.P), problem.box_T,
                            problem.box_TF, model)
    for solver, norm in ((solve_tight, 2.0), (solve_general, 3.0)):
        _, report = solver(problem, desk_config(norm))
        assert report.objective == pytest.approx(opt, abs=1e-5)
        assert report.dist_T <= 1e-6 and report.dist_TF <= 1e-6
        assert report.iterations_run < 30000


def test_both_models_feasible_and_near_their_optima():
    for model in ("analysis", "synthesis"):
        problem, _ = random_instance(11, model, tf=False)
        opt, _ = convex_program(tiny_matrix(problem.frame.P), problem.box_T,
                                problem.box_TF, model)
        _, report = solve_tight(problem, desk_config(2.0))
        scale = np.linalg.norm(problem.box_T.center())
        assert report.dist_T <= 1e-4 * scale and report.dist_TF <= 1e-4 * scale
        assert abs(report.objective - opt) <= 0.05 * opt


def test_weight_scaling():
    problem, _ = random_instance(21, "analysis")
    c = 3.0
    scaled = ProblemSpec(problem.frame, problem.box_T, problem.box_TF,
                         weights=c * np.ones(problem.frame.Q))
    _, r1 = solve_tight(problem, desk_config(2.0))
    _, r2 = solve_tight(scaled, desk_config(c * c + 1.0))
    assert r2.objective == pytest.approx(c * r1.objective, rel=1e-6)
    assert r2.dist_T <= 1e-8 and r2.dist_TF <= 1e-8


def test_early_stop_before_max_iterations():
    problem, _ = random_instance(5, "analysis")
    _, report = solve_tight(problem, desk_config(2.0, rel_tolerance=1e-6))
    assert report.iterations_run < 30000
    assert report.final_primal_change <= 1e-5


def _distance_expr(expr, box):
    lo, up = box.lower, box.upper
    lo = np.where(np.isfinite(lo), lo, -1e6)
    up = np.where(np.isfinite(up), up, 1e6)
    return cp.norm(cp.pos(lo - expr) + cp.pos(expr - up), 2)


@pytest.mark.parametrize("model", ["analysis", "synthesis"])
def test_inconsistent_mode_against_convex_program(model):
    problem, _ = random_instance(31, model)
    # perturb the observation so hard constraints would be much more restrictive
    noisy = ProblemSpec(problem.frame, problem.box_T, problem.box_TF, model=model,
                        mode="inconsistent", lambda_T=0.7, lambda_TF=0.4)
    A = tiny_matrix(problem.frame.P)
    if model == "analysis":
        u = cp.Variable(problem.frame.P)
        Ku, Lu = A @ u, u
    else:
        u = cp.Variable(problem.frame.Q, complex=True)
        Ku, Lu = u, cp.real(A.conj().T @ u)
    KuR = cp.vec(cp.vstack([cp.real(Ku), cp.imag(Ku)]), order="F")
    prog = cp.Problem(cp.Minimize(cp.sum(cp.abs(Ku))
                                  + 0.7 * _distance_expr(Lu, problem.box_T)
                                  + 0.4 * _distance_expr(KuR, problem.box_TF)))
    prog.solve(solver="CLARABEL")
    for solver, norm in ((solve_tight, 2.0), (solve_general, 3.0)):
        _, report = solver(noisy, desk_config(norm))
        value = report.objective + 0.7 * report.dist_T + 0.4 * report.dist_TF
        assert value == pytest.approx(prog.value, abs=1e-5)


def test_synthesis_minimizer_can_be_non_unique():
    # both algorithms reach the optimal value but different optimal coefficients;
    # their midpoint is optimal too, so the solution set is not a single point
    problem, _ = random_instance(1013, "synthesis")
    _, rt = solve_tight(problem, desk_config(2.0))
    _, rg = solve_general(problem, desk_config(3.0))
    assert rg.objective == pytest.approx(rt.objective, abs=1e-8)
    xt, xg = problem.frame.synthesis(rt.primal), problem.frame.synthesis(rg.primal)
    assert np.linalg.norm(xt - xg) > 1e-3 * np.linalg.norm(xt)
    mid = (rt.primal + rg.primal) / 2
    assert np.sum(np.abs(mid)) == pytest.approx(rt.objective, abs=1e-8)
