#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║   
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║   
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║   
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝   
# CURE SCHEDULE OPTIMIZATION TEST SCRIPT v1.0
# CODEX: Constraint margins, feasibility checks and the grid search with refinement.

import json
import math
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cure_sim import ProfileAnchors
from src.errors import ConfigError
from src.optimize import (MAP_COLUMNS, OptProblem, SimulatorEvaluator, SurrogateEvaluator,
                          constraint_margins, feasible, optimize, verify_with_simulator, write_result)


class BowlEvaluator:
    """
    CODEX: Quadratic deformation bowl around a chosen point with a configurable cure map.
    """

    def __init__(self, center=(60.0, 120.0), scale=1.0, doc=lambda t1, T1: np.ones_like(t1)):
        self.center = center
        self.scale = scale
        self.doc = doc
        self.calls = 0

    def check(self, problem):
        return None

    def __call__(self, candidates, problem):
        self.calls += 1
        points = np.asarray(candidates, dtype=float)
        t1, T1 = points[:, 0], points[:, 1]
        bowl = 1.0 + ((t1 - self.center[0]) / 10.0) ** 2 + ((T1 - self.center[1]) / 10.0) ** 2
        return self.doc(t1, T1), self.scale * bowl


@pytest.fixture
def problem():
    return OptProblem(n_t=20, n_T=20, refine_rounds=2, refine_points=5)


# =====================================================================
# CONSTRAINTS
# =====================================================================

def test_problem_validation():
    with pytest.raises(ConfigError):
        OptProblem(doc_min=1.5)
    with pytest.raises(ConfigError):
        OptProblem(n_t=1)
    with pytest.raises(ConfigError):
        OptProblem(refine_points=1)


def test_constraint_margins(problem):
    margins = constraint_margins(60.0, 120.0, 0.995, problem)
    assert margins["t1_lower"] == pytest.approx(60.0 - 1.333)
    assert margins["T1_upper"] == pytest.approx(179.905 - 120.0)
    m1 = 100.0 / (60.0 - 0.333)
    m2 = 59.905 / (171.658 - 60.0)
    assert margins["slope_positive"] == pytest.approx(m2)
    assert margins["slope_order"] == pytest.approx(m1 - m2)
    assert margins["doc_final"] == pytest.approx(0.005)
    outside = constraint_margins(200.0, 120.0, 1.0, problem)
    assert outside["slope_order"] == -math.inf


def test_feasible_reports_each_constraint(problem):
    ok, report = feasible((60.0, 120.0), BowlEvaluator(), problem)
    assert ok
    assert all(value > 0 for name, value in report.items() if name != "doc_final")

    ok, report = feasible((100.0, 30.0), BowlEvaluator(), problem)
    assert not ok
    assert report["slope_order"] < 0

    ok, report = feasible((60.0, 120.0), BowlEvaluator(doc=lambda t1, T1: np.full_like(t1, 0.9)), problem)
    assert not ok
    assert report["doc_final"] == pytest.approx(-0.09)


def test_feasible_skips_the_evaluator_outside_the_box(problem):
    evaluator = BowlEvaluator()
    ok, report = feasible((0.5, 120.0), evaluator, problem)
    assert not ok
    assert evaluator.calls == 0
    assert report["t1_lower"] < 0
    assert math.isnan(report["doc_final"])


# =====================================================================
# SEARCH
# =====================================================================

def test_optimize_finds_the_bowl_minimum(problem):
    result = optimize(BowlEvaluator(), problem)
    assert result.feasible
    t_values, T_values = problem.grid()
    assert abs(result.best[0] - 60.0) <= t_values[1] - t_values[0]
    assert abs(result.best[1] - 120.0) <= T_values[1] - T_values[0]
    assert result.objective == pytest.approx(abs(result.deformation))
    assert result.evaluations > 400
    assert list(result.grid_map.columns) == MAP_COLUMNS
    assert len(result.grid_map) == 400
    feasible_rows = result.grid_map[result.grid_map["feasible"]]
    assert result.objective <= feasible_rows["deformation_mm"].abs().min()


def test_refinement_never_worsens_the_grid_optimum(problem):
    coarse = optimize(BowlEvaluator(center=(63.1, 117.4)), OptProblem(n_t=20, n_T=20, refine_rounds=0))
    refined = optimize(BowlEvaluator(center=(63.1, 117.4)), problem)
    assert refined.objective <= coarse.objective
    assert coarse.evaluations == 400


def test_optimum_is_invariant_to_deformation_sign_and_scale(problem):
    base = optimize(BowlEvaluator(), problem)
    scaled = optimize(BowlEvaluator(scale=-3.0), problem)
    assert scaled.best == base.best
    assert scaled.objective == pytest.approx(3.0 * base.objective)


def test_cure_constraint_cuts_the_region(problem):
    result = optimize(BowlEvaluator(center=(40.0, 120.0), doc=lambda t1, T1: np.where(t1 < 50.0, 0.5, 1.0)),
                      problem)
    assert result.feasible
    assert result.best[0] >= 50.0
    grid = result.grid_map
    assert not grid.loc[grid["t1_min"] < 50.0, "feasible"].any()


def test_ties_go_to_the_earliest_point():
    flat = BowlEvaluator()
    flat.scale = 0.0
    problem = OptProblem(n_t=10, n_T=10, refine_rounds=0)
    result = optimize(flat, problem)
    rows = result.grid_map[result.grid_map["feasible"]].sort_values(["t1_min", "T1_C"])
    assert result.best == (rows.iloc[0]["t1_min"], rows.iloc[0]["T1_C"])


def test_infeasible_problem_is_reported(problem):
    result = optimize(BowlEvaluator(doc=lambda t1, T1: np.full_like(t1, 0.5)), problem)
    assert not result.feasible
    assert result.best is None
    assert math.isnan(result.objective)
    assert not result.grid_map["feasible"].any()
    assert verify_with_simulator(result, problem) is None


def test_write_result(tmp_path, problem):
    result = optimize(BowlEvaluator(), problem)
    write_result(result, str(tmp_path / "map.csv"), str(tmp_path / "result.json"), problem)
    payload = json.loads((tmp_path / "result.json").read_text())
    assert payload["feasible"] is True
    assert payload["best"]["t1_min"] == pytest.approx(result.best[0])
    assert payload["problem"]["doc_min"] == 0.990
    frame = pd.read_csv(tmp_path / "map.csv")
    assert list(frame.columns) == MAP_COLUMNS
    assert len(frame) == 400


# =====================================================================
# EVALUATORS
# =====================================================================

def test_surrogate_evaluator_checks_the_problem(tiny_model):
    evaluator = SurrogateEvaluator(tiny_model)
    evaluator.check(OptProblem(doc0=0.3))
    with pytest.raises(ConfigError):
        evaluator.check(OptProblem(doc0=0.6))
    with pytest.raises(ConfigError):
        evaluator.check(OptProblem(anchors=ProfileAnchors(t3=300.0)))


def test_surrogate_evaluator_shapes(tiny_model):
    problem = OptProblem(n_t=3, n_T=3, refine_rounds=0)
    doc_final, deformation = SurrogateEvaluator(tiny_model)([(60.0, 120.0), (80.0, 100.0)], problem)
    assert doc_final.shape == (2,)
    assert deformation.shape == (2,)
    result = optimize(SurrogateEvaluator(tiny_model), problem)
    assert result.evaluations == 9


def test_simulator_evaluator_agrees_with_verification():
    problem = OptProblem(n_t=2, n_T=2, doc_min=0.5)
    doc_final, deformation = SimulatorEvaluator(dt=1.0)([(60.0, 120.0)], problem)
    assert 0.5 < doc_final[0] <= 1.0
    result = optimize(BowlEvaluator(doc=lambda t1, T1: np.full_like(t1, 0.99)),
                      OptProblem(n_t=6, n_T=6, refine_rounds=0, doc_min=0.5))
    verification = verify_with_simulator(result, OptProblem(n_t=6, n_T=6, refine_rounds=0, doc_min=0.5), dt=1.0)
    assert verification is result.verification
    assert set(verification) == {"feasible", "doc_final", "deformation_mm", "constraints"}


# =====================================================================
# SLOW HARNESS
# =====================================================================

@pytest.mark.slow
def test_surrogate_optimum_matches_the_simulator_grid(trained_operator):
    trained, _, _ = trained_operator
    problem = OptProblem(n_t=10, n_T=10, refine_rounds=0, doc0=0.3)
    surrogate = optimize(SurrogateEvaluator(trained), problem)
    oracle = optimize(SimulatorEvaluator(dt=0.5), problem)
    assert oracle.feasible and surrogate.feasible

    agreement = np.mean(surrogate.grid_map["feasible"].to_numpy() == oracle.grid_map["feasible"].to_numpy())
    assert agreement >= 0.95
    t_step, T_step = oracle.uncertainty
    assert abs(surrogate.best[0] - oracle.best[0]) <= t_step + 1e-9
    assert abs(surrogate.best[1] - oracle.best[1]) <= T_step + 1e-9

    verification = verify_with_simulator(surrogate, problem, dt=0.5)
    assert verification["feasible"]
    assert verification["doc_final"] >= problem.doc_min
    assert verification["constraints"]["slope_order"] > 0
    assert verification["constraints"]["slope_positive"] > 0
