#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# CURE SCHEDULE OPTIMIZATION MODULE v1.0
# CODEX: Constrained minimization of terminal deformation over the intermediate point A = (t1, T1):
# CODEX: exhaustive grid search plus local refinement, driven by the surrogate or the simulator.

import logging
from dataclasses import dataclass, field, asdict
from functools import partial

import numpy as np
import pandas as pd

from src.cure_sim import (DEFAULT_MARGIN, ProfileAnchors, build_profile, sample_profile,
                          sensor_times, simulate)
from src.deeponet import predict_terminal_batch
from src.errors import ConfigError
from src.utils import parallel_map, write_csv, write_json

logger = logging.getLogger(__name__)

MAP_COLUMNS = ["t1_min", "T1_C", "feasible", "doc_final", "deformation_mm"]
DOC0_TOLERANCE = 1e-9


@dataclass(frozen=True)
class OptProblem:
    """
    CODEX: Admissible box for A, full-cure threshold, initial degree of cure and grid settings.
    """
    anchors: ProfileAnchors = field(default_factory=ProfileAnchors)
    margin: float = DEFAULT_MARGIN
    doc_min: float = 0.990
    doc0: float = 0.3
    n_t: int = 50
    n_T: int = 50
    refine_rounds: int = 2
    refine_points: int = 5

    def __post_init__(self):
        if not (0.0 < self.doc_min <= 1.0):
            raise ConfigError(f"doc_min must lie in (0, 1], got {self.doc_min}")
        if self.n_t < 2 or self.n_T < 2:
            raise ConfigError("The optimization grid must be at least 2 x 2")
        if self.refine_rounds < 0 or self.refine_points < 2:
            raise ConfigError("Refinement needs non-negative rounds and at least 2 points per axis")
        if not self.margin > 0:
            raise ConfigError("Margin must be positive")

    @property
    def t_bounds(self):
        return self.anchors.t0 + self.margin, self.anchors.t2 - self.margin

    @property
    def T_bounds(self):
        return self.anchors.T_start, self.anchors.T_peak

    def grid(self):
        t_values = np.linspace(*self.t_bounds, self.n_t)
        T_values = np.linspace(*self.T_bounds, self.n_T)
        return t_values, T_values


@dataclass(eq=False)
class OptResult:
    """
    CODEX: Optimum, its objective and constraint report, and the full grid map.
    """
    feasible: bool
    best: object
    objective: float
    doc_final: float
    deformation: float
    constraints: dict
    uncertainty: tuple
    grid_map: pd.DataFrame
    evaluations: int
    verification: dict = None

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "best": None if self.best is None else {"t1_min": self.best[0], "T1_C": self.best[1]},
            "objective_mm": self.objective,
            "doc_final": self.doc_final,
            "deformation_mm": self.deformation,
            "constraints": self.constraints,
            "uncertainty": {"t1_min": self.uncertainty[0], "T1_C": self.uncertainty[1]},
            "evaluations": self.evaluations,
            "verification": self.verification,
        }


# =====================================================================
# EVALUATORS
# =====================================================================

class SurrogateEvaluator:
    """
    CODEX: Terminal degree of cure and deformation from a trained operator network.
    """

    def __init__(self, model):
        self.model = model
        self.logger = logging.getLogger(__name__)

    def check(self, problem):
        """
        CODEX: The problem must use the model's time window and a doc0 it was trained on.
        """
        norm = self.model.normalization
        if abs(norm.t_origin - problem.anchors.t0) > 1e-9 or abs(norm.horizon - problem.anchors.horizon) > 1e-9:
            raise ConfigError("Problem anchors do not match the model's training time window")
        if not (norm.doc0_min - DOC0_TOLERANCE <= problem.doc0 <= norm.doc0_max + DOC0_TOLERANCE):
            raise ConfigError(f"Problem doc0 {problem.doc0} lies outside the model's training range "
                              f"[{norm.doc0_min}, {norm.doc0_max}]")

    def __call__(self, candidates, problem):
        times = sensor_times(problem.anchors, self.model.sensor_count)
        T_samples = np.stack([sample_profile(build_profile(t1, T1, problem.anchors, problem.margin), times)
                              for t1, T1 in candidates])
        doc0 = np.full(len(candidates), problem.doc0)
        return predict_terminal_batch(self.model, T_samples, doc0)


def _simulate_terminal(candidate, problem, kp, dp, dt):
    profile = build_profile(candidate[0], candidate[1], problem.anchors, problem.margin)
    trajectory = simulate(profile, problem.doc0, kp, dp, dt)
    return trajectory.terminal_doc, trajectory.terminal_deformation


class SimulatorEvaluator:
    """
    CODEX: Terminal degree of cure and deformation from the cure simulator (brute-force oracle).
    """

    def __init__(self, kp=None, dp=None, dt=0.5, workers=1):
        self.kp = kp
        self.dp = dp
        self.dt = dt
        self.workers = workers

    def check(self, problem):
        return None

    def __call__(self, candidates, problem):
        worker = partial(_simulate_terminal, problem=problem, kp=self.kp, dp=self.dp, dt=self.dt)
        results = parallel_map(worker, list(candidates), self.workers)
        return np.array([r[0] for r in results]), np.array([r[1] for r in results])


# =====================================================================
# CONSTRAINTS
# =====================================================================

def constraint_margins(t1, T1, doc_final, problem):
    """
    CODEX: Signed margin of every constraint (non-negative bound margins and positive slope
    CODEX: margins mean satisfied).

    Returns:
        dict: constraint name -> margin (float or array)
    """
    t1 = np.asarray(t1, dtype=float)
    T1 = np.asarray(T1, dtype=float)
    a = problem.anchors
    t_lo, t_hi = problem.t_bounds
    T_lo, T_hi = problem.T_bounds
    inside = (t1 > a.t0) & (t1 < a.t2)
    with np.errstate(divide="ignore", invalid="ignore"):
        m1 = np.where(inside, (T1 - a.T_start) / (t1 - a.t0), -np.inf)
        m2 = np.where(inside, (a.T_peak - T1) / (a.t2 - t1), -np.inf)
    return {
        "t1_lower": t1 - t_lo,
        "t1_upper": t_hi - t1,
        "T1_lower": T1 - T_lo,
        "T1_upper": T_hi - T1,
        "slope_order": m1 - m2,
        "slope_positive": m2,
        "doc_final": np.asarray(doc_final, dtype=float) - problem.doc_min,
    }


def _is_feasible(margins):
    ok = (margins["t1_lower"] >= 0) & (margins["t1_upper"] >= 0)
    ok &= (margins["T1_lower"] >= 0) & (margins["T1_upper"] >= 0)
    ok &= (margins["slope_order"] > 0) & (margins["slope_positive"] > 0)
    ok &= margins["doc_final"] >= 0
    return ok


def feasible(candidate, evaluator, problem):
    """
    CODEX: Check bounds, slope ordering m1 > m2 > 0 and the full-cure constraint for one candidate.

    Args:
        candidate (tuple): (t1, T1)
        evaluator (callable): SurrogateEvaluator or SimulatorEvaluator
        problem (OptProblem): Problem definition

    Returns:
        tuple: (is_feasible, report) with report mapping constraint -> margin
    """
    t1, T1 = float(candidate[0]), float(candidate[1])
    t_lo, t_hi = problem.t_bounds
    T_lo, T_hi = problem.T_bounds
    if t_lo <= t1 <= t_hi and T_lo <= T1 <= T_hi:
        doc_final, _ = evaluator([(t1, T1)], problem)
        doc_value = float(doc_final[0])
    else:
        doc_value = float("nan")
    margins = constraint_margins(t1, T1, doc_value, problem)
    report = {name: float(value) for name, value in margins.items()}
    ok = bool(_is_feasible(margins)) and np.isfinite(doc_value)
    return bool(ok), report


# =====================================================================
# SEARCH
# =====================================================================

def _select(t1, T1, objective, mask):
    """
    CODEX: Index of the feasible minimum; ties go to smaller t1, then smaller T1.
    """
    candidates = np.flatnonzero(mask)
    if candidates.size == 0:
        return None
    order = np.lexsort((T1[candidates], t1[candidates], objective[candidates]))
    return int(candidates[order[0]])


def _evaluate(evaluator, problem, t1, T1):
    doc_final, deformation = evaluator(list(zip(t1.tolist(), T1.tolist())), problem)
    doc_final = np.asarray(doc_final, dtype=float)
    deformation = np.asarray(deformation, dtype=float)
    margins = constraint_margins(t1, T1, doc_final, problem)
    mask = _is_feasible(margins) & np.isfinite(doc_final) & np.isfinite(deformation)
    return doc_final, deformation, mask


def optimize(evaluator, problem):
    """
    CODEX: Grid search over A followed by local refinement around the incumbent.

    Args:
        evaluator (callable): SurrogateEvaluator (or SimulatorEvaluator for the oracle run)
        problem (OptProblem): Problem definition

    Returns:
        OptResult: Best feasible candidate, or an explicit infeasible result
    """
    evaluator.check(problem)
    t_values, T_values = problem.grid()
    t_grid, T_grid = np.meshgrid(t_values, T_values, indexing="ij")
    t1 = t_grid.ravel()
    T1 = T_grid.ravel()
    logger.info(f"Evaluating {t1.size} grid candidates")
    doc_final, deformation, mask = _evaluate(evaluator, problem, t1, T1)
    objective = np.abs(deformation)
    grid_map = pd.DataFrame({"t1_min": t1, "T1_C": T1, "feasible": mask, "doc_final": doc_final,
                             "deformation_mm": deformation}, columns=MAP_COLUMNS)
    evaluations = int(t1.size)
    step = ((t_values[1] - t_values[0]), (T_values[1] - T_values[0]))

    best = _select(t1, T1, objective, mask)
    if best is None:
        logger.warning("No feasible candidate on the optimization grid")
        return OptResult(feasible=False, best=None, objective=float("nan"), doc_final=float("nan"),
                         deformation=float("nan"), constraints={}, uncertainty=step,
                         grid_map=grid_map, evaluations=evaluations)

    incumbent = (float(t1[best]), float(T1[best]), float(doc_final[best]), float(deformation[best]))
    t_lo, t_hi = problem.t_bounds
    T_lo, T_hi = problem.T_bounds
    offsets = np.linspace(-1.0, 1.0, problem.refine_points)
    for round_index in range(problem.refine_rounds):
        step = (step[0] / 2.0, step[1] / 2.0)
        half = (problem.refine_points - 1) / 2.0
        local_t = np.clip(incumbent[0] + offsets * half * step[0], t_lo, t_hi)
        local_T = np.clip(incumbent[1] + offsets * half * step[1], T_lo, T_hi)
        lt, lT = np.meshgrid(np.unique(local_t), np.unique(local_T), indexing="ij")
        lt = lt.ravel()
        lT = lT.ravel()
        l_doc, l_def, l_mask = _evaluate(evaluator, problem, lt, lT)
        evaluations += int(lt.size)
        all_t = np.append(lt, incumbent[0])
        all_T = np.append(lT, incumbent[1])
        all_obj = np.append(np.abs(l_def), abs(incumbent[3]))
        all_mask = np.append(l_mask, True)
        pick = _select(all_t, all_T, all_obj, all_mask)
        if pick < lt.size:
            incumbent = (float(lt[pick]), float(lT[pick]), float(l_doc[pick]), float(l_def[pick]))
        logger.info(f"Refinement round {round_index + 1}: A = ({incumbent[0]:.3f}, {incumbent[1]:.3f}), "
                    f"|u| = {abs(incumbent[3]):.4f} mm")

    report = {name: float(value) for name, value in
              constraint_margins(incumbent[0], incumbent[1], incumbent[2], problem).items()}
    return OptResult(feasible=True, best=(incumbent[0], incumbent[1]), objective=abs(incumbent[3]),
                     doc_final=incumbent[2], deformation=incumbent[3], constraints=report,
                     uncertainty=step, grid_map=grid_map, evaluations=evaluations)


def verify_with_simulator(result, problem, kp=None, dp=None, dt=0.5):
    """
    CODEX: Re-check the winner with the cure simulator.

    Returns:
        dict: Simulated terminal values, constraint report and feasibility
    """
    if not result.feasible:
        return None
    doc_final, deformation = SimulatorEvaluator(kp, dp, dt)([result.best], problem)
    margins = constraint_margins(result.best[0], result.best[1], doc_final[0], problem)
    report = {name: float(value) for name, value in margins.items()}
    ok = bool(_is_feasible(margins))
    verification = {
        "feasible": ok,
        "doc_final": float(doc_final[0]),
        "deformation_mm": float(deformation[0]),
        "constraints": report,
    }
    if not ok:
        logger.warning(f"Simulator rejects the surrogate optimum {result.best}: {report}")
    result.verification = verification
    return verification


def write_result(result, map_path, result_path, problem=None):
    """
    CODEX: Feasibility map CSV and OptResult JSON.
    """
    write_csv(result.grid_map, map_path)
    payload = result.to_dict()
    if problem is not None:
        payload["problem"] = asdict(problem)
    write_json(payload, result_path)
