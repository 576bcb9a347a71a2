#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# CURE SIMULATION MODULE v1.0
# CODEX: Synthetic ground truth for curing laminates: parameterized cure cycles,
# CODEX: two-regime autocatalytic kinetics, gel-clamped viscosity and a two-mechanism
# CODEX: (thermal expansion vs. cure shrinkage) deformation model integrated with RK4.

import os
import math
import logging
from dataclasses import dataclass, field, asdict
from functools import partial

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from src.errors import ConfigError, ConstraintViolation, DataError, DomainError
from src.utils import parallel_map, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

R_GAS = 8.314  # J/(mol K)
KELVIN = 273.15
VISCOSITY_EPS = 1e-8
DEFAULT_MARGIN = 1.0  # minutes
TRAJECTORY_COLUMNS = ["time_min", "temp_C", "doc", "log_visc_lnPaS", "deformation_mm"]

# Enthalpy of reaction (J/g) and standard deviation for 3501-6 resin and AS4/3501-6 prepreg.
ENTHALPY_REFERENCES = {
    "lee_1982": (473.6, 5.4),
    "hou_1988": (502.0, 21.0),
    "white_1993": (435.0, None),
    "kim_2002_20cpm": (433.7, None),
    "kim_2002_2cpm": (456.7, None),
    "chern_2002": (508.0, 19.0),
    "hargis_2006": (382.5, 20.0),
}


# =====================================================================
# DOMAIN TYPES
# =====================================================================

@dataclass(frozen=True)
class ProfileAnchors:
    """
    CODEX: Fixed start, peak and end points of the cure cycle (minutes, degC).
    """
    t0: float = 0.333
    T_start: float = 20.000
    t2: float = 171.658
    T_peak: float = 179.905
    t3: float = 205.000
    T_end: float = 20.000

    def __post_init__(self):
        if not (self.t0 < self.t2 < self.t3):
            raise ConfigError(f"Anchors must satisfy t0 < t2 < t3, got {self.t0}, {self.t2}, {self.t3}")

    @property
    def horizon(self):
        return self.t3 - self.t0


@dataclass(frozen=True)
class TemperatureProfile:
    """
    CODEX: Piecewise-linear cure cycle through (t0,T_start), A=(t1,T1), (t2,T_peak), (t3,T_end).
    CODEX: Build instances with build_profile so the bounds are checked.
    """
    anchors: ProfileAnchors
    t1: float
    T1: float
    margin: float = DEFAULT_MARGIN

    @property
    def knot_times(self):
        a = self.anchors
        return (a.t0, self.t1, a.t2, a.t3)

    @property
    def knot_temperatures(self):
        a = self.anchors
        return (a.T_start, self.T1, a.T_peak, a.T_end)


@dataclass(frozen=True)
class KineticsParams:
    """
    CODEX: Two-regime autocatalytic cure kinetics and gel-clamped viscosity constants.

    Rates are A_i * exp(-E_i / (R T)) in 1/min with E_i in J/mol. Below alpha_switch the
    rate is (k1 + k2 alpha)(1 - alpha)(B - alpha); above it k3 (1 - alpha).
    """
    A1: float = 2.101e9
    E1: float = 8.07e4
    A2: float = 2.014e9
    E2: float = 7.78e4
    A3: float = 1.960e5
    E3: float = 5.66e4
    B: float = 0.47
    alpha_switch: float = 0.3
    mu_inf: float = 7.93e-14
    U: float = 9.08e4
    K: float = 30.0
    alpha_gel: float = 0.47
    mu_max: float = 1.0e6

    def __post_init__(self):
        for name in ("A1", "E1", "A2", "E2", "A3", "E3", "mu_inf", "U", "mu_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Kinetics parameter {name} must be strictly positive")
        if not (0.0 < self.alpha_switch < self.alpha_gel < 1.0):
            raise ConfigError("Kinetics require 0 < alpha_switch < alpha_gel < 1")
        if self.B < self.alpha_switch:
            raise ConfigError("Kinetics require B >= alpha_switch so the first regime rate is non-negative")


@dataclass(frozen=True)
class DeformationParams:
    """
    CODEX: Incremental deformation law du = S(alpha) (kappa_cte dT - kappa_sh dalpha).
    CODEX: kappa values of zero switch a mechanism off.
    """
    kappa_cte: float = 0.15   # mm/degC
    kappa_sh: float = 30.0    # mm per unit DoC
    width: float = 0.1        # stiffness ramp width in DoC
    T_ref: float = 20.0       # measurement temperature, degC

    def __post_init__(self):
        if self.kappa_cte < 0 or self.kappa_sh < 0:
            raise ConfigError("Deformation coefficients must be non-negative")
        if not (0.0 < self.width < 1.0):
            raise ConfigError("Stiffness ramp width must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class CureTrajectory:
    """
    CODEX: Time-aligned histories for one cure cycle and one initial degree of cure.
    """
    times: np.ndarray
    temperature: np.ndarray
    doc: np.ndarray
    log_viscosity: np.ndarray
    deformation: np.ndarray
    doc0: float

    @property
    def terminal_doc(self):
        return float(self.doc[-1])

    @property
    def terminal_deformation(self):
        return float(self.deformation[-1])

    def channels(self):
        """
        CODEX: Stack the three learned channels in fixed order (doc, log-viscosity, deformation).

        Returns:
            numpy.ndarray: Array of shape (3, n_times)
        """
        return np.stack([self.doc, self.log_viscosity, self.deformation])


# =====================================================================
# TEMPERATURE PROFILES
# =====================================================================

def build_profile(t1, T1, anchors=None, margin=DEFAULT_MARGIN):
    """
    CODEX: Build the cure cycle for intermediate point A = (t1, T1).

    Args:
        t1 (float): Intermediate time in minutes
        T1 (float): Intermediate temperature in degC
        anchors (ProfileAnchors, optional): Fixed anchors. Defaults to ProfileAnchors().
        margin (float, optional): Bound margin dt in minutes. Defaults to 1.0.

    Returns:
        TemperatureProfile: Validated profile

    Raises:
        ConstraintViolation: When t1 or T1 leaves its admissible interval
    """
    anchors = anchors or ProfileAnchors()
    if not margin > 0:
        raise ConfigError(f"Profile margin must be positive, got {margin}")
    t1 = float(t1)
    T1 = float(T1)
    if not (math.isfinite(t1) and math.isfinite(T1)):
        raise ConstraintViolation("finite", f"Intermediate point must be finite, got ({t1}, {T1})")
    if t1 < anchors.t0 + margin:
        raise ConstraintViolation("t1 >= t0 + margin", f"t1={t1} below t0 + margin = {anchors.t0 + margin}")
    if t1 > anchors.t2 - margin:
        raise ConstraintViolation("t1 <= t2 - margin", f"t1={t1} above t2 - margin = {anchors.t2 - margin}")
    if T1 < anchors.T_start:
        raise ConstraintViolation("T1 >= T_start", f"T1={T1} below T_start = {anchors.T_start}")
    if T1 > anchors.T_peak:
        raise ConstraintViolation("T1 <= T_peak", f"T1={T1} above T_peak = {anchors.T_peak}")
    return TemperatureProfile(anchors=anchors, t1=t1, T1=T1, margin=margin)


def sample_profile(profile, t):
    """
    CODEX: Evaluate the profile by linear interpolation on the active segment.

    Args:
        profile (TemperatureProfile): Cure cycle
        t (float or array-like): Time(s) in minutes within [t0, t3]

    Returns:
        float or numpy.ndarray: Temperature(s) in degC
    """
    values = np.asarray(t, dtype=float)
    a = profile.anchors
    if np.any(~np.isfinite(values)) or np.any(values < a.t0) or np.any(values > a.t3):
        raise DomainError(f"Profile is defined on [{a.t0}, {a.t3}] only")
    result = np.interp(values, profile.knot_times, profile.knot_temperatures)
    if result.ndim == 0:
        return float(result)
    return result


def profile_slopes(profile):
    """
    CODEX: Heating rates of the first two segments.

    Args:
        profile (TemperatureProfile): Cure cycle

    Returns:
        tuple: (m1, m2) in degC/min
    """
    a = profile.anchors
    m1 = (profile.T1 - a.T_start) / (profile.t1 - a.t0)
    m2 = (a.T_peak - profile.T1) / (a.t2 - profile.t1)
    return m1, m2


def sensor_times(anchors, sensor_count):
    """
    CODEX: Uniform branch sensor locations over [t0, t3].
    """
    if sensor_count < 2:
        raise ConfigError("At least two branch sensors are required")
    return np.linspace(anchors.t0, anchors.t3, sensor_count)


def output_times(anchors, n_out):
    """
    CODEX: Uniform trajectory grid over [t0, t3].
    """
    if n_out < 2:
        raise ConfigError("Trajectories need at least two time points")
    return np.linspace(anchors.t0, anchors.t3, n_out)


def default_A_grid(anchors=None, margin=DEFAULT_MARGIN, n_t=10, n_T=10):
    """
    CODEX: Rectangular grid of intermediate points spanning the admissible box.

    Returns:
        list: (t1, T1) tuples, t1 outer, T1 inner
    """
    anchors = anchors or ProfileAnchors()
    t_values = np.linspace(anchors.t0 + margin, anchors.t2 - margin, n_t)
    T_values = np.linspace(anchors.T_start, anchors.T_peak, n_T)
    return [(float(t1), float(T1)) for t1 in t_values for T1 in T_values]


# =====================================================================
# INITIAL DEGREE OF CURE
# =====================================================================

def _check_enthalpies(dH_residual, dH_full):
    if not (math.isfinite(dH_residual) and math.isfinite(dH_full)):
        raise DomainError("Enthalpies must be finite")
    if dH_residual <= 0 or dH_full <= 0:
        raise DomainError("Enthalpies must be strictly positive")
    if dH_residual > dH_full:
        raise DomainError(f"Residual enthalpy {dH_residual} exceeds full-cure enthalpy {dH_full}")


def residual_cure_ratio(dH_residual, dH_full):
    """
    CODEX: Residual heat of reaction as a percentage of the full-cure enthalpy.
    """
    _check_enthalpies(dH_residual, dH_full)
    return 100.0 * dH_residual / dH_full


def compute_initial_doc(dH_residual, dH_full):
    """
    CODEX: Initial degree of cure (percent) of the as-received prepreg.

    Args:
        dH_residual (float): Residual enthalpy of the as-received resin, J/g
        dH_full (float): Ultimate enthalpy of freshly mixed resin, J/g

    Returns:
        float: DoC0 = 100 * (1 - dH_residual / dH_full)
    """
    _check_enthalpies(dH_residual, dH_full)
    return 100.0 * (1.0 - dH_residual / dH_full)


def initial_doc_range(dH_residual, sd_residual, dH_full, sd_full):
    """
    CODEX: DoC0 interval obtained by shifting both enthalpies by one standard deviation.

    Returns:
        tuple: (low, high) in percent
    """
    low = compute_initial_doc(dH_residual + sd_residual, dH_full - sd_full)
    high = compute_initial_doc(dH_residual - sd_residual, dH_full + sd_full)
    return low, high


def reference_initial_doc(residual="hargis_2006", full="chern_2002"):
    """
    CODEX: Initial degree of cure and its one-sigma interval from two ENTHALPY_REFERENCES entries.

    Args:
        residual (str, optional): Entry measured on the as-received prepreg
        full (str, optional): Entry measured on freshly mixed resin

    Returns:
        tuple: (doc0, low, high) in percent
    """
    try:
        dH_residual, sd_residual = ENTHALPY_REFERENCES[residual]
        dH_full, sd_full = ENTHALPY_REFERENCES[full]
    except KeyError as e:
        raise DomainError(f"Unknown enthalpy reference {e.args[0]!r}") from None
    doc0 = compute_initial_doc(dH_residual, dH_full)
    if sd_residual is None or sd_full is None:
        return doc0, doc0, doc0
    low, high = initial_doc_range(dH_residual, sd_residual, dH_full, sd_full)
    return doc0, low, high


# =====================================================================
# KINETICS AND VISCOSITY
# =====================================================================

def _arrhenius(prefactor, energy, T_K):
    return prefactor * math.exp(-energy / (R_GAS * T_K))


def _regime_rate(alpha, T_K, p, regime):
    if regime == 1:
        k1 = _arrhenius(p.A1, p.E1, T_K)
        k2 = _arrhenius(p.A2, p.E2, T_K)
        return (k1 + k2 * alpha) * (1.0 - alpha) * (p.B - alpha)
    k3 = _arrhenius(p.A3, p.E3, T_K)
    return k3 * (1.0 - alpha)


def cure_rate(alpha, T, p):
    """
    CODEX: Cure rate dalpha/dt in 1/min.

    Args:
        alpha (float): Degree of cure in [0, 1]
        T (float): Temperature in degC
        p (KineticsParams): Kinetics constants

    Returns:
        float: Non-negative rate, zero at full cure
    """
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"Degree of cure must lie in [0, 1], got {alpha}")
    regime = 1 if alpha <= p.alpha_switch else 2
    return _regime_rate(alpha, T + KELVIN, p, regime)


def viscosity(alpha, T, p, clamp=True):
    """
    CODEX: Resin viscosity in Pa s, clamped at mu_max from gelation on.

    Args:
        alpha (float): Degree of cure
        T (float): Temperature in degC
        p (KineticsParams): Kinetics constants
        clamp (bool, optional): Apply the gel ceiling. Defaults to True.

    Returns:
        float: Viscosity
    """
    T_K = T + KELVIN
    if not T_K > 0:
        raise DomainError("Temperature must be above absolute zero")
    if clamp and alpha >= p.alpha_gel:
        return p.mu_max
    mu = p.mu_inf * math.exp(p.U / (R_GAS * T_K) + p.K * alpha)
    return min(mu, p.mu_max) if clamp else mu


def log_viscosity(mu):
    """
    CODEX: Log transform used for learning: ln(mu + 1e-8).
    """
    return np.log(np.asarray(mu, dtype=float) + VISCOSITY_EPS)


def stiffness_gate(alpha, alpha_gel, width):
    """
    CODEX: Smoothstep stiffness development above gelation, clipped to [0, 1].
    """
    x = min(max((alpha - alpha_gel) / width, 0.0), 1.0)
    return x * x * (3.0 - 2.0 * x)


# =====================================================================
# INTEGRATION
# =====================================================================

def _rk4(rhs, t, alpha, u, h):
    k1a, k1u = rhs(t, alpha)
    k2a, k2u = rhs(t + 0.5 * h, alpha + 0.5 * h * k1a)
    k3a, k3u = rhs(t + 0.5 * h, alpha + 0.5 * h * k2a)
    k4a, k4u = rhs(t + h, alpha + h * k3a)
    return (alpha + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u))


def _segment_rhs(t_seg, T_seg, slope, kp, dp, regime):
    def rhs(t, alpha):
        T_K = T_seg + slope * (t - t_seg) + KELVIN
        rate = _regime_rate(alpha, T_K, kp, regime)
        gate = stiffness_gate(alpha, kp.alpha_gel, dp.width)
        return rate, gate * (dp.kappa_cte * slope - dp.kappa_sh * rate)
    return rhs


def _step(segment, kp, dp, t, alpha, u, h):
    # The kinetics switch form at alpha_switch; a step that crosses it is split at the crossing.
    t_seg, T_seg, slope = segment
    if alpha >= kp.alpha_switch:
        return _rk4(_segment_rhs(t_seg, T_seg, slope, kp, dp, 2), t, alpha, u, h)
    first = _segment_rhs(t_seg, T_seg, slope, kp, dp, 1)
    alpha_new, u_new = _rk4(first, t, alpha, u, h)
    if alpha_new <= kp.alpha_switch:
        return alpha_new, u_new
    tau = brentq(lambda s: _rk4(first, t, alpha, u, s)[0] - kp.alpha_switch, 0.0, h, xtol=1e-14)
    _, u_cross = _rk4(first, t, alpha, u, tau)
    if h - tau <= 0.0:
        return kp.alpha_switch, u_cross
    second = _segment_rhs(t_seg, T_seg, slope, kp, dp, 2)
    return _rk4(second, t + tau, kp.alpha_switch, u_cross, h - tau)


def _segment_for(profile, t_mid):
    times = profile.knot_times
    temps = profile.knot_temperatures
    for i in range(3):
        if t_mid <= times[i + 1] or i == 2:
            slope = (temps[i + 1] - temps[i]) / (times[i + 1] - times[i])
            return times[i], temps[i], slope


def simulate(profile, doc0, kp=None, dp=None, dt=0.5, n_out=128):
    """
    CODEX: Integrate cure kinetics and deformation along a cure cycle.
    CODEX: Fixed-step RK4; each output interval uses ceil(interval/dt) equal sub-steps and is
    CODEX: additionally split at profile knots so every sub-step sees a linear temperature.

    Args:
        profile (TemperatureProfile): Cure cycle
        doc0 (float): Initial degree of cure in [0, 1)
        kp (KineticsParams, optional): Kinetics. Defaults to KineticsParams().
        dp (DeformationParams, optional): Deformation law. Defaults to DeformationParams().
        dt (float, optional): Maximum sub-step in minutes. Defaults to 0.5.
        n_out (int, optional): Number of uniform output times. Defaults to 128.

    Returns:
        CureTrajectory: Histories on the uniform output grid
    """
    kp = kp or KineticsParams()
    dp = dp or DeformationParams()
    anchors = profile.anchors
    if not (0.0 <= doc0 < 1.0):
        raise DomainError(f"Initial degree of cure must lie in [0, 1), got {doc0}")
    if not dt > 0:
        raise ConfigError(f"Time step must be positive, got {dt}")
    if dt > anchors.horizon / 4.0:
        raise ConfigError(f"Time step {dt} exceeds a quarter of the cycle ({anchors.horizon / 4.0:.3f} min)")

    times = output_times(anchors, n_out)
    knots = (profile.t1, anchors.t2)
    doc = np.empty(n_out)
    deformation = np.empty(n_out)
    alpha = float(doc0)
    u = 0.0
    doc[0] = alpha
    deformation[0] = u

    for i in range(n_out - 1):
        ta, tb = float(times[i]), float(times[i + 1])
        n_sub = max(1, int(math.ceil((tb - ta) / dt - 1e-9)))
        h_target = (tb - ta) / n_sub
        cuts = [ta] + [k for k in knots if ta < k < tb] + [tb]
        for pa, pb in zip(cuts[:-1], cuts[1:]):
            n_piece = n_sub if len(cuts) == 2 else max(1, int(math.ceil((pb - pa) / h_target - 1e-9)))
            h = (pb - pa) / n_piece
            segment = _segment_for(profile, 0.5 * (pa + pb))
            for j in range(n_piece):
                alpha, u = _step(segment, kp, dp, pa + j * h, alpha, u, h)
        doc[i + 1] = alpha
        deformation[i + 1] = u

    temperature = sample_profile(profile, times)
    mu = np.array([viscosity(min(a_, 1.0), T_, kp) for a_, T_ in zip(doc, temperature)])
    return CureTrajectory(
        times=times,
        temperature=temperature,
        doc=doc,
        log_viscosity=log_viscosity(mu),
        deformation=deformation,
        doc0=float(doc0),
    )


def demolded_deformation(trajectory, dp, kp=None):
    """
    CODEX: Terminal deformation referred to the measurement temperature T_ref.

    Args:
        trajectory (CureTrajectory): Simulated cycle
        dp (DeformationParams): Deformation law
        kp (KineticsParams, optional): Kinetics (for the gel point). Defaults to KineticsParams().

    Returns:
        float: Deformation in mm after cooling from T_end to T_ref
    """
    kp = kp or KineticsParams()
    gate = stiffness_gate(trajectory.terminal_doc, kp.alpha_gel, dp.width)
    return trajectory.terminal_deformation + gate * dp.kappa_cte * (dp.T_ref - float(trajectory.temperature[-1]))


# =====================================================================
# DATASETS
# =====================================================================

@dataclass
class DatasetRecord:
    """
    CODEX: One simulated cycle: branch input (k temperatures + doc0) and its trajectory.
    """
    record_id: str
    t1: float
    T1: float
    doc0: float
    branch_input: np.ndarray
    trajectory: CureTrajectory


@dataclass
class SimulationDataset:
    """
    CODEX: Records produced by generate_dataset plus the settings that produced them.
    """
    records: list
    anchors: ProfileAnchors
    kinetics: KineticsParams
    deformation: DeformationParams
    sensor_count: int
    n_out: int
    dt: float
    margin: float = DEFAULT_MARGIN
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def times(self):
        return output_times(self.anchors, self.n_out)

    def branch_inputs(self):
        return np.stack([r.branch_input for r in self.records])

    def targets(self):
        """
        CODEX: Physical targets of shape (n_records, 3, n_out).
        """
        return np.stack([r.trajectory.channels() for r in self.records])


def branch_input(profile, doc0, sensor_count):
    """
    CODEX: Branch vector of k profile samples followed by doc0.
    """
    samples = sample_profile(profile, sensor_times(profile.anchors, sensor_count))
    return np.append(samples, float(doc0))


def _simulate_record(job, anchors, kp, dp, dt, sensor_count, n_out, margin):
    index, t1, T1, doc0 = job
    profile = build_profile(t1, T1, anchors, margin)
    trajectory = simulate(profile, doc0, kp, dp, dt, n_out)
    return DatasetRecord(
        record_id=f"r{index:04d}",
        t1=float(t1),
        T1=float(T1),
        doc0=float(doc0),
        branch_input=branch_input(profile, doc0, sensor_count),
        trajectory=trajectory,
    )


def generate_dataset(A_grid, doc0_set, kp=None, dp=None, dt=0.5, sensor_count=32,
                     n_out=128, anchors=None, margin=DEFAULT_MARGIN, workers=1):
    """
    CODEX: Simulate every (A, doc0) combination; infeasible A points are skipped and reported.

    Args:
        A_grid (list): (t1, T1) pairs
        doc0_set (list): Initial degrees of cure
        kp (KineticsParams, optional): Kinetics
        dp (DeformationParams, optional): Deformation law
        dt (float, optional): Integrator step. Defaults to 0.5.
        sensor_count (int, optional): Branch sensors k. Defaults to 32.
        n_out (int, optional): Trajectory points. Defaults to 128.
        anchors (ProfileAnchors, optional): Fixed anchors
        margin (float, optional): Bound margin. Defaults to 1.0.
        workers (int, optional): Worker processes. Defaults to 1.

    Returns:
        SimulationDataset: Records ordered A-major, doc0-minor
    """
    if not A_grid or not doc0_set:
        raise ConfigError("Dataset generation needs a non-empty A grid and doc0 set")
    kp = kp or KineticsParams()
    dp = dp or DeformationParams()
    anchors = anchors or ProfileAnchors()

    jobs = []
    skipped = []
    for t1, T1 in A_grid:
        try:
            build_profile(t1, T1, anchors, margin)
        except ConstraintViolation as e:
            logger.warning(f"Skipping infeasible grid point ({t1}, {T1}): {e}")
            skipped.append({"t1": float(t1), "T1": float(T1), "reason": e.bound})
            continue
        for doc0 in doc0_set:
            jobs.append((len(jobs), t1, T1, doc0))

    logger.info(f"Simulating {len(jobs)} records ({len(skipped)} grid points skipped)")
    worker = partial(_simulate_record, anchors=anchors, kp=kp, dp=dp, dt=dt,
                     sensor_count=sensor_count, n_out=n_out, margin=margin)
    records = parallel_map(worker, jobs, workers)
    return SimulationDataset(records=records, anchors=anchors, kinetics=kp, deformation=dp,
                             sensor_count=sensor_count, n_out=n_out, dt=dt, margin=margin,
                             skipped=skipped)


def trajectory_to_frame(trajectory):
    """
    CODEX: Trajectory as a DataFrame with the on-disk column names.
    """
    return pd.DataFrame({
        "time_min": trajectory.times,
        "temp_C": trajectory.temperature,
        "doc": trajectory.doc,
        "log_visc_lnPaS": trajectory.log_viscosity,
        "deformation_mm": trajectory.deformation,
    }, columns=TRAJECTORY_COLUMNS)


def write_trajectory_csv(trajectory, path):
    write_csv(trajectory_to_frame(trajectory), path)


def read_trajectory_csv(path, doc0):
    """
    CODEX: Load a trajectory CSV written by write_trajectory_csv.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"Trajectory file not found: {path}")
    if list(frame.columns) != TRAJECTORY_COLUMNS:
        raise DataError(f"Unexpected trajectory header in {path}: {list(frame.columns)}")
    return CureTrajectory(
        times=frame["time_min"].to_numpy(dtype=float),
        temperature=frame["temp_C"].to_numpy(dtype=float),
        doc=frame["doc"].to_numpy(dtype=float),
        log_viscosity=frame["log_visc_lnPaS"].to_numpy(dtype=float),
        deformation=frame["deformation_mm"].to_numpy(dtype=float),
        doc0=float(doc0),
    )


def write_dataset(dataset, out_dir):
    """
    CODEX: Write one trajectory CSV per record and a JSON manifest.

    Returns:
        str: Path of the manifest
    """
    manifest = {
        "format": "curenet-dataset",
        "version": 1,
        "anchors": asdict(dataset.anchors),
        "kinetics": asdict(dataset.kinetics),
        "deformation": asdict(dataset.deformation),
        "sensor_count": dataset.sensor_count,
        "n_out": dataset.n_out,
        "dt": dataset.dt,
        "margin": dataset.margin,
        "skipped": dataset.skipped,
        "records": [],
    }
    for record in dataset.records:
        file_name = f"records/{record.record_id}.csv"
        write_trajectory_csv(record.trajectory, os.path.join(out_dir, file_name))
        manifest["records"].append({
            "id": record.record_id,
            "t1": record.t1,
            "T1": record.T1,
            "doc0": record.doc0,
            "file": file_name,
        })
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_json(manifest, manifest_path)
    return manifest_path


def load_dataset(out_dir):
    """
    CODEX: Read a dataset written by write_dataset.

    Args:
        out_dir (str): Dataset directory (or its manifest.json)

    Returns:
        SimulationDataset: Reconstructed dataset
    """
    manifest_path = out_dir if out_dir.endswith(".json") else os.path.join(out_dir, "manifest.json")
    base = os.path.dirname(manifest_path)
    manifest = read_json(manifest_path)
    if manifest.get("format") != "curenet-dataset":
        raise DataError(f"{manifest_path} is not a CureNet dataset manifest")
    anchors = ProfileAnchors(**manifest["anchors"])
    sensor_count = int(manifest["sensor_count"])
    margin = float(manifest.get("margin", DEFAULT_MARGIN))
    records = []
    for entry in manifest["records"]:
        profile = build_profile(entry["t1"], entry["T1"], anchors, margin)
        trajectory = read_trajectory_csv(os.path.join(base, entry["file"]), entry["doc0"])
        records.append(DatasetRecord(
            record_id=entry["id"],
            t1=float(entry["t1"]),
            T1=float(entry["T1"]),
            doc0=float(entry["doc0"]),
            branch_input=branch_input(profile, entry["doc0"], sensor_count),
            trajectory=trajectory,
        ))
    return SimulationDataset(
        records=records,
        anchors=anchors,
        kinetics=KineticsParams(**manifest["kinetics"]),
        deformation=DeformationParams(**manifest["deformation"]),
        sensor_count=sensor_count,
        n_out=int(manifest["n_out"]),
        dt=float(manifest["dt"]),
        margin=margin,
        skipped=manifest.get("skipped", []),
    )
