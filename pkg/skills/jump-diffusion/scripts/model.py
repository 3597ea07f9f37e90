#!/usr/bin/env python3
"""
Model - regime-switching jump-diffusion specifications

A ModelSpec holds, per regime i, the triplet <c_i, h_i, sigma_i> and the
hazard rates gamma_ij of the semi-Markov clock (all functions of the elapsed
holding time). A MeasureChangeSpec holds the Girsanov data (c*, h*, sigma*).

This module:
1. Builds and (de)serializes both spec kinds (JSON schema in references/json_schema.md)
2. Validates invariants into a ValidationReport (never raises for violations)
3. Evaluates survival, conditional survival and the first-switch kernels
4. Checks the martingale condition gamma_i h_i + c_i = 0
5. Applies a Girsanov change (Q-dynamics) and builds changes from target intensities

Usage:
    from model import load_model, validate_model, survival

    spec = load_model('figure_one.json')
    report = validate_model(spec, horizon=5.0)
    if not report.ok:
        print(report.summary())
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULTS, default_step
from descriptors import (
    ONE, ZERO, Constant, PiecewiseConstant, PowerLaw, RateFunction, SpecError,
    add, check_points, descriptor_from_json, descriptor_to_json, divide,
    multiply, scale, total,
)

PROPORTIONAL_SPLIT_NOTE = "transition split under Q preserved proportionally (gamma^Q_ij = gamma^P_ij * (1 + h*_i))"


# =============================================================================
# Exceptions
# =============================================================================

class InvariantViolation(ValueError):
    """A precondition invariant failed; the report lists every location."""

    def __init__(self, report: "ValidationReport", context: str = ""):
        self.report = report
        head = f"{context}: " if context else ""
        super().__init__(head + report.summary())


class InaccessibleMeasureError(ValueError):
    """gamma^P vanishes where the requested gamma^Q is positive."""


class DomainError(ValueError):
    """A formula is evaluated outside its domain (1+h* <= 0, sigma = 0, ...)."""


class PreconditionError(ValueError):
    """Arguments violate an operation's precondition (s > t, t outside the path, ...)."""


# =============================================================================
# Validation report
# =============================================================================

@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.violations + other.violations)

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(str(v) for v in self.violations)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [{"location": v.location, "message": v.message} for v in self.violations],
        }


# =============================================================================
# Spec types
# =============================================================================

@dataclass(frozen=True)
class RegimeTriplet:
    c: RateFunction = ZERO
    h: RateFunction = ZERO
    sigma: RateFunction = ZERO


@dataclass(frozen=True)
class Hazard:
    source: int
    target: int
    rate: RateFunction


@dataclass(frozen=True)
class ModelSpec:
    """
    Regime triplets plus the hazard rates of the switching clock.

    Hazards are listed as (source, target, rate) entries; a missing entry is a
    zero hazard. Regimes are indexed from 0.
    """
    regimes: Tuple[RegimeTriplet, ...]
    hazards: Tuple[Hazard, ...]
    measure_label: str = "P"
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(self, "hazards", tuple(self.hazards))
        object.__setattr__(self, "notes", tuple(self.notes))
        d = len(self.regimes)
        if d < 2:
            raise SpecError(f"a model needs at least 2 regimes, got {d}")
        seen = set()
        for hz in self.hazards:
            if not (0 <= hz.source < d and 0 <= hz.target < d):
                raise SpecError(f"hazard {hz.source}->{hz.target} refers to a regime outside 0..{d - 1}")
            if hz.source == hz.target:
                raise SpecError(f"hazard {hz.source}->{hz.target} lies on the diagonal")
            if (hz.source, hz.target) in seen:
                raise SpecError(f"hazard {hz.source}->{hz.target} listed twice")
            seen.add((hz.source, hz.target))
        outgoing: Dict[int, List[Tuple[int, RateFunction]]] = {i: [] for i in range(d)}
        for hz in sorted(self.hazards, key=lambda x: (x.source, x.target)):
            outgoing[hz.source].append((hz.target, hz.rate))
        object.__setattr__(self, "_outgoing", {i: tuple(v) for i, v in outgoing.items()})

    @property
    def d(self) -> int:
        return len(self.regimes)

    def outgoing(self, i: int) -> Tuple[Tuple[int, RateFunction], ...]:
        """(target, rate) pairs leaving regime i, ordered by target."""
        return self._outgoing[i]

    def hazard(self, i: int, j: int) -> RateFunction:
        for target, rate in self._outgoing[i]:
            if target == j:
                return rate
        return ZERO

    def descriptors(self, i: Optional[int] = None) -> List[RateFunction]:
        """Every descriptor of regime i (or of the whole model)."""
        regimes = range(self.d) if i is None else [i]
        out: List[RateFunction] = []
        for k in regimes:
            r = self.regimes[k]
            out.extend([r.c, r.h, r.sigma])
            out.extend(rate for _, rate in self._outgoing[k])
        return out

    def is_markov_constant(self) -> bool:
        """Two regimes, every parameter constant (the exponential Markov case)."""
        return self.d == 2 and all(isinstance(f, Constant) for f in self.descriptors())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "measure": self.measure_label,
            "regimes": [
                {
                    "c": descriptor_to_json(r.c),
                    "h": descriptor_to_json(r.h),
                    "sigma": descriptor_to_json(r.sigma),
                }
                for r in self.regimes
            ],
            "hazards": [
                {"from": hz.source, "to": hz.target, "rate": descriptor_to_json(hz.rate)}
                for hz in self.hazards
            ],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        if not isinstance(data, dict):
            raise SpecError("model document must be a JSON object")
        if "regimes" not in data or "hazards" not in data:
            raise SpecError("model document needs 'regimes' and 'hazards'")
        regimes = []
        for i, r in enumerate(data["regimes"]):
            if not isinstance(r, dict):
                raise SpecError(f"regimes[{i}] must be an object")
            regimes.append(RegimeTriplet(
                c=descriptor_from_json(r.get("c", 0.0), f"regimes[{i}].c"),
                h=descriptor_from_json(r.get("h", 0.0), f"regimes[{i}].h"),
                sigma=descriptor_from_json(r.get("sigma", 0.0), f"regimes[{i}].sigma"),
            ))
        hazards = []
        for k, entry in enumerate(data["hazards"]):
            try:
                source, target, rate = int(entry["from"]), int(entry["to"]), entry["rate"]
            except (KeyError, TypeError, ValueError):
                raise SpecError(f"hazards[{k}] needs integer 'from', 'to' and a 'rate'")
            hazards.append(Hazard(source, target, descriptor_from_json(rate, f"hazards[{k}].rate")))
        return cls(
            regimes=tuple(regimes),
            hazards=tuple(hazards),
            measure_label=str(data.get("measure", "P")),
            notes=tuple(data.get("notes", ())),
        )


@dataclass(frozen=True)
class MeasureChangeSpec:
    """Girsanov data (c*_i, h*_i, sigma*_i) per regime."""
    c_star: Tuple[RateFunction, ...]
    h_star: Tuple[RateFunction, ...]
    sigma_star: Tuple[RateFunction, ...]

    def __post_init__(self):
        for name in ("c_star", "h_star", "sigma_star"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not (len(self.c_star) == len(self.h_star) == len(self.sigma_star)):
            raise SpecError("measure change needs c_star, h_star and sigma_star for every regime")

    @property
    def d(self) -> int:
        return len(self.c_star)

    @classmethod
    def identity(cls, d: int) -> "MeasureChangeSpec":
        return cls((ZERO,) * d, (ZERO,) * d, (ZERO,) * d)

    def is_identity(self) -> bool:
        return all(f == ZERO for f in self.c_star + self.h_star + self.sigma_star)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regimes": [
                {
                    "c_star": descriptor_to_json(c),
                    "h_star": descriptor_to_json(h),
                    "sigma_star": descriptor_to_json(s),
                }
                for c, h, s in zip(self.c_star, self.h_star, self.sigma_star)
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MeasureChangeSpec":
        if not isinstance(data, dict) or "regimes" not in data:
            raise SpecError("measure change document needs 'regimes'")
        cs, hs, ss = [], [], []
        for i, r in enumerate(data["regimes"]):
            if not isinstance(r, dict):
                raise SpecError(f"regimes[{i}] must be an object")
            cs.append(descriptor_from_json(r.get("c_star", 0.0), f"regimes[{i}].c_star"))
            hs.append(descriptor_from_json(r.get("h_star", 0.0), f"regimes[{i}].h_star"))
            ss.append(descriptor_from_json(r.get("sigma_star", 0.0), f"regimes[{i}].sigma_star"))
        return cls(tuple(cs), tuple(hs), tuple(ss))


# =============================================================================
# JSON files
# =============================================================================

def _read_json(path) -> Any:
    with open(path) as f:
        return json.load(f)


def _write_json(data: Dict[str, Any], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def load_model(path) -> ModelSpec:
    return ModelSpec.from_dict(_read_json(path))


def save_model(spec: ModelSpec, path) -> Path:
    return _write_json(spec.to_dict(), path)


def load_change(path) -> MeasureChangeSpec:
    return MeasureChangeSpec.from_dict(_read_json(path))


def save_change(change: MeasureChangeSpec, path) -> Path:
    return _write_json(change.to_dict(), path)


# =============================================================================
# Hazard / survival primitives
# =============================================================================

def _check_regime(spec: ModelSpec, i: int):
    if not 0 <= i < spec.d:
        raise PreconditionError(f"regime {i} outside 0..{spec.d - 1}")


def default_horizon(spec: ModelSpec, *others: RateFunction) -> float:
    """
    A horizon covering every breakpoint twice over (at least 1).

    Raises:
        PreconditionError: a non-constant power-law descriptor is involved (no
            breakpoint bounds where it changes)
    """
    last = 0.0
    for f in list(spec.descriptors()) + list(others):
        if isinstance(f, PowerLaw) and not f.is_step:
            raise PreconditionError(
                f"power-law descriptor {f.to_dict()} has no natural horizon; pass the working horizon")
        if isinstance(f, PiecewiseConstant):
            last = max(last, f.breakpoints[-1])
    return max(1.0, 2.0 * last)


def hazard_rate(spec: ModelSpec, i: int, t):
    """Total hazard gamma_i(t) = sum_j gamma_ij(t)."""
    _check_regime(spec, i)
    out = np.zeros(np.shape(t))
    for _, rate in spec.outgoing(i):
        out = out + rate(t)
    return float(out) if np.ndim(t) == 0 else out


def cumulative_hazard(spec: ModelSpec, i: int, t):
    """Gamma_i(t) = sum_j Gamma_ij(t), from the closed-form integrals."""
    _check_regime(spec, i)
    out = np.zeros(np.shape(t))
    for _, rate in spec.outgoing(i):
        out = out + rate.integral(t)
    return float(out) if np.ndim(t) == 0 else out


def total_hazard(spec: ModelSpec, i: int, horizon: Optional[float] = None,
                 step: Optional[float] = None) -> RateFunction:
    """gamma_i as a single descriptor."""
    _check_regime(spec, i)
    return total([rate for _, rate in spec.outgoing(i)], horizon, step)


def survival(spec: ModelSpec, i: int, t):
    """F_i(t) = exp(-Gamma_i(t)), the survival of the first switching time from regime i."""
    if np.any(np.asarray(t) < 0):
        raise PreconditionError("survival needs t >= 0")
    out = np.exp(-np.asarray(cumulative_hazard(spec, i, t)))
    return float(out) if np.ndim(t) == 0 else out


def conditional_survival(spec: ModelSpec, i: int, t, s: float):
    """F_i(t|s) = exp(-(Gamma_i(t) - Gamma_i(s))) for s <= t."""
    if s < 0 or np.any(np.asarray(t) < s):
        raise PreconditionError(f"conditional survival needs 0 <= s <= t (s={s})")
    out = np.exp(-(np.asarray(cumulative_hazard(spec, i, t)) - cumulative_hazard(spec, i, s)))
    return float(out) if np.ndim(t) == 0 else out


def transition_kernel(spec: ModelSpec, i: int, j: int, u):
    """q_ij(u) = gamma_ij(u) F_i(u): density of leaving i for j after holding u."""
    rate = spec.hazard(i, j)
    out = np.asarray(rate(u)) * np.asarray(survival(spec, i, u))
    return float(out) if np.ndim(u) == 0 else out


def first_switch_density(spec: ModelSpec, i: int, u):
    """f_i(u) = gamma_i(u) F_i(u)."""
    out = np.asarray(hazard_rate(spec, i, u)) * np.asarray(survival(spec, i, u))
    return float(out) if np.ndim(u) == 0 else out


# =============================================================================
# Validation
# =============================================================================

def _rate_violations(f: RateFunction, where: str, nonneg: bool) -> List[Violation]:
    out = []
    if nonneg:
        if isinstance(f, Constant) and f.value < 0:
            out.append(Violation(where, f"rate value {f.value} is negative"))
        elif isinstance(f, PiecewiseConstant) and min(f.values) < 0:
            out.append(Violation(where, f"rate value {min(f.values)} is negative"))
        elif isinstance(f, PowerLaw) and f.scale < 0:
            out.append(Violation(where, f"power-law scale {f.scale} is negative"))
    return out


def validate_model(spec: ModelSpec, horizon: float) -> ValidationReport:
    """
    Check every model invariant.

    Args:
        spec: model to check
        horizon: working horizon (> 0)

    Returns:
        ValidationReport listing each violation with its regime/field location
    """
    if not horizon > 0:
        raise PreconditionError(f"horizon must be positive, got {horizon}")
    violations: List[Violation] = []

    for i, r in enumerate(spec.regimes):
        violations += _rate_violations(r.sigma, f"regime {i} sigma", nonneg=True)
        if isinstance(r.sigma, PowerLaw) and r.sigma.scale != 0 and r.sigma.exponent <= -0.5:
            violations.append(Violation(f"regime {i} sigma", "sigma not square integrable at 0"))
        if not r.c.integrable_at_zero():
            violations.append(Violation(f"regime {i} c", "drift not integrable at 0"))

    for hz in spec.hazards:
        where = f"hazard {hz.source}->{hz.target}"
        violations += _rate_violations(hz.rate, where, nonneg=True)
        if not hz.rate.integrable_at_zero():
            violations.append(Violation(where, "hazard not integrable at 0"))

    for i in range(spec.d):
        rates = [rate for _, rate in spec.outgoing(i)]
        if not rates or not any(rate.total_diverges() for rate in rates):
            violations.append(Violation(f"regime {i} hazards", "non-exploding condition fails (total hazard integral stays bounded)"))

    return ValidationReport(tuple(violations))


def validate_change(spec_P: ModelSpec, change: MeasureChangeSpec, horizon: float,
                    tol: float = DEFAULTS["tol"], floor: float = DEFAULTS["intensity_floor"],
                    step: Optional[float] = None) -> ValidationReport:
    """
    Check a measure change against P on [0, horizon].

    h* > -1, c* + gamma^P h* = 0 and gamma^Q = (1 + h*) gamma^P >= floor,
    evaluated at cell midpoints and between descriptor breakpoints. The floor
    applies where gamma^P > 0; a dead zone of P stays a dead zone of Q.
    """
    if change.d != spec_P.d:
        raise SpecError(f"measure change has {change.d} regimes, model has {spec_P.d}")
    if not horizon > 0:
        raise PreconditionError(f"horizon must be positive, got {horizon}")
    step = step or default_step(horizon)
    violations: List[Violation] = []

    for i in range(spec_P.d):
        c_star, h_star, sigma_star = change.c_star[i], change.h_star[i], change.sigma_star[i]
        pts = check_points(spec_P.descriptors(i) + [c_star, h_star, sigma_star], horizon, step)
        h = np.asarray(h_star(pts))
        gamma_P = np.asarray(hazard_rate(spec_P, i, pts))

        bad = np.nonzero(h <= -1.0)[0]
        if bad.size:
            k = bad[0]
            violations.append(Violation(
                f"regime {i} h_star", f"h* > -1 fails: h*({pts[k]:.6g}) = {h[k]:.6g}"))

        residual = np.abs(gamma_P * h + np.asarray(c_star(pts)))
        k = int(np.argmax(residual))
        if residual[k] > tol:
            violations.append(Violation(
                f"regime {i} c_star",
                f"consistency c* + gamma^P h* = 0 fails: residual {residual[k]:.3g} at t={pts[k]:.6g}"))

        gamma_Q = (1.0 + h) * gamma_P
        low = np.nonzero((gamma_P > 0) & (gamma_Q < floor))[0]
        if low.size:
            k = low[0]
            violations.append(Violation(
                f"regime {i} gamma_Q",
                f"induced intensity {gamma_Q[k]:.3g} below floor {floor:g} at t={pts[k]:.6g}"))

        if isinstance(sigma_star, PowerLaw) and sigma_star.scale != 0 and sigma_star.exponent <= -0.5:
            violations.append(Violation(f"regime {i} sigma_star", "sigma* not square integrable at 0"))

    return ValidationReport(tuple(violations))


# =============================================================================
# Martingale condition
# =============================================================================

@dataclass(frozen=True)
class MartingaleCheck:
    ok: bool
    max_residual: float
    per_regime: Tuple[float, ...]


def check_martingale_condition(spec: ModelSpec, horizon: float,
                               tol: float = DEFAULTS["tol"],
                               step: Optional[float] = None) -> MartingaleCheck:
    """sup over the grid of |gamma_i(t) h_i(t) + c_i(t)| per regime; ok iff every sup <= tol."""
    step = step or default_step(horizon)
    worst = []
    for i, r in enumerate(spec.regimes):
        pts = check_points(spec.descriptors(i), horizon, step)
        residual = np.asarray(hazard_rate(spec, i, pts)) * np.asarray(r.h(pts)) + np.asarray(r.c(pts))
        worst.append(float(np.max(np.abs(residual))))
    max_residual = max(worst)
    return MartingaleCheck(ok=max_residual <= tol, max_residual=max_residual, per_regime=tuple(worst))


# =============================================================================
# Girsanov
# =============================================================================

def apply_girsanov(spec_P: ModelSpec, change: MeasureChangeSpec,
                   horizon: Optional[float] = None, step: Optional[float] = None,
                   tol: float = DEFAULTS["tol"],
                   floor: float = DEFAULTS["intensity_floor"]) -> ModelSpec:
    """
    Q-dynamics of X under the change: <c + sigma sigma*, h, sigma> with
    gamma^Q_ij = gamma^P_ij (1 + h*_i).

    Raises:
        InvariantViolation: the change fails validate_change against P
        PreconditionError: no horizon given and a descriptor is a non-constant power law
    """
    horizon = horizon or default_horizon(spec_P, *change.c_star, *change.h_star, *change.sigma_star)
    step = step or default_step(horizon)
    report = validate_change(spec_P, change, horizon, tol=tol, floor=floor, step=step)
    if not report.ok:
        raise InvariantViolation(report, "measure change rejected")

    regimes = []
    for i, r in enumerate(spec_P.regimes):
        drift = add(r.c, multiply(r.sigma, change.sigma_star[i], horizon, step), horizon, step)
        regimes.append(RegimeTriplet(c=drift, h=r.h, sigma=r.sigma))

    hazards = []
    for hz in spec_P.hazards:
        factor = add(ONE, change.h_star[hz.source], horizon, step)
        hazards.append(Hazard(hz.source, hz.target, multiply(hz.rate, factor, horizon, step)))

    notes = spec_P.notes if PROPORTIONAL_SPLIT_NOTE in spec_P.notes else spec_P.notes + (PROPORTIONAL_SPLIT_NOTE,)
    return ModelSpec(tuple(regimes), tuple(hazards), measure_label="Q", notes=notes)


def measure_change_from_intensities(spec_P: ModelSpec, gamma_Q: Sequence[RateFunction],
                                    sigma_star: Sequence[RateFunction],
                                    horizon: Optional[float] = None,
                                    step: Optional[float] = None) -> MeasureChangeSpec:
    """
    The change with c*_i = gamma^P_i - gamma^Q_i and h*_i = gamma^Q_i / gamma^P_i - 1.

    Raises:
        InaccessibleMeasureError: gamma^P_i = 0 somewhere gamma^Q_i > 0
    """
    if len(gamma_Q) != spec_P.d or len(sigma_star) != spec_P.d:
        raise SpecError(f"need {spec_P.d} target intensities and sigma* descriptors")
    horizon = horizon or default_horizon(spec_P, *gamma_Q, *sigma_star)
    step = step or default_step(horizon)

    c_star, h_star = [], []
    for i in range(spec_P.d):
        gP = total_hazard(spec_P, i, horizon, step)
        gQ = gamma_Q[i]
        pts = check_points([gP, gQ], horizon, step)
        dead = (np.asarray(gP(pts)) == 0) & (np.asarray(gQ(pts)) > 0)
        if np.any(dead):
            t_bad = float(pts[np.argmax(dead)])
            raise InaccessibleMeasureError(
                f"regime {i}: gamma^P = 0 where gamma^Q > 0 (t={t_bad:.6g}); Q is not equivalent to P")
        c_star.append(add(gP, scale(gQ, -1.0), horizon, step))
        h_star.append(add(divide(gQ, gP, zero_value=1.0, horizon=horizon, step=step),
                          Constant(-1.0), horizon, step))
    return MeasureChangeSpec(tuple(c_star), tuple(h_star), tuple(sigma_star))


def constant_model(lam: Sequence[float], c: Sequence[float], h: Sequence[float],
                   sigma: Sequence[float], measure_label: str = "P") -> ModelSpec:
    """Two-regime exponential model with constant parameters."""
    regimes = tuple(RegimeTriplet(Constant(float(ci)), Constant(float(hi)), Constant(float(si)))
                    for ci, hi, si in zip(c, h, sigma))
    hazards = (Hazard(0, 1, Constant(float(lam[0]))), Hazard(1, 0, Constant(float(lam[1]))))
    return ModelSpec(regimes, hazards, measure_label=measure_label)
