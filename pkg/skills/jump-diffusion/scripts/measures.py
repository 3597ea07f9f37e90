#!/usr/bin/env python3
"""
Measures - equivalent martingale measures for the regime-switching model

Q is a martingale measure for X exactly when, in every regime,

    c_i(t) + sigma_i(t) sigma*_i(t) + gamma^Q_i(t) h_i(t) = 0

This module checks that condition for a given change and constructs the
named changes:
- Esscher transform (sigma > 0): keeps the intensities, tilts the diffusion
- jump-telegraph measure (sigma = 0): unique, gamma^Q = -c/h when c/h < 0
- pure diffusion (h = 0): sigma* = -c/sigma

Mixed models (some regimes with sigma = 0, some without) get a regime-wise
report from classify_regimes instead of a global transform.

Usage:
    from measures import esscher_transform, martingale_measure_residual

    params, change = esscher_transform(spec)
    print(martingale_measure_residual(spec, change, horizon=5.0))
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config import default_step
from descriptors import ZERO, RateFunction, check_points, divide, multiply, scale, add
from model import (
    DomainError, MeasureChangeSpec, ModelSpec, default_horizon, hazard_rate,
    measure_change_from_intensities, total_hazard,
)

ESSCHER = "esscher"
JUMP_TELEGRAPH = "jump_telegraph"
PURE_DIFFUSION = "pure_diffusion"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class EsscherParams:
    theta: Tuple[RateFunction, ...]


@dataclass(frozen=True)
class NoMeasure:
    """No equivalent martingale measure exists; names the first offending regime and time."""
    regime: int
    time: float
    reason: str

    def __str__(self):
        return f"no martingale measure: regime {self.regime} at t={self.time:.6g}: {self.reason}"


@dataclass(frozen=True)
class RegimeRule:
    regime: int
    rule: str
    reason: str


def _setup(spec: ModelSpec, horizon: Optional[float], step: Optional[float]):
    horizon = horizon or default_horizon(spec)
    return horizon, step or default_step(horizon)


def martingale_measure_residual(spec_P: ModelSpec, change: MeasureChangeSpec, horizon: float,
                                step: Optional[float] = None) -> Tuple[float, ...]:
    """Per-regime sup over the grid of |c_i + sigma_i sigma*_i + gamma^Q_i h_i|."""
    step = step or default_step(horizon)
    worst = []
    for i, r in enumerate(spec_P.regimes):
        pts = check_points(spec_P.descriptors(i) + [change.c_star[i], change.h_star[i], change.sigma_star[i]],
                           horizon, step)
        gamma_Q = (1.0 + np.asarray(change.h_star[i](pts))) * np.asarray(hazard_rate(spec_P, i, pts))
        residual = np.asarray(r.c(pts)) + np.asarray(r.sigma(pts)) * np.asarray(change.sigma_star[i](pts)) \
            + gamma_Q * np.asarray(r.h(pts))
        worst.append(float(np.max(np.abs(residual))))
    return tuple(worst)


# =============================================================================
# Regime classification
# =============================================================================

def classify_regimes(spec: ModelSpec, horizon: Optional[float] = None,
                     step: Optional[float] = None) -> List[RegimeRule]:
    """Which construction applies to each regime on [0, horizon]."""
    horizon, step = _setup(spec, horizon, step)
    rules = []
    for i, r in enumerate(spec.regimes):
        pts = check_points(spec.descriptors(i), horizon, step)
        sigma = np.asarray(r.sigma(pts))
        h = np.asarray(r.h(pts))
        if np.all(sigma > 0) and np.all(h == 0):
            rules.append(RegimeRule(i, PURE_DIFFUSION, "no jumps; sigma* = -c/sigma"))
        elif np.all(sigma > 0):
            rules.append(RegimeRule(i, ESSCHER, "sigma > 0 on the horizon"))
        elif np.all(sigma == 0) and np.all(h != 0):
            rules.append(RegimeRule(i, JUMP_TELEGRAPH, "sigma = 0; gamma^Q = -c/h"))
        elif np.all(sigma == 0):
            rules.append(RegimeRule(i, UNDETERMINED, "sigma = 0 and h = 0 somewhere: no measure or infinitely many"))
        else:
            rules.append(RegimeRule(i, UNDETERMINED, "sigma vanishes on part of the horizon only"))
    return rules


def _require_rule(spec: ModelSpec, horizon: float, step: float, allowed, what: str):
    rules = classify_regimes(spec, horizon, step)
    bad = [r for r in rules if r.rule not in allowed]
    if bad:
        detail = "; ".join(f"regime {r.regime}: {r.rule} ({r.reason})" for r in bad)
        raise DomainError(f"{what} does not apply: {detail}")
    return rules


# =============================================================================
# Constructions
# =============================================================================

def esscher_transform(spec_P: ModelSpec, horizon: Optional[float] = None,
                      step: Optional[float] = None) -> Tuple[EsscherParams, MeasureChangeSpec]:
    """
    Regime-switching Esscher transform.

    theta_i = -(c_i + gamma^P_i h_i) / sigma_i^2 and the induced change is
    (c* = 0, h* = 0, sigma* = theta sigma): intensities stay those of P.

    Raises:
        DomainError: sigma_i = 0 somewhere on the horizon (see jump_telegraph_unique_measure)
    """
    horizon, step = _setup(spec_P, horizon, step)
    _require_rule(spec_P, horizon, step, (ESSCHER, PURE_DIFFUSION),
                  "Esscher transform (needs sigma > 0; for sigma = 0 use the jump-telegraph measure)")
    thetas, sigma_stars = [], []
    for i, r in enumerate(spec_P.regimes):
        imbalance = add(r.c, multiply(total_hazard(spec_P, i, horizon, step), r.h, horizon, step), horizon, step)
        theta = scale(divide(imbalance, r.sigma.square(), horizon=horizon, step=step), -1.0)
        thetas.append(theta)
        sigma_stars.append(multiply(theta, r.sigma, horizon, step))
    change = MeasureChangeSpec((ZERO,) * spec_P.d, (ZERO,) * spec_P.d, tuple(sigma_stars))
    return EsscherParams(tuple(thetas)), change


def pure_diffusion_measure(spec_P: ModelSpec, horizon: Optional[float] = None,
                           step: Optional[float] = None) -> MeasureChangeSpec:
    """The unique drift-removing change for a model without jumps: sigma* = -c/sigma."""
    horizon, step = _setup(spec_P, horizon, step)
    _require_rule(spec_P, horizon, step, (PURE_DIFFUSION,), "pure diffusion measure (needs h = 0, sigma > 0)")
    sigma_stars = [scale(divide(r.c, r.sigma, horizon=horizon, step=step), -1.0) for r in spec_P.regimes]
    return MeasureChangeSpec((ZERO,) * spec_P.d, (ZERO,) * spec_P.d, tuple(sigma_stars))


def jump_telegraph_unique_measure(spec_P: ModelSpec, horizon: Optional[float] = None,
                                  step: Optional[float] = None):
    """
    The unique martingale measure of a jump-telegraph model (sigma = 0).

    Returns:
        MeasureChangeSpec with gamma^Q_i = -c_i/h_i (sigma* = 0), or NoMeasure
        when c_i/h_i < 0 fails somewhere on the horizon

    Raises:
        DomainError: sigma != 0 somewhere, or h = 0 on part of the horizon
    """
    horizon, step = _setup(spec_P, horizon, step)
    _require_rule(spec_P, horizon, step, (JUMP_TELEGRAPH,), "jump-telegraph measure (needs sigma = 0, h != 0)")
    gamma_Q = []
    for i, r in enumerate(spec_P.regimes):
        pts = check_points(spec_P.descriptors(i), horizon, step)
        ratio = np.asarray(r.c(pts)) / np.asarray(r.h(pts))
        bad = np.nonzero(ratio >= 0)[0]
        if bad.size:
            k = bad[0]
            return NoMeasure(regime=i, time=float(pts[k]),
                             reason=f"c/h = {ratio[k]:.6g} is not negative")
        gamma_Q.append(scale(divide(r.c, r.h, horizon=horizon, step=step), -1.0))
    return measure_change_from_intensities(spec_P, gamma_Q, (ZERO,) * spec_P.d, horizon, step)


# =============================================================================
# Closed forms
# =============================================================================

def diffusion_entropy(c: float, sigma: float, t: float) -> float:
    """Relative entropy of the drift-removing measure of c t + sigma W over [0, t]."""
    if sigma <= 0:
        raise DomainError("diffusion entropy needs sigma > 0")
    return 0.5 * (c / sigma) ** 2 * t


def telegraph_entropy_rate(c: float, h: float, lam: float) -> float:
    """
    Entropy rate b of the constant jump-telegraph martingale measure:
    b = lam + c/h - (c/h) ln(-c/(h lam)).
    """
    if h == 0 or c / h >= 0:
        raise DomainError(f"no jump-telegraph martingale measure for c={c}, h={h}")
    ratio = c / h
    return lam + ratio - ratio * math.log(-ratio / lam)
