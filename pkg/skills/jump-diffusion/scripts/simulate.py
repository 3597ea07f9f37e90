#!/usr/bin/env python3
"""
Simulate - sample paths, Radon-Nikodym weights and Monte Carlo estimators

Paths are built holding by holding. The next switch is a competing-risks
draw: one Exp(1) variable per target j, mapped through the inverse of the
integrated hazard Gamma_ij, and the earliest target wins. Within a holding
the elapsed-time clock restarts at 0 and each elementary interval (grid
cells split at switch times and sigma breakpoints) gets exact Gaussian
increments: (B, int sigma dB, int sigma* dB) are drawn jointly from their
covariance when a path carries a sigma* tilt for a later weight.

Every path owns its own Philox stream keyed by (seed, path index), so a
batch gives the same numbers whether it is generated serially or split up.

Usage:
    from simulate import Functional, mc_expectation

    est = mc_expectation(spec, 0, Functional.TERMINAL_X, t=1.0, n_paths=20000, rng_seed=7)
    print(est.estimate, est.std_error)
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))
from pathlib import Path as FilePath

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULTS
from descriptors import ONE, RateFunction, multiply, time_grid
from model import (
    DomainError, InvariantViolation, MeasureChangeSpec, ModelSpec,
    PreconditionError, validate_change,
)


class SwitchLimitError(RuntimeError):
    """A path exceeded the switch safety cap (the hazards are close to exploding)."""


class Holding(NamedTuple):
    time: float
    target: int
    censored: bool


class Segments(NamedTuple):
    """Elementary intervals of a path with their Brownian increments."""
    start: np.ndarray
    end: np.ndarray
    regime: np.ndarray
    u0: np.ndarray      # elapsed holding time at start
    u1: np.ndarray      # elapsed holding time at end
    dB: np.ndarray
    dWstar: np.ndarray  # int sigma* dB under the path's tilt, 0 without one


@dataclass(frozen=True, eq=False)
class Path:
    """One trajectory on [0, horizon]; component arrays live on `grid`."""
    horizon: float
    grid: np.ndarray
    switch_times: np.ndarray    # tau_0 = 0 < tau_1 < ... <= horizon
    regimes: np.ndarray         # regime on [tau_n, tau_{n+1})
    jump_sizes: np.ndarray      # h_{eps(tau_{n-1})}(T_n), one per switch
    Tc: np.ndarray
    Nh: np.ndarray
    Wsigma: np.ndarray
    segments: Segments
    tilt: Optional[Tuple[RateFunction, ...]] = None

    @property
    def X(self) -> np.ndarray:
        return self.Tc + self.Nh + self.Wsigma

    @property
    def holding_times(self) -> np.ndarray:
        return np.diff(self.switch_times)

    @property
    def first_switch(self) -> float:
        return float(self.switch_times[1]) if len(self.switch_times) > 1 else np.inf

    def grid_index(self, t: float) -> int:
        k = int(np.searchsorted(self.grid, t - 1e-12 * max(1.0, self.horizon)))
        if k >= len(self.grid) or abs(self.grid[k] - t) > 1e-9 * max(1.0, self.horizon):
            raise PreconditionError(f"t={t} is not a grid point of this path")
        return k

    def value_at(self, t: float) -> float:
        k = self.grid_index(t)
        return float(self.Tc[k] + self.Nh[k] + self.Wsigma[k])

    def count_at(self, t: float) -> int:
        """N(t): switches in (0, t]."""
        return int(np.searchsorted(self.switch_times, t, side="right")) - 1

    def regime_at(self, t):
        idx = np.searchsorted(self.switch_times, t, side="right") - 1
        return self.regimes[np.clip(idx, 0, len(self.regimes) - 1)]


@dataclass(frozen=True)
class WeightedSample:
    value: float
    weight: float
    log_weight: float


@dataclass(frozen=True)
class Estimate:
    estimate: float
    std_error: float
    n_paths: int


class Functional(Enum):
    TERMINAL_X = "terminal_x"
    TERMINAL_ENTROPY_INTEGRAND = "terminal_entropy_integrand"
    SWITCH_COUNT = "switch_count"
    NO_SWITCH = "no_switch"
    ONE = "one"


# =============================================================================
# Random streams
# =============================================================================

def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Independent Philox stream for one path."""
    key = (int(seed) % 2 ** 64) * 2 ** 64 + int(path_id)
    return np.random.Generator(np.random.Philox(key=key))


# =============================================================================
# Holding times
# =============================================================================

def sample_holding(spec: ModelSpec, i: int, rng: np.random.Generator,
                   horizon: Optional[float] = None) -> Holding:
    """
    Competing-risks draw of the holding time in regime i and the next regime.

    Each target j gets T_ij = Gamma_ij^{-1}(E_j) with E_j ~ Exp(1); the
    earliest wins. A holding beyond `horizon` (or an infinite one) is
    returned censored, capped at the horizon, with target -1.
    """
    best_time, best_target = np.inf, -1
    for target, rate in spec.outgoing(i):
        candidate = rate.inverse_integral(rng.standard_exponential())
        if candidate < best_time:
            best_time, best_target = candidate, target
    if horizon is not None and best_time > horizon:
        return Holding(float(horizon), -1, True)
    if not np.isfinite(best_time):
        return Holding(np.inf, -1, True)
    return Holding(float(best_time), best_target, False)


# =============================================================================
# Paths
# =============================================================================

def _cross_integral(f: RateFunction, g: RateFunction, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """int_u0^u1 f g on intervals that no breakpoint of f or g splits."""
    mid = 0.5 * (u0 + u1)
    if f.is_step:
        return np.asarray(f(mid)) * np.asarray(g.integral_between(u0, u1))
    if g.is_step:
        return np.asarray(g(mid)) * np.asarray(f.integral_between(u0, u1))
    return np.asarray(multiply(f, g).integral_between(u0, u1))


def brownian_increments(integrands: Sequence[RateFunction], u0: np.ndarray, u1: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    """
    Joint draw of int_u0^u1 f dB for every f in `integrands`, one row per interval.

    With step integrands one normal per interval suffices. Otherwise the rows
    are Gaussian with covariance G_kl = int f_k f_l, sampled through the
    eigendecomposition of G (which may be singular).
    """
    n, m = len(u0), len(integrands)
    if all(f.is_step for f in integrands):
        dB = np.sqrt(u1 - u0) * rng.standard_normal(n)
        mid = 0.5 * (u0 + u1)
        return np.stack([np.asarray(f(mid)) * dB for f in integrands], axis=1)
    gram = np.empty((n, m, m))
    for k in range(m):
        for l in range(k, m):
            gram[:, k, l] = gram[:, l, k] = _cross_integral(integrands[k], integrands[l], u0, u1)
    w, V = np.linalg.eigh(gram)
    root = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    return np.einsum("nij,nj->ni", root, rng.standard_normal((n, m)))


def simulate_path(spec: ModelSpec, i0: int, horizon: float, grid_step: float,
                  rng: np.random.Generator, align: Sequence[RateFunction] = (),
                  switch_limit: int = DEFAULTS["switch_limit"],
                  tilt: Optional[Sequence[RateFunction]] = None) -> Path:
    """
    Simulate one path started in regime i0 at elapsed holding time 0.

    Args:
        spec: model (any measure)
        i0: initial regime
        horizon: path length
        grid_step: spacing of the output grid
        rng: the path's random stream
        align: extra descriptors whose breakpoints (in elapsed time) split
               the elementary intervals
        switch_limit: safety cap on switches per path
        tilt: per-regime sigma* of a later Radon-Nikodym weight; int sigma* dB
              is then sampled jointly with the path's own increments

    Returns:
        Path with Tc, Nh, Wsigma on the grid and the elementary intervals
    """
    if not horizon > 0 or not grid_step > 0:
        raise PreconditionError("simulate_path needs horizon > 0 and grid_step > 0")
    if not 0 <= i0 < spec.d:
        raise PreconditionError(f"initial regime {i0} outside 0..{spec.d - 1}")
    if tilt is not None:
        tilt = tuple(tilt)
        if len(tilt) != spec.d:
            raise PreconditionError(f"tilt needs {spec.d} descriptors, got {len(tilt)}")

    grid = time_grid(horizon, grid_step)
    Tc = np.zeros(len(grid))
    Nh = np.zeros(len(grid))
    Wsigma = np.zeros(len(grid))
    parts: List[tuple] = []
    switch_times, regimes, jumps = [0.0], [i0], []

    t, regime = 0.0, i0
    tc = nh = w = 0.0
    while t < horizon:
        hold = sample_holding(spec, regime, rng, horizon - t)
        end = horizon if hold.censored else min(t + hold.time, horizon)
        r = spec.regimes[regime]

        lo = np.searchsorted(grid, t, side="right")
        hi = np.searchsorted(grid, end, side="left")
        pieces = [[t], grid[lo:hi], [end]]
        integrands = [ONE, r.sigma] + ([tilt[regime]] if tilt is not None else [])
        for f in (*integrands[1:], *align):
            pieces.append(t + f.breakpoints_in(0.0, end - t))
        cuts = np.unique(np.concatenate(pieces))
        if len(cuts) < 2:
            cuts = np.array([t, t])
        u = cuts - t
        u0, u1 = u[:-1], u[1:]

        incr = brownian_increments(integrands, u0, u1, rng)
        dB, dW = incr[:, 0], incr[:, 1]
        dWstar = incr[:, 2] if tilt is not None else np.zeros(len(u0))
        tc_run = tc + np.cumsum(np.asarray(r.c.integral_between(u0, u1)))
        w_run = w + np.cumsum(dW)

        idx = np.minimum(np.searchsorted(grid, cuts[1:]), len(grid) - 1)
        on_grid = grid[idx] == cuts[1:]
        Tc[idx[on_grid]] = tc_run[on_grid]
        Wsigma[idx[on_grid]] = w_run[on_grid]
        Nh[idx[on_grid]] = nh
        parts.append((cuts[:-1], cuts[1:], np.full(len(u0), regime), u0, u1, dB, dWstar))
        tc, w = float(tc_run[-1]), float(w_run[-1])

        if hold.censored or t + hold.time > horizon:
            break
        jump = float(r.h(hold.time))
        nh += jump
        if on_grid[-1]:
            Nh[idx[-1]] = nh
        t = t + hold.time
        regime = hold.target
        switch_times.append(t)
        regimes.append(regime)
        jumps.append(jump)
        if len(jumps) > switch_limit:
            raise SwitchLimitError(
                f"more than {switch_limit} switches before t={t:.6g}; check the non-exploding condition")

    segments = Segments(*(np.concatenate(col) for col in zip(*parts)))
    return Path(
        horizon=float(horizon),
        grid=grid,
        switch_times=np.asarray(switch_times),
        regimes=np.asarray(regimes, dtype=int),
        jump_sizes=np.asarray(jumps),
        Tc=Tc, Nh=Nh, Wsigma=Wsigma,
        segments=segments,
        tilt=tilt,
    )


def path_generator(spec: ModelSpec, i0: int, horizon: float, grid_step: float,
                   seed: int, n_paths: int, align: Sequence[RateFunction] = (),
                   start: int = 0, tilt: Optional[Sequence[RateFunction]] = None) -> Iterator[Path]:
    """Paths start, start+1, ... each on its own stream."""
    for k in range(start, start + n_paths):
        yield simulate_path(spec, i0, horizon, grid_step, path_rng(seed, k), align=align, tilt=tilt)


# =============================================================================
# Path functionals
# =============================================================================

def _segments_until(path: Path, t: float) -> np.ndarray:
    return path.segments.end <= t + 1e-12 * max(1.0, path.horizon)


def _jump_log_terms(path: Path, h_star: Sequence[RateFunction], t: float) -> float:
    n = path.count_at(t)
    total = 0.0
    for k in range(1, n + 1):
        prev = int(path.regimes[k - 1])
        held = float(path.switch_times[k] - path.switch_times[k - 1])
        factor = 1.0 + float(h_star[prev](held))
        if factor <= 0:
            raise DomainError(
                f"1 + h* = {factor:.6g} <= 0 at the switch t={path.switch_times[k]:.6g} from regime {prev}")
        total += np.log(factor)
    return total


def radon_nikodym_weight(path: Path, spec_P: ModelSpec, change: MeasureChangeSpec,
                         t: float) -> WeightedSample:
    """
    Z(t) along a P-path:
        ln Z = T^{c* - sigma*^2/2}(t) + sum_n ln(1 + h*_{eps(tau_{n-1})}(T_n)) + W^{sigma*}(t)

    W^{sigma*} comes from the path's own increments: the jointly sampled
    int sigma* dB when the path was simulated with tilt=change.sigma_star, or
    sigma*(mid) dB for a piecewise-constant sigma* whose breakpoints the path's
    intervals respect (align=change.sigma_star).

    Raises:
        PreconditionError: sigma* is not piecewise constant and the path has no matching tilt
    """
    if change.d != spec_P.d:
        raise PreconditionError("measure change and model disagree on the regime count")
    if t > path.horizon + 1e-12 * max(1.0, path.horizon) or t < 0:
        raise PreconditionError(f"t={t} lies outside the path [0, {path.horizon}]")
    value = path.value_at(t)
    if change.is_identity():
        return WeightedSample(value=value, weight=1.0, log_weight=0.0)

    seg = path.segments
    mask = _segments_until(path, t)
    tilted = path.tilt is not None and path.tilt == tuple(change.sigma_star)
    log_w = 0.0
    for i in range(spec_P.d):
        m = mask & (seg.regime == i)
        if not np.any(m):
            continue
        u0, u1 = seg.u0[m], seg.u1[m]
        c_star, sigma_star = change.c_star[i], change.sigma_star[i]
        drift = np.asarray(c_star.integral_between(u0, u1)) \
            - 0.5 * np.asarray(sigma_star.square().integral_between(u0, u1))
        if tilted:
            dWstar = seg.dWstar[m]
        elif sigma_star.is_step:
            dWstar = np.asarray(sigma_star(0.5 * (u0 + u1))) * seg.dB[m]
        else:
            raise PreconditionError(
                f"sigma* of regime {i} is not piecewise constant; simulate with tilt=change.sigma_star")
        log_w += float(np.sum(drift)) + float(np.sum(dWstar))
    log_w += _jump_log_terms(path, change.h_star, t)
    return WeightedSample(value=value, weight=float(np.exp(log_w)), log_weight=log_w)


def entropy_integrand(path: Path, change: MeasureChangeSpec, t: float) -> float:
    """T^{c* + sigma*^2/2}(t) + sum_n ln(1 + h*_{eps(tau_{n-1})}(T_n)) along a Q-path."""
    if change.is_identity():
        return 0.0
    seg = path.segments
    mask = _segments_until(path, t)
    total = 0.0
    for i in range(change.d):
        m = mask & (seg.regime == i)
        if not np.any(m):
            continue
        u0, u1 = seg.u0[m], seg.u1[m]
        total += float(np.sum(np.asarray(change.c_star[i].integral_between(u0, u1))
                              + 0.5 * np.asarray(change.sigma_star[i].square().integral_between(u0, u1))))
    return total + _jump_log_terms(path, change.h_star, t)


def evaluate_functional(path: Path, functional: Functional, t: float,
                        change: Optional[MeasureChangeSpec] = None) -> float:
    if functional is Functional.TERMINAL_X:
        return path.value_at(t)
    if functional is Functional.SWITCH_COUNT:
        return float(path.count_at(t))
    if functional is Functional.NO_SWITCH:
        return 1.0 if path.first_switch > t else 0.0
    if functional is Functional.ONE:
        return 1.0
    if functional is Functional.TERMINAL_ENTROPY_INTEGRAND:
        if change is None:
            return 0.0
        return entropy_integrand(path, change, t)
    raise ValueError(f"unknown functional {functional}")


# =============================================================================
# Estimators
# =============================================================================

def _estimate(values: np.ndarray) -> Estimate:
    n = len(values)
    return Estimate(
        estimate=float(np.mean(values)),
        std_error=float(np.std(values, ddof=1) / np.sqrt(n)),
        n_paths=n,
    )


def _check_paths(n_paths: int):
    if n_paths < DEFAULTS["min_paths"]:
        raise PreconditionError(f"need at least {DEFAULTS['min_paths']} paths, got {n_paths}")


def mc_expectation(spec: ModelSpec, i0: int, functional: Functional, t: float,
                   n_paths: int, rng_seed: int,
                   change: Optional[MeasureChangeSpec] = None) -> Estimate:
    """
    Sample mean of a path functional at time t with its standard error.

    TERMINAL_ENTROPY_INTEGRAND needs the change that produced `spec` from P
    (`spec` is then the Q-model); without one it is identically 0.
    """
    _check_paths(n_paths)
    align = change.sigma_star if change is not None else ()
    values = np.fromiter(
        (evaluate_functional(p, functional, t, change)
         for p in path_generator(spec, i0, t, t, rng_seed, n_paths, align=align)),
        dtype=float, count=n_paths,
    )
    return _estimate(values)


def mc_weighted_expectation(spec_P: ModelSpec, change: MeasureChangeSpec, i0: int,
                            functional: Functional, t: float, n_paths: int,
                            rng_seed: int) -> Estimate:
    """E_P[Z(t) f(path)]: the Q-expectation of f computed from P-paths."""
    _check_paths(n_paths)
    report = validate_change(spec_P, change, horizon=t)
    if not report.ok:
        raise InvariantViolation(report, "measure change rejected")
    values = np.empty(n_paths)
    for k, p in enumerate(path_generator(spec_P, i0, t, t, rng_seed, n_paths, tilt=change.sigma_star)):
        values[k] = radon_nikodym_weight(p, spec_P, change, t).weight * evaluate_functional(p, functional, t, change)
    return _estimate(values)


# =============================================================================
# CSV output
# =============================================================================

def write_paths_csv(paths: Sequence[Path], out_path) -> FilePath:
    """One row per (path, grid point): path_id, t, regime, Tc, Nh, Wsigma, X."""
    blocks = []
    for k, p in enumerate(paths):
        blocks.append(np.column_stack([
            np.full(len(p.grid), k), p.grid, p.regime_at(p.grid),
            p.Tc, p.Nh, p.Wsigma, p.X,
        ]))
    out_path = FilePath(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, np.vstack(blocks) if blocks else np.empty((0, 7)),
               fmt="%.17g", delimiter=",", header="path_id,t,regime,Tc,Nh,Wsigma,X", comments="")
    return out_path


def write_estimates_csv(rows: Sequence[tuple], out_path) -> FilePath:
    """Rows of (t, estimate, std_error, n_paths)."""
    out_path = FilePath(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, np.asarray(rows, dtype=float).reshape(-1, 4),
               fmt="%.17g", delimiter=",", header="t,estimate,std_error,n_paths", comments="")
    return out_path
