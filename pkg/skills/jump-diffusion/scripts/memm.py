#!/usr/bin/env python3
"""
MEMM - minimal entropy martingale measures, two-state constant case

For constant parameters (lambda_i, c_i, h_i, sigma_i > 0) every martingale
measure is fixed by its Q-intensities x = (lambda1*, lambda2*): the diffusion
part follows from sigma*_i = -(c_i + x_i h_i)/sigma_i. The entropy rate of
regime i is

    b_i(x) = lambda_i - x + x ln(x/lambda_i) + (c_i + x h_i)^2 / (2 sigma_i^2)

and the relative entropy over [0, t] is H_i(t) = B t + A_i (1 - e^{-(x1+x2) t}).
Three problems are solved:

    short term   min b_i           per regime, bisection on b_i' (increasing)
    long term    min B             nested bisection on the stationarity system
    horizon t    min H_i(t)/t      trust-region Newton in log-intensities, multi-start

plus the one-regime (Levy) degenerate case.

Usage:
    python memm.py                       # print the preset problem's solutions

    from memm import FIGURE_ONE, solve_short_term, solve_long_term
    print(solve_long_term(FIGURE_ONE).lambda_star)
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from config import DEFAULTS
from descriptors import Constant, SpecError
from model import (
    DomainError, MeasureChangeSpec, ModelSpec, PreconditionError, constant_model,
    measure_change_from_intensities,
)
from volterra import EntropyCoefficients

SHORT_TERM = "short_term"
LONG_TERM = "long_term"
HORIZON = "horizon"


class HorizonConvergenceError(RuntimeError):
    """No start reached the gradient tolerance; `best` holds the best iterate found."""

    def __init__(self, message: str, best: "MemmSolution"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class MemmProblem:
    """Two-state Markov model with constant parameters and sigma_i > 0."""
    lam: Tuple[float, float]
    c: Tuple[float, float]
    h: Tuple[float, float]
    sigma: Tuple[float, float]

    def __post_init__(self):
        for name in ("lam", "c", "h", "sigma"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2:
                raise SpecError(f"MEMM problems have exactly 2 regimes ({name} has {len(value)})")
            object.__setattr__(self, name, value)
        if min(self.lam) <= 0:
            raise PreconditionError(f"intensities must be positive, got {self.lam}")
        if min(self.sigma) <= 0:
            raise DomainError("MEMM problems need sigma_i > 0; for sigma = 0 use the jump-telegraph measure")

    @property
    def C2(self) -> Tuple[float, float]:
        """C_i^2 = h_i^2 / sigma_i^2."""
        return tuple(h * h / (s * s) for h, s in zip(self.h, self.sigma))

    @property
    def alpha(self) -> Tuple[float, float]:
        """alpha_i = -c_i/h_i (nan where h_i = 0)."""
        return tuple(-c / h if h != 0 else math.nan for c, h in zip(self.c, self.h))

    def to_model(self) -> ModelSpec:
        return constant_model(self.lam, self.c, self.h, self.sigma)

    @classmethod
    def from_model(cls, spec: ModelSpec) -> "MemmProblem":
        if not spec.is_markov_constant():
            raise SpecError("MEMM problems need a two-regime model with constant parameters")
        r0, r1 = spec.regimes
        return cls(
            lam=(spec.hazard(0, 1).value, spec.hazard(1, 0).value),
            c=(r0.c.value, r1.c.value),
            h=(r0.h.value, r1.h.value),
            sigma=(r0.sigma.value, r1.sigma.value),
        )

    def to_dict(self):
        return {"lambda": list(self.lam), "c": list(self.c), "h": list(self.h), "sigma": list(self.sigma)}


FIGURE_ONE = MemmProblem(lam=(1.0, 1.0), c=(-1.0, 3.0), h=(1.0, -0.1), sigma=(1.0, 1.0))


@dataclass(frozen=True)
class MemmSolution:
    lambda_star: Tuple[float, float]
    sigma_star: Tuple[float, float]
    coefficients: EntropyCoefficients
    kind: str
    problem: MemmProblem = field(repr=False)
    horizon: Optional[float] = None
    initial_state: Optional[int] = None
    residuals: Tuple[float, ...] = ()

    def to_measure_change(self) -> MeasureChangeSpec:
        """The (c*, h*, sigma*) change of this measure against the problem's P."""
        return measure_change_from_intensities(
            self.problem.to_model(),
            [Constant(x) for x in self.lambda_star],
            [Constant(s) for s in self.sigma_star],
        )

    def to_dict(self):
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "initial_state": self.initial_state,
            "lambda_star": list(self.lambda_star),
            "sigma_star": list(self.sigma_star),
            "coefficients": self.coefficients.to_dict(),
            "residuals": list(self.residuals),
            "problem": self.problem.to_dict(),
        }


class LevySolution(NamedTuple):
    beta_star: float
    lambda_star: float
    entropy_slope: float


class SweepRow(NamedTuple):
    t: float
    lambda1_star: float
    lambda2_star: float
    H1_over_t: float
    H2_over_t: float


# =============================================================================
# Entropy-rate algebra
# =============================================================================

def b_value(p: MemmProblem, i: int, x):
    lam, c, h, s = p.lam[i], p.c[i], p.h[i], p.sigma[i]
    return lam - x + x * np.log(x / lam) + (c + x * h) ** 2 / (2.0 * s * s)


def b_prime(p: MemmProblem, i: int, x):
    lam, c, h, s = p.lam[i], p.c[i], p.h[i], p.sigma[i]
    return np.log(x / lam) + h * (c + x * h) / (s * s)


def b_second(p: MemmProblem, i: int, x):
    return 1.0 / x + p.h[i] ** 2 / p.sigma[i] ** 2


def induced_sigma_star(p: MemmProblem, i: int, x: float) -> float:
    """sigma*_i = -(c_i + x h_i)/sigma_i, the diffusion part of the martingale measure."""
    return -(p.c[i] + x * p.h[i]) / p.sigma[i]


def phi_residuals(p: MemmProblem, x1, x2):
    """Stationarity system of B: (s b1' + b2 - b1, s b2' + b1 - b2), s = x1 + x2."""
    s = x1 + x2
    b1, b2 = b_value(p, 0, x1), b_value(p, 1, x2)
    return s * b_prime(p, 0, x1) + b2 - b1, s * b_prime(p, 1, x2) + b1 - b2


def long_term_rate(p: MemmProblem, x1, x2):
    """B(x1, x2) = (x2 b1 + x1 b2)/(x1 + x2)."""
    return (x2 * b_value(p, 0, x1) + x1 * b_value(p, 1, x2)) / (x1 + x2)


def hessian_B(p: MemmProblem, x1: float, x2: float) -> np.ndarray:
    s = x1 + x2
    phi1, phi2 = phi_residuals(p, x1, x2)
    B11 = x2 / s * b_second(p, 0, x1) - 2.0 * x2 * phi1 / s ** 3
    B22 = x1 / s * b_second(p, 1, x2) - 2.0 * x1 * phi2 / s ** 3
    B12 = (x1 * phi1 + x2 * phi2) / s ** 3
    return np.array([[B11, B12], [B12, B22]])


def coefficients_at(p: MemmProblem, x1: float, x2: float) -> EntropyCoefficients:
    return EntropyCoefficients.from_rates(float(b_value(p, 0, x1)), float(b_value(p, 1, x2)), x1, x2)


def _solution(p: MemmProblem, x1: float, x2: float, kind: str, residuals,
              horizon: Optional[float] = None, initial_state: Optional[int] = None) -> MemmSolution:
    return MemmSolution(
        lambda_star=(float(x1), float(x2)),
        sigma_star=(induced_sigma_star(p, 0, x1), induced_sigma_star(p, 1, x2)),
        coefficients=coefficients_at(p, x1, x2),
        kind=kind,
        problem=p,
        horizon=horizon,
        initial_state=initial_state,
        residuals=tuple(float(r) for r in residuals),
    )


# =============================================================================
# Bracketed roots
# =============================================================================

def expand_bracket(f: Callable[[float], float], x0: float,
                   max_iter: int = DEFAULTS["root_max_iter"]) -> Tuple[float, float]:
    """Geometric expansion from x0 > 0 to lo <= hi with f(lo) <= 0 <= f(hi), f increasing."""
    lo = hi = x0
    for _ in range(max_iter):
        if f(lo) <= 0:
            break
        lo *= 0.5
    else:
        raise RuntimeError(f"no lower bracket found below {x0}")
    for _ in range(max_iter):
        if f(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise RuntimeError(f"no upper bracket found above {x0}")
    return lo, hi


def bisect(f: Callable[[float], float], lo: float, hi: float,
           tol: float = DEFAULTS["root_tol"], max_iter: int = DEFAULTS["root_max_iter"]) -> float:
    """
    Root of an increasing f bracketed by f(lo) <= 0 <= f(hi).

    An endpoint with |f| <= tol is returned as is; otherwise scipy's bisection
    halves the bracket down to machine precision or max_iter halvings, which
    leaves |f| below tol for any f that is well scaled near the root.
    """
    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo) <= tol or abs(f_hi) <= tol:
        return lo if abs(f_lo) <= abs(f_hi) else hi
    if f_lo > 0 or f_hi < 0:
        raise ValueError(f"[{lo:g}, {hi:g}] does not bracket a root (f = {f_lo:g}, {f_hi:g})")
    return optimize.bisect(f, lo, hi, xtol=np.finfo(float).tiny, rtol=4.0 * np.finfo(float).eps,
                           maxiter=max_iter, disp=False)


def _increasing_root(f: Callable[[float], float], x0: float, tol: float) -> float:
    lo, hi = expand_bracket(f, x0)
    return bisect(f, lo, hi, tol)


# =============================================================================
# Short and long term
# =============================================================================

def solve_short_term(p: MemmProblem, tol: float = DEFAULTS["root_tol"]) -> MemmSolution:
    """Per-regime minimiser of b_i: the root of the increasing b_i'."""
    roots = [
        _increasing_root(lambda x, i=i: float(b_prime(p, i, x)), p.lam[i], tol)
        for i in range(2)
    ]
    residuals = [abs(float(b_prime(p, i, roots[i]))) for i in range(2)]
    return _solution(p, roots[0], roots[1], SHORT_TERM, residuals)


def _inner_lambda1(p: MemmProblem, x2: float, tol: float) -> float:
    """phi(x2): the x1 solving the first stationarity equation (increasing in x1)."""
    return _increasing_root(lambda x1: float(phi_residuals(p, x1, x2)[0]), p.lam[0], tol)


def solve_long_term(p: MemmProblem, tol: float = DEFAULTS["root_tol"]) -> MemmSolution:
    """
    Minimiser of B(x1, x2).

    Inner: x1 = phi(x2) solves the first equation of the stationarity system.
    Outer: g(x2) = b1'(phi(x2)) + b2'(x2) = 0. On the inner curve g is the sum
    of both equations over s, and g' = b2'' - g/s is positive at every root,
    so the root is unique and bisection on the sign of g finds it.
    """
    def g(x2):
        x1 = _inner_lambda1(p, x2, tol)
        return float(b_prime(p, 0, x1) + b_prime(p, 1, x2))

    x2 = _increasing_root(g, p.lam[1], tol)
    x1 = _inner_lambda1(p, x2, tol)
    phi1, phi2 = phi_residuals(p, x1, x2)
    return _solution(p, x1, x2, LONG_TERM, (abs(phi1), abs(phi2)))


# =============================================================================
# Horizon problem
# =============================================================================

def _horizon_derivatives(p: MemmProblem, t: float, i: int, y: np.ndarray):
    """
    Gradient and Hessian of H_i(t)/t = B + A_i (1 - e^{-st})/t in y = ln x.

    A_i = w u with w = x_i/s^2 and u = +-(b1 - b2); products are expanded by hand.
    """
    x = np.exp(np.asarray(y, dtype=float))
    x1, x2 = float(x[0]), float(x[1])
    s = x1 + x2
    b1, b2 = float(b_value(p, 0, x1)), float(b_value(p, 1, x2))
    d1, d2 = float(b_prime(p, 0, x1)), float(b_prime(p, 1, x2))
    sign = 1.0 if i == 0 else -1.0
    e_i, ones = np.eye(2)[i], np.ones(2)

    w = x[i] / s ** 2
    u = sign * (b1 - b2)
    dw = e_i / s ** 2 - 2.0 * x[i] / s ** 3 * ones
    d2w = -2.0 / s ** 3 * (np.outer(e_i, ones) + np.outer(ones, e_i)) + 6.0 * x[i] / s ** 4 * np.ones((2, 2))
    du = sign * np.array([d1, -d2])
    d2u = sign * np.diag([float(b_second(p, 0, x1)), -float(b_second(p, 1, x2))])

    A = w * u
    dA = u * dw + w * du
    d2A = u * d2w + np.outer(dw, du) + np.outer(du, dw) + w * d2u

    phi1, phi2 = s * d1 + b2 - b1, s * d2 + b1 - b2
    dB = np.array([x2 * phi1, x1 * phi2]) / s ** 2
    d2B = hessian_B(p, x1, x2)

    E = -math.expm1(-s * t) / t
    decay = math.exp(-s * t)
    grad_x = dB + E * dA + A * decay * ones
    hess_x = d2B + E * d2A + decay * (np.outer(dA, ones) + np.outer(ones, dA)) - t * decay * A * np.ones((2, 2))

    grad_y = x * grad_x
    hess_y = np.outer(x, x) * hess_x + np.diag(grad_y)
    return grad_y, hess_y


def _objective(p: MemmProblem, t: float, i: int, y: np.ndarray) -> float:
    """H_i(t)/t at log-intensities y; inf where it overflows."""
    x1, x2 = np.exp(y)
    if not (np.isfinite(x1) and np.isfinite(x2)):
        return math.inf
    coef = coefficients_at(p, float(x1), float(x2))
    A = coef.A1 if i == 0 else coef.A2
    value = coef.B + A * (-math.expm1(-coef.rate_sum * t)) / t
    return value if math.isfinite(value) else math.inf


def _gradient(p: MemmProblem, t: float, i: int, y: np.ndarray) -> np.ndarray:
    return _horizon_derivatives(p, t, i, y)[0]


def _hessian(p: MemmProblem, t: float, i: int, y: np.ndarray) -> np.ndarray:
    return _horizon_derivatives(p, t, i, y)[1]


def _minimize_from(p: MemmProblem, t: float, i: int, y0: np.ndarray, tol: float, max_iter: int):
    """
    Trust-region Newton (exact Hessian) from y0.

    Status 2 means the quadratic model predicts no representable decrease; the
    iterate is then accepted at |grad| <= sqrt(tol).
    """
    res = optimize.minimize(
        lambda y: _objective(p, t, i, y), np.asarray(y0, dtype=float),
        method="trust-exact",
        jac=lambda y: _gradient(p, t, i, y),
        hess=lambda y: _hessian(p, t, i, y),
        options={"gtol": tol, "maxiter": max_iter, "initial_trust_radius": 1.0,
                 "max_trust_radius": 2.0},
    )
    g = _gradient(p, t, i, res.x)
    worst = float(np.max(np.abs(g)))
    converged = worst <= tol or (res.status == 2 and worst <= math.sqrt(tol))
    return res.x, float(res.fun), g, converged


def solve_horizon(p: MemmProblem, t: float, initial_state: int = 0,
                  tol: float = 1e-10, max_iter: int = DEFAULTS["newton_max_iter"],
                  starts: Optional[Sequence[MemmSolution]] = None) -> MemmSolution:
    """
    Minimiser of H_i(t; x1, x2) over x in (0, inf)^2 for the given initial state.

    scipy's trust-exact method (analytic gradient and Hessian in log-intensities)
    runs from the short-term and the long-term solutions (or `starts`); the best
    converged result wins.

    Raises:
        HorizonConvergenceError: no start converged; carries the best iterate
    """
    if not t > 0:
        raise PreconditionError(f"horizon must be positive, got {t}")
    if initial_state not in (0, 1):
        raise PreconditionError(f"initial state must be 0 or 1, got {initial_state}")
    if starts is None:
        starts = (solve_short_term(p), solve_long_term(p))

    best = None
    for start in starts:
        y, J, g, converged = _minimize_from(p, t, initial_state, np.log(start.lambda_star), tol, max_iter)
        if best is None or (converged, -J) > (best[3], -best[1]):
            best = (y, J, g, converged)

    y, J, g, converged = best
    x1, x2 = (float(v) for v in np.exp(y))
    solution = _solution(p, x1, x2, HORIZON, np.abs(g), horizon=t, initial_state=initial_state)
    if not converged:
        raise HorizonConvergenceError(
            f"horizon optimizer did not reach |grad| <= {tol:g} at t={t:g} (best |grad| = {np.max(np.abs(g)):.3g})",
            solution)
    return solution


def horizon_sweep(p: MemmProblem, times: Sequence[float], initial_state: int = 0) -> List[SweepRow]:
    """
    Horizon-optimal measures over a range of t.

    lambda columns are the argmin for `initial_state`; H1_over_t and H2_over_t
    are the minimal entropies per unit time for each initial state.
    """
    starts = (solve_short_term(p), solve_long_term(p))
    rows = []
    for t in times:
        by_state = [solve_horizon(p, t, state, starts=starts) for state in (0, 1)]
        chosen = by_state[initial_state]
        H1 = by_state[0].coefficients.entropy(t)[0]
        H2 = by_state[1].coefficients.entropy(t)[1]
        rows.append(SweepRow(float(t), chosen.lambda_star[0], chosen.lambda_star[1], H1 / t, H2 / t))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, np.asarray(rows, dtype=float).reshape(-1, 5), fmt="%.17g", delimiter=",",
               header="t,lambda1_star,lambda2_star,H1_over_t,H2_over_t", comments="")
    return out_path


# =============================================================================
# Levy case
# =============================================================================

def solve_levy(c: float, h: float, sigma: float, lam: float,
               tol: float = DEFAULTS["root_tol"]) -> LevySolution:
    """
    One regime: c + beta sigma^2 + lam h e^{beta h} = 0 (increasing in beta),
    lambda* = lam e^{beta h}, and the entropy slope
    lam (1 - e^{beta h} + beta h e^{beta h}) + h^2/(2 sigma^2) (c/h + lam e^{beta h})^2.
    """
    if h == 0:
        raise DomainError("the Levy case needs h != 0")
    if sigma <= 0:
        raise DomainError("the Levy case needs sigma > 0")

    def f(beta):
        return c + beta * sigma * sigma + lam * h * math.exp(beta * h)

    lo, hi = -1.0, 1.0
    for _ in range(DEFAULTS["root_max_iter"]):
        if f(lo) <= 0 <= f(hi):
            break
        lo, hi = 2.0 * lo, 2.0 * hi
    else:
        raise RuntimeError("no bracket for the Levy martingale condition")
    beta = bisect(f, lo, hi, tol)
    tilt = math.exp(beta * h)
    slope = lam * (1.0 - tilt + beta * h * tilt) + h * h / (2.0 * sigma * sigma) * (c / h + lam * tilt) ** 2
    return LevySolution(beta_star=beta, lambda_star=lam * tilt, entropy_slope=slope)


if __name__ == "__main__":
    short = solve_short_term(FIGURE_ONE)
    long = solve_long_term(FIGURE_ONE)
    print("=" * 60)
    print("PRESET PROBLEM (lambda=(1,1), sigma=(1,1), c=(-1,3), h=(1,-0.1))")
    print("=" * 60)
    print(f"  short term: lambda* = {short.lambda_star}, sigma* = {short.sigma_star}")
    print(f"  long term:  lambda* = {long.lambda_star}, B = {long.coefficients.B:.6f}")
