#!/usr/bin/env python3
"""
Volterra - renewal systems for expectations and relative entropy

Solves systems of the form

    y_i(t) = a_i(t) + sum_{j != i} int_0^t y_j(t - u) q_ij(u) du

on a uniform grid, where q_ij(u) = gamma_ij(u) F_i(u) is the density of the
first switch i -> j. The scheme is product-trapezoidal: y_j is linear on each
cell, the kernel moments over each cell are computed with Gauss-Legendre
nodes from the descriptors' closed forms, and the only implicit term (the
cell next to u = 0) is a d x d linear solve per step. Second order in the step.

Three systems use the same core:
- expectations mu_i(t) = E[X(t) | eps(0) = i]           (solve_mu)
- conditional expectations given no switch before s  (solve_mu_conditional)
- relative entropies H_i(t) of Q against P, Q-kernels (solve_entropy)

Usage:
    from volterra import solve_mu, solve_entropy, closed_form_entropy

    mu = solve_mu(spec, horizon=5.0, step=5.0 / 4096)
    mu.to_csv('mu.csv')
"""

# Windows compatibility: ensure local imports work
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from config import DEFAULTS, default_step
from descriptors import Constant, SpecError, gauss_legendre, time_grid
from model import (
    InaccessibleMeasureError, InvariantViolation, MeasureChangeSpec, ModelSpec,
    PreconditionError, apply_girsanov, cumulative_hazard, first_switch_density,
    hazard_rate, survival, validate_change,
)


@dataclass(frozen=True, eq=False)
class GridFunctionSet:
    """d functions sampled on a uniform grid; values has shape (d, len(grid))."""
    grid: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != len(self.grid):
            raise ValueError(f"values have {values.shape[1]} columns for a grid of {len(self.grid)} points")
        if len(self.grid) < 2 or not self.step > 0:
            raise ValueError("grid needs at least two points and a positive step")
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def at(self, t):
        """Linear interpolation of every regime's function at t; shape (d,) or (d, len(t))."""
        return np.array([np.interp(t, self.grid, v) for v in self.values])

    def to_csv(self, out_path) -> Path:
        """Columns t, value_regime1, ..., value_regime<d>."""
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        header = ",".join(["t"] + [f"value_regime{i + 1}" for i in range(self.d)])
        np.savetxt(out_path, np.column_stack([self.grid, self.values.T]),
                   fmt="%.17g", delimiter=",", header=header, comments="")
        return out_path


@dataclass(frozen=True)
class EntropyCoefficients:
    """
    Coefficients of the two-state constant-parameter entropy

        H_i(t) = B t + A_i (1 - exp(-(lambda1* + lambda2*) t))

    with B = (l2 b1 + l1 b2)/s, A1 = l1 (b1 - b2)/s^2, A2 = l2 (b2 - b1)/s^2,
    s = l1 + l2 (l_i the Q-intensities).
    """
    b1: float
    b2: float
    A1: float
    A2: float
    B: float
    lambda1_star: float
    lambda2_star: float

    @classmethod
    def from_rates(cls, b1: float, b2: float, lambda1_star: float,
                   lambda2_star: float) -> "EntropyCoefficients":
        if not (lambda1_star > 0 and lambda2_star > 0):
            raise PreconditionError("closed-form entropy needs positive intensities")
        s = lambda1_star + lambda2_star
        return cls(
            b1=b1, b2=b2,
            A1=lambda1_star * (b1 - b2) / s ** 2,
            A2=lambda2_star * (b2 - b1) / s ** 2,
            B=(lambda2_star * b1 + lambda1_star * b2) / s,
            lambda1_star=lambda1_star, lambda2_star=lambda2_star,
        )

    @property
    def rate_sum(self) -> float:
        return self.lambda1_star + self.lambda2_star

    def entropy(self, t):
        """(H1(t), H2(t))."""
        t = np.asarray(t, dtype=float)
        decay = -np.expm1(-self.rate_sum * t)
        H1 = self.B * t + self.A1 * decay
        H2 = self.B * t + self.A2 * decay
        if np.ndim(t) == 0:
            return float(H1), float(H2)
        return H1, H2

    def to_dict(self):
        return {
            "b1": self.b1, "b2": self.b2, "A1": self.A1, "A2": self.A2, "B": self.B,
            "lambda1_star": self.lambda1_star, "lambda2_star": self.lambda2_star,
        }


def closed_form_entropy(b1: float, b2: float, lambda1_star: float, lambda2_star: float,
                        t) -> Tuple[float, float, EntropyCoefficients]:
    """H1(t), H2(t) and the coefficients for constant entropy rates b_i and Q-intensities."""
    coef = EntropyCoefficients.from_rates(b1, b2, lambda1_star, lambda2_star)
    H1, H2 = coef.entropy(t)
    return H1, H2, coef


# =============================================================================
# Quadrature helpers
# =============================================================================

def _cell_nodes(grid: np.ndarray, nodes: int):
    x, w = gauss_legendre(nodes)
    step = grid[1] - grid[0]
    pts = grid[:-1, None] + step * x[None, :]
    return pts, x, w, step


def _cumulative_integral(g: Callable[[np.ndarray], np.ndarray], grid: np.ndarray,
                         nodes: int) -> np.ndarray:
    """int_0^{t_n} g on every grid point (composite Gauss-Legendre)."""
    pts, _, w, step = _cell_nodes(grid, nodes)
    cells = step * (np.asarray(g(pts)) * w[None, :]).sum(axis=1)
    return np.concatenate(([0.0], np.cumsum(cells)))


def _integral_between(g: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                      nodes: int) -> float:
    if b <= a:
        return 0.0
    x, w = gauss_legendre(nodes)
    return float((b - a) * np.sum(w * np.asarray(g(a + (b - a) * x))))


def _kernel_moments(spec: ModelSpec, grid: np.ndarray, nodes: int):
    """
    Cell moments of q_ij against the two hat functions of each cell:
        W0[i, j, k] = int_cell_k q_ij(u) (1 - x) du,  W1[i, j, k] = int_cell_k q_ij(u) x du
    with x the relative position of u in cell k.
    """
    pts, x, w, step = _cell_nodes(grid, nodes)
    d, n = spec.d, len(grid) - 1
    W0 = np.zeros((d, d, n))
    W1 = np.zeros((d, d, n))
    for i in range(d):
        F = np.asarray(survival(spec, i, pts))
        for j, rate in spec.outgoing(i):
            q = np.asarray(rate(pts)) * F
            W0[i, j] = step * (q * (w * (1.0 - x))[None, :]).sum(axis=1)
            W1[i, j] = step * (q * (w * x)[None, :]).sum(axis=1)
    return W0, W1


def _solve_renewal(W0: np.ndarray, W1: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Forward time-stepping of the product-trapezoid scheme."""
    d, n_pts = forcing.shape
    y = np.zeros((d, n_pts))
    y[:, 0] = forcing[:, 0]
    implicit = np.eye(d) - W0[:, :, 0]
    for n in range(1, n_pts):
        rhs = forcing[:, n].copy()
        for i in range(d):
            for j in range(d):
                if j == i:
                    continue
                rhs[i] += np.dot(W0[i, j, 1:n], y[j, n - 1:0:-1]) + np.dot(W1[i, j, :n], y[j, n - 1::-1])
        y[:, n] = np.linalg.solve(implicit, rhs)
    return y


def _grid(horizon: float, step: Optional[float]) -> np.ndarray:
    if not horizon > 0:
        raise PreconditionError(f"horizon must be positive, got {horizon}")
    step = step or default_step(horizon)
    if not step > 0:
        raise PreconditionError(f"step must be positive, got {step}")
    return time_grid(horizon, step)


# =============================================================================
# Expectations
# =============================================================================

def _mu_integrand(spec: ModelSpec, i: int):
    r = spec.regimes[i]

    def g(u):
        return np.asarray(r.c(u)) * np.asarray(survival(spec, i, u)) \
            + np.asarray(r.h(u)) * np.asarray(first_switch_density(spec, i, u))
    return g


def forcing_mu(spec: ModelSpec, horizon: float, step: Optional[float] = None,
               nodes: int = DEFAULTS["gauss_nodes"]) -> GridFunctionSet:
    """a_i(t) = int_0^t [c_i F_i + h_i f_i] du on the grid."""
    grid = _grid(horizon, step)
    values = np.array([_cumulative_integral(_mu_integrand(spec, i), grid, nodes) for i in range(spec.d)])
    return GridFunctionSet(grid, values, label="a")


def solve_mu(spec: ModelSpec, horizon: float, step: Optional[float] = None,
             nodes: int = DEFAULTS["gauss_nodes"]) -> GridFunctionSet:
    """Expectations mu_i(t) = E[X(t) | eps(0) = i]."""
    a = forcing_mu(spec, horizon, step, nodes)
    W0, W1 = _kernel_moments(spec, a.grid, nodes)
    return GridFunctionSet(a.grid, _solve_renewal(W0, W1, a.values), label="mu")


def solve_mu_conditional(spec: ModelSpec, s: float, horizon: float,
                         step: Optional[float] = None,
                         mu: Optional[GridFunctionSet] = None,
                         nodes: int = DEFAULTS["gauss_nodes"]) -> GridFunctionSet:
    """
    mu_i(t|s) = E[X(t) | eps(0) = i, no switch before s].

    For t <= s this is l_i(t) = int_0^t c_i. Beyond s,
        mu_i(t|s) = a_i(t|s) + sum_j int_s^t mu_j(t-u) q_ij(u)/F_i(s) du
    with a_i(t|s) = l_i(s) + (a_i(t) - a_i(s))/F_i(s), using the unconditional
    mu (computed here unless given on the same grid).
    """
    if not 0 <= s < horizon:
        raise PreconditionError(f"conditioning time must satisfy 0 <= s < horizon (s={s}, horizon={horizon})")
    grid = _grid(horizon, step)
    if mu is None:
        mu = solve_mu(spec, horizon, step, nodes)
    elif len(mu.grid) != len(grid) or not np.allclose(mu.grid, grid):
        raise PreconditionError("the unconditional solution must live on the same grid")

    a = forcing_mu(spec, horizon, step, nodes)
    W0, W1 = _kernel_moments(spec, grid, nodes)
    x, w = gauss_legendre(nodes)
    ks = int(np.searchsorted(grid, s, side="right")) - 1
    n_pts = len(grid)
    values = np.zeros((spec.d, n_pts))

    for i in range(spec.d):
        r = spec.regimes[i]
        l_grid = np.asarray(r.c.integral(grid))
        l_s = float(r.c.integral(s))
        F_s = float(survival(spec, i, s))
        a_s = a.values[i, ks] + _integral_between(_mu_integrand(spec, i), grid[ks], s, nodes)
        values[i] = l_grid
        if F_s == 0:
            raise PreconditionError(f"regime {i} cannot survive until s={s}")

        # first partial cell [s, t_{ks+1}]
        part_end = grid[ks + 1]
        u_part = s + (part_end - s) * x
        q_part = {j: np.asarray(rate(u_part)) * np.asarray(survival(spec, i, u_part))
                  for j, rate in spec.outgoing(i)}

        for n in range(ks + 1, n_pts):
            total = l_s + (a.values[i, n] - a_s) / F_s
            conv = 0.0
            for j, q in q_part.items():
                conv += (part_end - s) * np.sum(w * q * np.interp(grid[n] - u_part, grid, mu.values[j]))
                k = np.arange(ks + 1, n)
                if k.size:
                    conv += np.dot(W0[i, j, k], mu.values[j, n - k]) + np.dot(W1[i, j, k], mu.values[j, n - k - 1])
            values[i, n] = total + conv / F_s

    return GridFunctionSet(grid, values, label=f"mu|s={s:g}")


# =============================================================================
# Relative entropy
# =============================================================================

def _entropy_rate(spec_P: ModelSpec, spec_Q: ModelSpec, change: MeasureChangeSpec, i: int):
    """b_i(u) = gamma^P - gamma^Q + gamma^Q ln(gamma^Q/gamma^P) + sigma*^2/2, clipped at 0."""
    sigma_star = change.sigma_star[i]

    def b(u):
        gP = np.asarray(hazard_rate(spec_P, i, u))
        gQ = np.asarray(hazard_rate(spec_Q, i, u))
        if np.any((gP == 0) & (gQ > 0)):
            raise InaccessibleMeasureError(f"regime {i}: gamma^P = 0 where gamma^Q > 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where((gP > 0) & (gQ > 0), gQ * np.log(gQ / np.where(gP > 0, gP, 1.0)), 0.0)
        rate = gP - gQ + phi + 0.5 * np.asarray(sigma_star(u)) ** 2
        return np.maximum(rate, 0.0)
    return b


def _q_model(spec_P: ModelSpec, change: MeasureChangeSpec, horizon: float,
             step: Optional[float]) -> ModelSpec:
    step = step or default_step(horizon)
    report = validate_change(spec_P, change, horizon, step=step)
    if not report.ok:
        raise InvariantViolation(report, "measure change rejected")
    return apply_girsanov(spec_P, change, horizon=horizon, step=step)


def _entropy_forcing_values(spec_P: ModelSpec, spec_Q: ModelSpec, change: MeasureChangeSpec,
                            grid: np.ndarray, nodes: int) -> np.ndarray:
    values = []
    for i in range(spec_P.d):
        b = _entropy_rate(spec_P, spec_Q, change, i)
        values.append(_cumulative_integral(
            lambda u, b=b, i=i: b(u) * np.exp(-np.asarray(cumulative_hazard(spec_Q, i, u))), grid, nodes))
    return np.array(values)


def entropy_forcing(spec_P: ModelSpec, change: MeasureChangeSpec, horizon: float,
                    step: Optional[float] = None,
                    nodes: int = DEFAULTS["gauss_nodes"]) -> GridFunctionSet:
    """a_i(t) = int_0^t b_i(u) F^Q_i(u) du."""
    grid = _grid(horizon, step)
    spec_Q = _q_model(spec_P, change, horizon, step)
    return GridFunctionSet(grid, _entropy_forcing_values(spec_P, spec_Q, change, grid, nodes),
                           label="a_entropy")


def solve_entropy(spec_P: ModelSpec, change: MeasureChangeSpec, horizon: float,
                  step: Optional[float] = None,
                  nodes: int = DEFAULTS["gauss_nodes"]) -> GridFunctionSet:
    """Relative entropies H_i(t) of Q (the measure of `change`) against P, solved with Q-kernels."""
    grid = _grid(horizon, step)
    spec_Q = _q_model(spec_P, change, horizon, step)
    forcing = _entropy_forcing_values(spec_P, spec_Q, change, grid, nodes)
    W0, W1 = _kernel_moments(spec_Q, grid, nodes)
    return GridFunctionSet(grid, _solve_renewal(W0, W1, forcing), label="H")


def constant_entropy_coefficients(spec_P: ModelSpec, change: MeasureChangeSpec) -> EntropyCoefficients:
    """Closed-form coefficients when P is two-state constant and the change is constant."""
    if not spec_P.is_markov_constant() or not all(
            isinstance(f, Constant) for f in change.c_star + change.h_star + change.sigma_star):
        raise SpecError("closed-form entropy needs a two-regime constant model and a constant change")
    rates, lambdas = [], []
    for i, j in ((0, 1), (1, 0)):
        gP = spec_P.hazard(i, j).value
        gQ = gP * (1.0 + change.h_star[i].value)
        phi = gQ * math.log(gQ / gP) if gQ > 0 and gP > 0 else 0.0
        rates.append(max(gP - gQ + phi + 0.5 * change.sigma_star[i].value ** 2, 0.0))
        lambdas.append(gQ)
    return EntropyCoefficients.from_rates(rates[0], rates[1], lambdas[0], lambdas[1])
