#!/usr/bin/env python3
"""
Rate Descriptors - deterministic functions of elapsed holding time

Every regime parameter of the model (drift c_i, jump size h_i, volatility
sigma_i, hazard rate gamma_ij and the measure-change data c*, h*, sigma*) is
a descriptor of one of three kinds:

    Constant(value)                         v
    PiecewiseConstant(breakpoints, values)  v_k on [b_k, b_{k+1}), b_0 = 0
    PowerLaw(scale, exponent)               a * t**p

Each kind knows its closed-form integral, the inverse of that integral (used
to sample holding times) and its square (used for variances). Sums and
products stay closed for Constant/PiecewiseConstant on the merged breakpoint
set; mixes that leave the family are tabulated as cell averages on a working
grid and flagged with a RuntimeWarning.

Usage:
    from descriptors import Constant, PiecewiseConstant, PowerLaw, multiply

    gamma = PiecewiseConstant((0.0, 1.0), (2.0, 1.0))
    gamma.integral(1.5)          # 2.5
"""

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np

Number = Union[float, np.ndarray]


class SpecError(ValueError):
    """Structural problem in a descriptor or spec document (not an invariant violation)."""


def _as_output(t, values):
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(t) == 0:
        return float(values)
    return values


def time_grid(horizon: float, step: float) -> np.ndarray:
    """Uniform grid 0, D, 2D, ..., horizon; the step is snapped so the cells divide the horizon."""
    n_cells = max(1, int(round(horizon / step)))
    return np.linspace(0.0, horizon, n_cells + 1)


def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# =============================================================================
# Descriptor kinds
# =============================================================================

class RateFunction:
    """Common interface of the descriptor kinds."""

    kind = "abstract"

    def __call__(self, t: Number) -> Number:
        raise NotImplementedError

    def integral(self, t: Number) -> Number:
        """Closed-form integral over [0, t]."""
        raise NotImplementedError

    def integral_between(self, a: Number, b: Number) -> Number:
        return self.integral(b) - self.integral(a)

    def inverse_integral(self, y: Number) -> Number:
        """Smallest t with integral(t) >= y; inf when the total mass stays below y."""
        raise NotImplementedError

    def square(self) -> "RateFunction":
        raise NotImplementedError

    def breakpoints_in(self, lo: float, hi: float) -> np.ndarray:
        """Breakpoints strictly inside (lo, hi)."""
        return np.empty(0)

    def total_diverges(self) -> bool:
        """True when the integral over [0, inf) is infinite."""
        raise NotImplementedError

    def integrable_at_zero(self) -> bool:
        return True

    @property
    def is_step(self) -> bool:
        """Constant between breakpoints (exact per-interval evaluation is possible)."""
        return True

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(RateFunction):
    value: float

    kind = "constant"

    def __call__(self, t):
        return _as_output(t, np.full(np.shape(t), self.value, dtype=float))

    def integral(self, t):
        return _as_output(t, self.value * np.asarray(t, dtype=float))

    def inverse_integral(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.value > 0:
                out = np.maximum(y, 0.0) / self.value
            else:
                out = np.where(y > 0, np.inf, 0.0)
        return _as_output(y, out)

    def square(self):
        return Constant(self.value * self.value)

    def total_diverges(self):
        return self.value > 0

    def as_piecewise(self) -> "PiecewiseConstant":
        return PiecewiseConstant((0.0,), (self.value,))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class PiecewiseConstant(RateFunction):
    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]

    kind = "piecewise"

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bps) == 0 or len(bps) != len(vals):
            raise SpecError(
                f"piecewise descriptor needs equal-length breakpoints/values, "
                f"got {len(bps)} and {len(vals)}"
            )
        if bps[0] != 0.0:
            raise SpecError(f"piecewise breakpoints must start at 0, got {bps[0]}")
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise SpecError(f"piecewise breakpoints must be strictly increasing: {bps}")
        if not all(math.isfinite(b) for b in bps) or not all(math.isfinite(v) for v in vals):
            raise SpecError("piecewise descriptor contains non-finite entries")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)
        b = np.asarray(bps)
        v = np.asarray(vals)
        cum = np.concatenate(([0.0], np.cumsum(v[:-1] * np.diff(b))))
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_cum", cum)

    def _index(self, t):
        idx = np.searchsorted(self._b, t, side="right") - 1
        return np.clip(idx, 0, len(self._b) - 1)

    def __call__(self, t):
        return _as_output(t, self._v[self._index(np.asarray(t, dtype=float))])

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        k = self._index(t)
        return _as_output(t, self._cum[k] + self._v[k] * (t - self._b[k]))

    def inverse_integral(self, y):
        y = np.asarray(y, dtype=float)
        k = np.searchsorted(self._cum, y, side="left") - 1
        k = np.clip(k, 0, len(self._b) - 1)
        rate = self._v[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self._b[k] + (y - self._cum[k]) / rate
        t = np.where(rate > 0, t, np.inf)
        t = np.where(y <= 0, 0.0, t)
        return _as_output(y, t)

    def square(self):
        return PiecewiseConstant(self.breakpoints, tuple(v * v for v in self.values))

    def breakpoints_in(self, lo, hi):
        b = self._b
        return b[(b > lo) & (b < hi)]

    def total_diverges(self):
        return self.values[-1] > 0

    def as_piecewise(self):
        return self

    def to_dict(self):
        return {
            "kind": "piecewise",
            "breakpoints": list(self.breakpoints),
            "values": list(self.values),
        }


@dataclass(frozen=True)
class PowerLaw(RateFunction):
    scale: float
    exponent: float

    kind = "power_law"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.scale * np.power(t, self.exponent)
        if self.exponent == 0:
            out = np.full(np.shape(t), self.scale)
        return _as_output(t, out)

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        p1 = self.exponent + 1.0
        if self.scale == 0:
            return _as_output(t, np.zeros(np.shape(t)))
        if p1 <= 0:
            return _as_output(t, np.where(t > 0, math.copysign(np.inf, self.scale), 0.0))
        return _as_output(t, self.scale * np.power(t, p1) / p1)

    def inverse_integral(self, y):
        y = np.asarray(y, dtype=float)
        p1 = self.exponent + 1.0
        if self.scale <= 0 or p1 <= 0:
            out = np.where(y > 0, np.inf, 0.0)
        else:
            out = np.power(np.maximum(y, 0.0) * p1 / self.scale, 1.0 / p1)
        return _as_output(y, out)

    def square(self):
        return PowerLaw(self.scale * self.scale, 2.0 * self.exponent)

    def total_diverges(self):
        return self.scale > 0 and self.exponent > -1.0

    def integrable_at_zero(self):
        return self.scale == 0 or self.exponent > -1.0

    @property
    def is_step(self):
        return self.exponent == 0 or self.scale == 0

    def to_dict(self):
        return {"kind": "power_law", "scale": self.scale, "exponent": self.exponent}


ZERO = Constant(0.0)
ONE = Constant(1.0)


# =============================================================================
# JSON
# =============================================================================

def descriptor_from_json(data: Any, where: str = "descriptor") -> RateFunction:
    """Parse a number or a {kind, ...} object into a descriptor."""
    if isinstance(data, bool):
        raise SpecError(f"{where}: boolean is not a rate value")
    if isinstance(data, (int, float)):
        return Constant(float(data))
    if not isinstance(data, dict) or "kind" not in data:
        raise SpecError(f"{where}: expected a number or an object with 'kind'")
    kind = data["kind"]
    try:
        if kind == "constant":
            return Constant(float(data["value"]))
        if kind == "piecewise":
            return simplify(PiecewiseConstant(tuple(data["breakpoints"]), tuple(data["values"])))
        if kind == "power_law":
            return PowerLaw(float(data["scale"]), float(data["exponent"]))
    except KeyError as e:
        raise SpecError(f"{where}: missing field {e} for kind '{kind}'")
    except (TypeError, ValueError) as e:
        raise SpecError(f"{where}: {e}")
    raise SpecError(f"{where}: unknown kind '{kind}'")


def descriptor_to_json(f: RateFunction) -> Any:
    """Constants serialize as bare numbers."""
    if isinstance(f, Constant):
        return f.value
    return f.to_dict()


# =============================================================================
# Algebra
# =============================================================================

def simplify(f: RateFunction) -> RateFunction:
    """Merge equal neighbouring pieces; a single piece becomes a Constant."""
    if not isinstance(f, PiecewiseConstant):
        return f
    bps, vals = [f.breakpoints[0]], [f.values[0]]
    for b, v in zip(f.breakpoints[1:], f.values[1:]):
        if v != vals[-1]:
            bps.append(b)
            vals.append(v)
    if len(vals) == 1:
        return Constant(vals[0])
    return PiecewiseConstant(tuple(bps), tuple(vals))


def tabulate(fn: Callable[[np.ndarray], np.ndarray], horizon: float, step: float,
             nodes: int = 4) -> PiecewiseConstant:
    """
    Dense tabulation of an arbitrary function as cell averages on [0, horizon].

    The last cell's value is carried beyond the horizon.
    """
    edges = time_grid(horizon, step)
    x, w = gauss_legendre(nodes)
    width = np.diff(edges)
    pts = edges[:-1, None] + width[:, None] * x[None, :]
    averages = (np.asarray(fn(pts), dtype=float) * w[None, :]).sum(axis=1)
    return PiecewiseConstant(tuple(edges[:-1]), tuple(averages))


def _merged(f: RateFunction, g: RateFunction,
            op: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> RateFunction:
    fp, gp = f.as_piecewise(), g.as_piecewise()
    bps = np.union1d(fp._b, gp._b)
    return simplify(PiecewiseConstant(tuple(bps), tuple(op(fp(bps), gp(bps)))))


def _needs_grid(horizon, step, what):
    if horizon is None or step is None:
        raise SpecError(f"{what} leaves the closed descriptor family and needs a working grid")
    warnings.warn(f"{what}: tabulating on a grid of step {step:g}", RuntimeWarning, stacklevel=3)


def scale(f: RateFunction, k: float) -> RateFunction:
    if isinstance(f, Constant):
        return Constant(k * f.value)
    if isinstance(f, PiecewiseConstant):
        return simplify(PiecewiseConstant(f.breakpoints, tuple(k * v for v in f.values)))
    if k == 0:
        return ZERO
    return PowerLaw(k * f.scale, f.exponent)


def add(f: RateFunction, g: RateFunction, horizon: Optional[float] = None,
        step: Optional[float] = None) -> RateFunction:
    """Pointwise f + g."""
    if g == ZERO:
        return f
    if f == ZERO:
        return g
    if isinstance(f, PowerLaw) or isinstance(g, PowerLaw):
        if isinstance(f, PowerLaw) and isinstance(g, PowerLaw) and f.exponent == g.exponent:
            return PowerLaw(f.scale + g.scale, f.exponent)
        _needs_grid(horizon, step, "sum with a power-law descriptor")
        return tabulate(lambda t: f(t) + g(t), horizon, step)
    return _merged(f, g, np.add)


def multiply(f: RateFunction, g: RateFunction, horizon: Optional[float] = None,
             step: Optional[float] = None) -> RateFunction:
    """Pointwise f * g."""
    if isinstance(f, Constant):
        return scale(g, f.value)
    if isinstance(g, Constant):
        return scale(f, g.value)
    if isinstance(f, PowerLaw) and isinstance(g, PowerLaw):
        return PowerLaw(f.scale * g.scale, f.exponent + g.exponent)
    if isinstance(f, PowerLaw) or isinstance(g, PowerLaw):
        _needs_grid(horizon, step, "product with a power-law descriptor")
        return tabulate(lambda t: f(t) * g(t), horizon, step)
    return _merged(f, g, np.multiply)


def apply(f: RateFunction, fn: Callable[[np.ndarray], np.ndarray],
          horizon: Optional[float] = None, step: Optional[float] = None) -> RateFunction:
    """Pointwise fn(f); closed for step descriptors."""
    if isinstance(f, Constant):
        return Constant(float(fn(np.asarray(f.value))))
    if isinstance(f, PiecewiseConstant):
        return simplify(PiecewiseConstant(f.breakpoints, tuple(fn(f._v))))
    _needs_grid(horizon, step, "nonlinear map of a power-law descriptor")
    return tabulate(lambda t: fn(f(t)), horizon, step)


def divide(f: RateFunction, g: RateFunction, zero_value: float = 0.0,
           horizon: Optional[float] = None, step: Optional[float] = None) -> RateFunction:
    """
    Pointwise f / g, with `zero_value` where g == 0.

    Callers check beforehand that f vanishes wherever g does.
    """
    def _ratio(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b != 0, a / np.where(b != 0, b, 1.0), zero_value)

    if isinstance(g, Constant):
        if g.value == 0:
            return Constant(zero_value)
        return scale(f, 1.0 / g.value)
    if isinstance(f, PowerLaw) and isinstance(g, PowerLaw):
        if g.scale == 0:
            return Constant(zero_value)
        return simplify(PowerLaw(f.scale / g.scale, f.exponent - g.exponent)) \
            if f.exponent != g.exponent else Constant(f.scale / g.scale)
    if isinstance(f, PowerLaw) or isinstance(g, PowerLaw):
        _needs_grid(horizon, step, "ratio with a power-law descriptor")
        return tabulate(lambda t: _ratio(f(t), g(t)), horizon, step)
    return _merged(f, g, _ratio)


def total(descriptors, horizon: Optional[float] = None,
          step: Optional[float] = None) -> RateFunction:
    """Sum of several descriptors."""
    out: RateFunction = ZERO
    for f in descriptors:
        out = add(out, f, horizon, step)
    return out


def check_points(descriptors, horizon: float, step: float) -> np.ndarray:
    """
    Points where pointwise conditions are checked on [0, horizon].

    Midpoints of the working grid cells plus the midpoints between every
    breakpoint of the given descriptors, so each constant piece is sampled.
    """
    cuts = [time_grid(horizon, step)]
    for f in descriptors:
        cuts.append(f.breakpoints_in(0.0, horizon))
    allcuts = np.unique(np.concatenate(cuts))
    return 0.5 * (allcuts[:-1] + allcuts[1:])
