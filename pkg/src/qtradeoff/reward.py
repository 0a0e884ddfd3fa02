"""Reward functions, the fluid benchmark and its optimality certificates.

A reward ``F`` maps an arrival rate in ``[0, lambda_max]`` to a nonnegative
payoff with ``F(0) = 0``.  The fluid benchmark is the best value of
``E[F(X)]`` over distributions of ``X`` on ``[0, lambda_max]`` whose mean is
at most one (the service rate).  It is attained either by the point mass at
one, or by a two-point mixture straddling one.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import (
    DomainError,
    EvaluationError,
    NoMajorantError,
    ResolutionError,
    StructureError,
)

FD_STEP = 1e-5
_DOMAIN_SLACK = 1e-12

KINDS = ("quadratic", "power", "linear", "polynomial", "tabulated", "custom")


@dataclass(frozen=True)
class RewardFunction:
    """Reward ``F`` on ``[0, lambda_max]``.

    Use the classmethod constructors rather than building one by hand.
    ``params`` holds the kind-specific numbers as a tuple of ``(name, value)``
    pairs so the object stays hashable and immutable.
    """

    kind: str
    lambda_max: float
    params: tuple = ()
    _fn: Callable = field(default=None, repr=False, compare=False)
    _d1: Callable | None = field(default=None, repr=False, compare=False)
    _d2: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown reward kind {self.kind!r}")
        if not (self.lambda_max > 0 and math.isfinite(self.lambda_max)):
            raise DomainError(f"lambda_max must be positive and finite, got {self.lambda_max}")
        xs = np.linspace(0.0, self.lambda_max, 257)
        ys = self._fn(xs)
        if not np.all(np.isfinite(ys)):
            raise EvaluationError(f"{self.kind} reward is not finite on [0, {self.lambda_max}]")
        if abs(ys[0]) > 1e-12:
            raise DomainError(f"reward must satisfy F(0) = 0, got F(0) = {ys[0]!r}")
        if ys.min() < -1e-12:
            raise DomainError("reward must be nonnegative on its domain")

    # -- constructors -----------------------------------------------------

    @classmethod
    def quadratic(cls, a: float, b: float, c: float = 0.0, lambda_max: float = 4.0) -> "RewardFunction":
        """``F(x) = a x^2 + b x + c``."""
        return cls(
            "quadratic", float(lambda_max), (("a", a), ("b", b), ("c", c)),
            _fn=lambda x: a * np.square(x) + b * np.asarray(x) + c,
            _d1=lambda x: 2 * a * np.asarray(x) + b,
            _d2=lambda x: np.full(np.shape(x), 2.0 * a) if np.ndim(x) else 2.0 * a,
        )

    @classmethod
    def power(cls, exponent: float, lambda_max: float = 4.0, scale: float = 1.0) -> "RewardFunction":
        """``F(x) = scale * x**exponent`` (``exponent > 0``)."""
        if exponent <= 0:
            raise DomainError("power reward needs a positive exponent")
        p, s = float(exponent), float(scale)

        def d1(x):
            with np.errstate(divide="ignore"):
                return s * p * np.power(np.asarray(x, dtype=float), p - 1)

        def d2(x):
            with np.errstate(divide="ignore", invalid="ignore"):
                return s * p * (p - 1) * np.power(np.asarray(x, dtype=float), p - 2)

        return cls(
            "power", float(lambda_max), (("exponent", p), ("scale", s)),
            _fn=lambda x: s * np.power(np.asarray(x, dtype=float), p),
            _d1=d1, _d2=d2,
        )

    @classmethod
    def linear(cls, slope: float = 1.0, lambda_max: float = 2.0) -> "RewardFunction":
        return cls(
            "linear", float(lambda_max), (("slope", slope),),
            _fn=lambda x: slope * np.asarray(x, dtype=float),
            _d1=lambda x: np.full(np.shape(x), float(slope)) if np.ndim(x) else float(slope),
            _d2=lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
        )

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], lambda_max: float = 4.0) -> "RewardFunction":
        """Polynomial with ``coefficients`` in increasing degree order."""
        poly = Polynomial(np.asarray(coefficients, dtype=float))
        d1, d2 = poly.deriv(1), poly.deriv(2)
        return cls(
            "polynomial", float(lambda_max),
            tuple((f"c{i}", float(c)) for i, c in enumerate(coefficients)),
            _fn=poly, _d1=d1, _d2=d2,
        )

    @classmethod
    def tabulated(cls, xs: Sequence[float], ys: Sequence[float], rule: str = "linear",
                  lambda_max: float | None = None) -> "RewardFunction":
        """Reward interpolated from ``(x, F(x))`` pairs.

        ``rule`` is ``"linear"`` (piecewise linear, derivatives by finite
        differences) or ``"cubic"`` (natural cubic spline, derivatives taken
        from the spline).
        """
        x = np.asarray(xs, dtype=float)
        y = np.asarray(ys, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise DomainError("tabulated reward needs matching 1-d x and y arrays with >= 2 points")
        if np.any(np.diff(x) <= 0):
            raise DomainError("tabulated x grid must be strictly increasing")
        lmax = float(x[-1]) if lambda_max is None else float(lambda_max)
        if x[0] > 0 or x[-1] < lmax - _DOMAIN_SLACK:
            raise DomainError("tabulated grid must cover [0, lambda_max]")
        params = (("rule", rule), ("x", tuple(x.tolist())), ("y", tuple(y.tolist())))
        if rule == "linear":
            return cls("tabulated", lmax, params, _fn=lambda v: np.interp(v, x, y))
        if rule == "cubic":
            spline = CubicSpline(x, y, bc_type="natural")
            return cls("tabulated", lmax, params, _fn=spline,
                       _d1=spline.derivative(1), _d2=spline.derivative(2))
        raise DomainError(f"unknown interpolation rule {rule!r}")

    @classmethod
    def from_callable(cls, fn: Callable, lambda_max: float, name: str = "custom",
                      d1: Callable | None = None, d2: Callable | None = None) -> "RewardFunction":
        """Wrap an arbitrary vectorised callable (derivatives optional)."""
        return cls("custom", float(lambda_max), (("name", name),), _fn=fn, _d1=d1, _d2=d2)

    # -- evaluation -------------------------------------------------------

    def param(self, name: str):
        return dict(self.params)[name]

    def with_lambda_max(self, lambda_max: float) -> "RewardFunction":
        """Same reward on ``[0, lambda_max]``."""
        if self.kind == "tabulated" and lambda_max > self.param("x")[-1] + _DOMAIN_SLACK:
            raise DomainError(f"tabulated grid ends at {self.param('x')[-1]}, below {lambda_max}")
        return replace(self, lambda_max=float(lambda_max))

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    @property
    def grid_spacing(self) -> float:
        if self.kind != "tabulated":
            return 0.0
        return float(np.max(np.diff(self.param("x"))))

    def __call__(self, x):
        """Vectorised evaluation without domain checks."""
        return self._fn(x)

    def __repr__(self):
        shown = ", ".join(f"{k}={v}" for k, v in self.params if k not in ("x", "y"))
        return f"RewardFunction({self.kind}, {shown}, lambda_max={self.lambda_max})"


def _check_domain(f: RewardFunction, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -_DOMAIN_SLACK) or np.any(arr > f.lambda_max + _DOMAIN_SLACK) or np.any(np.isnan(arr)):
        raise DomainError(f"x={x} outside reward domain [0, {f.lambda_max}]")
    return np.clip(arr, 0.0, f.lambda_max)


def evaluate(f: RewardFunction, x):
    """Return ``F(x)``; raises :class:`DomainError` outside ``[0, lambda_max]``."""
    arr = _check_domain(f, x)
    val = f(arr)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"F({x}) is not finite")
    return float(val) if np.ndim(val) == 0 else np.asarray(val, dtype=float)


def derivative(f: RewardFunction, x: float, order: int = 1, side: str = "central",
               h: float = FD_STEP) -> float:
    """First or second derivative of ``f`` at ``x``.

    Analytic derivatives are used whenever the reward kind provides them.
    Otherwise a finite difference with step ``h`` is taken; ``side`` selects
    the stencil and a one-sided stencil is substituted automatically when the
    central one would leave the domain.
    """
    if order not in (1, 2):
        raise DomainError("derivative order must be 1 or 2")
    if side not in ("central", "left", "right"):
        raise DomainError(f"unknown stencil side {side!r}")
    x = float(_check_domain(f, x))
    analytic = f._d1 if order == 1 else f._d2
    if analytic is not None:
        return float(analytic(x))
    if f.kind == "tabulated" and f.grid_spacing > h:
        raise ResolutionError(
            f"tabulated grid spacing {f.grid_spacing:g} is coarser than step h={h:g}")

    npts = 3 if order == 1 else 4
    if side == "central" and (x - h < 0 or x + h > f.lambda_max):
        side = "right" if x - h < 0 else "left"
    if side == "right" and x + npts * h > f.lambda_max + _DOMAIN_SLACK:
        side = "left"
    if side == "left" and x - npts * h < -_DOMAIN_SLACK:
        raise DomainError(f"domain too short for a finite difference at x={x}")

    if side == "central":
        fm, f0, fp = f(np.array([x - h, x, x + h]))
        return (fp - fm) / (2 * h) if order == 1 else (fp - 2 * f0 + fm) / h**2
    sgn = 1.0 if side == "right" else -1.0
    v = f(np.clip(x + sgn * h * np.arange(4), 0.0, f.lambda_max))
    if order == 1:
        return sgn * (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    return (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2


# -- fluid benchmark ------------------------------------------------------


class Structure(enum.Enum):
    DEGENERATE = "degenerate"
    TWO_POINT = "two_point"


class ConcaveLike(enum.Enum):
    YES = "yes"
    NO = "no"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class FluidSolution:
    """Optimal value and support of the fluid benchmark.

    ``x1 > 1 > x2`` and the weight ``p`` on ``x1`` are set only for the
    two-point structure.  ``margin`` is the evidence behind the concave-like
    verdict: the two-point improvement over ``F(1)`` when positive, otherwise
    the smallest curvature-normalised Jensen gap found on the grid.
    """

    f_star: float
    f_one: float
    structure: Structure
    concave_like: ConcaveLike
    margin: float
    x1: float | None = None
    x2: float | None = None
    p: float | None = None

    @property
    def is_two_point(self) -> bool:
        return self.structure is Structure.TWO_POINT

    def support(self) -> tuple[float, float, float]:
        if not self.is_two_point:
            raise StructureError("degenerate fluid solution has a single support point at 1")
        return self.x1, self.x2, self.p


def mixture_value(f: RewardFunction, x1, x2):
    """Value of the mean-one mixture of ``x1 > 1`` and ``x2 < 1``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p = (1.0 - x2) / (x1 - x2)
    return p * f(x1) + (1.0 - p) * f(x2)


def _refine_pair(f: RewardFunction, x1: float, x2: float, s1: float, s2: float,
                 refine_tol: float, max_rounds: int = 80, npts: int = 33):
    lo1, hi1 = np.nextafter(1.0, 2.0), f.lambda_max
    lo2, hi2 = 0.0, np.nextafter(1.0, 0.0)
    best = float(mixture_value(f, x1, x2))
    for _ in range(max_rounds):
        g1 = np.linspace(max(lo1, x1 - 2 * s1), min(hi1, x1 + 2 * s1), npts)
        g2 = np.linspace(max(lo2, x2 - 2 * s2), min(hi2, x2 + 2 * s2), npts)
        vals = mixture_value(f, g1[:, None], g2[None, :])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        gain = float(vals[i, j]) - best
        if gain > 0:
            best, x1, x2 = float(vals[i, j]), float(g1[i]), float(g2[j])
        s1, s2 = s1 / 8, s2 / 8
        if gain < refine_tol and max(s1, s2) < 1e-10:
            break
    return best, x1, x2


def fluid_benchmark(f: RewardFunction, tol: float = 1e-6, n_grid: int = 1024,
                    refine_tol: float = 1e-13, ambiguous: str = "degenerate") -> FluidSolution:
    """Solve the fluid benchmark by grid search plus local refinement.

    Mean-one pairs ``x2 < 1 < x1`` are scanned on an ``n_grid`` x ``n_grid``
    mesh; the three best cells are refined until a round improves by less
    than ``refine_tol``.  The verdict is ``NO`` (not concave-like) when a pair
    beats ``F(1)`` by at least ``tol``, ``YES`` when every mesh pair falls
    short of ``F(1)`` by at least ``tol * (x1 - 1) * (1 - x2)``, and
    ``AMBIGUOUS`` otherwise.

    For an ambiguous verdict a declared linear reward gets the support
    ``(lambda_max, 0)``; any other reward is reported as degenerate unless
    ``ambiguous="two_point"`` asks for the best pair found.
    """
    if f.lambda_max < 1:
        raise DomainError(f"fluid benchmark needs lambda_max >= 1, got {f.lambda_max}")
    if n_grid < 512:
        raise DomainError("n_grid must be at least 512")
    if ambiguous not in ("degenerate", "two_point"):
        raise DomainError(f"ambiguous must be 'degenerate' or 'two_point', got {ambiguous!r}")

    f_one = float(evaluate(f, 1.0))
    try:
        slope = derivative(f, 1.0, 1, side="left" if f.lambda_max <= 1 else "central")
        if slope <= 0:
            warnings.warn(f"F'(1) = {slope:g} <= 0: the reward does not increase at capacity",
                          stacklevel=2)
    except ResolutionError:
        pass

    left = np.linspace(0.0, 1.0, n_grid + 1)[:-1]
    f_left = f(left)
    if not np.all(np.isfinite(f_left)):
        raise EvaluationError("reward is not finite on [0, 1)")
    best_dirac = float(np.max(f_left))

    if f.lambda_max == 1.0:
        f_star = max(f_one, best_dirac)
        return FluidSolution(f_star, f_one, Structure.DEGENERATE, ConcaveLike.YES, math.inf)

    right = np.linspace(1.0, f.lambda_max, n_grid + 1)[1:]
    f_right = f(right)
    if not np.all(np.isfinite(f_right)):
        raise EvaluationError("reward is not finite on (1, lambda_max]")
    p = (1.0 - left[None, :]) / (right[:, None] - left[None, :])
    vals = p * f_right[:, None] + (1.0 - p) * f_left[None, :]
    gap = (f_one - vals) / ((right[:, None] - 1.0) * (1.0 - left[None, :]))
    min_gap = float(gap.min())

    s1, s2 = (f.lambda_max - 1.0) / n_grid, 1.0 / n_grid
    flat = np.argpartition(vals.ravel(), -3)[-3:]
    best_val, bx1, bx2 = -math.inf, math.nan, math.nan
    for idx in flat:
        i, j = np.unravel_index(idx, vals.shape)
        v, x1, x2 = _refine_pair(f, float(right[i]), float(left[j]), s1, s2, refine_tol)
        if v > best_val:
            best_val, bx1, bx2 = v, x1, x2

    improvement = best_val - f_one
    if improvement >= tol:
        verdict, margin = ConcaveLike.NO, improvement
    elif min_gap >= tol:
        verdict, margin = ConcaveLike.YES, min_gap
    else:
        verdict, margin = ConcaveLike.AMBIGUOUS, max(improvement, min_gap)

    if verdict is ConcaveLike.NO or (verdict is ConcaveLike.AMBIGUOUS and ambiguous == "two_point"
                                     and not f.is_linear and f(bx1) > f(bx2)):
        pw = (1.0 - bx2) / (bx1 - bx2)
        sol = FluidSolution(max(best_val, f_one), f_one, Structure.TWO_POINT, verdict, margin,
                            bx1, bx2, pw)
    elif verdict is ConcaveLike.AMBIGUOUS and f.is_linear:
        sol = FluidSolution(f_one, f_one, Structure.TWO_POINT, verdict, margin,
                            f.lambda_max, 0.0, 1.0 / f.lambda_max)
    else:
        sol = FluidSolution(f_one, f_one, Structure.DEGENERATE, verdict, margin)

    if best_dirac > sol.f_star + tol:
        warnings.warn("F exceeds its capacity value below 1; the benchmark is attained "
                      "strictly inside the stability region", stacklevel=2)
        sol = FluidSolution(best_dirac, f_one, sol.structure, sol.concave_like, sol.margin,
                            sol.x1, sol.x2, sol.p)
    return sol


# -- certificates ----------------------------------------------------------


def _grid(f: RewardFunction, grid_n: int, extra: Sequence[float] = ()) -> np.ndarray:
    xs = np.linspace(0.0, f.lambda_max, grid_n)
    if extra:
        xs = np.union1d(xs, np.clip(np.asarray(extra, dtype=float), 0.0, f.lambda_max))
    return xs


def chord_line(f: RewardFunction, sol: FluidSolution) -> Callable:
    x1, x2, _ = sol.support()
    f1, f2 = float(f(x1)), float(f(x2))
    slope = (f1 - f2) / (x1 - x2)
    return lambda x: f2 + slope * (np.asarray(x, dtype=float) - x2)


def chord_majorization_check(f: RewardFunction, sol: FluidSolution, grid_n: int = 10001) -> float:
    """Largest excess of ``F`` over the chord through the two support points.

    A genuine two-point optimum keeps ``F`` under the chord, so the result is
    at most a small numerical tolerance.
    """
    chord = chord_line(f, sol)
    xs = _grid(f, grid_n, (1.0, sol.x1, sol.x2))
    return float(np.max(f(xs) - chord(xs)))


def tangent_majorization_check(f: RewardFunction, grid_n: int = 10001) -> float:
    """Largest excess of ``F`` over its tangent line at 1."""
    slope = derivative(f, 1.0, 1)
    f_one = float(f(1.0))
    xs = _grid(f, grid_n, (1.0,))
    return float(np.max(f(xs) - (f_one + slope * (xs - 1.0))))


class QuadraticMajorant(NamedTuple):
    """Concave quadratic ``G(x) = F(1) + F'(1)(x-1) + alpha/2 (x-1)^2``."""

    alpha: float
    check: float
    f_one: float
    slope: float

    def __call__(self, x):
        d = np.asarray(x, dtype=float) - 1.0
        return self.f_one + self.slope * d + 0.5 * self.alpha * d * d


def quadratic_majorant(f: RewardFunction, grid_n: int = 10001, window: float = 1e-3) -> QuadraticMajorant:
    """Concave quadratic squeezed between ``F`` and its tangent line at 1.

    ``alpha0`` is the largest value of ``-2 (T - F) / (x - 1)^2`` over the
    grid, where ``T`` is the tangent at 1; points with ``|x - 1| < window``
    are replaced by the limiting value ``F''(1)``.  The returned curvature is
    ``alpha0 / 2`` and ``check`` is ``min (G - F)`` over the grid.
    """
    slope = derivative(f, 1.0, 1)
    f_one = float(f(1.0))
    xs = _grid(f, grid_n)
    d = xs - 1.0
    keep = np.abs(d) >= window
    ratio = -2.0 * ((f_one + slope * d[keep]) - f(xs[keep])) / d[keep] ** 2
    alpha0 = float(np.max(ratio)) if ratio.size else -math.inf
    try:
        alpha0 = max(alpha0, derivative(f, 1.0, 2))
    except ResolutionError:
        pass
    if not alpha0 < 0:
        raise NoMajorantError(
            f"alpha0 = {alpha0:g} >= 0: F touches its tangent at 1 away from x = 1")
    alpha = alpha0 / 2
    g = QuadraticMajorant(alpha, 0.0, f_one, slope)
    check = float(np.min(g(xs) - f(xs)))
    return g._replace(check=check)


def dual_value(f: RewardFunction, u: float, grid_n: int = 4001) -> float:
    """Lagrange dual function ``q(U) = min_x [-F(x) + U x - U]``.

    Grid minimum followed by one bounded scalar refinement between the
    neighbours of the grid minimiser.
    """
    if u < 0:
        raise DomainError(f"dual variable must be nonnegative, got {u}")
    xs = np.linspace(0.0, f.lambda_max, grid_n)
    obj = -f(xs) + u * xs - u
    i = int(np.argmin(obj))
    best = float(obj[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid_n - 1)]
    res = minimize_scalar(lambda x: float(-f(x) + u * x - u), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if res.success and res.fun < best:
        best = float(res.fun)
    return best


@dataclass(frozen=True)
class DualCertificate:
    """Polyhedral (sharp) dual certificate for a two-point fluid optimum.

    ``grid_violation`` is ``max_U [q(U) + L |U* - U| - q(U*)]`` over the
    supplied grid; nonpositive values mean the inequality holds everywhere.
    """

    u_star: float
    l_margin: float
    grid_violation: float
    dual_at_star: float
    duality_gap: float


def polyhedral_check(f: RewardFunction, sol: FluidSolution, u_grid: Sequence[float] | None = None,
                     grid_n: int = 4001) -> DualCertificate:
    x1, x2, _ = sol.support()
    u_star = float((f(x1) - f(x2)) / (x1 - x2))
    l_margin = min(x1 - 1.0, 1.0 - x2)
    if u_grid is None:
        u_grid = np.union1d(np.linspace(0.0, 3 * u_star + 1.0, 301), [u_star])
    q_star = dual_value(f, u_star, grid_n)
    worst = max(dual_value(f, float(u), grid_n) + l_margin * abs(u_star - u) - q_star
                for u in u_grid)
    return DualCertificate(u_star, l_margin, float(worst), q_star, abs(q_star + sol.f_star))
