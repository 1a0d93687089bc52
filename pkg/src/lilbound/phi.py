"""Convex generator functions and their Young-Fenchel calculus.

A generator phi is an even, strictly convex function on an interval
(-lambda0, lambda0), 0 < lambda0 <= inf, with phi(0) = 0 and
phi(lambda)/lambda -> inf at the right edge of the domain.  Such functions
drive the exponential-moment norms in :mod:`lilbound.norms` and the block
tail bounds in :mod:`lilbound.engine`.  The central operation here is the
conjugate transform

    conjugate(phi, u) = sup over lambda in [0, lambda0) of (lambda*u - phi(lambda))

together with its inverse-function companions.  Built-in families carry
closed-form conjugates; everything else is solved numerically by bisection
on the (strictly increasing) derivative, with a golden-section fallback
near a finite domain edge.

Numerical contract: the numeric conjugate targets 1e-10 absolute accuracy
with a hard iteration cap of 200; exceeding the cap above tolerance raises
:class:`NonconvergenceError` carrying the residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NonconvergenceError, UnreachableValueError

CONJUGATE_TOL = 1e-10
MAX_ITER = 200
#: Right edge used for validation grids when lambda0 is infinite.
GRID_CAP = 50.0
GRID_SIZE = 512
_EDGE = 1.0 - 1e-12  # open-endpoint clamp factor


@dataclass(frozen=True, eq=False)
class PhiFunction:
    """An even convex generator with its (optional) closed-form companions.

    evaluate accepts scalars; the analytic companions, when present, must
    also accept numpy arrays so vectorized block sums stay cheap.
    """
    label: str
    evaluate: Callable[[float], float]
    lambda0: float = math.inf
    analytic_conjugate: Optional[Callable] = None
    analytic_inverse: Optional[Callable] = None

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise DomainError(f"lambda0 must be positive, got {self.lambda0}")

    def __call__(self, lam: float) -> float:
        return self.evaluate(lam)


@dataclass(frozen=True)
class ConjugateGrid:
    """Conjugate values tabulated on a u grid, with solver diagnostics."""
    u_values: tuple
    phi_star_values: tuple
    max_residual: float


@dataclass(frozen=True)
class PhiReport:
    """Report-only diagnostics from :func:`validate_phi`."""
    label: str
    zero_at_origin: bool
    even: bool
    strictly_convex: bool
    superlinear: bool
    worst_evenness_gap: float
    worst_second_difference: float

    @property
    def passed(self) -> bool:
        return (self.zero_at_origin and self.even
                and self.strictly_convex and self.superlinear)


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def power_phi(q: float) -> PhiFunction:
    """Power family |lambda|^q / q; conjugate is |u|^q' / q' with 1/q + 1/q' = 1.

    Requires q > 1: at q = 1 the conjugate degenerates (q' = inf boundary),
    and below it the function is not convex.
    """
    if not q > 1:
        raise DomainError(f"power family needs q > 1, got {q}")
    qp = q / (q - 1.0)

    def ev(lam):
        return abs(lam) ** q / q

    def conj(u):
        u = np.abs(u)
        return u ** qp / qp

    def inv(p):
        return (q * np.asarray(p)) ** (1.0 / q)

    return PhiFunction(label=f"power:q={q:g}", evaluate=ev,
                       analytic_conjugate=conj, analytic_inverse=inv)


def phi2() -> PhiFunction:
    """The quadratic generator lambda^2 / 2 (sub-gaussian case)."""
    f = power_phi(2.0)
    return replace(f, label="phi2")


def cosh_phi() -> PhiFunction:
    """cosh(lambda) - 1; conjugate u*asinh(u) - sqrt(1+u^2) + 1."""

    def ev(lam):
        return math.cosh(lam) - 1.0

    def conj(u):
        u = np.abs(u)
        return u * np.arcsinh(u) - np.sqrt(1.0 + u * u) + 1.0

    def inv(p):
        return np.arccosh(np.asarray(p) + 1.0)

    return PhiFunction(label="cosh", evaluate=ev,
                       analytic_conjugate=conj, analytic_inverse=inv)


_SQRT2 = math.sqrt(2.0)


def chi_square_phi() -> PhiFunction:
    """Centered chi-square generator -|l|/sqrt2 - log(1 - sqrt2 |l|)/2.

    This is the cumulant function of (Z^2 - 1)/sqrt2 for standard normal Z,
    the normalized limit of degree-2 sign chaos.  Domain edge
    lambda0 = 1/sqrt2; the conjugate grows like u/sqrt2 - log(u)/2, i.e.
    linearly with a slowly varying correction.
    """

    def ev(lam):
        x = abs(lam)
        if x >= 1.0 / _SQRT2:
            raise DomainError(f"chi2 generator undefined at |lambda| = {x:g} "
                              f">= {1.0 / _SQRT2:g}")
        return -x / _SQRT2 - 0.5 * math.log1p(-_SQRT2 * x)

    def conj(u):
        u = np.abs(u)
        lam = u / (1.0 + _SQRT2 * u)
        # value of lam*u - phi(lam) with 1 - sqrt2*lam = 1/(1 + sqrt2 u)
        return lam * u + lam / _SQRT2 + 0.5 * np.log1p(-_SQRT2 * lam)

    return PhiFunction(label="chi2", evaluate=ev, lambda0=1.0 / _SQRT2,
                       analytic_conjugate=conj)


def phi_from_table(lambdas: Sequence[float], values: Sequence[float],
                   label: str = "table") -> PhiFunction:
    """Generator from tabulated (lambda, phi) pairs on lambda >= 0.

    The table must start at (0, 0) with strictly increasing lambda and
    convex nondecreasing values.  Evaluation uses monotone (PCHIP)
    interpolation and evenness by reflection; the last lambda is an open
    right endpoint, so requests at or beyond it are domain errors.
    """
    from scipy.interpolate import PchipInterpolator

    lam = np.asarray(lambdas, dtype=float)
    val = np.asarray(values, dtype=float)
    if lam.ndim != 1 or lam.shape != val.shape or len(lam) < 4:
        raise DomainError("table needs matching 1-d columns with >= 4 rows")
    if lam[0] != 0.0 or val[0] != 0.0:
        raise DomainError("table must start at (0, 0)")
    if not np.all(np.diff(lam) > 0):
        raise DomainError("table lambdas must be strictly increasing")
    if not np.all(np.diff(val) >= 0):
        raise DomainError("table values must be nondecreasing")
    slopes = np.diff(val) / np.diff(lam)
    if np.any(np.diff(slopes) < -1e-9 * max(1.0, slopes.max())):
        raise DomainError("table values are not convex")
    interp = PchipInterpolator(lam, val, extrapolate=False)
    lambda0 = float(lam[-1])

    def ev(x):
        x = abs(x)
        if x >= lambda0:
            raise DomainError(f"{label}: lambda = {x:g} is outside the open "
                              f"domain [0, {lambda0:g})")
        return float(interp(x))

    return PhiFunction(label=label, evaluate=ev, lambda0=lambda0)


def phi_from_csv(path: str, label: Optional[str] = None) -> PhiFunction:
    """Load a two-column CSV of (lambda, phi(lambda)) rows; see phi_from_table."""
    rows = np.loadtxt(path, delimiter=",", dtype=float, comments="#", ndmin=2)
    if rows.shape[1] != 2:
        raise DomainError(f"{path}: expected exactly two columns")
    return phi_from_table(rows[:, 0], rows[:, 1], label=label or f"csv:{path}")


# ---------------------------------------------------------------------------
# conjugate transform
# ---------------------------------------------------------------------------

def _domain_cap(phi: PhiFunction) -> float:
    return phi.lambda0 * _EDGE if math.isfinite(phi.lambda0) else math.inf


def _dphi(phi: PhiFunction, lam: float, cap: float) -> float:
    """Two-sided difference quotient, one-sided against the domain edge."""
    h = 1e-6 * max(1.0, abs(lam))
    hi = lam + h
    if hi > cap:
        hi = cap
    lo = lam - h
    if lo < 0.0:
        lo = 0.0
    if hi <= lo:
        return math.inf
    try:
        num = phi.evaluate(hi) - phi.evaluate(lo)
    except OverflowError:
        return math.inf
    if math.isnan(num):
        return math.inf
    return num / (hi - lo)


def _golden_max(f: Callable[[float], float], a: float, b: float,
                iters: int = 90):
    inv_gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_gr * (b - a)
    d = a + inv_gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_gr * (b - a)
            fd = f(d)
        if b - a <= 1e-14 * max(1.0, abs(b)):
            break
    return (c, fc) if fc > fd else (d, fd)


def _conjugate_numeric(phi: PhiFunction, u: float,
                       tol: float, max_iter: int):
    """Solve sup(lambda*u - phi(lambda)); returns (value, residual)."""
    cap = _domain_cap(phi)

    def objective(lam):
        return lam * u - phi.evaluate(lam)

    # bracket the stationary point: dphi is 0 at the origin and increases
    lo, hi = 0.0, min(1.0, cap)
    bracketed = _dphi(phi, hi, cap) >= u
    expansions = 0
    while not bracketed:
        if hi >= cap or expansions > 600:
            break
        lo = hi
        hi = min(hi * 2.0, cap)
        expansions += 1
        bracketed = _dphi(phi, hi, cap) >= u
    if not bracketed:
        if math.isinf(cap):
            raise NonconvergenceError(
                f"conjugate bracketing failed for {phi.label} at u={u:g}")
        # derivative never reaches u inside a finite domain: the supremum
        # sits at the edge; polish with golden section near it
        lam, val = _golden_max(objective, lo, cap)
        edge = objective(cap)
        if edge > val:
            lam, val = cap, edge
        return max(val, 0.0), 0.0

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _dphi(phi, mid, cap) >= u:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    lam = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = objective(lo), objective(lam), objective(hi)
    value = max(f_lo, f_mid, f_hi, 0.0)
    residual = value - min(f_lo, f_mid, f_hi)
    if not math.isfinite(value) or residual > max(tol, 1e-12 * value):
        raise NonconvergenceError(
            f"conjugate of {phi.label} at u={u:g} stalled "
            f"(residual {residual:.3e})", residual=residual)
    return value, residual


def conjugate(phi: PhiFunction, u: float,
              tol: float = CONJUGATE_TOL, max_iter: int = MAX_ITER) -> float:
    """Young-Fenchel conjugate of phi at u >= 0.

    Uses the closed form when the family has one, otherwise bisection on
    the difference-quotient derivative (golden-section fallback at a finite
    domain edge).  u = 0 returns exactly 0 since phi >= 0 with phi(0) = 0.
    """
    if u < 0:
        raise DomainError(f"conjugate argument must be >= 0, got {u}")
    if phi.analytic_conjugate is not None:
        return float(phi.analytic_conjugate(u))
    if u == 0.0:
        return 0.0
    value, _ = _conjugate_numeric(phi, u, tol, max_iter)
    return value


def conjugate_grid(phi: PhiFunction, u_values: Sequence[float],
                   tol: float = CONJUGATE_TOL) -> ConjugateGrid:
    """Tabulate the conjugate on a grid, tracking the worst solver residual."""
    us = [float(u) for u in u_values]
    if any(u < 0 for u in us):
        raise DomainError("conjugate grid values must be >= 0")
    vals = []
    worst = 0.0
    for u in us:
        if phi.analytic_conjugate is not None or u == 0.0:
            vals.append(conjugate(phi, u, tol=tol))
        else:
            v, r = _conjugate_numeric(phi, u, tol, MAX_ITER)
            vals.append(v)
            worst = max(worst, r)
    return ConjugateGrid(tuple(us), tuple(vals), worst)


def conjugate_many(phi: PhiFunction, u: np.ndarray) -> np.ndarray:
    """Vectorized conjugate; closed form when available, else a loop."""
    u = np.asarray(u, dtype=float)
    if phi.analytic_conjugate is not None:
        return np.asarray(phi.analytic_conjugate(u), dtype=float)
    return np.array([conjugate(phi, x) for x in u.ravel()]).reshape(u.shape)


def conjugate_function(phi: PhiFunction) -> PhiFunction:
    """The conjugate packaged as a generator itself (for double transforms).

    The result evaluates numerically even when phi has a closed-form
    conjugate available internally, and deliberately carries no analytic
    companions, so conjugating it exercises the numeric solver.
    """
    inner = phi.analytic_conjugate

    def ev(u):
        x = abs(u)
        if inner is not None:
            return float(inner(x))
        return conjugate(phi, x)

    return PhiFunction(label=f"conj({phi.label})", evaluate=ev)


# ---------------------------------------------------------------------------
# inverse-function companions
# ---------------------------------------------------------------------------

def phi_inverse(phi: PhiFunction, p: float,
                max_iter: int = MAX_ITER) -> float:
    """Inverse of phi on its positive branch: the lambda with phi(lambda) = p.

    Raises :class:`UnreachableValueError` when p exceeds the supremum of a
    table-backed family over its (open) domain.
    """
    if p < 0:
        raise DomainError(f"phi_inverse needs p >= 0, got {p}")
    if p == 0.0:
        return 0.0
    if phi.analytic_inverse is not None:
        return float(phi.analytic_inverse(p))
    cap = _domain_cap(phi)
    lo, hi = 0.0, min(1.0, cap)
    expansions = 0
    while phi.evaluate(hi) < p:
        if hi >= cap:
            raise UnreachableValueError(
                f"{phi.label}: p = {p:g} exceeds sup phi = "
                f"{phi.evaluate(cap):g} on the open domain")
        lo = hi
        hi = min(hi * 2.0, cap)
        expansions += 1
        if expansions > 600:
            raise NonconvergenceError(
                f"phi_inverse bracketing failed for {phi.label} at p={p:g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if phi.evaluate(mid) >= p:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def psi(phi: PhiFunction, p: float) -> float:
    """Moment-growth profile p / phi_inverse(p), defined for p >= 2."""
    if p < 2:
        raise DomainError(f"psi is defined for p >= 2, got {p}")
    return p / phi_inverse(phi, p)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def standard_grid(phi: PhiFunction, size: int = GRID_SIZE) -> np.ndarray:
    """Log-spaced validation grid on [1e-6, min(lambda0, 50)), open at the edge."""
    top = min(phi.lambda0 * (1.0 - 1e-9), GRID_CAP)
    return np.geomspace(1e-6, top, size)


def validate_phi(phi: PhiFunction, size: int = GRID_SIZE) -> PhiReport:
    """Report-only structural diagnostics on the standard grid.

    Checks phi(0) = 0, evenness, strict convexity (chord slopes increase,
    the correct criterion on an unevenly spaced grid), and superlinearity
    (phi(lambda)/lambda strictly increasing toward the domain edge).
    Never raises on a failed check; consumers decide what to do with the
    report.
    """
    grid = standard_grid(phi, size)
    vals = np.array([phi.evaluate(x) for x in grid])
    neg = np.array([phi.evaluate(-x) for x in grid[:: max(1, size // 16)]])
    ref = vals[:: max(1, size // 16)]
    even_gap = float(np.max(np.abs(neg - ref) / np.maximum(np.abs(ref), 1e-300)))
    chord = np.diff(vals) / np.diff(grid)
    second = np.diff(chord)
    slope = vals / grid
    return PhiReport(
        label=phi.label,
        zero_at_origin=abs(phi.evaluate(0.0)) < 1e-12,
        even=even_gap < 1e-9,
        strictly_convex=bool(np.all(
            second > -1e-9 * np.maximum(np.abs(chord[1:]), 1e-300))),
        superlinear=bool(np.all(np.diff(slope) > -1e-12 * np.maximum(slope[1:], 1e-300))),
        worst_evenness_gap=even_gap,
        worst_second_difference=float(second.min()) if len(second) else 0.0,
    )
