"""Block partitions of the time axis and the tail bound built over them.

The bound for P(sup_n S(n)/(sigma(n) v(n)) > u) is a series over a block
partition {[A(k), B(k)]} of the positive integers: block k contributes

    exp(-conjugate(phi, u * sigma(A(k)) * v(A(k)) / sigma(B(k))))

and the final bound is the infimum of the series over a family of
geometric partitions A(k) ~ ratio^(k-1), locally refined in the ratio.

Deep sums need care on two fronts, both handled here:

  * block boundaries overflow float64 near k ~ 650 already for ratio 3,
    so boundaries are carried in log space (exact integers while
    ratio^(k-1) <= 2^52, where the min-gap and rounding rules can still
    bind; the pure (k-1)*log(ratio) form beyond, where they provably
    cannot);

  * for iterated-logarithm normings the terms decay polynomially in k,
    not geometrically, so a last/(1-ratio) residual is certified only
    when the observed term ratios are below 1 *and* non-increasing
    (true geometric domination).  Otherwise the sum runs to k_max, is
    flagged, and carries a conservative log-slope tail estimate.

Reported sums are always the plain partial sums: a truncated series is a
certified lower estimate of the infinite one, which is the safe direction
for every dominance comparison made downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NonconvergenceError
from .phi import PhiFunction, conjugate, conjugate_many

DEFAULT_TOL = 1e-12
DEFAULT_KMAX = 20000
DEFAULT_RATIOS = tuple(np.geomspace(2.0, 16.0, 12))
#: consecutive term ratios >= 1 - 0.01/k before the sum is declared divergent
_DIVERGENCE_RUN = 64
#: exact integer boundaries are kept while ratio^(k-1) stays below this
_EXACT_CAP = 2.0 ** 52
_CHUNK = 256


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Consecutive blocks [A(k), B(k)] tiling [1, A(K+1)-1].

    a_values holds A(1..K+1); block k is [a_values[k-1], a_values[k]-1],
    so the invariant A(k+1) >= A(k) + 2 gives every block length >= 2.
    """
    a_values: tuple

    def __post_init__(self):
        a = tuple(int(x) for x in self.a_values)
        if len(a) < 2 or a[0] != 1:
            raise DomainError("partition needs A(1) = 1 and at least one block")
        for prev, nxt in zip(a, a[1:]):
            if nxt < prev + 2:
                raise DomainError(
                    f"block starting at {prev} is shorter than 2 "
                    f"(next boundary {nxt})")
        object.__setattr__(self, "a_values", a)

    @property
    def depth(self) -> int:
        return len(self.a_values) - 1

    @property
    def b_values(self) -> tuple:
        return tuple(x - 1 for x in self.a_values[1:])

    def block(self, k: int) -> tuple:
        """(A(k), B(k)) for 1-based block index k."""
        if not 1 <= k <= self.depth:
            raise DomainError(f"block index {k} outside 1..{self.depth}")
        return self.a_values[k - 1], self.a_values[k] - 1


def geometric_partition(ratio: float, depth: int) -> Partition:
    """Materialized geometric partition A(k) = max(prev + 2, round(ratio^(k-1))).

    For deep tail sums use :func:`block_sum`, which carries the same
    boundaries in log space instead of materializing them.
    """
    if ratio < 2:
        raise DomainError(f"geometric ratio must be >= 2, got {ratio}")
    if depth < 1:
        raise DomainError(f"depth must be >= 1, got {depth}")
    if ratio ** depth > 2.0 ** 60:
        raise DomainError(
            f"ratio {ratio} at depth {depth} exceeds exact integer range; "
            f"use block_sum for deep evaluation")
    a = [1]
    for k in range(1, depth + 1):
        a.append(max(a[-1] + 2, int(round(ratio ** k))))
    return Partition(tuple(a))


@lru_cache(maxsize=256)
def _log_boundaries(ratio: float, k_max: int):
    """(log A(k), log B(k)) arrays for k = 1..k_max, geometric family.

    Exact rounded-integer boundaries while they fit in 2^52; beyond that
    A(k) = ratio^(k-1) exactly as far as float64 can tell (the min-gap
    rule needs a gap < 2, impossible once consecutive powers differ by
    >= 2^52, and rounding shifts log A by < 2^-52).
    """
    log_q = math.log(ratio)
    ints = [1]  # ints[i] = A(i+1) while exact
    k = 1
    while k <= k_max:
        power = ratio ** k
        if power > _EXACT_CAP:
            break
        ints.append(max(ints[-1] + 2, int(round(power))))
        k += 1
    n_exact = len(ints)
    log_a = np.empty(k_max + 1)
    log_a[:n_exact] = np.log(np.array(ints, dtype=float))
    if n_exact <= k_max:
        log_a[n_exact:] = np.arange(n_exact, k_max + 1, dtype=float) * log_q
    # B(k) = A(k+1) - 1; the -1 is kept only while boundaries are exact
    log_b = log_a[1:].copy()
    if n_exact >= 2:
        log_b[:n_exact - 1] = np.log(np.array(ints[1:], dtype=float) - 1.0)
    return log_a[:k_max], log_b


@lru_cache(maxsize=256)
def _block_arguments(v: "NormingSequence", sigma: "SigmaProfile",
                     ratio: float, k_max: int) -> np.ndarray:
    """x_k = sigma(A(k)) v(A(k)) / sigma(B(k)) for k = 1..k_max."""
    log_a, log_b = _log_boundaries(ratio, k_max)
    return np.exp(sigma.log_sigma(log_a) - sigma.log_sigma(log_b)) \
        * v.eval_log(log_a)


# ---------------------------------------------------------------------------
# norming sequences and variance profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormingSequence:
    """Positive nondecreasing divisor v(n) of the normalized statistic.

    evaluate takes n (scalar or array); eval_log takes log(n), the form
    deep block sums need when n itself overflows.
    """
    label: str
    kind: str
    evaluate: Callable
    eval_log: Callable


@dataclass(frozen=True, eq=False)
class SigmaProfile:
    """Standard-deviation profile sigma(n), positive and nondecreasing."""
    label: str
    kind: str
    evaluate: Callable
    log_sigma: Callable


def iterated_log_norming(r: float) -> NormingSequence:
    """v(n) = (log log(n + 3))^(1/r), the norming tied to rate exponent r."""
    if r <= 0:
        raise DomainError(f"rate exponent must be positive, got {r}")
    inv_r = 1.0 / r

    def ev(n):
        return np.log(np.log(np.asarray(n, dtype=float) + 3.0)) ** inv_r

    def ev_log(log_n):
        log_n = np.asarray(log_n, dtype=float)
        # log(n + 3) = log n + log1p(3/n), safe for any magnitude of log n
        ln3 = log_n + np.log1p(3.0 * np.exp(-np.minimum(log_n, 700.0)))
        return np.log(ln3) ** inv_r

    return NormingSequence(label=f"vr:{r:g}", kind="iterated_log",
                           evaluate=ev, eval_log=ev_log)


def constant_norming(c: float = 1.0) -> NormingSequence:
    if c <= 0:
        raise DomainError(f"constant norming must be positive, got {c}")
    return NormingSequence(
        label=f"const:{c:g}", kind="constant",
        evaluate=lambda n: np.full_like(np.asarray(n, dtype=float), c),
        eval_log=lambda log_n: np.full_like(np.asarray(log_n, dtype=float), c))


def table_norming(n_values: Sequence[int], v_values: Sequence[float],
                  label: str = "table") -> NormingSequence:
    """Norming interpolated from (n, v) pairs; evaluation beyond the table
    is a domain error, so deep block sums reject table normings early."""
    from scipy.interpolate import PchipInterpolator

    ns = np.asarray(n_values, dtype=float)
    vs = np.asarray(v_values, dtype=float)
    if len(ns) < 2 or ns[0] < 1 or np.any(np.diff(ns) <= 0):
        raise DomainError("table norming needs increasing n >= 1")
    if np.any(vs <= 0) or np.any(np.diff(vs) < 0):
        raise DomainError("table norming values must be positive nondecreasing")
    interp = PchipInterpolator(ns, vs, extrapolate=False)
    top = float(ns[-1])

    def ev(n):
        n = np.asarray(n, dtype=float)
        if np.any(n < ns[0]) or np.any(n > top):
            raise DomainError(f"{label}: index outside table range "
                              f"[{ns[0]:g}, {top:g}]")
        return interp(n)

    def ev_log(log_n):
        log_n = np.asarray(log_n, dtype=float)
        if np.any(log_n > math.log(top)):
            raise DomainError(f"{label}: block boundary beyond table range; "
                              f"deep sums need an analytic norming")
        return interp(np.exp(log_n))

    return NormingSequence(label=label, kind="table",
                           evaluate=ev, eval_log=ev_log)


def shifted_norming(v: NormingSequence, offset: int) -> NormingSequence:
    """View of v displaced by a nonnegative integer offset: n -> v(n + offset).

    Used to align the bound's index (which starts at 1) with models whose
    variance is degenerate on a prefix: the model's profile is shifted the
    same way, keeping the statistic sup_j S(j+offset)/(sigma v) intact.
    """
    if offset < 0:
        raise DomainError("norming shift must be nonnegative")
    if offset == 0:
        return v

    def ev(n):
        return v.evaluate(np.asarray(n, dtype=float) + offset)

    def ev_log(log_n):
        log_n = np.asarray(log_n, dtype=float)
        safe = np.minimum(log_n, 700.0)
        return v.eval_log(log_n + np.log1p(offset * np.exp(-safe)))

    return NormingSequence(label=f"{v.label}@+{offset}", kind=v.kind,
                           evaluate=ev, eval_log=ev_log)


def table_profile(n_values: Sequence[int], s_values: Sequence[float],
                  label: str = "table-sigma") -> SigmaProfile:
    """Variance profile from tabulated (n, sigma) pairs; same range rules
    as table_norming."""
    from scipy.interpolate import PchipInterpolator

    ns = np.asarray(n_values, dtype=float)
    ss = np.asarray(s_values, dtype=float)
    if len(ns) < 2 or ns[0] < 1 or np.any(np.diff(ns) <= 0):
        raise DomainError("table profile needs increasing n >= 1")
    if np.any(ss <= 0) or np.any(np.diff(ss) < 0):
        raise DomainError("table profile must be positive nondecreasing")
    interp = PchipInterpolator(ns, ss, extrapolate=False)
    top = float(ns[-1])

    def ev(n):
        n = np.asarray(n, dtype=float)
        if np.any(n < ns[0]) or np.any(n > top):
            raise DomainError(f"{label}: index outside table range")
        return interp(n)

    def log_sig(log_n):
        log_n = np.asarray(log_n, dtype=float)
        if np.any(log_n > math.log(top)):
            raise DomainError(f"{label}: block boundary beyond table range")
        return np.log(interp(np.exp(log_n)))

    return SigmaProfile(label=label, kind="table", evaluate=ev,
                        log_sigma=log_sig)


# ---------------------------------------------------------------------------
# block terms and sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSumResult:
    """One geometric-family series evaluation with its truncation status.

    value is the partial sum through k_used terms.  converged means the
    residual_bound is certified by geometric domination; diverged means
    the terms stopped decaying and value is the +inf sentinel (a vacuous
    but valid probability bound).  A result with neither flag ran into
    k_max: residual_bound is then a conservative estimate from the
    observed log-log slope (+inf when the terms are too flat to trust).
    """
    value: float
    k_used: int
    residual_bound: float
    converged: bool
    diverged: bool


def block_term(k: int, partition: Partition, v: NormingSequence,
               sigma: SigmaProfile, phi: PhiFunction, u: float) -> float:
    """Contribution of block k: exp(-phi*(u sigma(A) v(A) / sigma(B)))."""
    if u <= 0:
        raise DomainError(f"block_term needs u > 0, got {u}")
    a, b = partition.block(k)
    arg = u * float(sigma.evaluate(a)) * float(v.evaluate(a)) \
        / float(sigma.evaluate(b))
    return math.exp(-conjugate(phi, arg))


def _scan_terms(terms: np.ndarray, tol: float):
    """Find the first certified stop or divergence point in a term prefix.

    Returns (stop_index, residual, diverged_index); indices are 0-based
    positions into terms, None when not found.  Certification at position
    i requires the last three ratios below 1 and non-increasing, with the
    dominated-tail bound t_i * rho/(1 - rho) below tol.
    """
    m = len(terms)
    if m < 4:
        return None, math.nan, None
    prev = terms[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = np.where(prev > 0, terms[1:] / prev,
                      np.where(terms[1:] > 0, np.inf, 0.0))
    k = np.arange(2, m + 1, dtype=float)  # 1-based index of each ratio's term
    near_one = rr >= 1.0 - 0.01 / k
    div_idx = None
    if m - 1 >= _DIVERGENCE_RUN:
        csum = np.concatenate(([0], np.cumsum(near_one)))
        runs = csum[_DIVERGENCE_RUN:] - csum[:-_DIVERGENCE_RUN]
        hits = np.nonzero(runs == _DIVERGENCE_RUN)[0]
        if len(hits):
            div_idx = int(hits[0]) + _DIVERGENCE_RUN  # position in terms
    r0, r1, r2 = rr[:-2], rr[1:-1], rr[2:]
    window = (r2 < 1.0) & (r1 < 1.0) & (r0 < 1.0) & (r0 >= r1) & (r1 >= r2)
    # triple (r0, r1, r2)[j] are the ratios of terms j+1, j+2, j+3, so a
    # certified window there stops the sum at term j+3; r0 is the window
    # maximum by the non-increasing requirement
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = terms[3:] * r0 / (1.0 - r0)
    ok = window & (tail < tol)
    stop = None
    residual = math.nan
    cert = np.nonzero(ok)[0]
    if len(cert):
        stop = int(cert[0]) + 3
        residual = float(tail[cert[0]])
    if div_idx is not None and (stop is None or div_idx < stop):
        return None, math.nan, div_idx
    return stop, residual, None


def _flat_tail_estimate(terms: np.ndarray) -> float:
    """Residual estimate past k_max from the observed log-log slope.

    Fits log(term) against log(k) on the second half; if the decay
    exponent exceeds 1.05 the integral tail bound times a 1.5 safety
    factor is returned, otherwise +inf (the decay is too flat to
    extrapolate, or genuinely divergent).
    """
    m = len(terms)
    lo = m // 2
    t = terms[lo:]
    pos = t > 0
    if pos.sum() < 8:
        # underflowed tail: everything past here is below float resolution
        return 0.0 if terms[-1] == 0.0 else math.inf
    ks = np.arange(lo + 1, m + 1, dtype=float)[pos]
    slope = np.polyfit(np.log(ks), np.log(t[pos]), 1)[0]
    c_hat = -slope
    if c_hat <= 1.05 or not math.isfinite(c_hat):
        return math.inf
    return 1.5 * float(terms[-1]) * m / (c_hat - 1.0)


def block_sum(ratio: float, v: NormingSequence, sigma: SigmaProfile,
              phi: PhiFunction, u: float, tol: float = DEFAULT_TOL,
              k_max: int = DEFAULT_KMAX) -> BlockSumResult:
    """Series over the geometric partition with the given ratio.

    Evaluated fully vectorized for analytic-conjugate phi, in growing
    chunks otherwise.  See the module docstring for the certification
    and divergence rules.
    """
    if u <= 0:
        raise DomainError(f"block_sum needs u > 0, got {u}")
    if ratio < 2:
        raise DomainError(f"geometric ratio must be >= 2, got {ratio}")
    if not 0 < tol < 1:
        raise DomainError(f"tolerance must be in (0, 1), got {tol}")
    args = _block_arguments(v, sigma, ratio, k_max)
    if phi.analytic_conjugate is not None:
        # overflow of the conjugate at deep blocks saturates to +inf and
        # the term to exactly 0, which is the intended limit
        with np.errstate(over="ignore"):
            terms = np.exp(-conjugate_many(phi, u * args))
        return _finish_sum(terms, tol)
    terms = np.empty(0)
    for hi in range(_CHUNK, k_max + _CHUNK, _CHUNK):
        hi = min(hi, k_max)
        new = np.exp(-conjugate_many(phi, u * args[len(terms):hi]))
        terms = np.concatenate([terms, new])
        stop, residual, div = _scan_terms(terms, tol)
        if div is not None or stop is not None or hi == k_max:
            return _finish_sum(terms, tol)
    return _finish_sum(terms, tol)  # pragma: no cover


def _finish_sum(terms: np.ndarray, tol: float) -> BlockSumResult:
    stop, residual, div = _scan_terms(terms, tol)
    if div is not None:
        return BlockSumResult(value=math.inf, k_used=div + 1,
                              residual_bound=math.inf,
                              converged=False, diverged=True)
    if stop is not None:
        return BlockSumResult(value=float(terms[:stop + 1].sum()),
                              k_used=stop + 1, residual_bound=residual,
                              converged=True, diverged=False)
    return BlockSumResult(value=float(terms.sum()), k_used=len(terms),
                          residual_bound=_flat_tail_estimate(terms),
                          converged=False, diverged=False)


# ---------------------------------------------------------------------------
# the optimized bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Per-u optimized series values with full truncation diagnostics."""
    u_grid: tuple
    q_sums: tuple
    chosen_ratios: tuple
    k_used: tuple
    residual_bounds: tuple
    flags: tuple  # per u: "converged" | "truncated" | "divergent"
    c_used: float

    @property
    def all_divergent(self) -> bool:
        return all(f == "divergent" for f in self.flags)

    def to_dict(self) -> dict:
        return {
            "u": list(self.u_grid),
            "bound": list(self.q_sums),
            "ratio_chosen": list(self.chosen_ratios),
            "k_used": list(self.k_used),
            "residual_bound": list(self.residual_bounds),
            "flag": list(self.flags),
            "C": self.c_used,
        }


_INV_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def optimized_bound(v: NormingSequence, sigma: SigmaProfile, phi: PhiFunction,
                    u_grid: Sequence[float], C: float = 1.0,
                    ratio_grid: Optional[Sequence[float]] = None,
                    tol: float = DEFAULT_TOL,
                    k_max: int = DEFAULT_KMAX) -> BoundReport:
    """Infimum of the block series over geometric partitions, per u.

    Two passes: a coarse ratio grid plus three golden-section refinement
    steps finds each u's own best ratio; the final values then take the
    minimum over the pooled candidate ratios of every u, so the reported
    q_sums are minima over one common partition family and inherit
    monotonicity in u exactly.
    """
    if C <= 0:
        raise DomainError(f"theorem constant must be positive, got {C}")
    us = [float(u) for u in u_grid]
    if not us or any(u <= 0 for u in us):
        raise DomainError("u grid must be nonempty and positive")
    if ratio_grid is None:
        ratios = list(DEFAULT_RATIOS)
    else:
        ratios = sorted(float(r) for r in ratio_grid)
    if not ratios or any(r < 2 for r in ratios):
        raise DomainError("candidate ratios must be a nonempty set of "
                          "values >= 2")

    def total(r: float, scaled_u: float) -> float:
        return block_sum(r, v, sigma, phi, scaled_u, tol, k_max).value

    candidates = set(ratios)
    for u in us:
        vals = [total(r, C * u) for r in ratios]
        best = int(np.argmin(vals))
        if not math.isfinite(vals[best]):
            continue
        lo = ratios[best - 1] if best > 0 else max(2.0, ratios[0] * 0.75)
        hi = ratios[best + 1] if best + 1 < len(ratios) else ratios[-1] * 4 / 3
        a, b = lo, hi
        c = b - _INV_GOLD * (b - a)
        d = a + _INV_GOLD * (b - a)
        fc, fd = total(c, C * u), total(d, C * u)
        for _ in range(3):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - _INV_GOLD * (b - a)
                fc = total(c, C * u)
            else:
                a, c, fc = c, d, fd
                d = a + _INV_GOLD * (b - a)
                fd = total(d, C * u)
        candidates.add(c if fc < fd else d)

    pool = sorted(candidates)
    q_sums, chosen, k_used, residuals, flags = [], [], [], [], []
    for u in us:
        results = [block_sum(r, v, sigma, phi, C * u, tol, k_max)
                   for r in pool]
        vals = [res.value for res in results]
        best = int(np.argmin(vals))
        res = results[best]
        q_sums.append(res.value)
        chosen.append(pool[best])
        k_used.append(res.k_used)
        residuals.append(res.residual_bound)
        flags.append("divergent" if res.diverged
                     else "converged" if res.converged else "truncated")
    return BoundReport(u_grid=tuple(us), q_sums=tuple(q_sums),
                       chosen_ratios=tuple(chosen), k_used=tuple(k_used),
                       residual_bounds=tuple(residuals), flags=tuple(flags),
                       c_used=C)


# ---------------------------------------------------------------------------
# rate-form fit and lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(bound) against -C * u^r * L(u)."""
    c_hat: float
    max_rel_residual: float
    flagged: bool
    report: BoundReport


def fit_rate_form(phi: PhiFunction, sigma: SigmaProfile, r: float,
                  u_grid: Sequence[float],
                  norming: Optional[NormingSequence] = None,
                  C: float = 1.0,
                  L: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  ratio_grid: Optional[Sequence[float]] = None,
                  k_max: int = DEFAULT_KMAX) -> RateFit:
    """Check that the optimized bound follows exp(-c * u^r * L(u)).

    The slope c_hat comes from a through-origin least-squares fit of
    log(bound); the fit quality is the largest relative deviation from
    the fitted line.  The theorem constant C must be chosen so the bound
    is below 1 on the whole grid (a vacuous bound has nonnegative log
    and no exponential rate to fit); the result is flagged when the
    residual exceeds 10% or the grid is outside that regime.
    """
    if r <= 0:
        raise DomainError(f"rate exponent must be positive, got {r}")
    v = norming if norming is not None else iterated_log_norming(r)
    report = optimized_bound(v, sigma, phi, u_grid, C=C,
                             ratio_grid=ratio_grid, k_max=k_max)
    us = np.asarray(report.u_grid)
    q = np.asarray(report.q_sums)
    x = us ** r if L is None else us ** r * np.asarray(L(us), dtype=float)
    if np.any(~np.isfinite(q)) or np.any(q >= 1.0) or np.any(q <= 0.0):
        return RateFit(c_hat=math.nan, max_rel_residual=math.inf,
                       flagged=True, report=report)
    y = np.log(q)
    c_hat = -float(x @ y) / float(x @ x)
    rel = np.abs(y + c_hat * x) / np.abs(c_hat * x)
    worst = float(rel.max())
    return RateFit(c_hat=c_hat, max_rel_residual=worst,
                   flagged=worst > 0.10, report=report)


def single_time_lower_bound(tail_at_n0: Callable[[float], float], n0: int,
                            v: NormingSequence, u: float) -> float:
    """Tail of the normalized value at one fixed time as a sup-tail floor.

    The sup over n of S(n)/(sigma(n) v(n)) exceeds u whenever the single
    time n0 does, so P(S(n0)/sigma(n0) > u * v(n0)) is a certified lower
    bound on the sup-tail probability.
    """
    if n0 < 1:
        raise DomainError(f"n0 must be a positive index, got {n0}")
    return float(tail_at_n0(u * float(v.evaluate(n0))))


# ---------------------------------------------------------------------------
# exhaustive partition oracle (test support)
# ---------------------------------------------------------------------------

def dp_partition_oracle(v: NormingSequence, sigma: SigmaProfile,
                        phi: PhiFunction, u: float, n_max: int) -> float:
    """Exact minimum of the series over ALL partitions of [1, n_max].

    Dynamic program over block boundaries on the truncated horizon;
    cost[j] is the cheapest way to tile [1, j] with blocks of length >= 2.
    The truncation lets the optimum spend arbitrarily many short blocks
    near the horizon, a structure no convergent infinite partition can
    imitate, so compare against :func:`geometric_prefix_sum` (the same
    truncated objective), not against the infinite series, and only
    where the leading blocks dominate.
    """
    if u <= 0:
        raise DomainError(f"oracle needs u > 0, got {u}")
    if n_max < 2:
        raise DomainError("horizon too small for a single block")
    n = np.arange(0, n_max + 1, dtype=float)
    n[0] = 1.0  # unused slot, keep evaluate() happy
    sig = np.asarray(sigma.evaluate(n), dtype=float)
    vv = np.asarray(v.evaluate(n), dtype=float)
    cost = np.full(n_max + 1, np.inf)
    cost[0] = 0.0
    lead = u * sig * vv  # u * sigma(a) * v(a), indexed by a
    for j in range(2, n_max + 1):
        a = np.arange(1, j)
        terms = np.exp(-conjugate_many(phi, lead[a] / sig[j]))
        cost[j] = float(np.min(cost[a - 1] + terms))
    return float(cost[n_max])


def geometric_prefix_sum(ratio: float, v: NormingSequence,
                         sigma: SigmaProfile, phi: PhiFunction, u: float,
                         n_max: int) -> float:
    """Geometric-partition series clipped to the horizon [1, n_max].

    The last block is cut at n_max so the objective matches
    :func:`dp_partition_oracle` block for block.
    """
    if u <= 0:
        raise DomainError(f"prefix sum needs u > 0, got {u}")
    if ratio < 2:
        raise DomainError(f"geometric ratio must be >= 2, got {ratio}")
    a_list = [1]
    while True:
        nxt = max(a_list[-1] + 2, int(round(ratio ** len(a_list))))
        if nxt > n_max:
            break
        a_list.append(nxt)
    total = 0.0
    for i, a in enumerate(a_list):
        b = a_list[i + 1] - 1 if i + 1 < len(a_list) else n_max
        arg = u * float(sigma.evaluate(a)) * float(v.evaluate(a)) \
            / float(sigma.evaluate(b))
        total += math.exp(-conjugate(phi, arg))
    return total
