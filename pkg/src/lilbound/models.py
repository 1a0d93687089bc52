"""Simulatable martingale families with exact variance profiles.

Two families are built in:

  * degree-d sign chaos: S(n) = sum of products eps(i1)...eps(id) over
    increasing index tuples, a martingale with Var S(n) = C(n, d).
    Updates go through the elementary-symmetric recursion
    e_j(n) = e_j(n-1) + eps(n) * e_{j-1}(n-1), which is O(d) per step and
    exact in integer arithmetic; simulation at scale uses closed forms in
    the plain sign sum P1(n) for d <= 3.

  * weighted i.i.d. sums: S(n) = sum_{k<=n} 2^{-k} xi(k) with symmetric
    noise of standard deviation beta, so Var S(n) = beta^2 (1 - 4^{-n})/3.

A model packages everything the verifier and the bound engine need:
exact sigma, a shifted :class:`SigmaProfile` starting at the first
non-degenerate index, counter-based noise generation, vectorized
path-block simulation with carried state, and an exact single-path
stepper for desk-scale enumeration checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .engine import SigmaProfile
from .errors import DomainError
from .phi import PhiFunction, chi_square_phi, phi2, power_phi
from .rng import rademacher_block, uniform_symmetric_block


@dataclass(frozen=True, eq=False)
class MartingaleModel:
    """A martingale family bundled with its exact second-order structure.

    noise_block returns int8 signs for rademacher noise and float64
    draws otherwise; prefix_values turns a noise block into S values,
    carrying per-path state across consecutive blocks.  new_state /
    step / read_s walk a single path exactly (integer or Fraction
    arithmetic) for enumeration-based checks.
    """
    label: str
    kind: str
    noise_kind: str
    n_min: int
    phi: PhiFunction
    sigma_exact: Callable
    log_sigma_shifted: Callable
    noise_block: Callable
    prefix_values: Callable
    new_state: Callable
    step: Callable
    read_s: Callable

    def sigma_profile(self) -> SigmaProfile:
        """Variance profile re-indexed to start at the first usable time.

        The bound engine's partitions start at index 1, while sigma may
        vanish on a degenerate prefix (chaos needs n >= d).  The profile
        maps engine index j to model time j + (n_min - 1); pair it with a
        norming shifted by the same offset.
        """
        off = self.n_min - 1
        sig = self.sigma_exact

        def ev(j):
            return sig(np.asarray(j, dtype=float) + off)

        return SigmaProfile(label=f"{self.label}-sigma", kind="model_exact",
                            evaluate=ev, log_sigma=self.log_sigma_shifted)


# ---------------------------------------------------------------------------
# degree-d sign chaos
# ---------------------------------------------------------------------------

class ChaosState:
    """Exact elementary-symmetric coefficients of the signs seen so far.

    e[j] is the degree-j elementary symmetric polynomial in
    (eps(1), ..., eps(n)) as an unbounded Python integer, so identity
    checks are exact at any depth.
    """

    __slots__ = ("e", "n")

    def __init__(self, d: int):
        self.e = [1] + [0] * d
        self.n = 0

    def step(self, eps: int) -> "ChaosState":
        if eps not in (-1, 1):
            raise DomainError(f"sign step must be +-1, got {eps}")
        for j in range(len(self.e) - 1, 0, -1):
            self.e[j] += eps * self.e[j - 1]
        self.n += 1
        return self


def _chaos_closed_form(d: int, p1: np.ndarray, n: np.ndarray) -> np.ndarray:
    """S_d(n) from the sign sum P1(n), valid for sign noise and d <= 3.

    Newton's identities with p_k = sum eps^k collapse to p_2 = n and
    p_3 = P1 because eps^2 = 1.
    """
    p1 = p1.astype(np.int64)
    if d == 1:
        return p1.astype(np.float64)
    if d == 2:
        return (p1 * p1 - n) / 2.0
    return (p1 * (p1 * p1 - 3 * n + 2)) / 6.0


def chaos_model(d: int) -> MartingaleModel:
    """Degree-d sign chaos with Var S(n) = C(n, d).

    d = 2 carries the centered chi-square generator (its exact normalized
    limit); d >= 3 has no finite exponential moment for the normalized
    value, so it carries the per-step generator phi2 and relies on the
    moment-growth norm instead.  Simulation at scale supports d <= 3.
    """
    if d < 1:
        raise DomainError(f"chaos degree must be >= 1, got {d}")
    fact = float(math.factorial(d))

    def sigma(n):
        n = np.asarray(n, dtype=float)
        out = np.ones_like(n)
        for i in range(d):
            out = out * np.maximum(n - i, 0.0)
        return np.sqrt(out / fact)

    def noise(seed, path_lo, path_hi, step_lo, n_steps):
        return rademacher_block(seed, path_lo, path_hi, step_lo, n_steps)

    def prefix(noise_block, state=None):
        if d > 3:
            raise DomainError("closed-form simulation supports d <= 3; "
                              "use the exact stepper for higher degrees")
        if state is None:
            state = {"p1": np.zeros(noise_block.shape[0], dtype=np.int64),
                     "n": 0}
        p1 = state["p1"][:, None] + np.cumsum(noise_block, axis=1,
                                              dtype=np.int64)
        ns = state["n"] + np.arange(1, noise_block.shape[1] + 1)
        values = _chaos_closed_form(d, p1, ns[None, :])
        return values, {"p1": p1[:, -1], "n": int(ns[-1])}

    off = d - 1
    log_fact = math.lgamma(d + 1)

    def log_sigma(log_j):
        log_j = np.asarray(log_j, dtype=float)
        inv_j = np.exp(-np.minimum(log_j, 700.0))
        total = np.zeros_like(log_j)
        for i in range(d):
            # log(j + off - i), with off - i in [0, d-1]
            total = total + log_j + np.log1p((off - i) * inv_j)
        return 0.5 * (total - log_fact)

    phi = chi_square_phi() if d == 2 else phi2()
    return MartingaleModel(
        label=f"chaos:d={d}", kind="chaos", noise_kind="rademacher",
        n_min=d, phi=phi, sigma_exact=sigma, log_sigma_shifted=log_sigma,
        noise_block=noise, prefix_values=prefix,
        new_state=lambda: ChaosState(d),
        step=lambda st, eps: st.step(eps), read_s=lambda st: st.e[d])


def chaos_identity_check(signs: np.ndarray) -> bool:
    """Exact degree-2 identity: 2 S(n) = P1(n)^2 - n at every prefix.

    The left side comes from the elementary-symmetric recursion, the
    right from the plain sign sum; both are integer arithmetic, so the
    comparison is exact.  signs is (paths, n) with entries +-1.
    """
    signs = np.asarray(signs)
    if signs.ndim == 1:
        signs = signs[None, :]
    if not np.all(np.abs(signs) == 1):
        raise DomainError("identity check needs +-1 sign paths")
    s64 = signs.astype(np.int64)
    e1 = np.zeros(signs.shape[0], dtype=np.int64)
    e2 = np.zeros(signs.shape[0], dtype=np.int64)
    p1 = np.cumsum(s64, axis=1)
    for i in range(signs.shape[1]):
        e2 += s64[:, i] * e1
        e1 += s64[:, i]
        if not np.array_equal(2 * e2, p1[:, i] * p1[:, i] - (i + 1)):
            return False
    return True


# ---------------------------------------------------------------------------
# weighted i.i.d. sums
# ---------------------------------------------------------------------------

def weighted_iid_model(beta: float = 1.0,
                       weibull_r: Optional[float] = None) -> MartingaleModel:
    """S(n) = sum_{k<=n} 2^{-k} xi(k), noise of standard deviation beta.

    Default noise is beta * (+-1) signs; weibull_r switches to symmetric
    noise with tail exp(-x^r) (r > 1), rescaled to standard deviation
    beta.  Var S(n) = beta^2 (1 - 4^{-n}) / 3 either way.
    """
    if beta <= 0:
        raise DomainError(f"noise scale must be positive, got {beta}")
    if weibull_r is None:
        phi = phi2()
        noise_kind = "rademacher"
        label = f"weightedA:beta={beta:g}"

        def noise(seed, path_lo, path_hi, step_lo, n_steps):
            return rademacher_block(seed, path_lo, path_hi, step_lo, n_steps)

        unit_scale = beta
    else:
        if weibull_r <= 1:
            raise DomainError(
                f"tail exponent must exceed 1 for a finite exponential "
                f"moment, got {weibull_r}")
        phi = power_phi(weibull_r / (weibull_r - 1.0))
        noise_kind = "generic_symmetric"
        label = f"weightedA:beta={beta:g},r={weibull_r:g}"
        raw_std = math.sqrt(math.gamma(1.0 + 2.0 / weibull_r))
        unit_scale = beta / raw_std
        inv_r = 1.0 / weibull_r

        def noise(seed, path_lo, path_hi, step_lo, n_steps):
            u, sign = uniform_symmetric_block(seed, path_lo, path_hi,
                                              step_lo, n_steps)
            return sign * (-np.log1p(-u)) ** inv_r

    def sigma(n):
        n = np.asarray(n, dtype=float)
        return beta * np.sqrt((1.0 - 4.0 ** -n) / 3.0)

    def prefix(noise_block, state=None):
        if state is None:
            state = {"s": np.zeros(noise_block.shape[0]), "n": 0}
        ks = state["n"] + np.arange(1, noise_block.shape[1] + 1)
        weighted = noise_block.astype(np.float64) * unit_scale * 2.0 ** -ks
        values = state["s"][:, None] + np.cumsum(weighted, axis=1)
        return values, {"s": values[:, -1], "n": int(ks[-1])}

    beta_exact = Fraction(beta)

    def step(state, eps):
        n, s = state
        if eps not in (-1, 1):
            raise DomainError("exact stepper supports sign noise only")
        return (n + 1, s + eps * beta_exact / Fraction(2) ** (n + 1))

    log_b3 = math.log(beta) - 0.5 * math.log(3.0)

    def log_sigma(log_n):
        log_n = np.asarray(log_n, dtype=float)
        n = np.exp(np.minimum(log_n, 700.0))
        return log_b3 + 0.5 * np.log1p(-np.exp(-n * math.log(4.0)))

    return MartingaleModel(
        label=label, kind="weighted_iid", noise_kind=noise_kind,
        n_min=1, phi=phi, sigma_exact=sigma, log_sigma_shifted=log_sigma,
        noise_block=noise, prefix_values=prefix,
        new_state=lambda: (0, Fraction(0)),
        step=step, read_s=lambda state: state[1])


# ---------------------------------------------------------------------------
# detached variance profiles
# ---------------------------------------------------------------------------

_SLOW_FACTORS = ("one", "log", "invlog")


def power_law_surrogate(gamma: float, m: str = "one") -> SigmaProfile:
    """Profile n^gamma * M(n) with a slowly varying factor M.

    m picks M from {1, log(n+e), 1/log(n+e)}; these bracket the profiles
    the rate-form analysis allows without tying the engine to a model.
    """
    if gamma <= 0:
        raise DomainError(f"power-law exponent must be positive, got {gamma}")
    if m not in _SLOW_FACTORS:
        raise DomainError(f"slow factor must be one of {_SLOW_FACTORS}")

    def ev(n):
        n = np.asarray(n, dtype=float)
        base = n ** gamma
        if m == "one":
            return base
        mod = np.log(n + math.e)
        return base * mod if m == "log" else base / mod

    def log_sig(log_n):
        log_n = np.asarray(log_n, dtype=float)
        base = gamma * log_n
        if m == "one":
            return base
        # log(n + e) = log n + log1p(e/n)
        mod = np.log(log_n + np.log1p(math.e * np.exp(-np.minimum(log_n,
                                                                  700.0))))
        return base + mod if m == "log" else base - mod

    return SigmaProfile(label=f"powerlaw:gamma={gamma:g},m={m}",
                        kind="power_law", evaluate=ev, log_sigma=log_sig)
