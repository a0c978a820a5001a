"""Moment machinery: profile combinatorics, Gaussian moments, and limit-law predictors.

The method of moments reduces every limit statement about the normalised group
sums to (a) counting multiindices by their multiplicity profile and (b) moments
of Gaussian or quartic limit laws.  This module provides both ingredients
exactly, plus the per-regime predictors for correlations and moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iter_product

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import RegimeError, UnsupportedCaseError
from .model import Heterogeneous, Homogeneous, Model
from .regime import RegimeLabel, classify, h_matrix
from .solver import (
    HomogeneousPotential,
    conditional_hessian,
    solve_cw_equation,
    solve_two_group_system,
)

MAX_PAIR_PARTITION_ORDER = 16


# ---------------------------------------------------------------------------
# profile vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileVector:
    """Multiplicity profile (r_1, ..., r_L): r_l indices occur exactly l times."""

    r: tuple[int, ...]

    def __post_init__(self):
        if any(x < 0 for x in self.r):
            raise UnsupportedCaseError(f"profile entries must be >= 0: {self.r}")
        if sum((l + 1) * x for l, x in enumerate(self.r)) != len(self.r):
            raise UnsupportedCaseError(
                f"profile {self.r} violates sum_l l*r_l = L = {len(self.r)}"
            )

    @property
    def order(self) -> int:
        return len(self.r)

    @property
    def distinct_indices(self) -> int:
        return sum(self.r)

    def in_pi0(self) -> bool:
        """Only singletons and pairs (r_l = 0 for all l >= 3)."""
        return all(x == 0 for x in self.r[2:])

    def in_pi_plus(self) -> bool:
        """Some index repeats three or more times."""
        return any(x > 0 for x in self.r[2:])

    def in_pi_k(self, k: int) -> bool:
        """Exactly k singleton indices (r_1 = k)."""
        return self.r[0] == k


def profile_of(multiindex) -> ProfileVector:
    """Multiplicity profile of a multiindex."""
    idx = tuple(int(i) for i in multiindex)
    if len(idx) == 0:
        return ProfileVector(())
    counts: dict[int, int] = {}
    for i in idx:
        counts[i] = counts.get(i, 0) + 1
    lmax = len(idx)
    r = [0] * lmax
    for c in counts.values():
        r[c - 1] += 1
    return ProfileVector(tuple(r))


@dataclass(frozen=True)
class ProfileCount:
    exact: int
    asymptotic: float
    feasible: bool


def profile_count(order: int, profile: ProfileVector, n: int) -> ProfileCount:
    """Number of multiindices in {1..n}^order with the given profile.

    Exact value n! / (r_1! ... r_L! r_0!) * L! / (1!^{r_1} ... L!^{r_L}) with
    r_0 = n - sum r_l, plus the large-n leading term
    n^{sum r_l} / (r_1!...r_L!) * L! / (1!^{r_1}...L!^{r_L}).
    Infeasible profiles (more distinct indices than n) count zero.
    """
    if profile.order != order:
        raise UnsupportedCaseError(
            f"profile of order {profile.order} used with order {order}"
        )
    r = profile.r
    r0 = n - sum(r)
    shape = math.factorial(order)
    for l, rl in enumerate(r, start=1):
        shape //= math.factorial(l) ** rl
    denom = 1
    for rl in r:
        denom *= math.factorial(rl)
    asym = float(n) ** sum(r) / denom * shape
    if r0 < 0:
        return ProfileCount(exact=0, asymptotic=asym, feasible=False)
    exact = math.factorial(n) // (denom * math.factorial(r0)) * shape
    return ProfileCount(exact=exact, asymptotic=asym, feasible=True)


def enumerate_profiles(order: int) -> list[ProfileVector]:
    """All profiles of a given order (integer partitions by multiplicity)."""
    if order > 40:
        raise UnsupportedCaseError("profile enumeration capped at order 40")
    out: list[ProfileVector] = []

    def rec(remaining: int, max_part: int, counts: dict[int, int]):
        if remaining == 0:
            r = [0] * order
            for part, c in counts.items():
                r[part - 1] = c
            out.append(ProfileVector(tuple(r)))
            return
        for part in range(min(max_part, remaining), 0, -1):
            counts[part] = counts.get(part, 0) + 1
            rec(remaining - part, part, counts)
            counts[part] -= 1
            if counts[part] == 0:
                del counts[part]

    rec(order, order, {})
    return out


# ---------------------------------------------------------------------------
# Gaussian moments: direct pair-partition sum and the recursion
# ---------------------------------------------------------------------------


def _check_covariance(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise UnsupportedCaseError(f"covariance must be square, got shape {c.shape}")
    if not np.allclose(c, c.T, atol=1e-10 * max(1.0, float(np.abs(c).max()))):
        raise UnsupportedCaseError("covariance must be symmetric")
    if np.linalg.eigvalsh(c)[0] < -1e-10 * max(1.0, float(np.abs(c).max())):
        raise UnsupportedCaseError("covariance must be positive semi-definite")
    return c


def gaussian_moment(c, orders) -> float:
    """Centred Gaussian moment E prod_i Z_i^{k_i} as a sum over pair partitions.

    Exact Wick sum; zero for odd total order.  Guarded at total order 16
    ((total-1)!! pairings); use the recursion beyond that.
    """
    c = _check_covariance(c)
    orders = tuple(int(k) for k in orders)
    if len(orders) != c.shape[0]:
        raise UnsupportedCaseError(
            f"{len(orders)} orders for a {c.shape[0]}-dimensional covariance"
        )
    total = sum(orders)
    if total % 2 == 1:
        return 0.0
    if total == 0:
        return 1.0
    if total > MAX_PAIR_PARTITION_ORDER:
        raise UnsupportedCaseError(
            f"pair-partition enumeration capped at total order {MAX_PAIR_PARTITION_ORDER}"
        )
    flat: list[int] = []
    for i, k in enumerate(orders):
        flat.extend([i] * k)

    def rec(items: tuple[int, ...]) -> float:
        if not items:
            return 1.0
        first = items[0]
        total = 0.0
        for j in range(1, len(items)):
            rest = items[1:j] + items[j + 1 :]
            total += c[first, items[j]] * rec(rest)
        return total

    return rec(tuple(flat))


def gaussian_moment_recursive(c, orders) -> float:
    """Centred Gaussian moment by recursion over the last coordinate.

    Each copy of the last variable pairs either with an earlier variable
    (r_i copies with variable i) or with another copy of itself; summing the
    multiplicities gives the moment in terms of lower-dimensional ones.
    """
    c = _check_covariance(c)
    orders = tuple(int(k) for k in orders)
    if len(orders) != c.shape[0]:
        raise UnsupportedCaseError(
            f"{len(orders)} orders for a {c.shape[0]}-dimensional covariance"
        )

    @lru_cache(maxsize=None)
    def rec(sub: tuple[int, ...]) -> float:
        if sum(sub) % 2 == 1:
            return 0.0
        n = len(sub)
        if n == 1:
            k = sub[0]
            return _double_factorial(k - 1) * c[0, 0] ** (k // 2)
        last = sub[-1]
        rest = sub[:-1]
        total = 0.0
        for rs in iter_product(*(range(0, min(li, last) + 1) for li in rest)):
            r = sum(rs)
            if r > last or (last - r) % 2 == 1:
                continue
            half = (last - r) // 2
            term = math.factorial(last) / (math.factorial(half) * 2.0**half)
            for i, (li, ri) in enumerate(zip(rest, rs)):
                term *= (
                    math.factorial(li)
                    / (math.factorial(ri) * math.factorial(li - ri))
                    * c[i, n - 1] ** ri
                )
            term *= c[n - 1, n - 1] ** half
            total += term * rec(tuple(li - ri for li, ri in zip(rest, rs)))
        return total

    return rec(orders)


def _double_factorial(k: int) -> int:
    if k <= 0:
        return 1
    out = 1
    for i in range(k, 0, -2):
        out *= i
    return out


# ---------------------------------------------------------------------------
# limit-law covariances
# ---------------------------------------------------------------------------


def sigma_matrix(model: Model) -> np.ndarray:
    """Latent covariance: constant beta/(1-beta) matrix or H^{-1}. High regime only."""
    report = classify(model)
    if report.label is not RegimeLabel.HIGH:
        raise RegimeError(f"latent covariance requires the high regime, got {report.label.value}")
    if model.is_homogeneous:
        bb = model.coupling.beta / (1.0 - model.coupling.beta)
        return np.full((model.m, model.m), bb)
    return np.linalg.inv(report.h_matrix)


def clt_covariance(model: Model) -> np.ndarray:
    """Limit covariance C = I + sqrt(alpha) Sigma sqrt(alpha) of S_l / sqrt(N_l)."""
    sig = sigma_matrix(model)
    root_a = np.sqrt(np.asarray(model.alphas))
    c = np.eye(model.m) + np.outer(root_a, root_a) * sig
    return 0.5 * (c + c.T)


def clt_moment_profile_sum(model: Model, orders) -> float:
    """CLT moment through the finite profile sum over singleton counts.

    sum over k_l (same parity as K_l) of
    prod_l alpha_l^{k_l/2} K_l! / (k_l! ((K_l-k_l)/2)! 2^{(K_l-k_l)/2})
    times the Gaussian moment of order (k_1..k_M) under Sigma.  Equals the
    Gaussian moment of order K under C; kept as an independent cross-check.
    """
    orders = tuple(int(k) for k in orders)
    sig = sigma_matrix(model)
    alphas = np.asarray(model.alphas)
    if sum(orders) % 2 == 1:
        return 0.0
    total = 0.0
    ranges = [range(k % 2, k + 1, 2) for k in orders]
    for ks in iter_product(*ranges):
        coef = 1.0
        for a, k_full, k in zip(alphas, orders, ks):
            half = (k_full - k) // 2
            coef *= (
                a ** (k / 2.0)
                * math.factorial(k_full)
                / (math.factorial(k) * math.factorial(half) * 2.0**half)
            )
        total += coef * gaussian_moment_recursive(sig, ks)
    return total


# ---------------------------------------------------------------------------
# per-regime predictors
# ---------------------------------------------------------------------------


def _quarter_gamma_ratio(total: int) -> float:
    """Gamma((total+1)/4) / Gamma(1/4)."""
    return float(gamma_fn((total + 1) / 4.0) / gamma_fn(0.25))


def _two_group_l_entries(model: Model) -> tuple[float, float, float]:
    """(L11, L22, L12) with L12 carrying the sign of J12."""
    report = classify(model)
    l = report.l_matrix
    return float(l[0, 0]), float(l[1, 1]), float(-l[0, 1])


def _het_critical_constant(model: Model, k1: int, k2: int) -> float:
    l11, l22, _ = _two_group_l_entries(model)
    a1, a2 = model.alphas
    u, v = l11 - a1, l22 - a2
    if u <= 0 or v <= 0:
        raise RegimeError(
            "two-group critical predictor requires L_11 - alpha_1 > 0 and "
            "L_22 - alpha_2 > 0"
        )
    total = k1 + k2
    bracket = 12.0 / (a1 * v**2 + a2 * u**2)
    return (
        bracket ** (total / 4.0)
        * u ** (k2 / 2.0)
        * v ** (k1 / 2.0)
        * _quarter_gamma_ratio(total)
    )


def asymptotic_correlation(model: Model, orders, n: int) -> float:
    """Limit value of the correlation of distinct spins, N-power included.

    Homogeneous: (k-1)!! (beta/(1-beta))^{k/2} N^{-k/2} below criticality,
    12^{k/4} Gamma((k+1)/4)/Gamma(1/4) N^{-k/4} at criticality, m(beta)^k
    above.  Heterogeneous: Gaussian moment of H^{-1} times N^{-k/2} in the
    high regime; two-group closed forms in the critical and low regimes.
    Odd totals vanish.
    """
    orders = tuple(int(k) for k in orders)
    if len(orders) != model.m:
        raise UnsupportedCaseError(f"order vector needs {model.m} entries")
    total = sum(orders)
    if total == 0:
        return 1.0
    if total % 2 == 1:
        return 0.0
    label = classify(model).label
    if model.is_homogeneous:
        beta = model.coupling.beta
        if label is RegimeLabel.HIGH:
            bb = beta / (1.0 - beta)
            return _double_factorial(total - 1) * bb ** (total / 2.0) * n ** (-total / 2.0)
        if label is RegimeLabel.CRITICAL:
            return 12.0 ** (total / 4.0) * _quarter_gamma_ratio(total) * n ** (-total / 4.0)
        return solve_cw_equation(beta) ** total
    if label is RegimeLabel.HIGH:
        hinv = np.linalg.inv(h_matrix(model))
        return gaussian_moment_recursive(hinv, orders) * n ** (-total / 2.0)
    if model.m != 2:
        raise UnsupportedCaseError(
            "heterogeneous critical/low correlations are available for 2 groups only"
        )
    if label is RegimeLabel.CRITICAL:
        return _het_critical_constant(model, orders[0], orders[1]) * n ** (-total / 4.0)
    sol = solve_two_group_system(classify(model).l_matrix, model.alphas)
    m1, m2 = sol.magnetisations
    return m1 ** orders[0] * m2 ** orders[1]


def critical_moment(model: Model, orders) -> float:
    """Limit moment of S_l / N_l^{3/4} in the critical regime.

    Homogeneous: 12^{K/4} Gamma((K+1)/4)/Gamma(1/4) prod alpha_l^{K_l/4};
    heterogeneous (two groups): the L-weighted analogue.  Odd totals vanish.
    """
    orders = tuple(int(k) for k in orders)
    if len(orders) != model.m:
        raise UnsupportedCaseError(f"order vector needs {model.m} entries")
    label = classify(model).label
    if label is not RegimeLabel.CRITICAL:
        raise RegimeError(f"critical moments need the critical regime, got {label.value}")
    total = sum(orders)
    if total == 0:
        return 1.0
    if total % 2 == 1:
        return 0.0
    alphas = np.asarray(model.alphas)
    alpha_factor = float(np.prod(alphas ** (np.asarray(orders) / 4.0)))
    if model.is_homogeneous:
        return 12.0 ** (total / 4.0) * _quarter_gamma_ratio(total) * alpha_factor
    if model.m != 2:
        raise UnsupportedCaseError(
            "heterogeneous critical moments are available for 2 groups only"
        )
    return _het_critical_constant(model, orders[0], orders[1]) * alpha_factor


def low_temp_limit(model: Model) -> "DiracMixture":
    """Two-atom limit of S_l / N_l in the low regime: 1/2 at +m*, 1/2 at -m*."""
    label = classify(model).label
    if label is not RegimeLabel.LOW:
        raise RegimeError(f"two-atom limit needs the low regime, got {label.value}")
    if model.is_homogeneous:
        m = solve_cw_equation(model.coupling.beta)
        atom = np.full(model.m, m)
    else:
        if model.m != 2:
            raise UnsupportedCaseError(
                "heterogeneous low-temperature limit is available for 2 groups only"
            )
        if np.any(model.coupling.matrix <= 0):
            raise UnsupportedCaseError(
                "two-group low-temperature limit requires positive coupling entries"
            )
        sol = solve_two_group_system(classify(model).l_matrix, model.alphas)
        atom = np.asarray(sol.magnetisations)
    return DiracMixture(atoms=np.stack([-atom, atom]), weights=np.array([0.5, 0.5]))


def conditional_clt_covariance(model: Model) -> np.ndarray:
    """Covariance E of sign-conditioned centred fluctuations in the low regime.

    E = diag(1 - m*^2) + sqrt(alpha) Htilde^{-1} sqrt(alpha) with Htilde the
    bounded-chart Hessian at the positive minimum.  The homogeneous case has a
    one-dimensional latent variable, so the Htilde^{-1} block degenerates to
    the constant matrix 2 / F_beta''(m) (all entries equal).
    """
    label = classify(model).label
    if label is not RegimeLabel.LOW:
        raise RegimeError(f"conditional covariance needs the low regime, got {label.value}")
    alphas = np.asarray(model.alphas)
    root_a = np.sqrt(alphas)
    if model.is_homogeneous:
        beta = model.coupling.beta
        m = solve_cw_equation(beta)
        pot = HomogeneousPotential(beta)
        v = 2.0 / pot.second_derivative_t(m)
        e = np.diag(np.full(model.m, 1.0 - m * m)) + np.outer(root_a, root_a) * v
    else:
        mstar, htilde = conditional_hessian(model)
        hinv = np.linalg.inv(htilde)
        e = np.diag(1.0 - mstar**2) + np.outer(root_a, root_a) * hinv
    return 0.5 * (e + e.T)


# ---------------------------------------------------------------------------
# critical linear-transform parameters
# ---------------------------------------------------------------------------


def nu_eta_moment(eta: float, k: int) -> float:
    """k-th moment of the quartic law with density ~ exp(-eta x^4)."""
    if eta <= 0:
        raise UnsupportedCaseError(f"eta must be positive, got {eta}")
    if k < 0:
        raise UnsupportedCaseError("moment order must be >= 0")
    if k % 2 == 1:
        return 0.0
    return eta ** (-k / 4.0) * _quarter_gamma_ratio(k)


@dataclass(frozen=True)
class CritTransformParams:
    """Coefficients and limit parameters of the two critical linear statistics.

    t_coeffs . S is asymptotically Gaussian with variance gaussian_variance;
    u_coeffs . S converges to the quartic law with parameter eta.  The
    coefficients are evaluated at the model's own group sizes.
    """

    t_coeffs: np.ndarray
    u_coeffs: np.ndarray
    gaussian_variance: float
    eta: float


def crit_linear_transform_params(model: Model) -> CritTransformParams:
    """Parameters of the Gaussian and quartic linear statistics (two groups)."""
    label = classify(model).label
    if label is not RegimeLabel.CRITICAL:
        raise RegimeError(f"critical transforms need the critical regime, got {label.value}")
    if model.m != 2:
        raise UnsupportedCaseError("critical linear transforms are defined for 2 groups")
    a1, a2 = model.alphas
    if a1 == 0.0 or a2 == 0.0:
        raise UnsupportedCaseError("critical linear transforms need both groups non-trivial")
    n1, n2 = model.sizes
    n = model.total_spins
    if model.is_homogeneous:
        t = np.array([math.sqrt(a2 / a1), -math.sqrt(a1 / a2)]) / math.sqrt(n)
        u = np.array(
            [0.5 / (a1 * n1**3) ** 0.25, 0.5 / (a2 * n2**3) ** 0.25]
        )
        return CritTransformParams(t, u, gaussian_variance=1.0, eta=1.0 / 12.0)
    l11, l22, _ = _two_group_l_entries(model)
    g1, g2 = l11 - a1, l22 - a2
    if g1 <= 0 or g2 <= 0:
        raise RegimeError("critical transforms require L_ll - alpha_l > 0")
    t = np.array(
        [math.sqrt(g1) / math.sqrt(a1 * n1), -math.sqrt(g2) / math.sqrt(a2 * n2)]
    )
    u = np.array(
        [math.sqrt(g1) / (a1 * n1**3) ** 0.25, math.sqrt(g2) / (a2 * n2**3) ** 0.25]
    )
    var = 1.0 + g1 / a1 + g2 / a2
    eta = (a1 / g1**2 + a2 / g2**2) / (2.0**6 * 3.0)
    return CritTransformParams(t, u, gaussian_variance=var, eta=eta)


# ---------------------------------------------------------------------------
# prediction descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiracMixture:
    """Mixture of point masses for the normalised sums (gamma = 1)."""

    atoms: np.ndarray    # (n_atoms, M)
    weights: np.ndarray

    gamma: float = 1.0
    kind: str = "dirac_mixture"

    def moment(self, orders) -> float:
        orders = np.asarray(orders, dtype=int)
        vals = np.prod(self.atoms ** orders[None, :], axis=1)
        return float(self.weights @ vals)


@dataclass(frozen=True)
class GaussianPrediction:
    """Centred Gaussian limit of S_l / N_l^{1/2} (gamma = 1/2)."""

    covariance: np.ndarray

    gamma: float = 0.5
    kind: str = "gaussian"

    def moment(self, orders) -> float:
        return gaussian_moment_recursive(self.covariance, orders)


@dataclass(frozen=True)
class QuarticFactorized:
    """Critical limit of S_l / N_l^{3/4} described by its joint moments."""

    model: Model

    gamma: float = 0.75
    kind: str = "quartic_factorized"

    def moment(self, orders) -> float:
        return critical_moment(self.model, orders)


@dataclass(frozen=True)
class QuarticScalar:
    """Scalar quartic law with density ~ exp(-eta x^4)."""

    eta: float

    gamma: float = 0.75
    kind: str = "quartic_scalar"

    def moment1d(self, k: int) -> float:
        return nu_eta_moment(self.eta, k)


Prediction = DiracMixture | GaussianPrediction | QuarticFactorized | QuarticScalar


def prediction_for(model: Model) -> Prediction:
    """The limit-law descriptor matching the model's regime."""
    label = classify(model).label
    if label is RegimeLabel.HIGH:
        return GaussianPrediction(clt_covariance(model))
    if label is RegimeLabel.CRITICAL:
        return QuarticFactorized(model)
    return low_temp_limit(model)
