"""Exact finite-N correlations by quadrature, and Laplace-method approximators.

The exchangeable Gibbs measure is a mixture of product measures over a latent
field: one latent variable for homogeneous coupling, one per group for a
positive definite coupling matrix.  Correlations of distinct spins are then
ratios of integrals

    E(X_11 ... X_Mk_M) = int tanh^{k_1}(y_1)...tanh^{k_M}(y_M) w_N(y) dy
                         / int w_N(y) dy,

with w_N(y) = exp(-N (1/2 y'Ly - sum_l (N_l/N) log cosh y_l)).  These are the
exact finite-N values (only quadrature error remains), so they double as an
oracle against enumeration and as a bridge to the asymptotic predictors.

Numerator and denominator always share one quadrature rule so discretisation
error cancels in the ratio; tails are truncated where the exponent exceeds its
minimum by a fixed margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import QuadratureError, RegimeError, UnsupportedCaseError
from .model import Model
from .moments import gaussian_moment_recursive
from .solver import (
    HeterogeneousPotential,
    HomogeneousPotential,
    minimize_het_potential,
)

TAIL_MARGIN = 60.0          # exponent excess at the truncation boundary
GL_ORDER = 48               # Gauss-Legendre nodes per axis segment
WINDOW_HALFWIDTH = 14.0     # minima windows extend this many local scales
RATIO_TOL = 1e-10


# ---------------------------------------------------------------------------
# homogeneous coupling: one latent dimension
# ---------------------------------------------------------------------------


def _hom_setup(model: Model):
    beta = model.coupling.beta
    pot = HomogeneousPotential(beta)
    minima = pot.minima_y()
    fmin = float(pot.exponent_y(minima[-1]))
    return pot, minima, fmin


def _hom_window(pot: HomogeneousPotential, minima, fmin: float, n: int) -> float:
    target = fmin + TAIL_MARGIN / n
    hi = max(2.0, 2.0 * float(np.max(np.abs(minima))) + 2.0)
    while pot.exponent_y(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise QuadratureError("failed to bracket the integration window")
    return hi


def correlation_quadrature_hom(
    model: Model,
    k_total: int,
    n: int | None = None,
    symmetry_shortcut: bool = True,
) -> float:
    """Finite-N correlation of k distinct spins under homogeneous coupling.

    Evaluated on the unbounded latent line (the substitution t = tanh u removes
    the 1/(1-t^2) endpoint factor exactly).  beta = 0 means independent fair
    spins, where any product of distinct spins has mean zero.
    """
    if not model.is_homogeneous:
        raise UnsupportedCaseError("homogeneous quadrature needs scalar coupling")
    k_total = int(k_total)
    if k_total < 0:
        raise UnsupportedCaseError("order must be >= 0")
    n = model.total_spins if n is None else int(n)
    if k_total == 0:
        return 1.0
    if model.coupling.beta == 0.0:
        return 0.0
    if k_total % 2 == 1 and symmetry_shortcut:
        return 0.0
    pot, minima, fmin = _hom_setup(model)
    hi = _hom_window(pot, minima, fmin, n)

    def weight(u):
        return np.exp(-n * (pot.exponent_y(u) - fmin))

    pts = [float(u) for u in minima]
    num, num_err = integrate.quad(
        lambda u: np.tanh(u) ** k_total * weight(u),
        -hi, hi, points=pts, limit=400, epsabs=1e-14, epsrel=1e-11,
    )
    den, den_err = integrate.quad(
        weight, -hi, hi, points=pts, limit=400, epsabs=1e-14, epsrel=1e-11,
    )
    achieved = (num_err + abs(num / den) * den_err) / den
    if achieved > RATIO_TOL:
        raise QuadratureError(
            f"correlation quadrature reached {achieved:.2e}, needed {RATIO_TOL:.0e}",
            achieved=achieved,
        )
    return float(num / den)


# ---------------------------------------------------------------------------
# heterogeneous coupling: tensor-product quadrature
# ---------------------------------------------------------------------------


def _axis_nodes(centers, scales, hi: float, m: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-hi, hi] split at minima windows.

    Window segments around each center resolve the sharp peaks; the remaining
    segments keep the coarse global coverage needed when several wells carry
    mass.
    """
    bounds = {-hi, hi}
    for c, s in zip(centers, scales):
        lo_w = max(-hi, c - WINDOW_HALFWIDTH * s)
        hi_w = min(hi, c + WINDOW_HALFWIDTH * s)
        if lo_w < hi_w:
            bounds.update((lo_w, hi_w))
    edges = sorted(bounds)
    order = GL_ORDER if m <= 2 else 32
    base_x, base_w = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        xs.append(0.5 * (b - a) * base_x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * base_w)
    return np.concatenate(xs), np.concatenate(ws)


def _het_setup(model: Model, n: int):
    weights = np.asarray(model.sizes, dtype=float) / n
    pot = HeterogeneousPotential(
        np.linalg.inv(model.coupling.matrix), weights
    )
    sol = minimize_het_potential(pot)
    lam_min = float(np.linalg.eigvalsh(pot.l_matrix)[0])
    fmin = float(sol.potential_values.min())
    # quadratic lower bound F >= lam_min/2 |y|^2 - |w|_1 |y| sizes the box
    w1 = float(np.abs(weights).sum())
    c = max(fmin + TAIL_MARGIN / n, 0.0) + 1.0
    hi = (w1 + math.sqrt(w1**2 + 2.0 * lam_min * c)) / lam_min
    hi = max(hi, 2.0 * float(np.max(np.abs(sol.points))) + 4.0, 6.0)
    return pot, sol, fmin, hi


def _axis_scale(pot: HeterogeneousPotential, point: np.ndarray, axis: int, n: int) -> float:
    """Local peak width along one axis; quartic fallback for flat wells."""
    hess = pot.hessian(point)
    try:
        var = float(np.linalg.inv(hess)[axis, axis])
    except np.linalg.LinAlgError:
        var = np.inf
    if not np.isfinite(var) or var <= 0:
        return n ** (-0.25)
    return max(math.sqrt(var / n), 0.5 * n ** (-0.25))


def _het_tensor(model: Model, n: int, moment_grid_fn):
    """Shared tensor-grid ratio integrator for the heterogeneous potentials."""
    if model.is_homogeneous:
        raise UnsupportedCaseError("heterogeneous quadrature needs matrix coupling")
    if model.m > 3:
        raise UnsupportedCaseError("tensor quadrature supports at most 3 groups")
    pot, sol, fmin, hi = _het_setup(model, n)
    axes = []
    for axis in range(model.m):
        centers = sol.points[:, axis]
        scale = _axis_scale(pot, sol.points[0], axis, n)
        xs, ws = _axis_nodes(centers, [scale] * len(centers), hi, model.m)
        axes.append((xs, ws))
    grids = np.meshgrid(*(a[0] for a in axes), indexing="ij")
    logw = -n * (pot.value_grid(grids) - fmin)
    w = np.exp(logw)
    for axis, (_, ws) in enumerate(axes):
        shape = [1] * model.m
        shape[axis] = len(ws)
        w = w * ws.reshape(shape)
    den = float(w.sum())
    num = float((w * moment_grid_fn(grids)).sum())
    if not np.isfinite(num) or not np.isfinite(den) or den <= 0:
        raise QuadratureError("tensor quadrature produced a non-finite value")
    return num / den


def correlation_quadrature_het(
    model: Model,
    orders,
    n: int | None = None,
    symmetry_shortcut: bool = True,
) -> float:
    """Finite-N correlation of distinct spins under matrix coupling (M <= 3).

    Ratio of tensor Gauss-Legendre integrals in y-coordinates, grids recentred
    at the minima of the finite-N potential (which uses N_l/N, not alpha).
    """
    orders = tuple(int(k) for k in orders)
    if len(orders) != model.m:
        raise UnsupportedCaseError(f"order vector needs {model.m} entries")
    n = model.total_spins if n is None else int(n)
    if sum(orders) == 0:
        return 1.0
    if sum(orders) % 2 == 1 and symmetry_shortcut:
        return 0.0

    def factor(grids):
        out = np.ones_like(grids[0])
        for axis, k in enumerate(orders):
            if k:
                out = out * np.tanh(grids[axis]) ** k
        return out

    return float(_het_tensor(model, n, factor))


def low_temp_quadrature_het(
    model: Model,
    k: int,
    q: int,
    n: int | None = None,
    symmetry_shortcut: bool = True,
) -> float:
    """Two-group finite-N correlation in the bounded chart (s, t) in (-1,1)^2.

    Integrates s^k t^q exp(-N Ftilde(s,t)) / ((1-s^2)(1-t^2)) with Ftilde the
    bounded-chart potential normalised to zero at its minima.  Equivalent to
    the y-route by the exact substitution s = tanh(y); kept as an independent
    representation for cross-checks.
    """
    if model.is_homogeneous or model.m != 2:
        raise UnsupportedCaseError("bounded-chart quadrature handles 2 heterogeneous groups")
    k, q = int(k), int(q)
    n = model.total_spins if n is None else int(n)
    if k + q == 0:
        return 1.0
    if (k + q) % 2 == 1 and symmetry_shortcut:
        return 0.0
    pot, sol, fmin, _ = _het_setup(model, n)

    def ftilde(s, t):
        y1, y2 = np.arctanh(s), np.arctanh(t)
        return pot.value_grid([y1, y2]) - fmin

    edge = 1.0 - 1e-9
    axes = []
    for axis in range(2):
        centers = np.tanh(sol.points[:, axis])
        scale = _axis_scale(pot, sol.points[0], axis, n)
        # bounded-chart scale shrinks by the chart derivative 1 - m^2
        scales = [max(1e-12, (1.0 - c * c)) * scale for c in centers]
        xs, ws = _axis_nodes(centers, scales, edge)
        axes.append((xs, ws))
    s_nodes, s_w = axes[0]
    t_nodes, t_w = axes[1]
    s_grid, t_grid = np.meshgrid(s_nodes, t_nodes, indexing="ij")
    with np.errstate(over="ignore"):
        logw = (
            -n * ftilde(s_grid, t_grid)
            - np.log1p(-s_grid**2)
            - np.log1p(-t_grid**2)
        )
    w = np.exp(logw - logw.max()) * np.outer(s_w, t_w)
    den = float(w.sum())
    num = float((w * s_grid**k * t_grid**q).sum())
    if not np.isfinite(num) or not np.isfinite(den) or den <= 0:
        raise QuadratureError("bounded-chart quadrature produced a non-finite value")
    return num / den


# ---------------------------------------------------------------------------
# Laplace-method approximators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceResult:
    value: float
    leading_order_power: Fraction   # exponent of N in the leading term
    minimum_used: np.ndarray
    hessian_used: np.ndarray


def _central_derivative(f, a: float, order: int) -> float:
    """Central finite-difference derivative of even/odd order <= 8."""
    if order < 1 or order > 8:
        raise UnsupportedCaseError("finite differences support orders 1..8")
    h = (np.finfo(float).eps) ** (1.0 / (order + 2)) * max(1.0, abs(a))
    total = 0.0
    for j in range(order + 1):
        total += (-1.0) ** j * math.comb(order, j) * f(a + (order / 2.0 - j) * h)
    return total / h**order


def laplace_univariate(f, phi, a: float, k_order: int, ell: int, n: int) -> LaplaceResult:
    """Leading term of int exp(-(N/2) F(t)) phi(t) (t-a)^ell dt.

    F has its minimum at a with first non-vanishing derivative of even order
    k; the local model F ~ F^{(k)}(a) (t-a)^k / k! integrates to

        phi(a) (2/k) (k! / F^{(k)}(a))^{(ell+1)/k} (2/N)^{(ell+1)/k}
        Gamma((ell+1)/k)

    for even ell; odd ell gives a zero limit at the N^{(ell+1)/k} scale.
    A nonzero F(a) contributes its exact factor exp(-(N/2) F(a)).
    """
    k_order = int(k_order)
    ell = int(ell)
    if k_order < 2 or k_order % 2 == 1:
        raise UnsupportedCaseError("k must be a positive even derivative order")
    if ell < 0:
        raise UnsupportedCaseError("ell must be >= 0")
    fk = _central_derivative(f, a, k_order)
    if fk <= 0:
        raise UnsupportedCaseError(
            f"order-{k_order} derivative at the minimum must be positive, got {fk:.3g}"
        )
    power = Fraction(ell + 1, k_order)
    if ell % 2 == 1:
        return LaplaceResult(
            value=0.0,
            leading_order_power=-power,
            minimum_used=np.array([a]),
            hessian_used=np.array([[fk]]),
        )
    value = (
        phi(a)
        * (2.0 / k_order)
        * (math.factorial(k_order) / fk) ** float(power)
        * (2.0 / n) ** float(power)
        * float(gamma_fn(float(power)))
        * math.exp(-0.5 * n * f(a))
    )
    return LaplaceResult(
        value=float(value),
        leading_order_power=-power,
        minimum_used=np.array([a]),
        hessian_used=np.array([[fk]]),
    )


def laplace_multivariate(f, phi, a, k, n: int) -> LaplaceResult:
    """Leading term of int exp(-N F(x)) phi(x) (x-a)^k dx over R^d.

    Requires a positive definite Hessian A at the unique interior minimum a;
    the value is (2 pi)^{d/2} sqrt(det A^{-1}) phi(a) N^{-(|k|+d)/2} m_k(A^{-1})
    with m_k the centred Gaussian moment.  A nonzero F(a) contributes
    exp(-N F(a)).
    """
    a = np.asarray(a, dtype=float)
    k = tuple(int(x) for x in k)
    d = a.size
    if len(k) != d:
        raise UnsupportedCaseError(f"moment order needs {d} entries")
    hess = np.empty((d, d))
    h = (np.finfo(float).eps) ** 0.25 * np.maximum(1.0, np.abs(a))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d); ei[i] = h[i]
            ej = np.zeros(d); ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                f(a + ei + ej) - f(a + ei - ej) - f(a - ei + ej) + f(a - ei - ej)
            ) / (4.0 * h[i] * h[j])
    eigs = np.linalg.eigvalsh(hess)
    if eigs[0] <= 0:
        raise UnsupportedCaseError(
            f"Hessian at the minimum must be positive definite (eigenvalue {eigs[0]:.3g})"
        )
    total = sum(k)
    power = Fraction(total + d, 2)
    hinv = np.linalg.inv(hess)
    hinv = 0.5 * (hinv + hinv.T)
    value = (
        (2.0 * np.pi) ** (d / 2.0)
        * np.sqrt(np.linalg.det(hinv))
        * phi(a)
        * float(n) ** (-float(power))
        * gaussian_moment_recursive(hinv, k)
        * np.exp(-n * f(a))
    )
    return LaplaceResult(
        value=float(value),
        leading_order_power=-power,
        minimum_used=a,
        hessian_used=hess,
    )


# ---------------------------------------------------------------------------
# convenience: finite-N correlation for any model
# ---------------------------------------------------------------------------


def correlation_quadrature(model: Model, orders, n: int | None = None) -> float:
    """Finite-N correlation dispatching on the coupling class."""
    orders = tuple(int(x) for x in orders)
    if model.is_homogeneous:
        return correlation_quadrature_hom(model, sum(orders), n)
    return correlation_quadrature_het(model, orders, n)
