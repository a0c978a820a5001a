"""Fixed points and minima of the latent-field potential.

Heterogeneous coupling leads to the potential

    F(y) = 1/2 y^T L y - sum_l w_l log cosh(y_l),      L = J^{-1},

whose minima drive every asymptotic statement: the high/critical regimes pin
the unique minimum at the origin, the low regime splits it into an antipodal
pair.  Homogeneous coupling reduces to a scalar potential on the latent line;
its minima sit at +/- beta*m(beta) where m(beta) is the largest root of
tanh(beta x) = x.

All solves run in unbounded y-coordinates; the bounded t = tanh(y) chart is
provided for the second-derivative bookkeeping of the conditional limit laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import RootFindError, UnsupportedCaseError
from .model import Model
from .regime import RegimeLabel, classify, h_matrix, inverse_coupling

FIRST_ORDER_TOL = 1e-12
DEDUP_DISTANCE = 1e-6


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomogeneousPotential:
    """Scalar potential of the homogeneous latent variable.

    In the bounded chart: F_beta(t) = (1/beta) artanh(t)^2 + log(1 - t^2);
    the exact finite-N weight on the unbounded line is exp(-N f(u)) with
    f(u) = u^2/(2 beta) - log cosh(u), and F_beta(tanh u) = 2 f(u).
    """

    beta: float

    def value_t(self, t):
        t = np.asarray(t, dtype=float)
        return np.arctanh(t) ** 2 / self.beta + np.log1p(-(t**2))

    def second_derivative_t(self, t: float) -> float:
        """F_beta''(t); at a nonzero minimum m this is 2(1-beta(1-m^2))/(beta(1-m^2)^2)."""
        t = float(t)
        one = 1.0 - t * t
        return (4.0 * t * np.arctanh(t) / self.beta - 2.0 * t * t) / one**2 + (
            2.0 / (self.beta * one) - 2.0
        ) / one

    def exponent_y(self, u):
        """f(u) = u^2/(2 beta) - log cosh u on the unbounded latent line."""
        u = np.asarray(u, dtype=float)
        return u**2 / (2.0 * self.beta) - _log_cosh(u)

    def minima_y(self) -> np.ndarray:
        """Minimisers of f on the latent line: {0} or {+/- beta m(beta)}."""
        m = solve_cw_equation(self.beta)
        if m == 0.0:
            return np.array([0.0])
        u = self.beta * m
        return np.array([-u, u])


@dataclass(frozen=True)
class HeterogeneousPotential:
    """F(y) = 1/2 y^T L y - sum_l w_l log cosh y_l with explicit derivatives.

    `weights` are the asymptotic fractions alpha for limit statements, or the
    finite-N fractions N_l/N for exact finite-N representations.
    """

    l_matrix: np.ndarray
    weights: np.ndarray

    @staticmethod
    def from_model(model: Model, finite_n: bool = False) -> "HeterogeneousPotential":
        if model.is_homogeneous:
            raise UnsupportedCaseError("potential requires matrix coupling")
        w = model.group_fractions if finite_n else np.asarray(model.alphas, dtype=float)
        return HeterogeneousPotential(inverse_coupling(model.coupling), w)

    @property
    def m(self) -> int:
        return self.l_matrix.shape[0]

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(0.5 * y @ self.l_matrix @ y - self.weights @ _log_cosh(y))

    def value_grid(self, grids: list[np.ndarray]) -> np.ndarray:
        """Vectorised evaluation on broadcastable coordinate arrays."""
        out = np.zeros(np.broadcast(*grids).shape)
        for a in range(self.m):
            for b in range(self.m):
                out = out + 0.5 * self.l_matrix[a, b] * grids[a] * grids[b]
            out = out - self.weights[a] * _log_cosh(grids[a])
        return out

    def gradient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.l_matrix @ y - self.weights * np.tanh(y)

    def hessian(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.l_matrix - np.diag(self.weights / np.cosh(y) ** 2)


def _log_cosh(y):
    y = np.asarray(y, dtype=float)
    return np.abs(y) + np.log1p(np.exp(-2.0 * np.abs(y))) - np.log(2.0)


# ---------------------------------------------------------------------------
# scalar fixed point
# ---------------------------------------------------------------------------


def solve_cw_equation(beta: float) -> float:
    """Largest solution of tanh(beta x) = x; zero exactly for beta <= 1.

    Bracketed bisection on (0, 1) followed by Newton polish.
    """
    if beta < 0:
        raise UnsupportedCaseError(f"beta must be >= 0, got {beta}")
    if beta <= 1.0:
        return 0.0

    def g(x):
        return np.tanh(beta * x) - x

    lo, hi = 0.0, 1.0
    # g > 0 just right of 0 (slope beta - 1 > 0), g(1) < 0: walk lo up until g(lo) > 0
    step = min(1.0 - 1.0 / beta, 0.5)
    while g(step) <= 0.0:
        step *= 0.5
        if step < 1e-300:
            raise RootFindError(f"failed to bracket the fixed point at beta={beta}")
    lo = step
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    x = 0.5 * (lo + hi)
    for _ in range(8):
        denom = beta / np.cosh(beta * x) ** 2 - 1.0
        if denom == 0.0:
            break
        x -= g(x) / denom
        x = min(max(x, lo * 0.5), 1.0)
    if abs(np.tanh(beta * x) - x) >= 1e-14:
        raise RootFindError(f"fixed point at beta={beta} did not converge")
    return float(x)


# ---------------------------------------------------------------------------
# two-group system and general minimisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoGroupSolution:
    y: tuple[float, float]
    magnetisations: tuple[float, float]
    residual: float


def _decoupled_root(l_diag: float, weight: float) -> float:
    """Root of l_diag * y = weight * tanh(y); nonzero iff weight/l_diag > 1."""
    beta_eff = weight / l_diag
    if beta_eff <= 1.0:
        return 0.0
    return beta_eff * solve_cw_equation(beta_eff)


def _damped_newton(pot: HeterogeneousPotential, y0: np.ndarray, iters: int = 80):
    y = np.array(y0, dtype=float)
    for _ in range(iters):
        g = pot.gradient(y)
        if np.max(np.abs(g)) < 1e-15:
            break
        try:
            step = np.linalg.solve(pot.hessian(y), g)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        base = float(g @ g)
        for _ in range(40):
            cand = y - t * step
            gc = pot.gradient(cand)
            if float(gc @ gc) < base:
                y = cand
                break
            t *= 0.5
        else:
            return None
    return y


def solve_two_group_system(l_matrix: np.ndarray, alphas) -> TwoGroupSolution:
    """First-quadrant root of the two-group stationarity system.

    Solves (L y)_1 = alpha_1 tanh(y_1), (L y)_2 = alpha_2 tanh(y_2) for the
    unique solution with both coordinates positive, by damped Newton started
    from decoupled per-group roots plus a first-quadrant multi-start grid.
    """
    l = np.asarray(l_matrix, dtype=float)
    if l.shape != (2, 2):
        raise UnsupportedCaseError(f"two-group solver needs a 2x2 matrix, got {l.shape}")
    w = np.asarray(alphas, dtype=float)
    pot = HeterogeneousPotential(l, w)

    dec = np.array([_decoupled_root(l[0, 0], w[0]), _decoupled_root(l[1, 1], w[1])])
    seeds = [dec, np.array([1.0, 1.0])]
    grid = [0.25, 1.0, 2.5, 5.0]
    seeds += [np.array([a, b]) for a in grid for b in grid[:2]]
    best = None
    for s in seeds:
        s = np.where(s > 0, s, 0.3)
        y = _damped_newton(pot, s)
        if y is None:
            continue
        res = float(np.max(np.abs(pot.gradient(y))))
        if res < FIRST_ORDER_TOL and y[0] > 1e-12 and y[1] > 1e-12:
            cand = (res, y)
            if best is None or res < best[0]:
                best = cand
    if best is None:
        raise RootFindError(
            "no first-quadrant root found after multi-start; "
            "check that the model is in the low temperature regime"
        )
    res, y = best
    m = np.tanh(y)
    return TwoGroupSolution((float(y[0]), float(y[1])), (float(m[0]), float(m[1])), res)


@dataclass(frozen=True)
class FixedPointSolution:
    """Minima of the potential, closed under negation."""

    points: np.ndarray           # (n_minima, M)
    magnetisations: np.ndarray   # tanh of points
    residuals: np.ndarray        # first-order residual at each point
    multiplicity: int
    potential_values: np.ndarray


def minimize_het_potential(pot: HeterogeneousPotential) -> FixedPointSolution:
    """Multi-start local minimisation of F with deduplication.

    Seeds are all sign patterns (2^min(M,6) of them) scaled by the per-group
    decoupled roots; minima closer than 1e-6 are merged and only global minima
    (within 1e-10 of the best value) are kept.
    """
    m = pot.m
    dec = np.array(
        [_decoupled_root(pot.l_matrix[i, i], pot.weights[i]) for i in range(m)]
    )
    scale = np.where(dec > 0, dec, 0.75)
    signs_dims = min(m, 6)
    seeds = [np.zeros(m)]
    for bits in range(2**signs_dims):
        sign = np.ones(m)
        for i in range(signs_dims):
            if bits >> i & 1:
                sign[i] = -1.0
        seeds.append(sign * scale)
    found: list[np.ndarray] = []
    for s in seeds:
        res = optimize.minimize(pot.value, s, jac=pot.gradient, method="BFGS")
        y = _damped_newton(pot, res.x)
        if y is None:
            continue
        if np.max(np.abs(pot.gradient(y))) > FIRST_ORDER_TOL:
            continue
        # keep local minima only
        if np.linalg.eigvalsh(pot.hessian(y))[0] < -1e-10:
            continue
        if not any(np.linalg.norm(y - f) < DEDUP_DISTANCE for f in found):
            found.append(y)
    if not found:
        raise RootFindError("no stationary point converged")
    vals = np.array([pot.value(y) for y in found])
    best = vals.min()
    keep = [i for i in range(len(found)) if vals[i] - best < 1e-10]
    pts = np.array([found[i] for i in keep])
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    return FixedPointSolution(
        points=pts,
        magnetisations=np.tanh(pts),
        residuals=np.array([np.max(np.abs(pot.gradient(y))) for y in pts]),
        multiplicity=len(pts),
        potential_values=np.array([pot.value(y) for y in pts]),
    )


def minimize_potential(model: Model) -> FixedPointSolution:
    """Global minima of the asymptotic potential of a heterogeneous model.

    High and critical regimes return exactly the origin; the low regime is
    explored by multi-start so the antipodal-pair assumption of the
    conditional limit theorem can be checked rather than assumed.
    """
    if model.is_homogeneous:
        raise UnsupportedCaseError(
            "homogeneous minima come from solve_cw_equation; "
            "minimize_potential handles matrix coupling"
        )
    pot = HeterogeneousPotential.from_model(model)
    label = classify(model).label
    if label in (RegimeLabel.HIGH, RegimeLabel.CRITICAL):
        origin = np.zeros((1, model.m))
        return FixedPointSolution(
            points=origin,
            magnetisations=np.zeros((1, model.m)),
            residuals=np.zeros(1),
            multiplicity=1,
            potential_values=np.zeros(1),
        )
    return minimize_het_potential(pot)


# ---------------------------------------------------------------------------
# hessians in both charts
# ---------------------------------------------------------------------------


def hessian_of_F(model: Model, point) -> np.ndarray:
    """Hessian L - diag(alpha_l / cosh^2 y_l) at a point in y-coordinates."""
    pot = HeterogeneousPotential.from_model(model)
    y = np.asarray(point, dtype=float)
    if y.shape != (model.m,):
        raise UnsupportedCaseError(f"point must have shape ({model.m},)")
    return pot.hessian(y)


def hessian_of_Ftilde(model: Model, t_point) -> np.ndarray:
    """Hessian of the potential in the bounded chart t = tanh(y).

    With D = diag(1/(1 - t_l^2)) this is D F''(y) D plus a diagonal gradient
    term 2 t_l F_l(y) / (1 - t_l^2)^2 that vanishes at stationary points.
    """
    pot = HeterogeneousPotential.from_model(model)
    t = np.asarray(t_point, dtype=float)
    if t.shape != (model.m,):
        raise UnsupportedCaseError(f"point must have shape ({model.m},)")
    if np.any(np.abs(t) >= 1.0):
        raise UnsupportedCaseError("bounded-chart coordinates must lie in (-1, 1)")
    y = np.arctanh(t)
    d = 1.0 / (1.0 - t**2)
    h = pot.hessian(y) * np.outer(d, d)
    h[np.diag_indices_from(h)] += pot.gradient(y) * 2.0 * t * d**2
    return h


def conditional_hessian(model: Model) -> tuple[np.ndarray, np.ndarray]:
    """(m*, Htilde) at the positive minimum of a low-temperature het model."""
    sol = minimize_potential(model)
    if sol.multiplicity != 2:
        raise RootFindError(
            f"expected exactly two antipodal global minima, found {sol.multiplicity}"
        )
    if not np.allclose(sol.points[0], -sol.points[1], atol=1e-8):
        raise RootFindError("global minima are not an antipodal pair")
    y_pos = sol.points[np.argmax(sol.points.sum(axis=1))]
    mstar = np.tanh(y_pos)
    return mstar, hessian_of_Ftilde(model, mstar)


def low_temp_h_check(model: Model) -> bool:
    """True when H has a negative eigenvalue (low-temperature spectral test)."""
    return bool(np.linalg.eigvalsh(h_matrix(model))[0] < 0)
