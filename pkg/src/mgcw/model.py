"""Multi-group Curie-Weiss model: parameters, energies, and the exact finite-N law.

A model is a partition of N spins into M groups with sizes N_1..N_M, asymptotic
group fractions alpha_1..alpha_M, and a coupling matrix J (either a single
constant beta on every entry, or a symmetric positive definite M x M matrix).
The Gibbs weight of a configuration x is exp(-H(x)) with

    H(x) = -(1/2N) sum_{lm} J_lm S_l S_m,     S_l = sum of the spins in group l,

so the measure depends on x only through the group sums.  That makes an exact
oracle cheap: instead of 2^N configurations we enumerate the prod(N_l + 1)
group-sum orbits, each carrying a product-of-binomials multiplicity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np

from .errors import (
    DimensionMismatchError,
    EnumerationCapError,
    ModelError,
)

ALPHA_SUM_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 24


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Homogeneous:
    """Coupling matrix with every entry equal to the same constant beta >= 0."""

    beta: float

    def __post_init__(self):
        if not (self.beta >= 0.0) or not math.isfinite(self.beta):
            raise ModelError(f"homogeneous coupling requires beta >= 0, got {self.beta}")


@dataclass(frozen=True)
class Heterogeneous:
    """Symmetric positive definite coupling matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.matrix, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ModelError(f"coupling matrix must be square, got shape {j.shape}")
        if not np.allclose(j, j.T, atol=1e-12 * max(1.0, float(np.abs(j).max()))):
            raise ModelError("coupling matrix must be symmetric")
        j = 0.5 * (j + j.T)
        eigs = np.linalg.eigvalsh(j)
        if eigs[0] <= 0.0:
            raise ModelError(
                f"coupling matrix must be positive definite; smallest eigenvalue {eigs[0]:.6g}"
            )
        object.__setattr__(self, "matrix", _readonly(j))

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


CouplingMatrix = Homogeneous | Heterogeneous


@dataclass(frozen=True)
class Model:
    """Group sizes, asymptotic fractions, and coupling of a multi-group model."""

    sizes: tuple[int, ...]
    alphas: tuple[float, ...]
    coupling: CouplingMatrix

    def __post_init__(self):
        if len(self.sizes) == 0:
            raise ModelError("model needs at least one group")
        if any((not isinstance(n, (int, np.integer))) or n < 1 for n in self.sizes):
            raise ModelError(f"group sizes must be positive integers, got {self.sizes}")
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if len(self.alphas) != len(self.sizes):
            raise ModelError(
                f"{len(self.alphas)} group fractions for {len(self.sizes)} groups"
            )
        a = np.asarray(self.alphas, dtype=float)
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise ModelError(f"group fractions must lie in [0, 1], got {self.alphas}")
        resid = abs(float(a.sum()) - 1.0)
        if resid > ALPHA_SUM_TOL:
            raise ModelError(
                f"group fractions must sum to 1 (residual {resid:.3e})"
            )
        object.__setattr__(self, "alphas", tuple(float(x) for x in a))
        if isinstance(self.coupling, Heterogeneous):
            if self.coupling.matrix.shape[0] != len(self.sizes):
                raise ModelError(
                    f"coupling is {self.coupling.matrix.shape[0]}x"
                    f"{self.coupling.matrix.shape[0]} but model has {len(self.sizes)} groups"
                )
        elif not isinstance(self.coupling, Homogeneous):
            raise ModelError(f"unknown coupling type {type(self.coupling).__name__}")

    # -- basic shape helpers -------------------------------------------------

    @property
    def m(self) -> int:
        """Number of groups."""
        return len(self.sizes)

    @property
    def total_spins(self) -> int:
        return int(sum(self.sizes))

    @property
    def is_homogeneous(self) -> bool:
        return isinstance(self.coupling, Homogeneous)

    @property
    def group_fractions(self) -> np.ndarray:
        """Finite-N fractions N_l / N (not the asymptotic alphas)."""
        return np.asarray(self.sizes, dtype=float) / self.total_spins

    def coupling_matrix(self) -> np.ndarray:
        """Dense M x M coupling matrix (constant matrix for homogeneous coupling)."""
        if isinstance(self.coupling, Homogeneous):
            return np.full((self.m, self.m), self.coupling.beta)
        return np.array(self.coupling.matrix)

    def with_total_size(self, n_total: int) -> "Model":
        """Same fractions and coupling, rescaled to ~n_total spins.

        Sizes are alpha_l * n_total rounded; every group keeps at least one spin.
        """
        if n_total < self.m:
            raise ModelError(f"need at least {self.m} spins for {self.m} groups")
        sizes = [max(1, round(a * n_total)) for a in self.alphas]
        # push rounding drift into the largest group
        drift = n_total - sum(sizes)
        sizes[int(np.argmax(sizes))] += drift
        if min(sizes) < 1:
            raise ModelError("rescaling produced an empty group")
        return Model(tuple(sizes), self.alphas, self.coupling)

    # -- JSON wire format ----------------------------------------------------

    def to_json_dict(self) -> dict:
        if isinstance(self.coupling, Homogeneous):
            coupling = {"homogeneous": self.coupling.beta}
        else:
            coupling = {"matrix": self.coupling.matrix.tolist()}
        return {
            "sizes": list(self.sizes),
            "alphas": list(self.alphas),
            "coupling": coupling,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(obj: dict) -> "Model":
        if not isinstance(obj, dict):
            raise ModelError("model JSON must be an object")
        try:
            sizes = tuple(int(n) for n in obj["sizes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"invalid or missing 'sizes': {exc}") from exc
        coupling_spec = obj.get("coupling")
        if not isinstance(coupling_spec, dict):
            raise ModelError("missing 'coupling' object")
        if "homogeneous" in coupling_spec:
            coupling: CouplingMatrix = Homogeneous(float(coupling_spec["homogeneous"]))
        elif "matrix" in coupling_spec:
            coupling = Heterogeneous(np.asarray(coupling_spec["matrix"], dtype=float))
        else:
            raise ModelError("'coupling' needs either 'homogeneous' or 'matrix'")
        alphas = obj.get("alphas")
        if alphas is None:
            total = sum(sizes)
            alphas = tuple(n / total for n in sizes)
        return Model(sizes, tuple(float(a) for a in alphas), coupling)

    @staticmethod
    def from_json(text: str) -> "Model":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model file is not valid JSON: {exc}") from exc
        return Model.from_json_dict(obj)


@dataclass(frozen=True)
class SpinConfiguration:
    """Per-group vectors of +/-1 spins."""

    groups: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = []
        for g in self.groups:
            a = np.asarray(g, dtype=np.int8)
            if a.ndim != 1 or a.size == 0:
                raise ModelError("each group must be a non-empty 1-d spin vector")
            if not np.all(np.abs(a) == 1):
                raise ModelError("spins must be exactly +1 or -1")
            arrays.append(_readonly(a))
        object.__setattr__(self, "groups", tuple(arrays))

    def validate_against(self, model: Model) -> None:
        if len(self.groups) != model.m:
            raise DimensionMismatchError(
                f"configuration has {len(self.groups)} groups, model has {model.m}"
            )
        for i, (g, n) in enumerate(zip(self.groups, model.sizes)):
            if g.size != n:
                raise DimensionMismatchError(
                    f"group {i} has {g.size} spins, model expects {n}"
                )

    def negated(self) -> "SpinConfiguration":
        return SpinConfiguration(tuple(-g for g in self.groups))


def group_sums(config: SpinConfiguration) -> np.ndarray:
    """Vector of group magnetisations S_l = sum of spins in group l."""
    return np.array([int(g.sum(dtype=np.int64)) for g in config.groups], dtype=np.int64)


def hamiltonian_from_sums(model: Model, s: np.ndarray) -> float:
    """Energy -(1/2N) s^T J s computed from integer group sums."""
    s = np.asarray(s, dtype=float)
    if s.shape != (model.m,):
        raise DimensionMismatchError(f"expected {model.m} group sums, got shape {s.shape}")
    n = model.total_spins
    if isinstance(model.coupling, Homogeneous):
        return -model.coupling.beta * float(s.sum()) ** 2 / (2.0 * n)
    j = model.coupling.matrix
    return -float(s @ j @ s) / (2.0 * n)


def hamiltonian(model: Model, config: SpinConfiguration) -> float:
    """Energy of a configuration, O(N + M^2) via group sums."""
    config.validate_against(model)
    return hamiltonian_from_sums(model, group_sums(config))


def unnormalized_weight(model: Model, config: SpinConfiguration) -> float:
    """Gibbs weight exp(-H) of a configuration, without the partition constant."""
    return math.exp(-hamiltonian(model, config))


class ExactDistribution:
    """Exact law of the group-sum vector for a small model.

    probs[k_1, ..., k_M] is P(S_1 = 2 k_1 - N_1, ..., S_M = 2 k_M - N_M);
    support[l] lists the admissible values of S_l in increasing order.
    """

    def __init__(self, model: Model, probs: np.ndarray):
        self.model = model
        self.probs = _readonly(probs)
        self.support = tuple(
            _readonly(np.arange(-n, n + 1, 2, dtype=np.int64)) for n in model.sizes
        )

    def probability(self, s) -> float:
        idx = tuple((int(v) + n) // 2 for v, n in zip(s, self.model.sizes))
        return float(self.probs[idx])

    def items(self):
        """Iterate (group-sum tuple, probability) over the full support."""
        for idx in iter_product(*(range(n + 1) for n in self.model.sizes)):
            s = tuple(2 * k - n for k, n in zip(idx, self.model.sizes))
            yield s, float(self.probs[idx])

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """(support_matrix, probabilities) with one row per group-sum vector."""
        grids = np.meshgrid(*self.support, indexing="ij")
        sup = np.stack([g.ravel() for g in grids], axis=1)
        return sup, self.probs.ravel()

    def moment(self, orders, gamma: float = 1.0) -> float:
        """E prod_l (S_l / N_l^gamma)^{K_l}, exactly."""
        orders = _check_orders(self.model, orders)
        w = self.probs
        val = np.ones_like(w)
        for axis, (k, n, sup) in enumerate(zip(orders, self.model.sizes, self.support)):
            if k == 0:
                continue
            shape = [1] * self.model.m
            shape[axis] = len(sup)
            val = val * (sup.astype(float) / n**gamma).reshape(shape) ** k
        return float((w * val).sum())

    def correlation(self, orders) -> float:
        """E of a product of k_l distinct spins from each group l.

        Within a group, exchangeability reduces the conditional expectation
        given S_l to a mean over k-subsets of a fixed multiset of +/-1 values:

            E[x_1 ... x_k | S = s] = sum_j (-1)^(k-j) C(p,j) C(N-p,k-j) / C(N,k),

        with p = (N+s)/2 plus-spins.
        """
        orders = _check_orders(self.model, orders)
        for k, n in zip(orders, self.model.sizes):
            if k > n:
                raise DimensionMismatchError(
                    f"cannot pick {k} distinct spins from a group of {n}"
                )
        w = self.probs
        val = np.ones_like(w)
        for axis, (k, n) in enumerate(zip(orders, self.model.sizes)):
            if k == 0:
                continue
            g = np.array(
                [_subset_product_mean(k, n, p) for p in range(n + 1)], dtype=float
            )
            shape = [1] * self.model.m
            shape[axis] = n + 1
            val = val * g.reshape(shape)
        return float((w * val).sum())

    def marginal(self, group: int) -> np.ndarray:
        """Marginal law of S_group on its support."""
        axes = tuple(i for i in range(self.model.m) if i != group)
        return self.probs.sum(axis=axes)


def _check_orders(model: Model, orders) -> tuple[int, ...]:
    orders = tuple(int(k) for k in orders)
    if len(orders) != model.m:
        raise DimensionMismatchError(
            f"order vector has {len(orders)} entries, model has {model.m} groups"
        )
    if any(k < 0 for k in orders):
        raise DimensionMismatchError(f"orders must be non-negative, got {orders}")
    return orders


def _subset_product_mean(k: int, n: int, p: int) -> float:
    """Mean of the product of k distinct entries of a +/-1 vector with p plus-spins."""
    num = 0
    for j in range(max(0, k - (n - p)), min(k, p) + 1):
        num += (-1) ** (k - j) * math.comb(p, j) * math.comb(n - p, k - j)
    return num / math.comb(n, k)


def exact_distribution(
    model: Model, cap: int = DEFAULT_ENUMERATION_CAP
) -> ExactDistribution:
    """Exact group-sum law by enumerating group-sum orbits.

    Each orbit (k_1, ..., k_M) with k_l plus-spins in group l has multiplicity
    prod_l C(N_l, k_l) and a common Gibbs weight, so the cost is
    prod(N_l + 1) energy evaluations rather than 2^N.
    """
    n = model.total_spins
    if n > cap:
        raise EnumerationCapError(
            f"exact enumeration refused: N = {n} exceeds cap {cap}"
        )
    sums = [np.arange(-nl, nl + 1, 2, dtype=float) for nl in model.sizes]
    # log multiplicity per group, exact integers converted once
    logmult = [
        np.array([math.lgamma(nl + 1) - math.lgamma(k + 1) - math.lgamma(nl - k + 1)
                  for k in range(nl + 1)])
        for nl in model.sizes
    ]
    grids = np.meshgrid(*sums, indexing="ij")
    j = model.coupling_matrix()
    quad = np.zeros_like(grids[0])
    for a in range(model.m):
        for b in range(model.m):
            quad = quad + j[a, b] * grids[a] * grids[b]
    logw = quad / (2.0 * n)
    for axis, lm in enumerate(logmult):
        shape = [1] * model.m
        shape[axis] = len(lm)
        logw = logw + lm.reshape(shape)
    logw -= logw.max()
    probs = np.exp(logw)
    probs /= probs.sum()
    return ExactDistribution(model, probs)
