"""Three interchangeable samplers for the group-sum law.

* exact      -- inverse-CDF over the enumerated finite-N law (small N only);
* finetti    -- draw the latent field from its exact finite-N density, then
                spins independently given the latent (any N, no mixing error);
* gibbs      -- single-site heat-bath MCMC with the Gibbs measure stationary.

All randomness flows through numpy's Philox counter-based generator; chains
and work blocks get independent substreams via SeedSequence.spawn, so results
are bit-reproducible for a fixed (model, config, seed) at any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._parallel import parallel_map
from .errors import ModelError, UnsupportedCaseError
from .model import (
    DEFAULT_ENUMERATION_CAP,
    Model,
    SpinConfiguration,
    exact_distribution,
    group_sums,
)
from .solver import HeterogeneousPotential, HomogeneousPotential, minimize_het_potential

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class SamplerConfig:
    """Method, seed, and MCMC controls for sample streams."""

    method: str = "finetti"           # "exact" | "finetti" | "gibbs"
    seed: int = 0
    burn_in: int = 200                # sweeps (gibbs) or steps (latent MCMC)
    thinning: int = 1
    chains: int | None = None         # gibbs chains; default min(count, 256)
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        if self.method not in ("exact", "finetti", "gibbs"):
            raise UnsupportedCaseError(f"unknown sampling method {self.method!r}")
        if self.burn_in < 0 or self.thinning < 0:
            raise UnsupportedCaseError("burn_in and thinning must be >= 0")


def _generator(seed_seq) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def sample(model: Model, config: SamplerConfig, count: int) -> np.ndarray:
    """(count, M) array of group sums drawn by the configured method."""
    if config.method == "exact":
        return sample_exact(model, config, count)
    if config.method == "finetti":
        return sample_finetti(model, config, count)
    return sample_gibbs(model, config, count)


# ---------------------------------------------------------------------------
# exact inverse-CDF sampler
# ---------------------------------------------------------------------------


def sample_exact(model: Model, config: SamplerConfig, count: int) -> np.ndarray:
    """i.i.d. group sums from the enumerated law."""
    dist = exact_distribution(model, cap=config.enumeration_cap)
    support, probs = dist.flat()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    rng = _generator(np.random.SeedSequence(config.seed))
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return support[idx].astype(np.int64)


# ---------------------------------------------------------------------------
# latent-variable sampler
# ---------------------------------------------------------------------------


class _Latent1D:
    """Tabulated inverse CDF of a 1-d log-density on an adaptive grid."""

    def __init__(self, logpdf, centers, scales, hi: float, points_per_window: int = 1537):
        pieces = [np.linspace(-hi, hi, points_per_window)]
        for c, s in zip(centers, scales):
            lo_w = max(-hi, c - 14.0 * s)
            hi_w = min(hi, c + 14.0 * s)
            if lo_w < hi_w:
                pieces.append(np.linspace(lo_w, hi_w, points_per_window))
        edges = np.unique(np.concatenate(pieces))
        lp = logpdf(edges)
        lmax = lp.max()
        a, b = edges[:-1], edges[1:]
        # 5-point Gauss-Legendre mass per cell
        nodes = a[:, None] + (b - a)[:, None] * (0.5 * (_GL5_X + 1.0))[None, :]
        lpn = logpdf(nodes.ravel()).reshape(nodes.shape)
        mass = 0.5 * (b - a) * (np.exp(lpn - lmax) @ _GL5_W)
        self.edges = edges
        self.dens = np.exp(lp - lmax)
        self.mass = mass
        self.cdf = np.cumsum(mass)
        self.total = float(self.cdf[-1])
        if not np.isfinite(self.total) or self.total <= 0:
            raise ModelError("latent density table is degenerate")

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random(count) * self.total
        idx = np.searchsorted(self.cdf, u, side="right")
        idx = np.clip(idx, 0, len(self.mass) - 1)
        prev = np.where(idx > 0, self.cdf[idx - 1], 0.0)
        m = self.mass[idx]
        frac = np.where(m > 0, (u - prev) / np.where(m > 0, m, 1.0), 0.5)
        a, b = self.edges[idx], self.edges[idx + 1]
        d0, d1 = self.dens[idx], self.dens[idx + 1]
        # invert the linear-density CDF within the cell
        dsum = d0 + d1
        diff = d1 - d0
        with np.errstate(invalid="ignore", divide="ignore"):
            disc = np.sqrt(np.maximum(d0**2 + diff * dsum * frac, 0.0))
            t = np.where(np.abs(diff) > 1e-300 * dsum, (disc - d0) / diff, frac)
        t = np.clip(np.where(np.isfinite(t), t, frac), 0.0, 1.0)
        return a + t * (b - a)


def _hom_latent_table(model: Model, n: int) -> _Latent1D:
    pot = HomogeneousPotential(model.coupling.beta)
    minima = pot.minima_y()
    fmin = float(pot.exponent_y(minima[-1]))
    hi = max(2.0, 2.0 * float(np.max(np.abs(minima))) + 2.0)
    while pot.exponent_y(hi) < fmin + 80.0 / n:
        hi *= 2.0
    beta = model.coupling.beta
    curv = np.array([1.0 / beta - 1.0 / np.cosh(u) ** 2 for u in minima])
    scales = np.maximum(
        np.sqrt(1.0 / (n * np.maximum(curv, 1e-12))), (12.0 / n) ** 0.25
    )
    return _Latent1D(lambda u: -n * (pot.exponent_y(u) - fmin), minima, scales, hi)


def _binomial_sums(model: Model, t_by_group: np.ndarray, rng) -> np.ndarray:
    """Group sums given per-draw latent means: S_l = 2 Binom(N_l, (1+t_l)/2) - N_l."""
    count = t_by_group.shape[0]
    out = np.empty((count, model.m), dtype=np.int64)
    for l, nl in enumerate(model.sizes):
        p = 0.5 * (1.0 + t_by_group[:, l])
        out[:, l] = 2 * rng.binomial(nl, np.clip(p, 0.0, 1.0)) - nl
    return out


def _spins_given_latent(model: Model, t_by_group: np.ndarray, rng) -> list[SpinConfiguration]:
    """Full spin configurations given per-draw latent means (test support)."""
    configs = []
    for row in t_by_group:
        groups = []
        for l, nl in enumerate(model.sizes):
            p = 0.5 * (1.0 + row[l])
            spins = np.where(rng.random(nl) < p, 1, -1).astype(np.int8)
            groups.append(spins)
        configs.append(SpinConfiguration(tuple(groups)))
    return configs


def _latent_draws_het(model: Model, config: SamplerConfig, count: int, rng) -> np.ndarray:
    n = model.total_spins
    pot = HeterogeneousPotential.from_model(model, finite_n=True)
    sol = minimize_het_potential(pot)
    fmin = float(sol.potential_values.min())
    lam_min = float(np.linalg.eigvalsh(pot.l_matrix)[0])
    w1 = float(np.abs(pot.weights).sum())
    c = max(fmin + 80.0 / n, 0.0) + 1.0
    hi = max(
        (w1 + np.sqrt(w1**2 + 2.0 * lam_min * c)) / lam_min,
        2.0 * float(np.max(np.abs(sol.points))) + 4.0,
        6.0,
    )

    def scales_for(axis: int) -> np.ndarray:
        try:
            var = float(np.linalg.inv(pot.hessian(sol.points[0]))[axis, axis])
        except np.linalg.LinAlgError:
            var = np.inf
        if not np.isfinite(var) or var <= 0:
            base = n ** (-0.25)
        else:
            base = max(np.sqrt(var / n), 0.5 * n ** (-0.25))
        return np.full(sol.points.shape[0], base)

    if model.m == 1:
        table = _Latent1D(
            lambda u: -n * (np.array([pot.value([x]) for x in np.atleast_1d(u)]) - fmin),
            sol.points[:, 0], scales_for(0), hi,
        )
        return table.sample(rng, count)[:, None]
    if model.m == 2:
        return _latent_2d(pot, sol, fmin, hi, scales_for, n, count, rng)
    if model.m == 3:
        return _latent_3d_cells(pot, sol, fmin, hi, scales_for, n, count, rng)
    return _latent_metropolis(pot, sol, n, count, rng, config)


def _latent_2d(pot, sol, fmin, hi, scales_for, n, count, rng) -> np.ndarray:
    """Exact composition sampling: tabulated marginal, exact conditional."""
    # fine second-axis grid reused by the marginal and every conditional
    pieces = [np.linspace(-hi, hi, 2049)]
    for c, s in zip(sol.points[:, 1], scales_for(1)):
        pieces.append(np.linspace(max(-hi, c - 14 * s), min(hi, c + 14 * s), 2049))
    grid2 = np.unique(np.concatenate(pieces))
    l = pot.l_matrix
    w = pot.weights

    def joint_logw(y1_vec, y2_vec):
        y1 = y1_vec[:, None]
        y2 = y2_vec[None, :]
        f = (
            0.5 * (l[0, 0] * y1**2 + 2.0 * l[0, 1] * y1 * y2 + l[1, 1] * y2**2)
            - w[0] * _logcosh(y1)
            - w[1] * _logcosh(y2)
        )
        return -n * (f - fmin)

    def marginal_logpdf(y1_vec):
        y1_vec = np.atleast_1d(np.asarray(y1_vec, dtype=float))
        out = np.empty(len(y1_vec))
        for start in range(0, len(y1_vec), 4096):
            block = y1_vec[start : start + 4096]
            lw = joint_logw(block, grid2)
            lmax = lw.max(axis=1, keepdims=True)
            mass = np.trapezoid(np.exp(lw - lmax), grid2, axis=1)
            out[start : start + len(block)] = lmax[:, 0] + np.log(mass)
        return out

    table1 = _Latent1D(marginal_logpdf, sol.points[:, 0], scales_for(0), hi)
    y1 = table1.sample(rng, count)
    y2 = np.empty(count)
    widths = np.empty(len(grid2))
    widths[1:-1] = 0.5 * (grid2[2:] - grid2[:-2])
    widths[0] = 0.5 * (grid2[1] - grid2[0])
    widths[-1] = 0.5 * (grid2[-1] - grid2[-2])
    for start in range(0, count, 2048):
        block = y1[start : start + 2048]
        lw = joint_logw(block, grid2)
        lw -= lw.max(axis=1, keepdims=True)
        dens = np.exp(lw) * widths[None, :]
        cdf = np.cumsum(dens, axis=1)
        u = rng.random(len(block)) * cdf[:, -1]
        idx = (cdf >= u[:, None]).argmax(axis=1)
        jitter = rng.random(len(block)) - 0.5
        y2[start : start + len(block)] = grid2[idx] + jitter * widths[idx]
    return np.stack([y1, y2], axis=1)


def _latent_3d_cells(pot, sol, fmin, hi, scales_for, n, count, rng) -> np.ndarray:
    """Tensor node sampling with within-cell jitter (desk-scale three groups)."""
    axes = []
    for axis in range(3):
        pieces = [np.linspace(-hi, hi, 257)]
        for c, s in zip(sol.points[:, axis], scales_for(axis)):
            pieces.append(np.linspace(max(-hi, c - 14 * s), min(hi, c + 14 * s), 257))
        axes.append(np.unique(np.concatenate(pieces)))
    grids = np.meshgrid(*axes, indexing="ij")
    logw = -n * (pot.value_grid(grids) - fmin)
    widths = []
    for g in axes:
        wdt = np.empty(len(g))
        wdt[1:-1] = 0.5 * (g[2:] - g[:-2])
        wdt[0] = 0.5 * (g[1] - g[0])
        wdt[-1] = 0.5 * (g[-1] - g[-2])
        widths.append(wdt)
    vol = widths[0][:, None, None] * widths[1][None, :, None] * widths[2][None, None, :]
    mass = (np.exp(logw - logw.max()) * vol).ravel()
    cdf = np.cumsum(mass)
    idx = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
    idx = np.clip(idx, 0, len(mass) - 1)
    unraveled = np.unravel_index(idx, grids[0].shape)
    out = np.empty((count, 3))
    for axis in range(3):
        centers = axes[axis][unraveled[axis]]
        out[:, axis] = centers + (rng.random(count) - 0.5) * widths[axis][unraveled[axis]]
    return out


def _latent_metropolis(pot, sol, n, count, rng, config: SamplerConfig) -> np.ndarray:
    """Random-walk Metropolis on the latent field for M > 3 groups."""
    m = pot.m
    try:
        cov = np.linalg.inv(pot.hessian(sol.points[0])) / n
        step = np.linalg.cholesky(cov + 1e-12 * np.eye(m))
    except np.linalg.LinAlgError:
        step = np.eye(m) / np.sqrt(n)
    y = sol.points[0].copy()
    fy = pot.value(y)
    draws = np.empty((count, m))
    thin = max(1, config.thinning)
    total = config.burn_in + count * thin
    kept = 0
    for it in range(total):
        prop = y + 2.4 / np.sqrt(m) * step @ rng.standard_normal(m)
        fp = pot.value(prop)
        if rng.random() < np.exp(-n * (fp - fy)):
            y, fy = prop, fp
        if it >= config.burn_in and (it - config.burn_in) % thin == 0 and kept < count:
            draws[kept] = y
            kept += 1
    return draws


def _logcosh(y):
    y = np.asarray(y, dtype=float)
    return np.abs(y) + np.log1p(np.exp(-2.0 * np.abs(y))) - np.log(2.0)


def sample_finetti(
    model: Model,
    config: SamplerConfig,
    count: int,
    return_latent: bool = False,
    return_spins: bool = False,
):
    """Group sums via the latent-mixture representation.

    The latent field is drawn from its exact finite-N density (which uses the
    finite fractions N_l/N); spins are conditionally independent given the
    latent, so S_l is a shifted binomial.  beta = 0 degenerates to independent
    fair spins (latent fixed at zero).
    """
    seq = np.random.SeedSequence(config.seed)
    latent_rng, spin_rng = (_generator(s) for s in seq.spawn(2))
    if model.is_homogeneous:
        if model.coupling.beta == 0.0:
            t = np.zeros((count, 1))
        else:
            table = _hom_latent_table(model, model.total_spins)
            t = np.tanh(table.sample(latent_rng, count))[:, None]
        t_by_group = np.repeat(t, model.m, axis=1)
    else:
        y = _latent_draws_het(model, config, count, latent_rng)
        t_by_group = np.tanh(y)
    if return_spins:
        configs = _spins_given_latent(model, t_by_group, spin_rng)
        sums = np.array([group_sums(c) for c in configs], dtype=np.int64)
        result = (sums, configs)
    else:
        sums = _binomial_sums(model, t_by_group, spin_rng)
        result = sums
    if return_latent:
        if return_spins:
            return result[0], result[1], t_by_group
        return result, t_by_group
    return result


# ---------------------------------------------------------------------------
# heat-bath MCMC
# ---------------------------------------------------------------------------


def gibbs_sweep(
    model: Model, state: SpinConfiguration, rng: np.random.Generator
) -> SpinConfiguration:
    """One systematic sweep of single-site heat-bath updates.

    The site conditional only needs the group sums: P(x = +1 | rest) is the
    logistic of 2 g with g = (sum_m J_lm S_m - J_ll x_old) / N.  Detailed
    balance holds site by site, so the Gibbs measure is stationary.
    """
    state.validate_against(model)
    j = model.coupling_matrix()
    n = model.total_spins
    spins = [g.astype(np.int8).copy() for g in state.groups]
    s = np.array([g.sum(dtype=np.int64) for g in spins], dtype=float)
    for l, nl in enumerate(model.sizes):
        u = rng.random(nl)
        row = j[l]
        for i in range(nl):
            g = (row @ s - j[l, l] * spins[l][i]) / n
            p_plus = 1.0 / (1.0 + np.exp(-2.0 * g))
            new = np.int8(1) if u[i] < p_plus else np.int8(-1)
            s[l] += new - spins[l][i]
            spins[l][i] = new
    return SpinConfiguration(tuple(spins))


def _gibbs_block(model, seed_seq, n_chains: int, per_chain: int, burn_in: int, thinning: int):
    """Run a block of independent chains, vectorised across chains."""
    rng = _generator(seed_seq)
    j = model.coupling_matrix()
    n = model.total_spins
    m = model.m
    sizes = model.sizes
    spins = [
        np.where(rng.random((n_chains, nl)) < 0.5, 1, -1).astype(np.int8)
        for nl in sizes
    ]
    s = np.stack([g.sum(axis=1, dtype=np.int64) for g in spins], axis=1).astype(float)

    def sweep():
        for l in range(m):
            u = rng.random((n_chains, sizes[l]))
            row = j[l]
            for i in range(sizes[l]):
                old = spins[l][:, i].astype(float)
                g = (s @ row - j[l, l] * old) / n
                p_plus = 1.0 / (1.0 + np.exp(-2.0 * g))
                new = np.where(u[:, i] < p_plus, 1, -1).astype(np.int8)
                s[:, l] += new - old
                spins[l][:, i] = new

    for _ in range(burn_in):
        sweep()
    out = np.empty((per_chain, n_chains, m), dtype=np.int64)
    thin = max(1, thinning)
    for k in range(per_chain):
        for _ in range(thin):
            sweep()
        out[k] = s.astype(np.int64)
    # chain-major order so within-chain autocorrelation stays contiguous
    return out.transpose(1, 0, 2).reshape(per_chain * n_chains, m)


def sample_gibbs(model: Model, config: SamplerConfig, count: int) -> np.ndarray:
    """Group sums from parallel heat-bath chains (deterministic per seed).

    Chains are split into fixed blocks with independent Philox substreams and
    concatenated in block order, so the thread count cannot change the output.
    Near criticality single-site dynamics mix slowly; the latent sampler is
    the better tool there.
    """
    n_chains = config.chains or min(count, 256)
    n_chains = max(1, min(n_chains, count))
    per_chain = -(-count // n_chains)  # ceil
    block_size = 64
    blocks = []
    seq = np.random.SeedSequence(config.seed)
    chain_seqs = seq.spawn((n_chains + block_size - 1) // block_size)
    start = 0
    for b, sub in enumerate(chain_seqs):
        nb = min(block_size, n_chains - start)
        blocks.append((sub, nb))
        start += nb

    results = parallel_map(
        lambda blk: _gibbs_block(
            model, blk[0], blk[1], per_chain, config.burn_in, config.thinning
        ),
        blocks,
    )
    all_sums = np.concatenate(results, axis=0)
    return all_sums[:count]
