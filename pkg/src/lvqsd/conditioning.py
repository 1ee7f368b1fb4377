"""Monte Carlo estimates of the conditioned process.

Fleming-Viot particles approximate the Yaglom limit and the killing rate;
paths started from the spectral QSD give the exit split ``(c1, c2)`` and an
independent survival-rate check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CensoredExit, Collapse, ValidationError
from .model import DirichletHarness
from .sde import SimConfig, SurvivalCurve, fit_killing_rate, make_dynamics, simulate_paths
from .spectral import Grid, SpectralResult

# stream keys above every path index
_FV_STREAM = 2**64 - 2
_SAMPLING_STREAM = 2**64 - 1


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | index))


# -- sampling --------------------------------------------------------------------

def sample_from_density(density: np.ndarray, grid: Grid, n: int, seed: int = 0,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """``n`` draws from a node density: pick a cell by inverse CDF, then jitter
    uniformly inside it.  Returns an ``(n, dim)`` array.
    """
    p = np.asarray(density, dtype=float).ravel()
    if p.size != grid.size:
        raise ValidationError("density does not match the grid")
    if np.any(p < 0) or not p.sum() > 0:
        raise ValidationError("density must be non-negative with positive mass")
    rng = rng or _stream(seed, _SAMPLING_STREAM)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), p.size - 1)
    nodes = grid.flat_nodes()[idx]
    jitter = (rng.random((n, grid.dim)) - 0.5) * np.asarray(grid.h)
    return nodes + jitter


# -- histograms on the spectral grid --------------------------------------------------

def coarse_edges(grid: Grid, bins_per_axis: int) -> list[np.ndarray]:
    """Bin edges made of whole spectral cells, about ``bins_per_axis`` per axis."""
    out = []
    for a in range(grid.dim):
        cells = grid.cell_edges(a)
        step = max(1, math.ceil(grid.n[a] / bins_per_axis))
        e = cells[::step]
        if e[-1] != cells[-1]:
            e = np.append(e, cells[-1])
        out.append(e)
    return out


def bin_density(density: np.ndarray, grid: Grid, edges: list[np.ndarray]) -> np.ndarray:
    """Probability of each coarse bin under a node density."""
    mass = np.asarray(density, dtype=float).reshape(grid.shape) * grid.cell_volume
    for a in range(grid.dim):
        cells = grid.cell_edges(a)
        starts = np.searchsorted(cells, edges[a][:-1])
        mass = np.add.reduceat(mass, starts, axis=a)
    return mass


@dataclass
class Histogram:
    """Pooled occupation probabilities on coarse bins plus an out-of-range bin."""

    edges: list[np.ndarray]
    prob: np.ndarray
    out_of_range: float
    n_samples: int

    def density(self) -> np.ndarray:
        widths = np.meshgrid(*[np.diff(e) for e in self.edges], indexing="ij")
        return self.prob / np.prod(widths, axis=0)

    def tv_to(self, prob_ref: np.ndarray) -> float:
        """TV distance to bin probabilities that put no mass out of range."""
        return 0.5 * float(np.abs(self.prob - prob_ref).sum() + self.out_of_range)

    def tv_to_density(self, density: np.ndarray, grid: Grid) -> float:
        ref = bin_density(density, grid, self.edges)
        return self.tv_to(ref / ref.sum())

    def rows(self):
        centers = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        mesh = np.meshgrid(*centers, indexing="ij")
        dens = self.density()
        for idx in np.ndindex(self.prob.shape):
            yield tuple(float(m[idx]) for m in mesh) + (float(self.prob[idx]), float(dens[idx]))


# -- Fleming-Viot ----------------------------------------------------------------------

@dataclass
class ParticleEnsemble:
    """Particles in the open domain with an absorption counter.

    ``step`` moves every particle once; each absorbed particle (in index
    order) jumps onto the post-step position of a particle chosen uniformly
    among the survivors of that step.
    """

    positions: np.ndarray
    dynamics: object
    dt: float
    rng: np.random.Generator
    events: int = 0
    time: float = 0.0
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.state = self.dynamics.initial(np.asarray(self.positions, dtype=float))
        if self.dynamics.initially_dead(self.state).any():
            raise ValidationError("Fleming-Viot particles must start inside the domain")
        self._alive = np.ones(self.state.shape, dtype=bool)

    @property
    def n_particles(self) -> int:
        return self.state.shape[0]

    def step(self) -> int:
        xi = self.rng.standard_normal((self.n_particles, self.dynamics.noise_dim))
        new, hit, _ = self.dynamics.step(self.state, xi, self.dt, self._alive)
        killed = hit.any(axis=-1)
        n_killed = int(killed.sum())
        if n_killed:
            survivors = np.nonzero(~killed)[0]
            if survivors.size == 0:
                raise Collapse(f"all particles absorbed in one step at t={self.time:g}")
            picks = survivors[self.rng.integers(0, survivors.size, size=n_killed)]
            new[killed] = new[picks]
        self.state = new
        self.events += n_killed
        self.time += self.dt
        return n_killed

    def x(self) -> np.ndarray:
        return self.dynamics.to_x(self.state)


@dataclass
class FlemingViotResult:
    histogram: Histogram
    lambda_fv: float
    lambda_stderr: float
    n_events: int
    n_particles: int
    t_burn: float
    t_sample: float
    positions: np.ndarray

    def summary(self) -> dict:
        return {"lambda_fv": self.lambda_fv, "lambda_stderr": self.lambda_stderr,
                "n_events": self.n_events, "n_particles": self.n_particles,
                "t_burn": self.t_burn, "t_sample": self.t_sample,
                "n_bins": list(self.histogram.prob.shape),
                "out_of_range": self.histogram.out_of_range}


def _default_start(model) -> np.ndarray:
    if isinstance(model, DirichletHarness):
        return np.full(model.dim, model.length / 2)
    return np.ones(2 if not hasattr(model, "dim") else model.dim)


def _fv_run(model, n_particles, cfg, x0, t_burn, t_sample, edges, sample_every, rng):
    dyn = make_dynamics(model, cfg)
    x0 = np.asarray(x0, dtype=float)
    starts = np.broadcast_to(x0, (n_particles, x0.shape[-1])).copy() if x0.ndim == 1 else x0
    ens = ParticleEnsemble(starts, dyn, cfg.dt, rng)
    n_burn = int(round(t_burn / cfg.dt))
    n_sample = max(1, int(round(t_sample / cfg.dt)))
    for _ in range(n_burn):
        ens.step()
    counts = np.zeros(tuple(e.size - 1 for e in edges)) if edges is not None else None
    outside, pooled = 0, 0
    events0 = ens.events
    for k in range(1, n_sample + 1):
        ens.step()
        if counts is not None and k % sample_every == 0:
            x = ens.x()
            h, _ = np.histogramdd(x, bins=edges)
            counts += h
            outside += x.shape[0] - int(h.sum())
            pooled += x.shape[0]
    events = ens.events - events0
    t_s = n_sample * cfg.dt
    lam = events / (n_particles * t_s)
    hist = None
    if counts is not None:
        hist = Histogram(edges, counts / max(pooled, 1), outside / max(pooled, 1), pooled)
    return ens, hist, lam, events, t_s


def fleming_viot(model, n_particles: int, cfg: SimConfig, t_burn: float | None = None,
                 t_sample: float = 20.0, grid: Grid | None = None,
                 lambda_ref: float | None = None, bins_per_axis: int = 20,
                 sample_every: int = 10, x0=None) -> FlemingViotResult:
    """Fleming-Viot estimate of the QSD and the killing rate.

    Positions are pooled every ``sample_every`` steps over
    ``[t_burn, t_burn + t_sample]`` into bins built from whole cells of
    ``grid``.  ``t_burn`` defaults to ``5 / lambda_ref`` or, without a
    reference rate, to five times the inverse rate of a short pilot run.
    """
    if n_particles < 100:
        raise ValidationError("Fleming-Viot needs at least 100 particles")
    if t_sample <= 0:
        raise ValidationError("t_sample must be positive")
    rng = _stream(cfg.seed, _FV_STREAM)
    x0 = _default_start(model) if x0 is None else x0
    if t_burn is None:
        if lambda_ref is None:
            pilot, _, lam0, _, _ = _fv_run(model, n_particles, cfg, x0, 0.0,
                                           max(1.0, 0.2 * t_sample), None, 1, rng)
            if not lam0 > 0:
                raise ValidationError("pilot run saw no absorption; give t_burn explicitly")
            lambda_ref = lam0
            x0 = pilot.x()
        t_burn = 5.0 / lambda_ref
    edges = coarse_edges(grid, bins_per_axis) if grid is not None else None
    ens, hist, lam, events, t_s = _fv_run(model, n_particles, cfg, x0, t_burn, t_sample,
                                          edges, sample_every, rng)
    return FlemingViotResult(hist, lam, math.sqrt(max(events, 1)) / (n_particles * t_s),
                             events, n_particles, t_burn, t_s, ens.x())


# -- paths started from the QSD -----------------------------------------------------------

@dataclass
class ExitStats:
    c1_hat: float
    c2_hat: float
    c1_stderr: float
    c2_stderr: float
    n_paths: int
    n_origin: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _nu1_of(nu1, grid):
    if isinstance(nu1, SpectralResult):
        return nu1.nu1, nu1.grid
    if grid is None:
        raise ValidationError("a grid is needed with a raw density")
    return nu1, grid


def _qsd_exit_times(model, nu1, grid, cfg: SimConfig):
    dens, grid = _nu1_of(nu1, grid)
    starts = sample_from_density(dens, grid, cfg.n_paths, cfg.seed)
    return simulate_paths(model, starts, cfg, stop="T_partialD")


def exit_statistics(model, nu1, cfg: SimConfig, grid: Grid | None = None) -> ExitStats:
    """Which axis paths started from ``nu1`` hit first.

    ``c1_hat`` estimates the probability that type 1 is extinct at the exit
    time (exit through ``{0} x R+``), ``c2_hat`` that type 2 is.
    """
    batch = _qsd_exit_times(model, nu1, grid, cfg)
    censored = batch.n_censored("T_partialD")
    if censored:
        raise CensoredExit(f"{censored} of {batch.n_paths} paths did not exit by "
                           f"t_max={cfg.t_max:g}; increase t_max")
    n = batch.n_paths
    k1 = int(np.sum(batch.exit_axis == 2))
    k2 = int(np.sum(batch.exit_axis == 1))
    n_origin = n - k1 - k2
    c1 = k1 / (k1 + k2)
    c2 = k2 / (k1 + k2)
    return ExitStats(c1, c2, math.sqrt(c1 * (1 - c1) / n), math.sqrt(c2 * (1 - c2) / n),
                     n, n_origin)


@dataclass
class SurvivalCheck:
    lambda_check: float
    stderr: float
    lambda_mle: float
    chi2_per_dof: float
    free_intercept: float
    ks_statistic: float | None
    ks_pvalue: float | None
    curve: SurvivalCurve
    n_censored: int

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "curve"}


def survival_rate_from_nu1(model, nu1, cfg: SimConfig, grid: Grid | None = None,
                           t_grid=None, ks_rate: float | None = None) -> SurvivalCheck:
    """Exit-time law of paths started from ``nu1``.

    Under the QSD the exit time is exponential, so ``-log S(t)`` is fitted by a
    line through the origin from ``t = 0``.  The KS distance of the exit
    times to ``Exp(ks_rate)`` (default ``lambda_check``) is reported when no
    path is censored.
    """
    batch = _qsd_exit_times(model, nu1, grid, cfg)
    T = batch.T_partialD
    finite = np.isfinite(T)
    t_grid = np.linspace(0.0, cfg.t_max, 201) if t_grid is None else np.asarray(t_grid)
    curve = SurvivalCurve.from_times(T, t_grid, "T_partialD")
    fit = fit_killing_rate(curve, through_origin=True)
    free = fit_killing_rate(curve)
    mle = float(finite.sum() / np.sum(np.where(finite, T, cfg.t_max)))
    ks_stat = ks_p = None
    if finite.all():
        rate = fit.rate if ks_rate is None else float(ks_rate)
        res = stats.kstest(T, "expon", args=(0.0, 1.0 / rate))
        ks_stat, ks_p = float(res.statistic), float(res.pvalue)
    return SurvivalCheck(fit.rate, fit.stderr, mle, fit.chi2_per_dof, free.intercept,
                         ks_stat, ks_p, curve, int((~finite).sum()))
