"""Sampled checks of the growth conditions behind discrete spectrum and
ultracontractivity.

For radii ``R`` the report estimates

* ``G_bar(R) = inf {G(x) : |x| >= R}`` (sampled on shells ``R <= |x| <= 2R`` and
  made monotone by taking running minima over the larger shells),
* ``V_bar(R) = sup {V(x) : |x| <= R, x_i >= eps}``,

their log-log growth exponents, the smallest sampled ``G`` and partial sums of
``sum_k exp((V_bar(k+1) - beta k^{-3/2} G_bar(k)) / 2)`` for a few ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import qmc

from .errors import SamplingBudgetExceeded, ValidationError
from .model import LVParams, potential_V, schrodinger_G


def _polar_sobol(r_lo: float, r_hi: float, m: int, eps: float, seed) -> np.ndarray:
    """Scrambled Sobol points (``2^m``) in the quarter annulus, axes trimmed."""
    u = qmc.Sobol(d=2, scramble=True, seed=np.random.default_rng(seed)).random_base2(m)
    # uniform in area: r^2 uniform
    r = np.sqrt(r_lo**2 + u[:, 0] * (r_hi**2 - r_lo**2))
    th = 0.5 * math.pi * u[:, 1]
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    return x[(x[:, 0] >= eps) & (x[:, 1] >= eps)]


@dataclass
class DiagnosticsReport:
    radii: list[float]
    G_bar: list[float]
    V_bar: list[float]
    G_exponent: float
    V_exponent: float
    G_min: float
    series: dict
    eps_trunc: float
    n_samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _fit_exponent(radii, values) -> float:
    r, v = np.asarray(radii), np.asarray(values)
    ok = v > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def hypothesis_diagnostics(p: LVParams, radii, samples_per_shell: int = 2**20,
                           eps_trunc: float = 1e-3, series_terms: int = 40,
                           series_samples: int = 2**14, betas=(0.1, 1.0, 10.0),
                           max_samples: int = 5 * 10**7, seed: int = 0) -> DiagnosticsReport:
    """Sampled growth diagnostics for validated parameters ``p``.

    Sample counts are rounded up to powers of two.  The total number of
    sampled points is bounded by ``max_samples``.
    """
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise ValidationError("radii must be positive")
    m_shell = max(4, math.ceil(math.log2(samples_per_shell)))
    m_series = max(4, math.ceil(math.log2(series_samples)))
    total = 2 * len(radii) * 2**m_shell + 2 * series_terms * 2**m_series
    if total > max_samples:
        raise SamplingBudgetExceeded(f"{total} samples requested, budget is {max_samples}")

    ss = np.random.SeedSequence(seed)
    seeds = iter(ss.spawn(2 * len(radii) + 2 * series_terms + 2))
    G_min = math.inf

    def shell_inf(r_lo, r_hi, m):
        nonlocal G_min
        x = _polar_sobol(r_lo, r_hi, m, eps_trunc, next(seeds))
        g = float(np.min(schrodinger_G(x, p)))
        G_min = min(G_min, g)
        return g

    def disk_sup(r, m):
        nonlocal G_min
        x = _polar_sobol(0.0, r, m, eps_trunc, next(seeds))
        G_min = min(G_min, float(np.min(schrodinger_G(x, p))))
        return float(np.max(potential_V(x, p)))

    shell = [shell_inf(r, 2 * r, m_shell) for r in radii]
    G_bar = list(np.minimum.accumulate(shell[::-1])[::-1])
    V_bar = list(np.maximum.accumulate([disk_sup(r, m_shell) for r in radii]))

    ks = np.arange(1, series_terms + 1)
    a = np.minimum.accumulate([shell_inf(k, 2 * k, m_series) for k in ks][::-1])[::-1]
    b = np.maximum.accumulate([disk_sup(k + 1, m_series) for k in ks])
    series = {}
    for beta in betas:
        logs = 0.5 * (b - beta * ks**-1.5 * a)
        partial = [float(logsumexp(logs[:k])) for k in range(1, ks.size + 1)]
        tail = logs[ks.size // 2:]
        series[str(beta)] = {"log_partial_sums": partial,
                             "apparent_divergence": bool(tail[-1] >= tail[0] and tail[-1] > -30)}

    return DiagnosticsReport(radii, [float(v) for v in G_bar], [float(v) for v in V_bar],
                             _fit_exponent(radii, G_bar), _fit_exponent(radii, V_bar),
                             G_min, series, eps_trunc, total)
