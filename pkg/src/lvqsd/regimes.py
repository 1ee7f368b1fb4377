"""Long-time regimes of the two-type process.

Compares the two-type killing rate ``lambda1`` with the single-type rates
``lambda11``, ``lambda12``, composes the limiting conditioned law (a mixture
of the axis QSDs and the interior QSD) and scans the symmetric cooperative
family for the coexistence transition.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conditioning import ExitStats, exit_statistics, fleming_viot
from .errors import (
    CensoredExit,
    CrossCheckFailure,
    NegativeWeight,
    NonPositiveRate,
    RateOrderViolation,
    ValidationError,
)
from .model import KolmogorovModel, LVParams, validate_params
from .sde import SimConfig
from .spectral import Grid, SpectralResult, auto_grid, solve_qsd_1d, solve_qsd_2d

DEFAULT_REL_TOL = 0.02


class Classification(str, Enum):
    BOUNDARY_TYPE1_DOMINANT = "BOUNDARY_TYPE1_DOMINANT"
    BOUNDARY_TYPE2_DOMINANT = "BOUNDARY_TYPE2_DOMINANT"
    BOUNDARY_SYMMETRIC = "BOUNDARY_SYMMETRIC"
    COEXISTENCE = "COEXISTENCE"
    DEGENERATE = "DEGENERATE"

    @property
    def is_boundary(self) -> bool:
        return self.value.startswith("BOUNDARY")


class FormulaVariant(str, Enum):
    PROOF = "PROOF"      # axis weights c_j * lambda1 / (lambda1i - lambda1)
    THEOREM = "THEOREM"  # axis weights c_j / (lambda1i - lambda1)


def _check_rates(*rates: float) -> None:
    for r in rates:
        if not (math.isfinite(r) and r > 0):
            raise NonPositiveRate(f"rates must be finite and positive, got {r!r}")


def classify(lambda1: float, lambda11: float, lambda12: float,
             rel_tol: float = DEFAULT_REL_TOL) -> Classification:
    """Regime implied by the three killing rates.

    Coexistence when ``lambda1`` is clearly below both axis rates, a boundary
    regime when it is clearly above the smaller one (the type with the smaller
    axis rate survives), and DEGENERATE inside the ``rel_tol`` band around it.
    """
    _check_rates(lambda1, lambda11, lambda12)
    m = min(lambda11, lambda12)
    if abs(lambda1 - m) <= rel_tol * m:
        return Classification.DEGENERATE
    if lambda1 < m:
        return Classification.COEXISTENCE
    if abs(lambda11 - lambda12) <= rel_tol * max(lambda11, lambda12):
        return Classification.BOUNDARY_SYMMETRIC
    if lambda11 < lambda12:
        return Classification.BOUNDARY_TYPE1_DOMINANT
    return Classification.BOUNDARY_TYPE2_DOMINANT


@dataclass
class MixtureQSD:
    """Limit law ``w1 (nu11 x delta0) + w2 (delta0 x nu12) + wD nu1``.

    ``variants`` holds the weights under both axis-weight formulas when they
    apply; ``conjectural`` marks outcomes not covered by a proven limit.
    """

    weight_axis1: float
    weight_axis2: float
    weight_interior: float
    classification: Classification
    formula_variant: FormulaVariant
    variants: dict = field(default_factory=dict)
    conjectural: bool = False
    nu1: SpectralResult | None = None
    nu11: SpectralResult | None = None
    nu12: SpectralResult | None = None

    @property
    def weights(self) -> tuple[float, float, float]:
        return self.weight_axis1, self.weight_axis2, self.weight_interior

    def to_dict(self) -> dict:
        return {"weight_axis1": self.weight_axis1, "weight_axis2": self.weight_axis2,
                "weight_interior": self.weight_interior,
                "classification": self.classification.value,
                "formula_variant": self.formula_variant.value,
                "variants": self.variants, "conjectural": self.conjectural}

    def component_tables(self, coordinates: str = "x", params: LVParams | None = None):
        """Node tables ``name -> dict of columns`` for the three components.

        With ``coordinates="z"`` nodes are mapped to population sizes and
        densities carry the Jacobian ``dx/dz = 2 / (gamma x)`` per axis.
        """
        if coordinates not in ("x", "z"):
            raise ValidationError("coordinates must be 'x' or 'z'")
        if coordinates == "z" and params is None:
            raise ValidationError("population coordinates need the parameters")
        out = {}
        for name, res, axes in (("axis1", self.nu11, (1,)), ("axis2", self.nu12, (2,)),
                                ("interior", self.nu1, (1, 2))):
            if res is None:
                continue
            pts = res.grid.flat_nodes()
            dens = res.nu1.copy()
            cols = {}
            for j, ax in enumerate(axes):
                x = pts[:, j]
                if coordinates == "z":
                    g = params.gamma[ax - 1]
                    cols[f"z{ax}"] = g * x * x / 4.0
                    dens = dens * 2.0 / (g * x)
                else:
                    cols[f"x{ax}"] = x
            cols["density"] = dens
            out[name] = cols
        return out


def _variant_weights(lambda1, lambda11, lambda12, c1, c2, variant: FormulaVariant):
    K = lambda1 if variant is FormulaVariant.PROOF else 1.0
    w = np.array([c2 * K / (lambda11 - lambda1), c1 * K / (lambda12 - lambda1), 1.0])
    return tuple(float(v) for v in w / w.sum())


def compose_qsd(classification: Classification, lambdas, c1: float, c2: float,
                nu1: SpectralResult | None = None, nu11: SpectralResult | None = None,
                nu12: SpectralResult | None = None,
                formula_variant: FormulaVariant | str = FormulaVariant.PROOF) -> MixtureQSD:
    """Mixture weights of the limiting conditioned law.

    ``c1`` (``c2``) is the probability under ``nu1`` that type 1 (type 2) is
    the one extinct at the exit time, so the axis-1 component (type 1 alone)
    is fed by ``c2``.  In coexistence the unnormalized weights are
    ``c2 K / (lambda11 - lambda1)``, ``c1 K / (lambda12 - lambda1)`` and 1 with
    ``K = lambda1`` (PROOF) or ``K = 1`` (THEOREM).  A symmetric boundary
    regime splits the axes in proportion ``(c2, c1)``; the degenerate case
    returns the same split, flagged conjectural.
    """
    classification = Classification(classification)
    variant = FormulaVariant(formula_variant)
    lambda1, lambda11, lambda12 = (float(v) for v in lambdas)
    _check_rates(lambda1, lambda11, lambda12)
    if not (c1 >= 0 and c2 >= 0) or not c1 + c2 > 0:
        raise NegativeWeight(f"exit splits must be non-negative, got c1={c1!r}, c2={c2!r}")
    common = dict(classification=classification, formula_variant=variant,
                  nu1=nu1, nu11=nu11, nu12=nu12)

    if classification is Classification.BOUNDARY_TYPE1_DOMINANT:
        return MixtureQSD(1.0, 0.0, 0.0, **common)
    if classification is Classification.BOUNDARY_TYPE2_DOMINANT:
        return MixtureQSD(0.0, 1.0, 0.0, **common)
    if classification in (Classification.BOUNDARY_SYMMETRIC, Classification.DEGENERATE):
        s = c1 + c2
        return MixtureQSD(c2 / s, c1 / s, 0.0, conjectural=classification
                          is Classification.DEGENERATE, **common)

    if not (lambda11 > lambda1 and lambda12 > lambda1):
        raise RateOrderViolation(
            f"coexistence weights need lambda1 < lambda11, lambda12; got "
            f"{lambda1!r}, {lambda11!r}, {lambda12!r}"
        )
    variants = {v.value: list(_variant_weights(lambda1, lambda11, lambda12, c1, c2, v))
                for v in FormulaVariant}
    w1, w2, wd = variants[variant.value]
    return MixtureQSD(w1, w2, wd, variants=variants, **common)


# -- pipeline ---------------------------------------------------------------------------

@dataclass
class RegimeReport:
    lambda1: float
    lambda11: float
    lambda12: float
    c1: float
    c2: float
    classification: Classification
    rel_tol: float
    provenance: dict
    lambda_fv: float | None = None
    exit_stats: ExitStats | None = None

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda11": self.lambda11,
                "lambda12": self.lambda12, "c1": self.c1, "c2": self.c2,
                "classification": self.classification.value, "rel_tol": self.rel_tol,
                "lambda_fv": self.lambda_fv,
                "exit_stats": self.exit_stats.to_dict() if self.exit_stats else None,
                "provenance": self.provenance}


def _params(model) -> LVParams:
    if isinstance(model, KolmogorovModel):
        return model.params
    if isinstance(model, LVParams):
        return model
    raise ValidationError("regime analysis needs a two-type model")


def run_regime_pipeline(model, grid2d: Grid | None = None, grid1d: Grid | None = None,
                        mc_cfg: SimConfig | None = None, n_particles: int = 2000,
                        fv_t_sample: float = 20.0, rel_tol: float = DEFAULT_REL_TOL,
                        formula_variant: FormulaVariant | str = FormulaVariant.PROOF,
                        cross_check: bool = True, cross_check_tol: float = 0.10,
                        check_truncation: bool = False, max_horizon: float = 1500.0,
                        ) -> tuple[RegimeReport, MixtureQSD]:
    """Spectral rates, exit splits, classification and mixture for one model.

    The exit-split simulation runs to ``max(t_max, 25 / lambda1)``.  When that
    exceeds ``max_horizon`` it is skipped; an exchange-symmetric model then
    gets ``c1 = c2 = 1/2`` and any other raises :class:`CensoredExit`.
    With ``cross_check`` a Fleming-Viot rate differing from ``lambda1`` by more
    than ``cross_check_tol`` raises :class:`CrossCheckFailure`.
    """
    params = _params(model)
    km = KolmogorovModel(params)
    mc_cfg = mc_cfg or SimConfig(dt=1e-3, t_max=50.0, seed=0, n_paths=10_000)
    grid2d = grid2d or auto_grid(km, n=240)
    r2 = solve_qsd_2d(km, grid2d, check_truncation=check_truncation)
    r11 = solve_qsd_1d(params, 1, grid1d)
    r12 = solve_qsd_1d(params, 2, grid1d)
    lam1, lam11, lam12 = r2.lambda1, r11.lambda1, r12.lambda1
    provenance = {"grid2d": grid2d.to_dict(), "grid1d": [r11.grid.to_dict(), r12.grid.to_dict()],
                  "truncation": r2.truncation, "mc": mc_cfg.to_dict()}

    horizon = max(mc_cfg.t_max, 25.0 / lam1)
    ex = None
    if horizon <= max_horizon:
        ex = exit_statistics(km, r2, mc_cfg.replace(t_max=horizon))
        c1, c2 = ex.c1_hat, ex.c2_hat
        provenance["exit_horizon"] = horizon
    elif params.is_exchange_symmetric():
        c1 = c2 = 0.5
        provenance["exit_split"] = "exchange symmetry (simulation horizon infeasible)"
    else:
        raise CensoredExit(f"exit simulation would need t_max={horizon:.3g} > {max_horizon:g}")

    lam_fv = None
    if cross_check:
        fv = fleming_viot(km, n_particles, mc_cfg, t_sample=fv_t_sample, grid=grid2d,
                          lambda_ref=lam1)
        lam_fv = fv.lambda_fv
        provenance["fleming_viot"] = fv.summary()
        if abs(lam_fv - lam1) > cross_check_tol * lam1:
            raise CrossCheckFailure(
                f"Fleming-Viot rate {lam_fv:.4g} disagrees with spectral {lam1:.4g}"
            )

    cls = classify(lam1, lam11, lam12, rel_tol)
    mix = compose_qsd(cls, (lam1, lam11, lam12), c1, c2, r2, r11, r12, formula_variant)
    report = RegimeReport(lam1, lam11, lam12, c1, c2, cls, rel_tol, provenance, lam_fv, ex)
    return report, mix


# -- phase-transition scan --------------------------------------------------------------

def symmetric_cooperative(c: float) -> LVParams:
    """All coefficients 1 except ``c12 = c21 = -c``."""
    if not 0.0 < c < 1.0:
        raise ValidationError(f"the symmetric cooperative family needs 0 < c < 1, got {c!r}")
    return validate_params(gamma1=1, gamma2=1, r1=1, r2=1, c11=1, c22=1, c12=-c, c21=-c)


@dataclass
class ScanRow:
    c: float
    lambda1: float
    lambda_axis: float
    gap: float
    exit_c1: float | None = None
    exit_c2: float | None = None
    exit_status: str = "not run"


@dataclass
class ScanResult:
    rows: list[ScanRow]
    lambda_axis: float
    lambda1_independent: float
    status: str
    bracket: tuple[float, float] | None
    c_c: float | None
    monotone: bool
    bisection: list[tuple[float, float]]

    def table(self):
        return [(r.c, r.lambda1, r.lambda_axis, r.gap) for r in self.rows]

    def to_dict(self) -> dict:
        return {"lambda_axis": self.lambda_axis,
                "lambda1_independent": self.lambda1_independent,
                "status": self.status, "bracket": list(self.bracket) if self.bracket else None,
                "c_c": self.c_c, "monotone": self.monotone,
                "rows": [r.__dict__ for r in self.rows],
                "bisection": [list(b) for b in self.bisection]}


def scan_phase_transition(c_values=None, n_grid: int = 240, tol_c: float = 1e-2,
                          exit_cfg: SimConfig | None = None, max_horizon: float = 1500.0,
                          threads: int = 1) -> ScanResult:
    """Tabulate ``lambda1(c) - lambda`` over the symmetric cooperative family.

    ``lambda`` is the common axis rate (it does not depend on ``c``).  A sign
    change between neighbouring ``c`` values is bisected down to ``tol_c``.
    With ``exit_cfg`` the exit split is simulated at every ``c`` whose horizon
    ``25 / lambda1`` stays below ``max_horizon``.
    """
    c_values = [round(0.1 * k, 10) for k in range(1, 10)] if c_values is None else list(c_values)
    c_values = sorted(float(c) for c in c_values)
    base = symmetric_cooperative(0.5)
    lam = solve_qsd_1d(base, 1).lambda1
    indep = validate_params(gamma1=1, gamma2=1, r1=1, r2=1, c11=1, c22=1, c12=0, c21=0)
    lam_indep = solve_qsd_2d(KolmogorovModel(indep), auto_grid(KolmogorovModel(indep), n=n_grid),
                             k=1).lambda1

    def solve(c: float) -> SpectralResult:
        km = KolmogorovModel(symmetric_cooperative(c))
        return solve_qsd_2d(km, auto_grid(km, n=n_grid), k=1)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(solve, c_values))
    else:
        results = [solve(c) for c in c_values]

    rows = []
    for c, res in zip(c_values, results):
        row = ScanRow(c, res.lambda1, lam, res.lambda1 - lam)
        if exit_cfg is not None:
            horizon = max(exit_cfg.t_max, 25.0 / res.lambda1)
            if horizon <= max_horizon:
                ex = exit_statistics(KolmogorovModel(symmetric_cooperative(c)), res,
                                     exit_cfg.replace(t_max=horizon))
                row.exit_c1, row.exit_c2, row.exit_status = ex.c1_hat, ex.c2_hat, "ok"
            else:
                row.exit_status = f"skipped: horizon {horizon:.3g} exceeds {max_horizon:g}"
        rows.append(row)

    lam1s = np.array([r.lambda1 for r in rows])
    monotone = bool(np.all(np.diff(lam1s) <= 1e-12 * lam1s[:-1]))
    bracket = c_c = None
    status = "NoCrossing"
    bisection = []
    for a, b in zip(rows, rows[1:]):
        if a.gap > 0 >= b.gap or a.gap < 0 <= b.gap:
            lo, hi, g_lo = a.c, b.c, a.gap
            while hi - lo > tol_c:
                mid = 0.5 * (lo + hi)
                g = solve(mid).lambda1 - lam
                bisection.append((mid, g))
                if (g > 0) == (g_lo > 0):
                    lo, g_lo = mid, g
                else:
                    hi = mid
            bracket, c_c, status = (lo, hi), 0.5 * (lo + hi), "bracketed"
            break
    return ScanResult(rows, lam, lam_indep, status, bracket, c_c, monotone, bisection)
