"""Euler-Maruyama path simulation with absorption at the axes.

Paths are integrated in vectorized blocks.  Every path owns a counter-based
random stream keyed by ``(seed, path index)``, so a path's trajectory does not
depend on how many other paths are simulated or on the block and chunk sizes.

Stopping-time conventions (two-type models):

* ``T2`` is the first time coordinate 1 reaches 0 (the path lands on
  ``{0} x R+``), ``T1`` the first time coordinate 2 reaches 0.
* ``T_partialD = min(T1, T2)``, ``T0 = max(T1, T2)``.
* ``exit_axis`` is 1 when the path leaves the quadrant through ``R+ x {0}``
  (``T1 < T2``, type 2 died), 2 through ``{0} x R+`` and 0 when there is no
  exit before ``t_max`` or both coordinates die in the same sub-step.

For one-dimensional models (the single-type process and the Brownian
harness) all four times coincide with the killing time and ``exit_axis`` is 0.
Unreached times are ``inf``.  Hitting times are linearly interpolated inside
the step that crosses the threshold.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np
from scipy.special import ndtr

from .errors import BlowUp, InsufficientTail, InvalidStart, ValidationError
from .model import AxisModel, DirichletHarness, KolmogorovModel, LVParams

BLOWUP_LEVEL = 1e9
STOPPING = ("T0", "T_partialD", "T1", "T2")
_BLOCK = 4096
_CHUNK = 512


class Scheme(str, Enum):
    EULER_Z = "EULER_Z"
    EULER_X = "EULER_X"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_max: float = 10.0
    abs_threshold: float = 1e-8
    seed: int = 0
    n_paths: int = 1
    scheme: Scheme = Scheme.EULER_Z
    record_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt > 0 and math.isfinite(self.t_max) and self.dt < self.t_max):
            raise ValidationError("need 0 < dt < t_max")
        if not self.abs_threshold > 0:
            raise ValidationError("abs_threshold must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValidationError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if self.record_every < 0:
            raise ValidationError("record_every must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    def replace(self, **changes) -> "SimConfig":
        d = self.to_dict()
        d.update(changes)
        return SimConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        known = {"dt", "t_max", "abs_threshold", "seed", "n_paths", "scheme", "record_every"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown simulation options: {sorted(unknown)}")
        try:
            return cls(**{k: (Scheme(v) if k == "scheme" else v) for k, v in d.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad simulation config: {exc}") from None


def path_generator(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for path ``index``."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))


# -- one step ---------------------------------------------------------------------

def step_euler(state, drift, diffusion, dt: float, noise, absorb_below=None,
               absorbing: bool = True):
    """One explicit Euler-Maruyama step ``s + b dt + sigma sqrt(dt) xi``.

    ``drift`` and ``diffusion`` may be arrays or callables of the state.  With
    ``absorb_below`` set, coordinates that end at or below it are clamped to 0;
    with ``absorbing`` coordinates already at exactly 0 stay there.  Returns
    ``(new_state, newly_absorbed)``.
    """
    s = np.asarray(state, dtype=float)
    b = drift(s) if callable(drift) else np.asarray(drift, dtype=float)
    sig = diffusion(s) if callable(diffusion) else np.asarray(diffusion, dtype=float)
    new = s + b * dt + sig * math.sqrt(dt) * np.asarray(noise, dtype=float)
    hit = np.zeros(np.shape(new), dtype=bool)
    if absorbing:
        new = np.where(s == 0.0, 0.0, new)
    if absorb_below is not None:
        hit = (new <= absorb_below) & (s != 0.0)
        new = np.where(hit, 0.0, new)
    if not np.all(np.isfinite(new)) or np.any(np.abs(new) > BLOWUP_LEVEL):
        raise BlowUp("state left the representable range; dt too large or unstable parameters")
    return new, hit


# -- dynamics ---------------------------------------------------------------------

def _crossing_fraction(old, new, level):
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = (old - level) / (old - new)
    return np.clip(np.where(np.isnan(theta), 1.0, theta), 0.0, 1.0)


class _LVDynamics:
    """Lotka-Volterra dynamics stepped in Z or X coordinates.

    ``singular`` toggles the ``-1/(2x)`` drift of the X scheme (off for the
    comparison process ``U``); ``absorbing`` toggles killing at the axes.
    """

    kill_all = False

    def __init__(self, gamma, r, C, scheme: Scheme, threshold: float,
                 singular: bool = True, absorbing: bool = True):
        self.gamma = np.asarray(gamma, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.dim = self.noise_dim = self.gamma.size
        self.scheme = Scheme(scheme)
        self.singular = singular
        self.absorbing = absorbing
        self.z_threshold = threshold
        self.x_threshold = 2.0 * np.sqrt(threshold / self.gamma)

    def initial(self, x0: np.ndarray) -> np.ndarray:
        if self.scheme is Scheme.EULER_Z:
            return self.gamma * x0 * x0 / 4.0
        return x0.copy()

    def initially_dead(self, s: np.ndarray) -> np.ndarray:
        if not self.absorbing:
            return np.zeros(s.shape, dtype=bool)
        level = self.z_threshold if self.scheme is Scheme.EULER_Z else self.x_threshold
        return s <= level

    def to_x(self, s: np.ndarray) -> np.ndarray:
        if self.scheme is Scheme.EULER_Z:
            return 2.0 * np.sqrt(np.clip(s, 0.0, None) / self.gamma)
        return s

    def step(self, s, xi, dt, alive):
        if self.scheme is Scheme.EULER_Z:
            drift = s * (self.r - s @ self.C.T)
            new = s + drift * dt + np.sqrt(self.gamma * s * dt) * xi
            level = self.z_threshold
        else:
            inter = (s * s * self.gamma) @ self.C.T / 8.0
            drift = self.r * s / 2.0 - s * inter
            if self.singular:
                drift = drift - 0.5 / np.where(alive, s, 1.0)
            new = s + drift * dt + math.sqrt(dt) * xi
            level = self.x_threshold
        if not self.absorbing:
            return new, np.zeros(s.shape, dtype=bool), None
        new = np.where(alive, new, 0.0)
        hit = alive & (new <= level)
        theta = _crossing_fraction(s, new, level) if hit.any() else None
        return np.where(hit, 0.0, new), hit, theta


class _BoxDynamics:
    """Brownian motion killed on leaving ``(0, L)^d``.

    Crossings between grid times are caught with the Brownian-bridge
    probability ``exp(-2 a b / dt)`` (``a``, ``b`` distances to a wall at both
    ends of the step); the extra uniforms come from the path's normal stream.
    """

    kill_all = True

    def __init__(self, dim: int, length: float):
        self.dim = dim
        self.noise_dim = 2 * dim
        self.length = length

    def initial(self, x0):
        return x0.copy()

    def initially_dead(self, s):
        out = (s <= 0) | (s >= self.length)
        return np.repeat(out.any(axis=-1, keepdims=True), self.dim, axis=-1)

    def to_x(self, s):
        return s

    def step(self, s, xi, dt, alive):
        d, L = self.dim, self.length
        new = s + math.sqrt(dt) * xi[:, :d]
        # a wall is crossed, or nearly grazed, when the endpoint product is small
        prod = np.minimum(s * new, (L - s) * (L - new))
        near = (prod < 20.0 * dt) & alive
        rows = np.nonzero(near.any(axis=-1))[0]
        hit = np.zeros(s.shape, dtype=bool)
        if rows.size == 0:
            return new, hit, None
        s_r, n_r, x_r = s[rows], new[rows], xi[rows, d:]
        out_lo, out_hi = n_r <= 0, n_r >= L
        inside = ~(out_lo | out_hi)
        theta = np.where(out_lo, _crossing_fraction(s_r, n_r, 0.0),
                         _crossing_fraction(L - s_r, L - n_r, 0.0))
        p_lo = np.exp(-2.0 * s_r * np.clip(n_r, 0, None) / dt)
        p_hi = np.exp(-2.0 * (L - s_r) * np.clip(L - n_r, 0, None) / dt)
        bridge = inside & (ndtr(x_r) < 1.0 - (1.0 - p_lo) * (1.0 - p_hi))
        theta = np.where(bridge, 0.5, theta)
        crossed = (~inside | bridge) & alive[rows]
        killed = crossed.any(axis=-1)
        if not killed.any():
            return new, hit, None
        # the first coordinate to cross sets the killing time of the whole path
        first = np.where(crossed, theta, np.inf).min(axis=-1)
        full_theta = np.zeros(s.shape)
        hit[rows[killed]] = True
        full_theta[rows[killed]] = first[killed, None]
        hit &= alive
        return np.where(hit, 0.0, new), hit, full_theta


def lv_arrays(model):
    """``(gamma, r, C)`` for any Lotka-Volterra model or parameter set."""
    if isinstance(model, LVParams):
        return model.gamma, model.r, model.c
    if isinstance(model, (KolmogorovModel, AxisModel)):
        return model.lv_coefficients()
    raise ValidationError(f"no population dynamics for {type(model).__name__}")


def make_dynamics(model, cfg: SimConfig):
    if isinstance(model, DirichletHarness):
        return _BoxDynamics(model.dim, model.length)
    gamma, r, C = lv_arrays(model)
    return _LVDynamics(gamma, r, C, cfg.scheme, cfg.abs_threshold)


def model_dim(model) -> int:
    return 2 if isinstance(model, LVParams) else model.dim


def _stop_rule(stop: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    if stop not in STOPPING:
        raise ValidationError(f"unknown stopping time {stop!r}; expected one of {STOPPING}")
    dead = lambda td: np.isfinite(td)  # noqa: E731
    if dim == 1 or stop == "T_partialD":
        return lambda td: dead(td).any(axis=-1)
    if stop == "T0":
        return lambda td: dead(td).all(axis=-1)
    col = 1 if stop == "T1" else 0
    return lambda td: dead(td)[:, col]


# -- engine ----------------------------------------------------------------------------

@dataclass
class _EngineOutput:
    t_dead: np.ndarray
    final: np.ndarray
    records: np.ndarray | None
    record_steps: np.ndarray | None


def _run(dyn, x0: np.ndarray, cfg: SimConfig, finished, path_ids: np.ndarray,
         monitor=None, record_every: int = 0) -> _EngineOutput:
    """Integrate every start in ``x0`` until ``finished`` or ``t_max``."""
    n, dim = x0.shape
    dt, n_steps = cfg.dt, cfg.n_steps
    state = dyn.initial(x0)
    t_dead = np.where(dyn.initially_dead(state), 0.0, np.inf)
    state = np.where(np.isfinite(t_dead), 0.0, state) if getattr(dyn, "absorbing", True) else state
    rec_steps = None
    records = None
    if record_every:
        rec_steps = np.arange(0, n_steps + 1, record_every)
        records = np.full((n, rec_steps.size, dim), np.nan)
        records[:, 0] = state

    for start in range(0, n, _BLOCK):
        ids = np.arange(start, min(start + _BLOCK, n))
        gens = [path_generator(cfg.seed, path_ids[i]) for i in ids]
        active = ids[~finished(t_dead[ids])]
        step = 0
        while active.size and step < n_steps:
            c = min(_CHUNK, n_steps - step)
            noise = np.stack([gens[i - start].standard_normal((c, dyn.noise_dim)) for i in active])
            s, td = state[active], t_dead[active]
            frozen = np.zeros(active.size, dtype=bool)
            for k in range(c):
                alive = np.isinf(td)
                new, hit, theta = dyn.step(s, noise[:, k], dt, alive)
                if frozen.any():
                    new = np.where(frozen[:, None], s, new)
                    hit &= ~frozen[:, None]
                if monitor is not None:
                    monitor(s, new, td, frozen)
                if hit.any():
                    td = np.where(hit, (step + k + theta) * dt, td)
                    frozen |= finished(td)
                s = new
                if records is not None and (step + k + 1) % record_every == 0:
                    records[active, (step + k + 1) // record_every] = np.where(
                        frozen[:, None], np.nan, s)
            if not np.all(np.isfinite(s)) or np.any(np.abs(s) > BLOWUP_LEVEL):
                raise BlowUp(
                    f"state exceeded {BLOWUP_LEVEL:g} near t={(step + c) * dt:g}; "
                    "dt too large or parameters outside the stable regime"
                )
            state[active], t_dead[active] = s, td
            active = active[~frozen]
            step += c
    return _EngineOutput(t_dead, state, records, rec_steps)


def _check_starts(model, x0, n: int) -> np.ndarray:
    dim = model_dim(model)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        if x0.size != dim:
            raise InvalidStart(f"start must have {dim} coordinates, got {x0.size}")
        x0 = np.broadcast_to(x0, (n, dim)).copy()
    elif x0.shape != (n, dim):
        raise InvalidStart(f"starts must have shape ({n}, {dim}), got {x0.shape}")
    if not np.all(np.isfinite(x0)) or np.any(x0 < 0):
        raise InvalidStart("starts must lie in the closed quadrant")
    if isinstance(model, DirichletHarness) and (np.any(x0 <= 0) or np.any(x0 >= model.length)):
        raise InvalidStart("harness starts must lie inside the open box")
    return x0


# -- results -----------------------------------------------------------------------------

def _stopping_times(t_dead: np.ndarray) -> dict[str, np.ndarray]:
    if t_dead.shape[1] == 1 or np.all(t_dead == t_dead[:, :1]):
        t = t_dead[:, 0]
        return {"T1": t, "T2": t, "T_partialD": t, "T0": t,
                "exit_axis": np.zeros(t.size, dtype=int)}
    T2, T1 = t_dead[:, 0], t_dead[:, 1]
    exit_axis = np.where(T1 < T2, 1, np.where(T2 < T1, 2, 0))
    return {"T1": T1, "T2": T2, "T_partialD": np.minimum(T1, T2),
            "T0": np.maximum(T1, T2), "exit_axis": exit_axis}


@dataclass
class PathRecord:
    """One trajectory in Kolmogorov coordinates with its stopping times."""

    times: np.ndarray
    states: np.ndarray
    T1: float
    T2: float
    T_partialD: float
    T0: float
    exit_axis: int

    def summary(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("T1", "T2", "T_partialD", "T0")} | {
            "exit_axis": int(self.exit_axis)}


@dataclass
class PathBatch:
    """Stopping times of many paths (arrays indexed by path)."""

    T1: np.ndarray
    T2: np.ndarray
    T_partialD: np.ndarray
    T0: np.ndarray
    exit_axis: np.ndarray
    final_x: np.ndarray
    cfg: SimConfig
    stop: str

    @property
    def n_paths(self) -> int:
        return self.T0.size

    def times(self, stopping: str) -> np.ndarray:
        if stopping not in STOPPING:
            raise ValidationError(f"unknown stopping time {stopping!r}")
        return getattr(self, stopping)

    def n_censored(self, stopping: str | None = None) -> int:
        return int(np.sum(np.isinf(self.times(stopping or self.stop))))

    def rows(self):
        for i in range(self.n_paths):
            yield (i, self.T1[i], self.T2[i], self.T_partialD[i], self.T0[i],
                   int(self.exit_axis[i]))


def simulate_paths(model, x0, cfg: SimConfig, stop: str = "T0",
                   path_offset: int = 0) -> PathBatch:
    """Simulate ``cfg.n_paths`` paths until ``stop`` or ``t_max``.

    ``x0`` is one start (broadcast) or an ``(n_paths, dim)`` array, in
    Kolmogorov coordinates.  Path ``i`` uses the stream ``(seed, path_offset+i)``.
    """
    x0 = _check_starts(model, x0, cfg.n_paths)
    dyn = make_dynamics(model, cfg)
    out = _run(dyn, x0, cfg, _stop_rule(stop, x0.shape[1]),
               np.arange(cfg.n_paths) + path_offset)
    st = _stopping_times(out.t_dead)
    return PathBatch(final_x=dyn.to_x(out.final), cfg=cfg, stop=stop, **st)


def simulate_path(model, x0, cfg: SimConfig, stop: str = "T0", path_index: int = 0) -> PathRecord:
    """Single trajectory, recorded every ``cfg.record_every`` steps (1 if unset).

    After ``T_partialD`` the surviving coordinate keeps following the
    one-dimensional logistic dynamics on its axis until ``stop``.
    """
    x0 = _check_starts(model, x0, 1)
    dyn = make_dynamics(model, cfg)
    every = cfg.record_every or 1
    out = _run(dyn, x0, cfg, _stop_rule(stop, x0.shape[1]), np.array([path_index]),
               record_every=every)
    st = _stopping_times(out.t_dead)
    keep = ~np.isnan(out.records[0, :, 0])
    states = dyn.to_x(out.records[0][keep])
    times = out.record_steps[keep] * cfg.dt
    return PathRecord(times=times, states=states, exit_axis=int(st["exit_axis"][0]),
                      **{k: float(st[k][0]) for k in ("T1", "T2", "T_partialD", "T0")})


# -- comparison ------------------------------------------------------------------------

class _CoupledDynamics:
    """X and a comparison process driven by the same Brownian increments."""

    kill_all = False
    absorbing = True

    def __init__(self, x_dyn: _LVDynamics, o_dyn: _LVDynamics):
        self.x, self.o = x_dyn, o_dyn
        self.d = x_dyn.dim
        self.dim = 2 * self.d
        self.noise_dim = self.d

    def initial(self, x0):
        return np.concatenate([x0, x0], axis=-1)

    def initially_dead(self, s):
        d = self.d
        return np.concatenate([self.x.initially_dead(s[:, :d]),
                               self.o.initially_dead(s[:, d:])], axis=-1)

    def to_x(self, s):
        return s

    def step(self, s, xi, dt, alive):
        d = self.d
        nx, hx, tx = self.x.step(s[:, :d], xi, dt, alive[:, :d])
        no, ho, to = self.o.step(s[:, d:], xi, dt, alive[:, d:])
        hit = np.concatenate([hx, ho], axis=-1)
        theta = None
        if hit.any():
            theta = np.concatenate([tx if tx is not None else np.zeros_like(nx),
                                    to if to is not None else np.zeros_like(no)], axis=-1)
        return np.concatenate([nx, no], axis=-1), hit, theta


@dataclass
class CouplingReport:
    opponent: str
    max_violation: float
    tol_cmp: float
    n_paths: int
    n_censored: int
    identical: bool

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol_cmp

    def to_dict(self) -> dict:
        return asdict(self) | {"passed": self.passed}


def coupled_comparison(model, x0, cfg: SimConfig, opponent: str = "H") -> CouplingReport:
    """Largest positive excursion of ``X^i - O^i`` before ``X`` leaves the quadrant.

    ``O`` is the product of the two single-type processes (``"H"``) or the
    process without the singular drift (``"U"``); both are stepped in Kolmogorov
    coordinates with the same increments as ``X``.  The ordering ``X <= H``
    holds under competition and ``X <= U`` needs ``alpha <= 0``: with
    competition the interaction term can push ``X`` above ``U``.
    """
    params = model.params if isinstance(model, KolmogorovModel) else model
    if not isinstance(params, LVParams):
        raise ValidationError("coupled comparison needs a two-type model")
    gamma, r, C = params.gamma, params.r, params.c
    xcfg = cfg.replace(scheme=Scheme.EULER_X.value)
    x_dyn = _LVDynamics(gamma, r, C, Scheme.EULER_X, cfg.abs_threshold)
    if opponent == "H":
        o_dyn = _LVDynamics(gamma, r, np.diag(np.diag(C)), Scheme.EULER_X, cfg.abs_threshold)
    elif opponent == "U":
        o_dyn = _LVDynamics(gamma, r, C, Scheme.EULER_X, cfg.abs_threshold,
                            singular=False, absorbing=False)
    else:
        raise ValidationError(f"opponent must be 'H' or 'U', got {opponent!r}")
    dyn = _CoupledDynamics(x_dyn, o_dyn)
    x0 = _check_starts(params, x0, cfg.n_paths)
    state = {"max": -np.inf, "identical": True}

    def monitor(s, new, td, frozen):
        before = np.isinf(td[:, :2]).all(axis=-1) & ~frozen
        if before.any():
            diff = new[before, :2] - new[before, 2:]
            state["max"] = max(state["max"], float(diff.max()))
            if state["identical"] and np.any(diff != 0):
                state["identical"] = False

    out = _run(dyn, x0, xcfg, lambda td: np.isfinite(td[:, :2]).any(axis=-1),
               np.arange(cfg.n_paths), monitor=monitor)
    censored = int(np.sum(np.isinf(out.t_dead[:, :2]).all(axis=-1)))
    return CouplingReport(opponent, max(state["max"], 0.0), 5.0 * math.sqrt(cfg.dt),
                          cfg.n_paths, censored, state["identical"])


# -- survival ----------------------------------------------------------------------------

@dataclass
class SurvivalCurve:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    n_paths: int
    stopping: str = "T_partialD"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_times(cls, times: np.ndarray, t_grid: np.ndarray, stopping: str = "T_partialD",
                   **meta) -> "SurvivalCurve":
        times = np.sort(np.asarray(times, dtype=float))
        t_grid = np.asarray(t_grid, dtype=float)
        n = times.size
        s = 1.0 - np.searchsorted(times, t_grid, side="right") / n
        return cls(t_grid, s, np.sqrt(s * (1 - s) / n), n, stopping, dict(meta))

    def rows(self):
        return zip(self.t, self.value, self.stderr)


def estimate_survival(model, x0, stopping: str, cfg: SimConfig,
                      t_grid=None) -> SurvivalCurve:
    """Empirical ``P(T > t)`` with binomial standard errors."""
    batch = simulate_paths(model, x0, cfg, stop=stopping)
    t_grid = np.linspace(0.0, cfg.t_max, 201) if t_grid is None else np.asarray(t_grid)
    return SurvivalCurve.from_times(batch.times(stopping), t_grid, stopping,
                                    n_censored=batch.n_censored(stopping))


@dataclass
class RateFit:
    rate: float
    stderr: float
    intercept: float
    chi2_per_dof: float
    n_points: int

    def __iter__(self):
        return iter((self.rate, self.stderr))


def fit_killing_rate(curve: SurvivalCurve, window=None, through_origin: bool = False) -> RateFit:
    """Weighted least-squares slope of ``-log S`` against ``t``.

    Points with ``S == 1`` or ``S <= 10/n`` are dropped.  Weights follow the
    delta-method variance ``(1 - S) / (n S)``.  Survival points of one sample
    are correlated, so the reported standard error is the larger of the
    regression error and the Poisson error ``rate / sqrt(deaths in window)``.
    With ``through_origin`` the line is forced through ``-log S(0) = 0``.
    """
    t, s, n = np.asarray(curve.t), np.asarray(curve.value), curve.n_paths
    lo, hi = window if window is not None else (t.min(), t.max())
    sel = (t >= lo) & (t <= hi) & (s > 10.0 / n)
    if sel.sum() < 5:
        raise InsufficientTail(f"only {int(sel.sum())} usable survival points in window")
    use = sel & (s < 1.0)
    if use.sum() < 2:
        raise InsufficientTail("survival curve is flat inside the window")
    tt, y = t[use], -np.log(s[use])
    w = n * s[use] / (1.0 - s[use])
    if through_origin:
        rate = float(np.sum(w * tt * y) / np.sum(w * tt * tt))
        intercept = 0.0
        resid = y - rate * tt
        dof = max(tt.size - 1, 1)
        reg_err = math.sqrt(1.0 / np.sum(w * tt * tt))
    else:
        X = np.stack([np.ones_like(tt), tt], axis=1)
        cov = np.linalg.inv(X.T @ (X * w[:, None]))
        intercept, rate = cov @ (X.T @ (w * y))
        resid = y - intercept - rate * tt
        dof = max(tt.size - 2, 1)
        reg_err = math.sqrt(cov[1, 1])
    chi2 = float(np.sum(w * resid**2) / dof)
    deaths = n * (s[sel].max() - s[sel].min())
    poisson = abs(rate) / math.sqrt(deaths) if deaths > 0 else np.inf
    return RateFit(float(rate), float(max(reg_err, poisson)), float(intercept), chi2,
                   int(use.sum()))
