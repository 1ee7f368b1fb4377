"""Finite-difference eigenproblems for the killed Kolmogorov semigroup.

The generator ``L = 1/2 Laplacian - grad V . grad`` (killed on the boundary) is
unitarily equivalent to the Schroedinger operator ``1/2 Laplacian - 1/2 G`` with
``G = |grad V|^2 - Laplacian V`` through ``psi = exp(-V) eta``.  We discretize
``A ~ -(1/2 Laplacian - 1/2 G)`` on a uniform tensor grid with Dirichlet
conditions, so the smallest eigenvalues of ``A`` are the killing rates and the
ground state gives the quasi-stationary density ``nu1 = psi1 exp(-V)`` (up to
normalization).

Two stencils are available:

``"ground_state"`` (default)
    ``A_ii = sum_j exp(V_i - V_j) / (2 h^2)`` over the 2d neighbours (boundary
    neighbours included), ``A_ij = -1/(2 h^2)``.  The diagonal is a consistent
    second-order approximation of ``1/h^2 + G/2`` that annihilates
    ``exp(-V)`` exactly away from the boundary, i.e. the symmetrized
    mu-weighted Dirichlet form.  It keeps ``lambda1 > 0`` even when the true
    killing rate is far below the discretization error of ``G``.
``"pointwise"``
    ``A_ii = sum_axes 1/h^2 + G(x_i)/2``, the textbook stencil.

Both coincide for ``V == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NoConvergence, StepUnstable, TruncationUnstable, ValidationError
from .model import AxisModel, DirichletHarness, KolmogorovModel, LVParams

DISCRETIZATIONS = ("ground_state", "pointwise")
DENSE_LIMIT = 600
MIN_NODES = 8


def _as_tuple(value, dim, cast):
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(dim))
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise ValidationError(f"expected {dim} per-axis values, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid of interior nodes on ``prod_a (eps_lo_a, L_hi_a)``.

    Axis ``a`` carries ``n_a`` interior nodes ``eps_lo_a + h_a * (1..n_a)``;
    the two end points are Dirichlet boundary points.  Eigen-solves require
    ``n_a >= 8``; smaller grids are only useful for inspecting the stencil.
    """

    dim: int
    eps_lo: tuple[float, ...]
    L_hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError("grid dimension must be 1 or 2")
        for name in ("eps_lo", "L_hi", "n"):
            if len(getattr(self, name)) != self.dim:
                raise ValidationError(f"{name} must have {self.dim} entries")
        for lo, hi, n in zip(self.eps_lo, self.L_hi, self.n):
            if not (lo >= 0 and hi > lo and math.isfinite(hi)):
                raise ValidationError(f"bad axis bounds ({lo}, {hi})")
            if n < 1:
                raise ValidationError("each axis needs at least one interior node")

    @classmethod
    def box(cls, dim: int, eps_lo=1e-3, L_hi=8.0, n=200) -> "Grid":
        return cls(dim, _as_tuple(eps_lo, dim, float), _as_tuple(L_hi, dim, float),
                   _as_tuple(n, dim, int))

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        dim = int(d["dim"])
        return cls.box(dim, d.get("eps_lo", 1e-3), d.get("L_hi", 8.0), d.get("n", 200))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "eps_lo": list(self.eps_lo), "L_hi": list(self.L_hi),
                "n": list(self.n)}

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n + 1) for lo, hi, n in zip(self.eps_lo, self.L_hi, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_nodes(self, a: int, with_boundary: bool = False) -> np.ndarray:
        lo, n, h = self.eps_lo[a], self.n[a], self.h[a]
        if with_boundary:
            return lo + h * np.arange(0, n + 2)
        return lo + h * np.arange(1, n + 1)

    def nodes(self, with_boundary: bool = False) -> np.ndarray:
        """Node coordinates with shape ``(*shape, dim)`` (``ij`` ordering)."""
        axes = [self.axis_nodes(a, with_boundary) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def flat_nodes(self) -> np.ndarray:
        return self.nodes().reshape(-1, self.dim)

    def cell_edges(self, a: int) -> np.ndarray:
        """Edges of the cells ``[node - h/2, node + h/2]`` along axis ``a``."""
        lo, n, h = self.eps_lo[a], self.n[a], self.h[a]
        return lo + h * (np.arange(0, n + 1) + 0.5)

    def axis_grid(self, a: int) -> "Grid":
        return Grid(1, (self.eps_lo[a],), (self.L_hi[a],), (self.n[a],))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.eps_lo, self.L_hi,
                    tuple(factor * (n + 1) - 1 for n in self.n))

    def extended(self) -> "Grid":
        """Twice the length ``L_hi - eps_lo`` at the same spacing."""
        return Grid(self.dim, self.eps_lo,
                    tuple(lo + 2 * (hi - lo) for lo, hi in zip(self.eps_lo, self.L_hi)),
                    tuple(2 * n + 1 for n in self.n))

    def lowered(self) -> "Grid":
        return Grid(self.dim, tuple(lo / 2 for lo in self.eps_lo), self.L_hi, self.n)


def _quartic_part(model, pts: np.ndarray) -> np.ndarray:
    """``2V - sum log x``: the smooth tail of the potential."""
    return 2.0 * model.V(pts) - np.sum(np.log(pts), axis=-1)


def auto_grid(model, n=200, eps_lo: float = 1e-3, rel_threshold: float = 1e-12,
              margin: float = 1.1) -> Grid:
    """Grid whose upper truncation sits where ``exp(-Q/2)`` drops below
    ``rel_threshold`` of its maximum (``Q = 2V - sum log x``).

    For the harness the box itself is returned.
    """
    if isinstance(model, DirichletHarness):
        return Grid.box(model.dim, 0.0, model.length, n)
    dim = model.dim
    cut = 2.0 * math.log(1.0 / rel_threshold)
    L = 4.0
    for _ in range(12):
        axis = np.linspace(L / 400, L, 400)
        pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
        q = _quartic_part(model, pts)
        keep = q <= q.min() + cut
        reach = [float(pts[..., a][keep].max()) for a in range(dim)]
        if max(reach) < 0.9 * L:
            L_hi = tuple(margin * r + axis[0] for r in reach)
            return Grid.box(dim, eps_lo, L_hi, n)
        L *= 2.0
    raise DomainError("could not bracket the potential well; is the model confining?")


# -- operator -------------------------------------------------------------------

def build_operator(model, grid: Grid, discretization: str = "ground_state") -> sp.csr_matrix:
    """Sparse symmetric ``A ~ -(1/2 Laplacian - 1/2 G)`` with Dirichlet rows removed."""
    if grid.dim != model.dim:
        raise ValidationError(f"grid dimension {grid.dim} != model dimension {model.dim}")
    if discretization not in DISCRETIZATIONS:
        raise ValidationError(f"unknown discretization {discretization!r}")
    shape = grid.shape
    h = grid.h

    if discretization == "pointwise":
        diag = model.G(grid.nodes()) / 2.0 + sum(1.0 / hh**2 for hh in h)
    else:
        try:
            with np.errstate(divide="raise", invalid="raise"):
                Ve = model.V(grid.nodes(with_boundary=True))
        except (DomainError, FloatingPointError):
            raise DomainError(
                "potential is singular on the grid boundary; use eps_lo > 0"
            ) from None
        inner = tuple(slice(1, -1) for _ in range(grid.dim))
        Vi = Ve[inner]
        diag = np.zeros(shape)
        for a in range(grid.dim):
            for shift in (slice(0, -2), slice(2, None)):
                idx = list(inner)
                idx[a] = shift
                diag += np.exp(Vi - Ve[tuple(idx)]) / (2.0 * h[a] ** 2)

    A = sp.diags(diag.ravel(), 0, format="csr")
    for a in range(grid.dim):
        off = np.full(shape[a] - 1, -0.5 / h[a] ** 2)
        T = sp.diags([off, off], [-1, 1])
        left = sp.identity(int(np.prod(shape[:a])))
        right = sp.identity(int(np.prod(shape[a + 1:])))
        A = A + sp.kron(sp.kron(left, T), right)
    return sp.csr_matrix(A)


def diffusion_generator(A: sp.spmatrix, V_nodes: np.ndarray) -> sp.csr_matrix:
    """Discrete generator of the killed diffusion, ``-exp(V) A exp(-V)``.

    Off-diagonal entries are jump rates; ``mu = exp(-2V)`` satisfies detailed
    balance with respect to them.
    """
    v = np.asarray(V_nodes, dtype=float).ravel()
    return sp.csr_matrix(-(sp.diags(np.exp(v)) @ A @ sp.diags(np.exp(-v))))


def _shifted_lu(A: sp.spmatrix, shift: float):
    M = sp.csc_matrix(A - shift * sp.identity(A.shape[0]))
    return spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


def smallest_eigenpairs(A, k: int = 2, tol_eig: float = 1e-10,
                        maxiter: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``k`` smallest eigenpairs of the symmetric matrix ``A``.

    Returns ``(values, vectors)`` with ascending values and unit-norm
    eigenvectors in the columns.  The first eigenvector is positive.  For
    sparse input the ground state is polished by shifted inverse iteration
    below ``lambda1``; with an M-matrix this keeps every entry positive.

    Residuals must satisfy ``|A v - lam v| <= tol_eig``, where the target is
    floored at ``100 eps |A|_inf``: finer grids make ``|A|`` grow like
    ``h^-2`` and smaller residuals are not representable in double precision.
    """
    n = A.shape[0]
    if not 1 <= k < n:
        raise ValidationError(f"need 1 <= k < {n}, got k={k}")

    if n <= DENSE_LIMIT or not sp.issparse(A):
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[0, k - 1])
        if vecs[:, 0].sum() < 0:
            vecs[:, 0] *= -1
        return vals, vecs

    A = sp.csr_matrix(A)
    diag = A.diagonal()
    radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    gersh = float(np.min(diag - radius))
    sigma = 0.0 if gersh >= 0 else gersh - 1e-6 * abs(gersh)
    tol_eig = max(tol_eig, 100.0 * np.finfo(float).eps * float(np.max(radius + np.abs(diag))))
    v0 = np.ones(n)
    try:
        vals, vecs = spla.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0,
                                tol=tol_eig * 1e-2, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"eigensolver did not converge: {exc}") from None
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]

    gap = vals[1] - vals[0] if k > 1 else max(abs(vals[0]), 1.0)
    shift = vals[0] - 0.05 * gap
    lu = _shifted_lu(A, shift)
    v = np.abs(vecs[:, 0])
    for _ in range(10):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
        lam = float(v @ (A @ v))
        if np.linalg.norm(A @ v - lam * v) <= tol_eig:
            break
    else:
        raise NoConvergence("ground-state refinement did not reach tolerance")
    vals[0], vecs[:, 0] = lam, v

    for j in range(1, k):
        res = np.linalg.norm(A @ vecs[:, j] - vals[j] * vecs[:, j])
        if res > tol_eig * max(1.0, abs(vals[j])):
            raise NoConvergence(f"eigenpair {j + 1} residual {res:.3g} above tolerance")
    return vals, vecs


# -- QSD results --------------------------------------------------------------------

@dataclass
class SpectralResult:
    """Eigenpairs on a grid plus the derived ground-state objects.

    ``psi`` holds the Schroedinger eigenfunctions (columns) normalized in
    ``L2(dx)``; ``nu1`` is the QSD density ``d nu1 / dx`` on the nodes.
    """

    grid: Grid
    eigenvalues: np.ndarray
    psi: np.ndarray
    V_nodes: np.ndarray
    model_info: dict = field(default_factory=dict)
    discretization: str = "ground_state"
    truncation: dict | None = None

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def psi1(self) -> np.ndarray:
        return self.psi[:, 0]

    @property
    def eta1(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.V_nodes) * self.psi1

    @property
    def mass_eta1_mu(self) -> float:
        return float(np.sum(self.psi1 * np.exp(-self.V_nodes)) * self.grid.cell_volume)

    @property
    def nu1(self) -> np.ndarray:
        w = self.psi1 * np.exp(-self.V_nodes)
        return w / (w.sum() * self.grid.cell_volume)

    def nu1_array(self) -> np.ndarray:
        return self.nu1.reshape(self.grid.shape)

    @property
    def truncation_unstable(self) -> bool:
        return bool(self.truncation and self.truncation["unstable"])

    def summary(self) -> dict:
        return {
            "lambda": [float(v) for v in self.eigenvalues],
            "grid": self.grid.to_dict(),
            "mass_eta1_mu": self.mass_eta1_mu,
            "discretization": self.discretization,
            "model": self.model_info,
            "truncation": self.truncation,
        }

    def node_columns(self) -> dict[str, np.ndarray]:
        pts = self.grid.flat_nodes()
        cols = {f"x{a + 1}": pts[:, a] for a in range(self.grid.dim)}
        cols.update(psi1=self.psi1, eta1=self.eta1, nu1=self.nu1)
        return cols


def solve_qsd(model, grid: Grid, k: int = 2, tol_eig: float = 1e-10,
              discretization: str = "ground_state") -> SpectralResult:
    """Eigenpairs and QSD of any model exposing ``dim``, ``V`` and ``G``."""
    if min(grid.n) < MIN_NODES:
        raise ValidationError(f"eigen-solves need at least {MIN_NODES} interior nodes per axis")
    A = build_operator(model, grid, discretization)
    vals, vecs = smallest_eigenpairs(A, k, tol_eig)
    psi = vecs / math.sqrt(grid.cell_volume)
    V_nodes = np.asarray(model.V(grid.flat_nodes()), dtype=float)
    info = model.describe() if hasattr(model, "describe") else {}
    return SpectralResult(grid, vals, psi, V_nodes, info, discretization)


def truncation_check(model, grid, base: float, k, tol_eig, discretization, rtol):
    ext = solve_qsd(model, grid.extended(), 1, tol_eig, discretization).lambda1
    low = solve_qsd(model, grid.lowered(), 1, tol_eig, discretization).lambda1
    shift = max(abs(ext - base), abs(low - base)) / abs(base)
    return {"lambda1_extended": ext, "lambda1_lowered": low,
            "relative_shift": shift, "tolerance": rtol, "unstable": bool(shift > rtol)}


def solve_qsd_2d(model: KolmogorovModel, grid: Grid | None = None, k: int = 2,
                 tol_eig: float = 1e-10, check_truncation: bool = False,
                 strict: bool = False, truncation_rtol: float = 5e-3,
                 discretization: str = "ground_state") -> SpectralResult:
    """QSD for the two-type process killed on leaving the open quadrant.

    With ``check_truncation`` the solve is repeated with ``L_hi`` doubled (same
    spacing) and ``eps_lo`` halved; a relative move of ``lambda1`` above
    ``truncation_rtol`` sets ``result.truncation["unstable"]`` and, with
    ``strict``, raises :class:`TruncationUnstable`.
    """
    if model.dim != 2:
        raise ValidationError("solve_qsd_2d needs a two-dimensional model")
    grid = grid or auto_grid(model)
    res = solve_qsd(model, grid, k, tol_eig, discretization)
    if check_truncation:
        res.truncation = truncation_check(model, grid, res.lambda1, k, tol_eig,
                                           discretization, truncation_rtol)
        if strict and res.truncation["unstable"]:
            raise TruncationUnstable(
                f"lambda1 moved by {res.truncation['relative_shift']:.3%} under truncation change"
            )
    return res


def solve_qsd_1d(model, axis: int, grid: Grid | None = None, k: int = 2,
                 tol_eig: float = 1e-10, discretization: str = "ground_state") -> SpectralResult:
    """QSD of the single-type process ``H^axis`` (killed at 0)."""
    params = model.params if isinstance(model, KolmogorovModel) else model
    if not isinstance(params, LVParams):
        raise ValidationError("solve_qsd_1d needs LVParams or a KolmogorovModel")
    am = AxisModel(params, axis)
    grid = grid or auto_grid(am, n=2000)
    return solve_qsd(am, grid, k, tol_eig, discretization)


# -- conditioned law in time ---------------------------------------------------------

@dataclass
class ConditionedLawTrajectory:
    grid: Grid
    times: np.ndarray
    densities: np.ndarray  # (n_times, n_nodes), each integrates to 1
    survival: np.ndarray

    def tv_to(self, reference: np.ndarray) -> np.ndarray:
        return np.array([tv_distance(d, reference, self.grid.cell_volume)
                         for d in self.densities])


def tv_distance(p: np.ndarray, q: np.ndarray, cell_volume: float = 1.0) -> float:
    return 0.5 * float(np.sum(np.abs(np.ravel(p) - np.ravel(q)))) * cell_volume


def mollified_point_mass(grid: Grid, point: Sequence[float], width: float | None = None) -> np.ndarray:
    """Normalized Gaussian bump (sd ``width``, default two cells) at ``point``."""
    pts = grid.flat_nodes()
    width = width or 2.0 * max(grid.h)
    d2 = np.sum((pts - np.asarray(point, dtype=float)) ** 2, axis=-1)
    w = np.exp(-0.5 * d2 / width**2)
    return w / (w.sum() * grid.cell_volume)


def evolve_conditioned_law(model, grid: Grid, initial_density: np.ndarray, t_end: float,
                           dt_pde: float, record_every: int = 1,
                           discretization: str = "ground_state") -> ConditionedLawTrajectory:
    """Crank-Nicolson evolution of the killed law from ``initial_density``.

    The density ``p`` of the killed process is carried in the symmetric gauge
    ``phi = exp(V) p``, which solves ``d phi/dt = -A phi``.  The first step is
    split into two backward-Euler half steps to damp the stiff modes of rough
    initial data.
    """
    p0 = np.asarray(initial_density, dtype=float).ravel()
    if p0.size != grid.size:
        raise ValidationError("initial density does not match the grid")
    if np.any(p0 < 0):
        raise ValidationError("initial density must be non-negative")
    cv = grid.cell_volume
    mass0 = p0.sum() * cv
    if not abs(mass0 - 1.0) < 1e-8:
        raise ValidationError(f"initial density integrates to {mass0}, expected 1")
    n_steps = int(round(t_end / dt_pde))
    if n_steps < 1:
        raise ValidationError("t_end must cover at least one step")
    dt = t_end / n_steps

    A = sp.csc_matrix(build_operator(model, grid, discretization))
    V = np.asarray(model.V(grid.flat_nodes()), dtype=float)
    eV, emV = np.exp(V), np.exp(-V)
    I = sp.identity(grid.size, format="csc")
    lhs = spla.splu(sp.csc_matrix(I + 0.5 * dt * A))
    rhs = sp.csr_matrix(I - 0.5 * dt * A)

    phi = p0 * eV
    times, dens, surv = [0.0], [p0.copy()], [1.0]
    for step in range(1, n_steps + 1):
        if step == 1:
            phi = lhs.solve(lhs.solve(phi))
        else:
            phi = lhs.solve(rhs @ phi)
        p = phi * emV
        if p.min() * cv < -1e-10:
            raise StepUnstable(f"negative mass {p.min() * cv:.3g} at step {step}")
        if step % record_every == 0 or step == n_steps:
            m = p.sum() * cv
            times.append(step * dt)
            dens.append(p / m)
            surv.append(m)
    return ConditionedLawTrajectory(grid, np.array(times), np.array(dens), np.array(surv))


def fit_tv_decay(times: np.ndarray, tv: np.ndarray, window=(1e-9, 1e-3)) -> float:
    """Exponential decay rate of a TV curve, fitted where it lies in ``window``."""
    tv = np.asarray(tv)
    sel = (tv >= window[0]) & (tv <= window[1])
    if sel.sum() < 5:
        raise ValidationError("too few points inside the TV window")
    slope, _ = np.polyfit(np.asarray(times)[sel], np.log(tv[sel]), 1)
    return float(-slope)


def fit_exponential_rate(times: np.ndarray, values: np.ndarray) -> float:
    slope, _ = np.polyfit(np.asarray(times), np.log(np.asarray(values)), 1)
    return float(-slope)
