"""Leafwise pressure: orbit sums, packed separated sets, and growth-rate fits.

The sup over separated subsets of a leaf disk is bracketed by a greedy
weighted packing (lower bound) and a spanning-set comparison (upper
bound).  Growth rates in n are extracted by a least-squares slope over the
upper half of the n grid at the smallest separation scale, which removes
additive constants and most of the disk-boundary transient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .rds import (
    Cocycle,
    DrivingSystem,
    EstimatorError,
    SkewState,
    SymbolPath,
    TorusPoint,
    sample_path,
)
from .oseledets import OseledetsReport, lyapunov_spectrum
from .leafgeom import (
    UnstableDisk,
    bowen_step_arcs,
    leaf_growth_factors,
    unstable_disk,
)

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

__all__ = [
    "Potential",
    "zero_potential",
    "constant_potential",
    "per_symbol_potential",
    "coordinate_potential",
    "combine_potentials",
    "theta_coboundary",
    "potential_norm",
    "birkhoff_sum",
    "SeparatedSetResult",
    "maximal_separated_set",
    "GridSpec",
    "CellRecord",
    "PressureEstimate",
    "pressure_estimate",
    "topological_entropy",
    "PropertyCheck",
    "PropertySuiteReport",
    "pressure_property_suite",
    "fit_slope",
]

# Estimator discreteness (packing staircases, grid quantization) is not
# captured by regression standard errors, so every confidence half-width
# carries this floor.
CI_FLOOR = 0.01

_MAX_MATERIALIZED = 2_000_000


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """A potential on (symbol path, torus point), continuous in the point.

    x-independent potentials carry symbol_fn (value per current symbol) and
    admit closed-form orbit sums; x-dependent ones carry a vectorized
    evaluator.  l1_bound bounds the per-fiber sup of |phi|; lipschitz is a
    modulus for |phi(w,x)-phi(w,y)| <= lipschitz * d(x,y).
    """

    kind: str
    label: str
    l1_bound: float
    lipschitz: float
    symbol_fn: Callable[[int], float] | None = None
    vector_fn: Callable[[SymbolPath, np.ndarray], np.ndarray] | None = None

    @property
    def x_independent(self) -> bool:
        return self.vector_fn is None

    def value(self, path: SymbolPath, point: TorusPoint) -> float:
        if self.x_independent:
            return float(self.symbol_fn(path.symbol(0)))
        return float(self.vector_fn(path, point.as_array().reshape(1, -1))[0])

    __call__ = value

    def values(self, path: SymbolPath, pts: np.ndarray) -> np.ndarray:
        if self.x_independent:
            return np.full(pts.shape[0], float(self.symbol_fn(path.symbol(0))))
        return np.asarray(self.vector_fn(path, pts), dtype=float)

    def step_constant(self, path: SymbolPath, j: int) -> float:
        """Value at orbit step j for x-independent potentials."""
        if not self.x_independent:
            raise ValueError("potential depends on the fiber point")
        return float(self.symbol_fn(path.symbol(j)))


def zero_potential() -> Potential:
    return Potential(kind="zero", label="zero", l1_bound=0.0, lipschitz=0.0,
                     symbol_fn=lambda s: 0.0)


def constant_potential(c: float, label: str | None = None) -> Potential:
    return Potential(
        kind="constant-per-symbol",
        label=label or f"const:{c:g}",
        l1_bound=abs(c),
        lipschitz=0.0,
        symbol_fn=lambda s, c=float(c): c,
    )


def per_symbol_potential(table, label: str | None = None) -> Potential:
    tab = tuple(float(v) for v in table)
    return Potential(
        kind="constant-per-symbol",
        label=label or "per-symbol",
        l1_bound=max(abs(v) for v in tab),
        lipschitz=0.0,
        symbol_fn=lambda s, tab=tab: tab[s],
    )


def coordinate_potential(
    amplitude: float,
    wavevector,
    phase: float = 0.0,
    fn: str = "cos",
    label: str | None = None,
) -> Potential:
    """a * cos(2 pi k.x + phase) (or sin), a smooth coordinate observable."""
    k = np.asarray(wavevector, dtype=float)
    trig = np.cos if fn == "cos" else np.sin
    amp = float(amplitude)

    def vec(path, pts, k=k, amp=amp, phase=phase, trig=trig):
        return amp * trig(2.0 * math.pi * (pts @ k) + phase)

    return Potential(
        kind="coordinate-observable",
        label=label or f"{fn}:{amplitude:g}@{'_'.join(str(int(v)) for v in k)}",
        l1_bound=abs(amp),
        lipschitz=2.0 * math.pi * abs(amp) * float(np.sum(np.abs(k))),
        vector_fn=vec,
    )


def combine_potentials(terms, label: str | None = None) -> Potential:
    """Weighted sum of potentials: terms is a list of (weight, Potential)."""
    terms = [(float(w), p) for w, p in terms]
    l1 = sum(abs(w) * p.l1_bound for w, p in terms)
    lip = sum(abs(w) * p.lipschitz for w, p in terms)
    if all(p.x_independent for _, p in terms):
        def sym(s, terms=terms):
            return sum(w * p.symbol_fn(s) for w, p in terms)

        return Potential(
            kind="custom-sum",
            label=label or "+".join(f"{w:g}*{p.label}" for w, p in terms),
            l1_bound=l1,
            lipschitz=lip,
            symbol_fn=sym,
        )

    def vec(path, pts, terms=terms):
        out = np.zeros(pts.shape[0])
        for w, p in terms:
            out += w * p.values(path, pts)
        return out

    return Potential(
        kind="custom-sum",
        label=label or "+".join(f"{w:g}*{p.label}" for w, p in terms),
        l1_bound=l1,
        lipschitz=lip,
        vector_fn=vec,
    )


def theta_coboundary(cocycle: Cocycle, sigma: Potential, label: str | None = None) -> Potential:
    """The coboundary sigma o Theta - sigma as a potential."""

    def vec(path, pts, cocycle=cocycle, sigma=sigma):
        m = cocycle.map_for(path.symbol(0))
        return sigma.values(path.shifted(1), m.apply(pts)) - sigma.values(path, pts)

    return Potential(
        kind="custom-sum",
        label=label or f"cobdry({sigma.label})",
        l1_bound=2.0 * sigma.l1_bound,
        lipschitz=sigma.lipschitz * (1.0 + cocycle.lipschitz),
        vector_fn=vec,
    )


def potential_norm(
    potential: Potential, system: DrivingSystem, grid: int = 64, dim: int = 2
) -> float:
    """Base-averaged fiber sup of |phi|, evaluated per symbol on a grid."""
    dist = system.distribution_array
    if potential.x_independent:
        return float(sum(p * abs(potential.symbol_fn(s)) for s, p in enumerate(dist)))
    # x-dependent evaluators in this artifact do not read beyond symbol 0,
    # so a one-symbol window per symbol value is enough for the sup.
    total = 0.0
    for s, p in enumerate(dist):
        if p == 0.0:
            continue
        path = SymbolPath(symbols=(s,) * 3, half_window=1)
        axes = [np.linspace(0.0, 1.0, grid, endpoint=False)] * dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        total += p * float(np.max(np.abs(potential.values(path, pts))))
    return total


def birkhoff_sum(
    cocycle: Cocycle, potential: Potential, path: SymbolPath, x: TorusPoint, n: int
) -> float:
    """Orbit sum of the potential over steps 0..n-1."""
    if n < 1:
        raise ValueError("need n >= 1")
    if potential.x_independent:
        return float(sum(potential.step_constant(path, j) for j in range(n)))
    pt = x.as_array().reshape(1, -1)
    total = 0.0
    for j in range(n):
        total += float(potential.vector_fn(path.shifted(j), pt)[0])
        pt = cocycle.map_for(path.symbol(j)).apply(pt)
    return total


# ---------------------------------------------------------------------------
# Separated sets
# ---------------------------------------------------------------------------


if _HAVE_NUMBA:

    @njit(cache=False)
    def _greedy_kernel(order, lo, hi, n_candidates):  # pragma: no cover - jit
        blocked = np.zeros(n_candidates, dtype=np.bool_)
        selected = np.empty(n_candidates, dtype=np.int64)
        count = 0
        for t in range(order.shape[0]):
            idx = order[t]
            if not blocked[idx]:
                selected[count] = idx
                count += 1
                a = lo[idx]
                b = hi[idx]
                for j in range(a, b + 1):
                    blocked[j] = True
        return selected[:count]

else:

    def _greedy_kernel(order, lo, hi, n_candidates):
        blocked = np.zeros(n_candidates, dtype=bool)
        selected = []
        for idx in order:
            if not blocked[idx]:
                selected.append(idx)
                blocked[lo[idx] : hi[idx] + 1] = True
        return np.asarray(selected, dtype=np.int64)


@dataclass(frozen=True)
class SeparatedSetResult:
    """A packed separated subset of a leaf disk with its weighted orbit sum.

    log_weighted_sum is the packing lower bound for the sup; log_upper the
    spanning-set upper bound.  points holds the selected leaf parameters
    unless the analytic lattice is too large to materialize.
    """

    points: np.ndarray | None
    count: float
    n: int
    epsilon: float
    log_weighted_sum: float
    log_upper: float
    method: str
    potential_label: str = ""

    @property
    def weighted_sum(self) -> float:
        return float(math.exp(self.log_weighted_sum)) if self.log_weighted_sum < 700 else math.inf

    def verify_separation(self, cocycle: Cocycle, disk: UnstableDisk, tol: float = 0.0) -> bool:
        """Exact pairwise check (quadratic; meant for small sets in tests)."""
        from .leafgeom import bowen_distance

        if self.points is None:
            raise EstimatorError("points were not materialized for this set")
        pts = [disk.chart(float(t)) for t in np.atleast_1d(self.points)]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if bowen_distance(cocycle, disk, self.n, pts[i], pts[j]) <= self.epsilon - tol:
                    return False
        return True


def _orbit_sums(cocycle, path, potential, pts: np.ndarray, n: int) -> np.ndarray:
    """Vector of orbit sums S_n(phi) over an array of starting points."""
    total = np.zeros(pts.shape[0])
    cur = pts
    for j in range(n):
        total += potential.values(path.shifted(j), cur)
        cur = cocycle.map_for(path.symbol(j)).apply(cur)
    return total


def _profile_windows(arcs: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-candidate index windows of <= epsilon dynamical distance."""
    n, m = arcs.shape
    lo = np.zeros(m, dtype=np.int64)
    hi = np.full(m, m - 1, dtype=np.int64)
    for j in range(n):
        row = arcs[j]
        lo = np.maximum(lo, np.searchsorted(row, row - epsilon, side="left"))
        hi = np.minimum(hi, np.searchsorted(row, row + epsilon, side="right") - 1)
    return lo, hi


def _profile_pack_indices(arcs: np.ndarray, epsilon: float, limit: int) -> np.ndarray:
    """Left-to-right walk selecting indices pairwise > epsilon apart."""
    n, m = arcs.shape
    out = [0]
    i = 0
    while True:
        nxt = m
        for j in range(n):
            row = arcs[j]
            nxt = min(nxt, int(np.searchsorted(row, row[i] + epsilon, side="right")))
        if nxt >= m:
            break
        out.append(nxt)
        i = nxt
        if len(out) > limit:
            raise EstimatorError("separated set exceeds materialization limit")
    return np.asarray(out, dtype=np.int64)


def _profile_cover_indices(arcs: np.ndarray, epsilon: float, limit: int) -> np.ndarray:
    """Centers of a cover by dynamical balls of radius epsilon/2."""
    n, m = arcs.shape
    half = epsilon / 2.0
    centers = []
    edge = 0
    while edge < m:
        c = m - 1
        for j in range(n):
            row = arcs[j]
            c = min(c, int(np.searchsorted(row, row[edge] + half, side="right")) - 1)
        c = max(c, edge)
        centers.append(c)
        nxt = m
        for j in range(n):
            row = arcs[j]
            nxt = min(nxt, int(np.searchsorted(row, row[c] + half, side="right")))
        if nxt <= edge:
            nxt = edge + 1
        edge = nxt
        if len(centers) > limit:
            raise EstimatorError("cover exceeds materialization limit")
    return np.asarray(centers, dtype=np.int64)


def maximal_separated_set(
    cocycle: Cocycle,
    disk: UnstableDisk,
    potential: Potential,
    n: int,
    epsilon: float,
    grid_factor: int = 8,
    max_candidates: int = 6_000_000,
    materialize: bool = True,
    growth: np.ndarray | None = None,
) -> SeparatedSetResult:
    """Greedy weighted packing of the disk at dynamical scale (n, epsilon).

    Candidates on a grid of dynamical step epsilon/grid_factor are selected
    in decreasing exp(S_n phi) order subject to pairwise separation > eps;
    for x-independent potentials the selection collapses to the analytic
    left-to-right lattice (identical outcome, no enumeration).  The upper
    bound comes from an (n, epsilon/2) spanning set plus the orbit-sum
    modulus n * lipschitz * epsilon / 2.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    path = disk.base.path
    if disk.leaf_dim == 2:
        return _separated_set_2d(cocycle, disk, potential, n, epsilon, max_candidates)

    length = 2.0 * disk.radius

    if disk.construction == "linear-exact":
        if growth is None or len(growth) < n:
            growth = leaf_growth_factors(cocycle, disk, n)
        gstar = float(np.max(growth[:n]))
        if potential.x_independent:
            sn = sum(potential.step_constant(path, j) for j in range(n))
            spacing = epsilon * (1.0 + 1e-9) / gstar
            count = math.floor(length / spacing) + 1
            cover = max(1, math.ceil(length * gstar / epsilon))
            pts = None
            if materialize and count <= _MAX_MATERIALIZED:
                pts = -disk.radius + spacing * np.arange(count)
            return SeparatedSetResult(
                points=pts,
                count=float(count),
                n=n,
                epsilon=epsilon,
                log_weighted_sum=math.log(count) + sn,
                log_upper=math.log(cover) + sn,
                method="grid-exhaustive",
                potential_label=potential.label,
            )
        h = epsilon / (grid_factor * gstar)
        n_cand = math.floor(length / h) + 1
        if n_cand > max_candidates:
            raise EstimatorError(
                f"separated-set grid needs {n_cand} candidates; raise epsilon or lower n"
            )
        params = -disk.radius + h * np.arange(n_cand)
        lo = np.maximum(np.arange(n_cand) - grid_factor, 0)
        hi = np.minimum(np.arange(n_cand) + grid_factor, n_cand - 1)
        cover_step = epsilon / gstar
        n_cover = max(1, math.ceil(length / cover_step))
        cover_params = -disk.radius + cover_step * (np.arange(n_cover) + 0.5)
        cover_params = np.clip(cover_params, -disk.radius, disk.radius)
    else:
        params = disk.params
        arcs = bowen_step_arcs(cocycle, disk, n, params)
        gaps = np.max(np.diff(arcs, axis=1))
        if gaps > epsilon / (2.0 * grid_factor):
            raise EstimatorError("grid too coarse for requested epsilon; refine the disk")
        if potential.x_independent:
            sn = sum(potential.step_constant(path, j) for j in range(n))
            pack = _profile_pack_indices(arcs, epsilon, max_candidates)
            cover = _profile_cover_indices(arcs, epsilon, max_candidates)
            return SeparatedSetResult(
                points=params[pack],
                count=float(len(pack)),
                n=n,
                epsilon=epsilon,
                log_weighted_sum=math.log(len(pack)) + sn,
                log_upper=math.log(len(cover)) + sn,
                method="grid-exhaustive",
                potential_label=potential.label,
            )
        lo, hi = _profile_windows(arcs, epsilon)
        cover_idx = _profile_cover_indices(arcs, epsilon, max_candidates)
        cover_params = params[cover_idx]
        n_cand = len(params)

    pts0 = disk.chart(params)
    weights = _orbit_sums(cocycle, path, potential, pts0, n)
    order = np.argsort(-weights, kind="stable")
    selected = _greedy_kernel(
        order.astype(np.int64), lo.astype(np.int64), hi.astype(np.int64), n_cand
    )
    selected = np.sort(selected)
    log_lower = float(logsumexp(weights[selected]))

    cover_pts = disk.chart(cover_params)
    cover_weights = _orbit_sums(cocycle, path, potential, cover_pts, n)
    log_upper = float(logsumexp(cover_weights)) + n * potential.lipschitz * epsilon / 2.0

    return SeparatedSetResult(
        points=params[selected],
        count=float(len(selected)),
        n=n,
        epsilon=epsilon,
        log_weighted_sum=log_lower,
        log_upper=log_upper,
        method="grid-exhaustive",
        potential_label=potential.label,
    )


def _separated_set_2d(cocycle, disk, potential, n, epsilon, max_candidates):
    """Sampled greedy packing for 2-d leaves (no exhaustive guarantee)."""
    path = disk.base.path
    # derivative images of the frame along the orbit, for pair distances
    mats = [disk.frame.copy()]
    pt = disk.base.point.as_array()
    for j in range(n - 1):
        m = cocycle.map_for(path.symbol(j))
        mats.append(m.jacobian(pt) @ mats[-1])
        pt = m.apply(pt)
    smax = max(float(np.linalg.norm(m, 2)) for m in mats)
    side = max(2, int(min(200, math.sqrt(max_candidates))))
    axis = np.linspace(-disk.radius, disk.radius, side)
    tt = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    pts = disk.chart(tt)
    weights = _orbit_sums(cocycle, path, potential, pts, n)
    order = np.argsort(-weights, kind="stable")
    chosen: list[int] = []
    chosen_t: list[np.ndarray] = []
    stack = [np.asarray(m) for m in mats]
    for idx in order:
        t = tt[idx]
        ok = True
        for s in chosen_t:
            diff = t - s
            dist = max(float(np.linalg.norm(m @ diff)) for m in stack)
            if dist <= epsilon:
                ok = False
                break
        if ok:
            chosen.append(int(idx))
            chosen_t.append(t)
    log_lower = float(logsumexp(weights[chosen]))
    cover_step = epsilon / (math.sqrt(2.0) * smax)
    n_cover = max(1, math.ceil(2.0 * disk.radius / cover_step))
    log_upper = (
        math.log(n_cover**2)
        + float(np.max(weights))
        + n * potential.lipschitz * epsilon / 2.0
    )
    return SeparatedSetResult(
        points=tt[chosen],
        count=float(len(chosen)),
        n=n,
        epsilon=epsilon,
        log_weighted_sum=log_lower,
        log_upper=max(log_upper, log_lower),
        method="greedy-max",
        potential_label=potential.label,
    )


# ---------------------------------------------------------------------------
# Pressure pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Shared estimator grids: leaf radius, time grid, scales, base points."""

    delta: float = 0.1
    n_grid: tuple[int, ...] = (8, 9, 10, 11, 12, 13, 14)
    eps_grid: tuple[float, ...] = (0.02, 0.04)
    base_grid: int = 5
    omega_samples: int = 1

    def __post_init__(self):
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if not self.eps_grid or any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("eps_grid must be strictly increasing")
        if min(self.eps_grid) <= 0:
            raise ValueError("eps_grid must be positive")
        if self.base_grid < 1 or self.omega_samples < 1:
            raise ValueError("base_grid and omega_samples must be >= 1")

    @property
    def upper_half(self) -> tuple[int, ...]:
        half = self.n_grid[len(self.n_grid) // 2 :]
        return half if len(half) >= 2 else self.n_grid


@dataclass(frozen=True)
class CellRecord:
    omega_seed: int
    x_index: int
    delta: float
    n: int
    epsilon: float
    log_lower: float
    log_upper: float
    potential_id: str


def fit_slope(ns, ys) -> tuple[float, float, float]:
    """OLS slope of ys against ns: (slope, standard error, max residual)."""
    x = np.asarray(ns, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two points for a slope")
    xm = x - x.mean()
    denom = float(xm @ xm)
    slope = float(xm @ y) / denom
    resid = y - (y.mean() + slope * xm)
    if len(x) > 2:
        se = math.sqrt(float(resid @ resid) / (len(x) - 2) / denom)
    else:
        se = 0.0
    return slope, se, float(np.max(np.abs(resid)))


def _base_points(dim: int, grid: int) -> list[TorusPoint]:
    axis = (np.arange(grid) + 0.5) / grid
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return [TorusPoint(tuple(row)) for row in mesh]


@dataclass(frozen=True)
class PressureEstimate:
    """Fitted leafwise pressure with its bracket table and spread diagnostics.

    value is the slope of log(weighted sum) against n over the upper half
    of the time grid at the smallest separation scale, sup'd over the base
    points and averaged over base samples.
    """

    value: float
    slope_ci: float
    per_n_log: dict[int, float]
    eps_grid: tuple[float, ...]
    delta: float
    n_grid: tuple[int, ...]
    omega_samples: int
    spread: float
    residual: float
    omega_values: tuple[float, ...]
    cells: tuple[CellRecord, ...]
    potential_label: str
    bracket_ok: bool

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "slope_ci": self.slope_ci,
            "per_n_log": {str(k): v for k, v in sorted(self.per_n_log.items())},
            "eps_grid": list(self.eps_grid),
            "delta": self.delta,
            "n_grid": list(self.n_grid),
            "omega_samples": self.omega_samples,
            "spread": self.spread,
            "residual": self.residual,
            "potential": self.potential_label,
            "bracket_ok": self.bracket_ok,
        }

    def csv_rows(self):
        header = [
            "omega_seed",
            "x_index",
            "delta",
            "n",
            "epsilon",
            "log_lower",
            "log_upper",
            "potential_id",
        ]
        rows = [
            [
                c.omega_seed,
                c.x_index,
                c.delta,
                c.n,
                c.epsilon,
                c.log_lower,
                c.log_upper,
                c.potential_id,
            ]
            for c in self.cells
        ]
        return header, rows


def pressure_estimate(
    cocycle: Cocycle,
    system: DrivingSystem,
    potential: Potential,
    grid: GridSpec,
    seed: int,
    frame_steps: int = 256,
    resolution: float | None = None,
    keep_cells: bool = True,
) -> PressureEstimate:
    """Estimate the leafwise pressure of the potential on the given system.

    For each sampled base path and each base point: pack separated sets at
    every (n, eps) cell, fit the growth slope at the smallest eps over the
    upper half of n_grid, take the largest slope over base points, then
    average over base samples.  The per-sample value spread at the largest
    n is recorded as a concentration diagnostic.
    """
    n_max = grid.n_grid[-1]
    half_window = max(n_max, frame_steps) + 2
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x9E55])
    path_seeds = [int(rng.integers(0, 2**63 - 1)) for _ in range(grid.omega_samples)]
    base_pts = _base_points(cocycle.dim, grid.base_grid)
    eps_min = grid.eps_grid[0]
    spectrum_n = max(128, frame_steps)

    cells: list[CellRecord] = []
    omega_slopes: list[float] = []
    omega_fit_se: list[float] = []
    omega_residual: list[float] = []
    omega_nmax_vals: list[float] = []
    per_n_accum: dict[int, list[float]] = {n: [] for n in grid.n_grid}
    bracket_ok = True

    for pseed in path_seeds:
        path = sample_path(system, half_window, pseed)
        shared_report: OseledetsReport | None = None
        best = None  # (slope, se, resid, logs_at_emin, nmax_log)
        for xi, x in enumerate(base_pts):
            if cocycle.has_constant_jacobian and shared_report is not None:
                report = shared_report
            else:
                report = lyapunov_spectrum(
                    cocycle, path, x, spectrum_n, frame_steps=frame_steps, frame_seed=pseed
                )
                if cocycle.has_constant_jacobian:
                    shared_report = report
            state = SkewState(path=path, point=x)
            if report.unstable_index == 0:
                # trivial leaf: the only separated set is the point itself,
                # so every cell contributes log 1 = 0
                zeros = [0.0] * len(grid.n_grid)
                slope = 0.0
                if best is None or slope > best[0]:
                    best = (0.0, 0.0, 0.0, zeros, 0.0)
                continue
            disk = unstable_disk(cocycle, state, grid.delta, report, resolution=resolution)
            growth = (
                leaf_growth_factors(cocycle, disk, n_max)
                if disk.construction == "linear-exact"
                else None
            )
            logs_at_emin = []
            for n in grid.n_grid:
                for eps in grid.eps_grid:
                    res = maximal_separated_set(
                        cocycle, disk, potential, n, eps, materialize=False, growth=growth
                    )
                    if res.log_weighted_sum > res.log_upper + 1e-9:
                        bracket_ok = False
                    if keep_cells:
                        cells.append(
                            CellRecord(
                                omega_seed=pseed,
                                x_index=xi,
                                delta=grid.delta,
                                n=n,
                                epsilon=eps,
                                log_lower=res.log_weighted_sum,
                                log_upper=res.log_upper,
                                potential_id=potential.label,
                            )
                        )
                    if eps == eps_min:
                        logs_at_emin.append(res.log_weighted_sum)
            sel = [grid.n_grid.index(n) for n in grid.upper_half]
            slope, se, resid = fit_slope(
                grid.upper_half, [logs_at_emin[i] for i in sel]
            )
            nmax_log = logs_at_emin[-1] / grid.n_grid[-1]
            if best is None or slope > best[0]:
                best = (slope, se, resid, logs_at_emin, nmax_log)
        omega_slopes.append(best[0])
        omega_fit_se.append(best[1])
        omega_residual.append(best[2])
        omega_nmax_vals.append(best[4])
        for n, val in zip(grid.n_grid, best[3]):
            per_n_accum[n].append(val)

    value = float(np.mean(omega_slopes))
    s = grid.omega_samples
    sem = float(np.std(omega_slopes, ddof=1) / math.sqrt(s)) if s > 1 else 0.0
    slope_ci = 2.0 * sem + 2.0 * float(np.mean(omega_fit_se)) + CI_FLOOR
    mean_nmax = float(np.mean(omega_nmax_vals))
    spread = (
        float(np.std(omega_nmax_vals, ddof=1)) / abs(mean_nmax)
        if s > 1 and mean_nmax != 0.0
        else 0.0
    )
    return PressureEstimate(
        value=value,
        slope_ci=slope_ci,
        per_n_log={n: float(np.mean(v)) for n, v in per_n_accum.items()},
        eps_grid=grid.eps_grid,
        delta=grid.delta,
        n_grid=grid.n_grid,
        omega_samples=grid.omega_samples,
        spread=spread,
        residual=float(np.max(omega_residual)),
        omega_values=tuple(omega_slopes),
        cells=tuple(cells),
        potential_label=potential.label,
        bracket_ok=bracket_ok,
    )


def topological_entropy(
    cocycle: Cocycle, system: DrivingSystem, grid: GridSpec, seed: int, **kwargs
) -> PressureEstimate:
    """Leafwise growth rate of packing counts: pressure at the zero potential."""
    return pressure_estimate(cocycle, system, zero_potential(), grid, seed, **kwargs)


# ---------------------------------------------------------------------------
# Pressure property suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    slack: float
    detail: str


@dataclass(frozen=True)
class PropertySuiteReport:
    checks: tuple[PropertyCheck, ...]
    estimates: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "all_passed": bool(self.all_passed),
            "checks": [
                {"name": c.name, "passed": bool(c.passed), "slack": float(c.slack),
                 "detail": c.detail}
                for c in self.checks
            ],
            "estimates": {k: v.to_json_dict() for k, v in self.estimates.items()},
        }


def _fiber_extrema(potential: Potential, system: DrivingSystem, dim: int = 2, grid: int = 96):
    """Base-averaged fiber min and max of the potential."""
    dist = system.distribution_array
    lo = hi = 0.0
    for s, p in enumerate(dist):
        if p == 0.0:
            continue
        path = SymbolPath(symbols=(s,) * 3, half_window=1)
        if potential.x_independent:
            v = potential.symbol_fn(s)
            lo += p * v
            hi += p * v
            continue
        axes = [np.linspace(0.0, 1.0, grid, endpoint=False)] * dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        vals = potential.values(path, pts)
        lo += p * float(np.min(vals))
        hi += p * float(np.max(vals))
    return lo, hi


def _pointwise_leq(
    phi: Potential, psi: Potential, system: DrivingSystem, dim: int = 2, grid: int = 48
) -> bool:
    for s in range(system.symbol_count):
        path = SymbolPath(symbols=(s,) * 3, half_window=1)
        axes = [np.linspace(0.0, 1.0, grid, endpoint=False)] * dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        if np.any(phi.values(path, pts) > psi.values(path, pts) + 1e-12):
            return False
    return True


def pressure_property_suite(
    cocycle: Cocycle,
    system: DrivingSystem,
    potentials: list[Potential],
    grid: GridSpec,
    seed: int,
    sigma: Potential | None = None,
) -> PropertySuiteReport:
    """Check the structural laws of the pressure functional at estimator level.

    Exactness claims (constant shift, monotone orderings) use shared
    separated sets; inequality claims carry a 2x combined-confidence slack.
    """
    if len(potentials) < 2:
        raise ValueError("need at least two potentials")
    if sigma is None:
        sigma = coordinate_potential(0.3, [1] + [0] * (cocycle.dim - 1), label="sigma")

    est: dict[str, PressureEstimate] = {}

    def estimate(p: Potential) -> PressureEstimate:
        if p.label not in est:
            est[p.label] = pressure_estimate(
                cocycle, system, p, grid, seed, keep_cells=False
            )
        return est[p.label]

    zero = zero_potential()
    h_top = estimate(zero)
    for p in potentials:
        estimate(p)

    checks: list[PropertyCheck] = []

    # (i) monotonicity: phi <= psi pointwise forces P(phi) <= P(psi).
    mono_slack = math.inf
    pairs = 0
    for a in potentials:
        for b in potentials:
            if a.label == b.label:
                continue
            if _pointwise_leq(a, b, system, dim=cocycle.dim):
                pairs += 1
                mono_slack = min(
                    mono_slack,
                    estimate(b).value
                    - estimate(a).value
                    + estimate(a).slope_ci
                    + estimate(b).slope_ci,
                )
    if pairs == 0:
        checks.append(PropertyCheck("monotonicity", True, math.inf, "no ordered pair in family"))
    else:
        checks.append(
            PropertyCheck(
                "monotonicity",
                mono_slack >= 0.0,
                mono_slack if math.isfinite(mono_slack) else 0.0,
                f"{pairs} ordered pairs",
            )
        )

    # (ii) constant shift exactness on shared sets.
    c = 0.3
    base = potentials[0]
    shifted = combine_potentials([(1.0, base), (1.0, constant_potential(c))],
                                 label=f"{base.label}+{c:g}")
    diff = estimate(shifted).value - estimate(base).value - c
    checks.append(
        PropertyCheck("constant-shift", abs(diff) <= 1e-9, -abs(diff), f"|diff|={abs(diff):.2e}")
    )

    # (iii) entropy bounds through fiber extrema.
    slack3 = math.inf
    for p in potentials:
        lo, hi = _fiber_extrema(p, system, dim=cocycle.dim)
        tol = 2.0 * (estimate(p).slope_ci + h_top.slope_ci)
        slack3 = min(slack3, estimate(p).value - (h_top.value + lo) + tol)
        slack3 = min(slack3, (h_top.value + hi) - estimate(p).value + tol)
    checks.append(PropertyCheck("entropy-bounds", slack3 >= 0.0, slack3, "all family members"))

    # (iv) Lipschitz bound in the averaged fiber sup norm.
    slack4 = math.inf
    for i, a in enumerate(potentials):
        for b in potentials[i + 1 :]:
            norm = potential_norm(
                combine_potentials([(1.0, a), (-1.0, b)], label="diff"),
                system,
                dim=cocycle.dim,
            )
            tol = 2.0 * (estimate(a).slope_ci + estimate(b).slope_ci)
            slack4 = min(
                slack4, norm + tol - abs(estimate(a).value - estimate(b).value)
            )
    checks.append(PropertyCheck("lipschitz", slack4 >= 0.0, slack4, "all pairs"))

    # (v) convexity along a five-point segment; prefer an x-dependent pair
    # so the check does not collapse to the exact constant case.
    nonconst = [p for p in potentials if not p.x_independent]
    if len(nonconst) >= 2:
        a, b = nonconst[0], nonconst[1]
    else:
        a, b = potentials[0], potentials[1]
    slack5 = math.inf
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        combo = combine_potentials(
            [(t, a), (1.0 - t, b)], label=f"seg:{t:g}*{a.label}+{1 - t:g}*{b.label}"
        )
        tol = 2.0 * (
            t * estimate(a).slope_ci + (1.0 - t) * estimate(b).slope_ci
            + estimate(combo).slope_ci
        )
        slack5 = min(
            slack5,
            t * estimate(a).value + (1.0 - t) * estimate(b).value
            - estimate(combo).value + tol,
        )
    checks.append(PropertyCheck("convexity", slack5 >= 0.0, slack5, "5-point segment"))

    # (vi) coboundary invariance.
    cob = combine_potentials(
        [(1.0, base), (1.0, theta_coboundary(cocycle, sigma))],
        label=f"{base.label}+cobdry",
    )
    tol6 = 2.0 * (estimate(base).slope_ci + estimate(cob).slope_ci)
    diff6 = abs(estimate(cob).value - estimate(base).value)
    checks.append(
        PropertyCheck("coboundary-invariance", diff6 <= tol6, tol6 - diff6, f"diff={diff6:.3g}")
    )

    # (vii) subadditivity.
    both = combine_potentials([(1.0, a), (1.0, b)], label=f"{a.label}+{b.label}")
    tol7 = 2.0 * (estimate(a).slope_ci + estimate(b).slope_ci + estimate(both).slope_ci)
    slack7 = estimate(a).value + estimate(b).value + tol7 - estimate(both).value
    checks.append(PropertyCheck("subadditivity", slack7 >= 0.0, slack7, ""))

    return PropertySuiteReport(checks=tuple(checks), estimates=est)
