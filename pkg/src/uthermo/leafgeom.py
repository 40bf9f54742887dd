"""Local expanding-leaf geometry: disks, intrinsic and dynamical metrics, volume.

Disks are charts over the expanding direction at a base state, arc-length
parametrized.  Constant-Jacobian cocycles get exact affine charts; sheared
maps get a polyline chart grown by pushing a flat seed forward from the
past (a graph-transform fixed point).  Everything is local at scale
radius <= 0.25 so charts are injective on the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rds import (
    Cocycle,
    EstimatorError,
    SkewState,
    TorusPoint,
    compose,
    reduce_mod1,
)
from .oseledets import OseledetsReport

__all__ = [
    "TrivialLeafError",
    "OffLeafError",
    "UnstableDisk",
    "BowenMetric",
    "unstable_disk",
    "leaf_distance",
    "bowen_distance",
    "leaf_volume",
    "leaf_growth_factors",
    "bowen_step_arcs",
]

GRAPH_TOL = 1e-9
GRAPH_MAX_ITER = 200


class TrivialLeafError(ValueError):
    """The expanding bundle is trivial; the leaf through the point is a point."""


class OffLeafError(ValueError):
    """A queried point does not lie on the disk within tolerance."""


@dataclass(frozen=True)
class UnstableDisk:
    """Local expanding-leaf chart of radius `radius` at `base`.

    Linear-exact charts map parameters t to base + frame @ t (mod 1) and
    are unit speed.  Polyline charts store a lifted, arc-length
    parametrized sample of the leaf.  chart(0) is the base point.
    """

    base: SkewState
    radius: float
    frame: np.ndarray
    construction: str
    params: np.ndarray | None = None
    points_lift: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    @property
    def leaf_dim(self) -> int:
        return self.frame.shape[1]

    @property
    def base_lift(self) -> np.ndarray:
        return self.base.point.as_array()

    def chart_lift(self, t) -> np.ndarray:
        """Lifted chart: parameters (scalar, (k,), or (k,u)) to points in R^d."""
        if self.construction == "linear-exact":
            t_arr = np.asarray(t, dtype=float)
            if self.leaf_dim == 1 and (t_arr.ndim == 0 or t_arr.ndim == 1):
                t_arr = t_arr.reshape(-1, 1)
            return self.base_lift + t_arr @ self.frame.T
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t_arr.shape[0], self.dim))
        for c in range(self.dim):
            out[:, c] = np.interp(t_arr, self.params, self.points_lift[:, c])
        return out

    def chart(self, t):
        """Chart into the torus; scalar t gives a TorusPoint, arrays give arrays."""
        pts = reduce_mod1(self.chart_lift(t))
        if np.asarray(t).ndim == 0:
            return TorusPoint(tuple(pts.reshape(-1)))
        return pts

    def param_of(self, y: TorusPoint, tol: float = 1e-8, radius_slack: float = 1.0):
        """Invert the chart at y; raises OffLeafError beyond tolerance."""
        ya = y.as_array()
        if self.construction == "linear-exact":
            diff = ya - self.base_lift
            diff -= np.round(diff)
            t = self.frame.T @ diff
            residual = float(np.linalg.norm(diff - self.frame @ t))
            if residual > tol:
                raise OffLeafError(f"point off leaf (residual {residual:.2e})")
            if np.any(np.abs(t) > self.radius * radius_slack + tol):
                raise OffLeafError("point outside the chart domain")
            return float(t[0]) if self.leaf_dim == 1 else t
        # polyline: nearest vertex, then projection on the adjacent segment
        diffs = self.points_lift - ya
        diffs -= np.round(diffs)
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        i = int(np.argmin(d2))
        best_t, best_res = self.params[i], math.sqrt(d2[i])
        for j in (i - 1, i):
            if 0 <= j < len(self.params) - 1:
                a = self.points_lift[j]
                b = self.points_lift[j + 1]
                ya_loc = ya + np.round(a - ya)
                seg = b - a
                denom = float(seg @ seg)
                if denom == 0.0:
                    continue
                lam = float(np.clip((ya_loc - a) @ seg / denom, 0.0, 1.0))
                proj = a + lam * seg
                res = float(np.linalg.norm(proj - ya_loc))
                if res < best_res:
                    best_res = res
                    best_t = self.params[j] + lam * (self.params[j + 1] - self.params[j])
        if best_res > tol:
            raise OffLeafError(f"point off leaf (residual {best_res:.2e})")
        return float(best_t)

    @property
    def resolution(self) -> float:
        if self.params is None:
            return 0.0
        return float(self.params[1] - self.params[0])


def _arc_lengths(pts: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _push_and_trim(m, pts: np.ndarray, delta: float, n_pts: int) -> np.ndarray:
    """Push a lifted polyline through one map, recentre, trim to radius delta."""
    out = m.apply_lift(pts)
    mid = len(out) // 2
    s = _arc_lengths(out) - _arc_lengths(out)[mid]
    if s[-1] < delta or -s[0] < delta:
        raise EstimatorError("graph transform diverged: pushed leaf shorter than radius")
    t_new = np.linspace(-delta, delta, n_pts)
    resampled = np.empty((n_pts, out.shape[1]))
    for c in range(out.shape[1]):
        resampled[:, c] = np.interp(t_new, s, out[:, c])
    return resampled


def unstable_disk(
    cocycle: Cocycle,
    state: SkewState,
    delta: float,
    report: OseledetsReport,
    construction: str | None = None,
    resolution: float | None = None,
) -> UnstableDisk:
    """Build the local expanding-leaf chart of radius delta at `state`.

    Constant-Jacobian cocycles get the exact affine leaf in the expanding
    directions.  Otherwise a flat seed is pushed forward from k steps in
    the past for growing k until the chart moves less than GRAPH_TOL in
    sup norm (or GRAPH_MAX_ITER is hit).
    """
    if report.unstable_index == 0:
        raise TrivialLeafError("trivial leaf: no expanding directions at this state")
    if not 0.0 < delta <= 0.25:
        raise ValueError("radius must lie in (0, 0.25] for chart injectivity")
    u_dim = report.unstable_dim
    if u_dim not in (1, 2):
        raise ValueError("only leaf dimensions 1 and 2 are supported")
    if construction is None:
        construction = "linear-exact" if cocycle.has_constant_jacobian else "graph-transform"
    if construction == "linear-exact":
        return UnstableDisk(
            base=state, radius=delta, frame=report.eu_frame.copy(), construction="linear-exact"
        )
    if u_dim != 1:
        raise ValueError("graph-transform charts support leaf dimension 1 only")

    if resolution is None:
        resolution = delta / 512.0
    n_pts = 2 * int(math.ceil(delta / resolution)) + 1
    direction = report.eu_frame[:, 0]
    seed_radius = delta * 1.5  # slack so one trim always succeeds
    x_lift = state.point.as_array()
    prev = None
    for k in range(1, GRAPH_MAX_ITER + 1):
        y0 = compose(cocycle, state.path, -k, state.point).as_array()
        t = np.linspace(-seed_radius, seed_radius, n_pts)
        pts = y0 + t[:, None] * direction
        for j in range(-k, 0):
            m = cocycle.map_for(state.path.symbol(j))
            pts = _push_and_trim(m, pts, delta, n_pts)
        # recentre the lift so the middle vertex is the base representative
        pts = pts - (pts[n_pts // 2] - x_lift)
        if prev is not None and float(np.max(np.abs(pts - prev))) < GRAPH_TOL:
            params = np.linspace(-delta, delta, n_pts)
            tangent = pts[n_pts // 2 + 1] - pts[n_pts // 2 - 1]
            frame = (tangent / np.linalg.norm(tangent)).reshape(-1, 1)
            return UnstableDisk(
                base=state,
                radius=delta,
                frame=frame,
                construction="graph-transform",
                params=params,
                points_lift=pts,
            )
        prev = pts
    raise EstimatorError("graph transform did not converge")


def leaf_distance(disk: UnstableDisk, y1: TorusPoint, y2: TorusPoint, tol: float = 1e-8) -> float:
    """Arc length along the leaf between two points of the disk."""
    t1 = disk.param_of(y1, tol=tol)
    t2 = disk.param_of(y2, tol=tol)
    if disk.leaf_dim == 1:
        return abs(float(t1) - float(t2))
    return float(np.linalg.norm(np.asarray(t1) - np.asarray(t2)))


def leaf_growth_factors(cocycle: Cocycle, disk: UnstableDisk, n: int) -> np.ndarray:
    """Norm growth of the leaf direction under j-step derivatives, j = 0..n-1.

    Exact for constant-Jacobian cocycles (where the leaf is affine and the
    chart image under j steps is scaled by exactly this factor).
    """
    v = disk.frame[:, 0]
    out = np.empty(n)
    out[0] = 1.0
    w = v.copy()
    pt = disk.base.point.as_array()
    for j in range(1, n):
        m = cocycle.map_for(disk.base.path.symbol(j - 1))
        w = m.jacobian(pt) @ w
        pt = m.apply(pt)
        out[j] = float(np.linalg.norm(w))
    return out


def bowen_step_arcs(cocycle: Cocycle, disk: UnstableDisk, n: int, params: np.ndarray) -> np.ndarray:
    """Signed arc positions of chart(params) in the step-j image leaves.

    Returns an (n, len(params)) array S with S[j, i] the arc length from the
    image of chart(0) to the image of chart(params[i]) after j steps
    (S[0] = params).  Each row is monotone; the dynamical leaf metric
    between two parameters is max_j |S[j, i1] - S[j, i2]|.
    """
    params = np.asarray(params, dtype=float)
    out = np.empty((n, params.shape[0]))
    out[0] = params
    if disk.construction == "linear-exact":
        growth = leaf_growth_factors(cocycle, disk, n)
        for j in range(1, n):
            out[j] = growth[j] * params
        return out
    pts = disk.points_lift.copy()
    mid = len(pts) // 2
    grid = disk.params
    for j in range(1, n):
        m = cocycle.map_for(disk.base.path.symbol(j - 1))
        pts = m.apply_lift(pts)
        s = _arc_lengths(pts)
        s = s - s[mid]
        out[j] = np.interp(params, grid, s)
    return out


def bowen_distance(
    cocycle: Cocycle, disk: UnstableDisk, n: int, y1: TorusPoint, y2: TorusPoint
) -> float:
    """Dynamical leaf distance: max over steps 0..n-1 of image leaf distance."""
    if n < 1:
        raise ValueError("need n >= 1")
    if disk.leaf_dim == 1:
        t1 = disk.param_of(y1, radius_slack=1.0 + 1e-9)
        t2 = disk.param_of(y2, radius_slack=1.0 + 1e-9)
        arcs = bowen_step_arcs(cocycle, disk, n, np.array([t1, t2]))
        return float(np.max(np.abs(arcs[:, 0] - arcs[:, 1])))
    t1 = np.asarray(disk.param_of(y1))
    t2 = np.asarray(disk.param_of(y2))
    diff = disk.frame @ (t1 - t2)
    best = float(np.linalg.norm(diff))
    w = diff.copy()
    pt = disk.base.point.as_array()
    for j in range(1, n):
        m = cocycle.map_for(disk.base.path.symbol(j - 1))
        w = m.jacobian(pt) @ w
        pt = m.apply(pt)
        best = max(best, float(np.linalg.norm(w)))
    return best


def leaf_volume(disk: UnstableDisk, region=None) -> float:
    """Leaf volume (length for 1-d leaves) of a parameter region of the disk."""
    if disk.leaf_dim == 1:
        if region is None:
            return 2.0 * disk.radius
        a, b = float(region[0]), float(region[1])
        lo = max(min(a, b), -disk.radius)
        hi = min(max(a, b), disk.radius)
        return max(0.0, hi - lo)
    if region is None:
        return (2.0 * disk.radius) ** 2
    (a1, b1), (a2, b2) = region
    lo1, hi1 = max(min(a1, b1), -disk.radius), min(max(a1, b1), disk.radius)
    lo2, hi2 = max(min(a2, b2), -disk.radius), min(max(a2, b2), disk.radius)
    return max(0.0, hi1 - lo1) * max(0.0, hi2 - lo2)


def disk_polyline_rows(disk: UnstableDisk, samples: int = 129):
    """Sampled chart rows (parameter, coordinates...) for plotting dumps."""
    header = ["parameter"] + [f"x{c}" for c in range(disk.dim)]
    ts = np.linspace(-disk.radius, disk.radius, samples)
    pts = reduce_mod1(disk.chart_lift(ts))
    rows = [[float(t)] + [float(v) for v in row] for t, row in zip(ts, pts)]
    return header, rows


@dataclass(frozen=True)
class BowenMetric:
    """The n-step dynamical metric on a disk, d(y1,y2) = max image leaf distance."""

    cocycle: Cocycle
    disk: UnstableDisk
    n: int
    resolution: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need n >= 1")

    def distance(self, y1: TorusPoint, y2: TorusPoint) -> float:
        return bowen_distance(self.cocycle, self.disk, self.n, y1, y2)
