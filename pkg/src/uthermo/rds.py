"""Random toral dynamics: driving symbol processes, fiber maps, skew product.

The base is a seeded finite-symbol process (iid, Markov, or a one-symbol
trivial process embedding a deterministic map).  Fiber maps act on the
d-torus (d = 2 or 3) as a unimodular integer matrix, optionally composed
with volume-preserving trigonometric shears and a translation, so that
derivatives, inverses, and smoothness bounds are exact closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "WindowExhausted",
    "InvalidSystem",
    "EstimatorError",
    "DrivingSystem",
    "SymbolPath",
    "TorusPoint",
    "ShearTerm",
    "MapDescriptor",
    "Cocycle",
    "SkewState",
    "sample_path",
    "compose",
    "derivative",
    "skew_step",
    "integrability_check",
    "torus_distance",
    "reduce_mod1",
    "load_system",
    "parse_system_text",
]

_PROB_TOL = 1e-12
_STATIONARY_TOL = 1e-10


class WindowExhausted(LookupError):
    """A symbol outside the sampled window was requested."""


class InvalidSystem(ValueError):
    """A driving system or map descriptor violates its construction rules."""


class EstimatorError(RuntimeError):
    """A numerical estimator could not produce a usable result."""


# ---------------------------------------------------------------------------
# Driving system and symbol paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DrivingSystem:
    """Ergodic base process over a finite symbol alphabet.

    kind is one of "iid", "markov", "deterministic-trivial".  For iid the
    distribution is the symbol law; for markov it is the stationary vector
    of the supplied transition matrix.
    """

    kind: str
    symbol_count: int
    distribution: tuple[float, ...]
    transition: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("iid", "markov", "deterministic-trivial"):
            raise InvalidSystem(f"unknown base kind {self.kind!r}")
        if self.symbol_count < 1:
            raise InvalidSystem("symbol_count must be positive")
        dist = np.asarray(self.distribution, dtype=float)
        if dist.shape != (self.symbol_count,):
            raise InvalidSystem("distribution length must equal symbol_count")
        if np.any(dist < -_PROB_TOL):
            raise InvalidSystem("distribution entries must be nonnegative")
        if abs(dist.sum() - 1.0) > _PROB_TOL:
            raise InvalidSystem("distribution must sum to 1")
        if self.kind == "deterministic-trivial" and self.symbol_count != 1:
            raise InvalidSystem("deterministic-trivial base needs symbol_count = 1")
        if self.kind == "markov":
            if self.transition is None:
                raise InvalidSystem("markov base needs a transition matrix")
            q = np.asarray(self.transition, dtype=float)
            if q.shape != (self.symbol_count, self.symbol_count):
                raise InvalidSystem("transition matrix has wrong shape")
            if np.any(q < -_PROB_TOL):
                raise InvalidSystem("transition entries must be nonnegative")
            if np.any(np.abs(q.sum(axis=1) - 1.0) > _PROB_TOL):
                raise InvalidSystem("transition rows must sum to 1")
            if np.max(np.abs(dist @ q - dist)) > _STATIONARY_TOL:
                raise InvalidSystem("supplied vector is not stationary for the transition")
        elif self.transition is not None:
            raise InvalidSystem("transition matrix only makes sense for a markov base")

    @property
    def distribution_array(self) -> np.ndarray:
        return np.asarray(self.distribution, dtype=float)


@dataclass(frozen=True)
class SymbolPath:
    """A sampled two-sided symbol window with a movable time origin.

    Symbols are fixed at sampling time for absolute times in
    [-half_window, half_window]; the shift only moves origin_offset.
    Accessing a symbol beyond the window raises WindowExhausted.
    """

    symbols: tuple[int, ...]
    half_window: int
    origin_offset: int = 0

    def __post_init__(self):
        if len(self.symbols) != 2 * self.half_window + 1:
            raise InvalidSystem("symbol window length must be 2*half_window + 1")

    def symbol(self, j: int) -> int:
        """Symbol at relative time j (absolute time origin_offset + j)."""
        t = self.origin_offset + j
        if abs(t) > self.half_window:
            raise WindowExhausted(
                f"time {t} outside sampled window [-{self.half_window}, {self.half_window}]"
            )
        return self.symbols[t + self.half_window]

    def shifted(self, k: int) -> "SymbolPath":
        """The path seen from time origin moved by k steps (the base shift)."""
        return replace(self, origin_offset=self.origin_offset + k)

    @property
    def backward_reach(self) -> int:
        """Steps of history available from the current origin."""
        return self.half_window + self.origin_offset

    @property
    def forward_reach(self) -> int:
        return self.half_window - self.origin_offset


def sample_path(system: DrivingSystem, half_window: int, seed: int) -> SymbolPath:
    """Draw a window of 2*half_window + 1 symbols from the driving law."""
    if half_window < 1:
        raise InvalidSystem("half_window must be >= 1")
    size = 2 * half_window + 1
    if system.kind == "deterministic-trivial":
        return SymbolPath(symbols=(0,) * size, half_window=half_window)
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED])
    dist = system.distribution_array
    if system.kind == "iid":
        draws = rng.choice(system.symbol_count, size=size, p=dist)
        return SymbolPath(symbols=tuple(int(s) for s in draws), half_window=half_window)
    # markov: start at stationary law at the left edge, then run the chain
    q = np.asarray(system.transition, dtype=float)
    out = np.empty(size, dtype=np.int64)
    out[0] = rng.choice(system.symbol_count, p=dist)
    for i in range(1, size):
        out[i] = rng.choice(system.symbol_count, p=q[out[i - 1]])
    return SymbolPath(symbols=tuple(int(s) for s in out), half_window=half_window)


# ---------------------------------------------------------------------------
# Torus geometry
# ---------------------------------------------------------------------------


def reduce_mod1(values: np.ndarray) -> np.ndarray:
    """Reduce coordinates into [0, 1), sending 1.0 - eps rounding to 0.0."""
    out = values - np.floor(values)
    return np.where(out >= 1.0, 0.0, out)


@dataclass(frozen=True)
class TorusPoint:
    """A point on the d-torus with coordinates reduced into [0, 1)."""

    coords: tuple[float, ...]

    def __post_init__(self):
        reduced = tuple(float(c) for c in reduce_mod1(np.asarray(self.coords, dtype=float)))
        object.__setattr__(self, "coords", reduced)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def torus_distance(x: TorusPoint | np.ndarray, y: TorusPoint | np.ndarray) -> float:
    """Max-over-coordinates circle distance on the torus."""
    xa = x.as_array() if isinstance(x, TorusPoint) else np.asarray(x, dtype=float)
    ya = y.as_array() if isinstance(y, TorusPoint) else np.asarray(y, dtype=float)
    diff = np.abs(reduce_mod1(xa) - reduce_mod1(ya))
    return float(np.max(np.minimum(diff, 1.0 - diff)))


# ---------------------------------------------------------------------------
# Fiber maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShearTerm:
    """Volume-preserving shear x -> x + a*sin(2*pi*k.x + phase)*v with k.v = 0.

    The displacement direction v is perpendicular to the integer wavevector
    k, so k.x is invariant under the shear and the inverse is the same
    formula with a negated amplitude (an exact diffeomorphism for any a).
    """

    amplitude: float
    wavevector: tuple[int, ...]
    phase: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.wavevector, dtype=float)
        if k.ndim != 1 or k.shape[0] not in (2, 3):
            raise InvalidSystem("shear wavevector must have dimension 2 or 3")
        if not np.any(k):
            raise InvalidSystem("shear wavevector must be nonzero")
        if not np.allclose(k, np.round(k)):
            raise InvalidSystem("shear wavevector must be integer")

    @property
    def direction(self) -> np.ndarray:
        """Unit displacement direction perpendicular to the wavevector."""
        k = np.asarray(self.wavevector, dtype=float)
        if k.shape[0] == 2:
            v = np.array([-k[1], k[0]])
        else:
            e = np.zeros(3)
            e[int(np.argmin(np.abs(k)))] = 1.0
            v = np.cross(k, e)
        return v / np.linalg.norm(v)

    def _phase_values(self, pts: np.ndarray) -> np.ndarray:
        k = np.asarray(self.wavevector, dtype=float)
        return 2.0 * math.pi * (pts @ k) + self.phase

    def apply(self, pts: np.ndarray, inverse: bool = False) -> np.ndarray:
        amp = -self.amplitude if inverse else self.amplitude
        disp = amp * np.sin(self._phase_values(pts))
        return pts + disp[..., None] * self.direction

    def jacobian(self, pts: np.ndarray, inverse: bool = False) -> np.ndarray:
        """Jacobian I + 2*pi*a*cos(...)*v k^T at each point (N, d, d)."""
        amp = -self.amplitude if inverse else self.amplitude
        k = np.asarray(self.wavevector, dtype=float)
        c = 2.0 * math.pi * amp * np.cos(self._phase_values(pts))
        d = k.shape[0]
        outer = np.einsum("i,j->ij", self.direction, k)
        return np.eye(d) + c[..., None, None] * outer

    @property
    def derivative_factor(self) -> float:
        """Upper bound factor for the first derivative norm of the shear."""
        k = np.asarray(self.wavevector, dtype=float)
        return 1.0 + 2.0 * math.pi * abs(self.amplitude) * float(np.linalg.norm(k))

    @property
    def second_derivative_bound(self) -> float:
        k = np.asarray(self.wavevector, dtype=float)
        return (2.0 * math.pi * float(np.linalg.norm(k))) ** 2 * abs(self.amplitude)


class _AutoBound:
    """Sentinel: compute a conservative smoothness bound at construction."""

    def __repr__(self):  # pragma: no cover
        return "AUTO"


AUTO = _AutoBound()


def _unimodular_inverse(matrix: np.ndarray) -> np.ndarray:
    det = round(float(np.linalg.det(matrix)))
    if det not in (-1, 1):
        raise InvalidSystem("matrix must be unimodular (|det| = 1)")
    inv = np.round(np.linalg.inv(matrix)).astype(np.int64)
    if not np.array_equal(matrix @ inv, np.eye(matrix.shape[0], dtype=np.int64)):
        raise InvalidSystem("integer inverse check failed")
    return inv


@dataclass(frozen=True)
class MapDescriptor:
    """One fiber map f(x) = A.(S_m o ... o S_1)(x) + b  (mod 1).

    A is a unimodular integer matrix, the S_i are shear terms, and b is a
    translation.  c2_bound / c2_bound_inverse are bounds on the C^2 size of
    the map and its inverse; left at AUTO they are filled with a
    conservative closed form, while an explicit None marks them missing.
    """

    matrix: np.ndarray
    shears: tuple[ShearTerm, ...] = ()
    translation: tuple[float, ...] | None = None
    c2_bound: float | None = AUTO
    c2_bound_inverse: float | None = AUTO

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
            raise InvalidSystem("matrix must be square of dimension 2 or 3")
        if not np.allclose(m, np.round(m)):
            raise InvalidSystem("matrix must be integer")
        m = np.round(m).astype(np.int64)
        object.__setattr__(self, "matrix", m)
        inv = _unimodular_inverse(m)
        object.__setattr__(self, "_inverse_matrix", inv)
        for s in self.shears:
            if len(s.wavevector) != m.shape[0]:
                raise InvalidSystem("shear dimension does not match matrix")
        if self.translation is None:
            object.__setattr__(self, "translation", (0.0,) * m.shape[0])
        elif len(self.translation) != m.shape[0]:
            raise InvalidSystem("translation dimension does not match matrix")
        if self.c2_bound is AUTO:
            object.__setattr__(self, "c2_bound", self._default_c2(m))
        if self.c2_bound_inverse is AUTO:
            object.__setattr__(self, "c2_bound_inverse", self._default_c2(inv))

    def _default_c2(self, mat: np.ndarray) -> float:
        base = float(np.linalg.norm(mat.astype(float), 2))
        factor = 1.0
        curvature = 0.0
        for s in self.shears:
            factor *= s.derivative_factor
            curvature += s.second_derivative_bound
        return max(base * factor, base * curvature, 1.0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self._inverse_matrix

    @property
    def perturbation_amplitude(self) -> float:
        return float(sum(abs(s.amplitude) for s in self.shears))

    def apply_lift(self, pts: np.ndarray) -> np.ndarray:
        """Apply the map to lifted points in R^d (no mod 1)."""
        out = np.asarray(pts, dtype=float)
        for s in self.shears:
            out = s.apply(out)
        out = out @ self.matrix.T.astype(float)
        return out + np.asarray(self.translation)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return reduce_mod1(self.apply_lift(pts))

    def inverse_apply_lift(self, pts: np.ndarray) -> np.ndarray:
        out = np.asarray(pts, dtype=float) - np.asarray(self.translation)
        out = out @ self._inverse_matrix.T.astype(float)
        for s in reversed(self.shears):
            out = s.apply(out, inverse=True)
        return out

    def inverse_apply(self, pts: np.ndarray) -> np.ndarray:
        return reduce_mod1(self.inverse_apply_lift(pts))

    def jacobian(self, pts: np.ndarray) -> np.ndarray:
        """Derivative at each point, shape (..., d, d); exact chain rule."""
        pts = np.asarray(pts, dtype=float)
        jac = np.broadcast_to(np.eye(self.dim), pts.shape[:-1] + (self.dim, self.dim)).copy()
        cur = pts
        for s in self.shears:
            jac = s.jacobian(cur) @ jac
            cur = s.apply(cur)
        return self.matrix.astype(float) @ jac

    def inverse_jacobian(self, pts: np.ndarray) -> np.ndarray:
        """Derivative of the inverse map at each (image) point."""
        pts = np.asarray(pts, dtype=float)
        cur = pts - np.asarray(self.translation)
        cur = cur @ self._inverse_matrix.T.astype(float)
        jac = np.broadcast_to(
            self._inverse_matrix.astype(float), pts.shape[:-1] + (self.dim, self.dim)
        ).copy()
        for s in reversed(self.shears):
            jac = s.jacobian(cur, inverse=True) @ jac
            cur = s.apply(cur, inverse=True)
        return jac

    @property
    def lipschitz(self) -> float:
        """Bound on the one-step derivative norm."""
        base = float(np.linalg.norm(self.matrix.astype(float), 2))
        for s in self.shears:
            base *= s.derivative_factor
        return base


@dataclass(frozen=True)
class Cocycle:
    """The family of per-symbol fiber maps driven by a symbol path."""

    maps: tuple[MapDescriptor, ...]

    def __post_init__(self):
        if not self.maps:
            raise InvalidSystem("cocycle needs at least one map")
        dims = {m.dim for m in self.maps}
        if len(dims) != 1:
            raise InvalidSystem("all maps must share the fiber dimension")

    @property
    def dim(self) -> int:
        return self.maps[0].dim

    def map_for(self, symbol: int) -> MapDescriptor:
        try:
            return self.maps[symbol]
        except IndexError:
            raise InvalidSystem(f"no map for symbol {symbol}") from None

    @property
    def has_constant_jacobian(self) -> bool:
        return all(not m.shears for m in self.maps)

    @property
    def has_commuting_matrices(self) -> bool:
        mats = [m.matrix for m in self.maps]
        return all(
            np.array_equal(a @ b, b @ a) for i, a in enumerate(mats) for b in mats[i + 1 :]
        )

    @property
    def lipschitz(self) -> float:
        return max(m.lipschitz for m in self.maps)


@dataclass(frozen=True)
class SkewState:
    """A point of the product space: symbol path plus torus point."""

    path: SymbolPath
    point: TorusPoint


def compose(cocycle: Cocycle, path: SymbolPath, n: int, x: TorusPoint) -> TorusPoint:
    """n-fold composition of the fiber maps along the path applied to x.

    Positive n walks forward through symbols 0..n-1; negative n applies
    the inverses of the maps at times -1..n.
    """
    pt = x.as_array()
    if n > 0:
        for j in range(n):
            pt = cocycle.map_for(path.symbol(j)).apply(pt)
    elif n < 0:
        for j in range(-1, n - 1, -1):
            pt = cocycle.map_for(path.symbol(j)).inverse_apply(pt)
    return TorusPoint(tuple(pt))


def derivative(cocycle: Cocycle, path: SymbolPath, n: int, x: TorusPoint) -> np.ndarray:
    """Derivative of the n-step composition at x as an ordered Jacobian product."""
    d = cocycle.dim
    jac = np.eye(d)
    pt = x.as_array()
    if n > 0:
        for j in range(n):
            m = cocycle.map_for(path.symbol(j))
            jac = m.jacobian(pt) @ jac
            pt = m.apply(pt)
    elif n < 0:
        for j in range(-1, n - 1, -1):
            m = cocycle.map_for(path.symbol(j))
            pt = m.inverse_apply(pt)
            step = np.linalg.inv(m.jacobian(pt))
            jac = step @ jac
    return jac


def skew_step(cocycle: Cocycle, state: SkewState, n: int = 1) -> SkewState:
    """Apply the skew product (or its inverse) n times."""
    pt = compose(cocycle, state.path, n, state.point)
    return SkewState(path=state.path.shifted(n), point=pt)


def integrability_check(
    system: DrivingSystem, cocycle: Cocycle, samples: int, seed: int = 0
) -> float:
    """Monte-Carlo estimate of the mean positive-log smoothness of one step.

    Averages log+ of the stored forward and backward C^2 bounds over
    symbols drawn from the stationary law, and asserts the result finite.
    """
    if samples < 1:
        raise InvalidSystem("samples must be >= 1")
    for i, m in enumerate(cocycle.maps):
        if m.c2_bound is None or m.c2_bound_inverse is None:
            raise InvalidSystem(f"map {i} is missing a c2 bound")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0xC2])
    draws = rng.choice(system.symbol_count, size=samples, p=system.distribution_array)
    logplus = np.array(
        [
            max(math.log(m.c2_bound), 0.0) + max(math.log(m.c2_bound_inverse), 0.0)
            for m in cocycle.maps
        ]
    )
    estimate = float(np.mean(logplus[draws]))
    if not math.isfinite(estimate):
        raise EstimatorError("integrability estimate is not finite")
    return estimate


# ---------------------------------------------------------------------------
# System definition files
# ---------------------------------------------------------------------------


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_shear_group(group: str) -> ShearTerm:
    parts = group.split(":")
    if len(parts) != 3:
        raise InvalidSystem(f"perturbation term {group!r} is not an amp:kvec:phase triple")
    amp = float(parts[0])
    kvec = tuple(int(tok) for tok in parts[1].split(","))
    phase = float(parts[2])
    return ShearTerm(amplitude=amp, wavevector=kvec, phase=phase)


def parse_system_text(text: str) -> tuple[DrivingSystem, Cocycle]:
    """Parse a plain key/value system definition (see bundled configs)."""
    entries: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSystem(f"malformed line {raw!r}")
        key, val = line.split("=", 1)
        entries[key.strip()] = val.strip()

    known_prefixes = ("map.",)
    known_keys = {
        "base.kind",
        "base.symbols",
        "base.dist",
        "base.transition",
        "fiber.dim",
        "seed",
    }
    for key in entries:
        if key in known_keys:
            continue
        if any(key.startswith(p) for p in known_prefixes):
            continue
        raise InvalidSystem(f"unknown system key {key!r}")

    kind = entries.get("base.kind", "deterministic-trivial")
    symbols = int(entries.get("base.symbols", "1"))
    dim = int(entries.get("fiber.dim", "2"))
    seed = int(entries.get("seed", "0"))
    if "base.dist" in entries:
        dist = tuple(_parse_floats(entries["base.dist"]))
    else:
        dist = tuple([1.0 / symbols] * symbols)
    transition = None
    if "base.transition" in entries:
        rows = [tuple(_parse_floats(r)) for r in entries["base.transition"].split(";")]
        transition = tuple(rows)
    system = DrivingSystem(
        kind=kind, symbol_count=symbols, distribution=dist, transition=transition, seed=seed
    )

    maps = []
    for k in range(symbols):
        mat_key = f"map.{k}.matrix"
        if mat_key not in entries:
            raise InvalidSystem(f"missing {mat_key}")
        flat = _parse_floats(entries[mat_key])
        if len(flat) != dim * dim:
            raise InvalidSystem(f"{mat_key} needs {dim * dim} entries")
        matrix = np.asarray(flat, dtype=float).reshape(dim, dim)
        shears: tuple[ShearTerm, ...] = ()
        pert_key = f"map.{k}.perturbation"
        if pert_key in entries and entries[pert_key]:
            shears = tuple(_parse_shear_group(g) for g in entries[pert_key].split())
        translation = None
        tr_key = f"map.{k}.translation"
        if tr_key in entries:
            vals = _parse_floats(entries[tr_key])
            if len(vals) != dim:
                raise InvalidSystem(f"{tr_key} needs {dim} entries")
            translation = tuple(vals)
        c2 = entries.get(f"map.{k}.c2")
        c2inv = entries.get(f"map.{k}.c2inv")
        maps.append(
            MapDescriptor(
                matrix=matrix,
                shears=shears,
                translation=translation,
                c2_bound=float(c2) if c2 is not None else None,
                c2_bound_inverse=float(c2inv) if c2inv is not None else None,
            )
        )
    # reject stray map keys beyond the declared alphabet
    for key in entries:
        if key.startswith("map."):
            idx = key.split(".")[1]
            if not idx.isdigit() or int(idx) >= symbols:
                raise InvalidSystem(f"map key {key!r} outside symbol range")
    return system, Cocycle(maps=tuple(maps))


def load_system(path) -> tuple[DrivingSystem, Cocycle]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system_text(fh.read())
