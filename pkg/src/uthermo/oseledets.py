"""Lyapunov spectra, expanding/complementary bundles, and expansion certificates.

Exponents come from QR accumulation along a sampled orbit.  The expanding
bundle at the orbit's origin is recovered by pushing a frame forward from
the past; the complementary bundle by pulling one back from the future.
Certificates are sampled statements ("no counterexample at this
resolution"), never proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rds import (
    Cocycle,
    DrivingSystem,
    EstimatorError,
    SymbolPath,
    TorusPoint,
    compose,
    derivative,
    sample_path,
)

__all__ = [
    "OseledetsReport",
    "HyperbolicityCertificate",
    "lyapunov_spectrum",
    "unstable_dimension",
    "certify_partial_hyperbolicity",
]

# Exponents closer than this (nats/step) merge into one block; estimates at
# desk-scale orbit lengths cannot resolve finer gaps reliably.
CLUSTER_GAP = 0.02

# A cluster counts as expanding only if its exponent clears this margin, so
# an exactly-neutral direction estimated at +1e-15 is not misclassified.
POSITIVE_MARGIN = CLUSTER_GAP / 2.0


@dataclass(frozen=True)
class OseledetsReport:
    """Estimated Lyapunov data at one sampled state.

    exponents are cluster means in decreasing order, multiplicities the
    cluster sizes (summing to the fiber dimension).  unstable_index counts
    the expanding clusters; eu_frame / fu_frame are orthonormal bases of
    the estimated expanding bundle and its complementary bundle.
    """

    exponents: tuple[float, ...]
    multiplicities: tuple[int, ...]
    unstable_index: int
    eu_frame: np.ndarray
    fu_frame: np.ndarray
    orbit_length: int
    raw_exponents: tuple[float, ...]

    @property
    def unstable_dim(self) -> int:
        """Dimension of the expanding bundle (multiplicity-weighted)."""
        return int(sum(self.multiplicities[: self.unstable_index]))

    def to_json_dict(self) -> dict:
        return {
            "exponents": list(self.exponents),
            "multiplicities": list(self.multiplicities),
            "unstable_index": self.unstable_index,
            "orbit_length": self.orbit_length,
        }


@dataclass(frozen=True)
class HyperbolicityCertificate:
    """Sampled evidence for domination plus uniform leafwise expansion."""

    domination_ratio_log: float
    expansion_lower: float
    constants: float
    samples: int
    verdict: str
    per_sample: tuple[dict, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "domination_ratio_log": self.domination_ratio_log,
            "expansion_lower": self.expansion_lower,
            "constants": self.constants,
            "samples": self.samples,
            "verdict": self.verdict,
        }


def _random_orthonormal(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x0F])
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _positive_qr(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(mat)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def _qr_walk(
    cocycle: Cocycle,
    path: SymbolPath,
    x: TorusPoint,
    start: int,
    steps: int,
    q0: np.ndarray,
    inverse: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate QR factors over `steps` one-step Jacobians.

    Forward mode walks j = start .. start+steps-1 applying each map's
    Jacobian; inverse mode walks backwards from `start` applying inverse
    Jacobians.  Returns (final Q, summed log diag R).
    """
    d = cocycle.dim
    logs = np.zeros(d)
    q = q0.copy()
    pt = compose(cocycle, path, start, x).as_array()
    if not inverse:
        for j in range(start, start + steps):
            m = cocycle.map_for(path.symbol(j))
            jac = m.jacobian(pt)
            if abs(np.linalg.det(jac)) < 1e-12:
                raise EstimatorError("degenerate one-step Jacobian along the orbit")
            q, r = _positive_qr(jac @ q)
            logs += np.log(np.abs(np.diag(r)))
            pt = m.apply(pt)
    else:
        for j in range(start - 1, start - steps - 1, -1):
            m = cocycle.map_for(path.symbol(j))
            pt = m.inverse_apply(pt)
            jac = np.linalg.inv(m.jacobian(pt))
            q, r = _positive_qr(jac @ q)
            logs += np.log(np.abs(np.diag(r)))
    return q, logs


def lyapunov_spectrum(
    cocycle: Cocycle,
    path: SymbolPath,
    x: TorusPoint,
    n: int,
    cluster_gap: float = CLUSTER_GAP,
    frame_steps: int | None = None,
    frame_seed: int = 0,
) -> OseledetsReport:
    """QR-accumulated Lyapunov exponents and bundle frames at (path, x).

    Exponents are averaged log diagonal entries of the R factors over n
    forward steps, clustered by cluster_gap.  The expanding frame is the
    limit flag of a push from frame_steps in the past; the complementary
    frame comes from the inverse cocycle pushed from the future.
    """
    if n < 100:
        raise ValueError("need n >= 100 for a usable exponent estimate")
    d = cocycle.dim
    q0 = _random_orthonormal(d, frame_seed)
    _, logs = _qr_walk(cocycle, path, x, 0, n, q0)
    raw = np.sort(logs / n)[::-1]

    clusters: list[list[float]] = [[raw[0]]]
    for val in raw[1:]:
        if clusters[-1][-1] - val < cluster_gap:
            clusters[-1].append(val)
        else:
            clusters.append([val])
    exponents = tuple(float(np.mean(c)) for c in clusters)
    multiplicities = tuple(len(c) for c in clusters)
    u = sum(1 for lam in exponents if lam > POSITIVE_MARGIN)
    u_dim = int(sum(multiplicities[:u]))

    if frame_steps is None:
        frame_steps = min(n, 512)
    frame_steps = min(frame_steps, path.backward_reach, path.forward_reach)
    if frame_steps < 1:
        raise EstimatorError("path window too small for frame estimation")
    q_fwd, _ = _qr_walk(cocycle, path, x, -frame_steps, frame_steps, q0)
    eu_frame = q_fwd[:, :u_dim].copy()
    q_bwd, _ = _qr_walk(cocycle, path, x, frame_steps, frame_steps, q0, inverse=True)
    fu_frame = q_bwd[:, : d - u_dim].copy()

    return OseledetsReport(
        exponents=exponents,
        multiplicities=multiplicities,
        unstable_index=u,
        eu_frame=eu_frame,
        fu_frame=fu_frame,
        orbit_length=n,
        raw_exponents=tuple(float(v) for v in raw),
    )


def unstable_dimension(report: OseledetsReport) -> int:
    """Number of expanding Lyapunov blocks; 0 means the local leaf is a point."""
    return report.unstable_index


def certify_partial_hyperbolicity(
    cocycle: Cocycle,
    system: DrivingSystem,
    samples: int,
    n: int,
    seed: int = 0,
    spectrum_n: int | None = None,
    margin: float = 0.02,
) -> HyperbolicityCertificate:
    """Monte-Carlo certificate of domination and one-step leaf expansion.

    Per sampled (path, point): estimate the spectrum, read the domination
    gap as the rate difference between the first complementary block and
    the last expanding block (QR-stable; pushing individual complementary
    vectors forward amplifies rounding along the expanding direction), and
    track the co-norm of each one-step derivative restricted to the
    transported expanding frame.  The verdict is certified only when every
    sample expands (co-norm > 1) and is dominated (gap < 0) beyond the
    margin; decisive counterevidence yields violated; anything in between
    is inconclusive.
    """
    if samples < 10:
        raise ValueError("need samples >= 10")
    if spectrum_n is None:
        spectrum_n = max(600, n)
    half_window = max(spectrum_n, n) + 2
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0xCE57])
    d = cocycle.dim

    gaps: list[float] = []
    expansions: list[float] = []
    c_estimates: list[float] = []
    records: list[dict] = []
    any_trivial = False

    for i in range(samples):
        path_seed = int(rng.integers(0, 2**63 - 1))
        path = sample_path(system, half_window, path_seed)
        x = TorusPoint(tuple(rng.random(d)))
        report = lyapunov_spectrum(cocycle, path, x, spectrum_n, frame_seed=path_seed)
        if report.unstable_index == 0:
            any_trivial = True
            records.append({"sample": i, "unstable_index": 0})
            continue

        u = report.unstable_index
        if u < len(report.exponents):
            gap = report.exponents[u] - report.exponents[u - 1]
        else:
            gap = float("-inf")
        gaps.append(gap)

        # transport frames and record per-step growth; the complementary
        # span drifts toward faster directions at the domination rate, so
        # the ratio diagnostic is windowed to stay below that horizon.
        frame = report.eu_frame
        fu = report.fu_frame
        pt = x.as_array()
        lam_min = math.inf
        log_f_fast = 0.0
        log_e_slow = 0.0
        ratio_max = 1.0
        drift_horizon = min(n, 30)
        for j in range(n):
            m = cocycle.map_for(path.symbol(j))
            jac = m.jacobian(pt)
            img = jac @ frame
            svals = np.linalg.svd(img, compute_uv=False)
            lam_min = min(lam_min, float(svals[-1]))
            frame, _ = _positive_qr(img)
            if fu.shape[1] > 0 and j < drift_horizon and math.isfinite(gap):
                fu_img = jac @ fu
                log_f_fast += float(np.max(np.log(np.linalg.norm(fu_img, axis=0))))
                log_e_slow += float(np.min(np.log(np.linalg.norm(img, axis=0))))
                fu, _ = _positive_qr(fu_img)
                ratio_max = max(ratio_max, math.exp(log_f_fast - log_e_slow - gap * (j + 1)))
            pt = m.apply(pt)
        expansions.append(lam_min)
        c_estimates.append(ratio_max)
        records.append(
            {
                "sample": i,
                "unstable_index": report.unstable_index,
                "gap": gap,
                "expansion": lam_min,
            }
        )

    if any_trivial or not expansions:
        return HyperbolicityCertificate(
            domination_ratio_log=float("nan") if not gaps else max(gaps),
            expansion_lower=0.0,
            constants=float("nan"),
            samples=samples,
            verdict="violated",
            per_sample=tuple(records),
        )

    expansion_lower = min(expansions)
    domination = max(gaps)
    constants = max(c_estimates)
    if expansion_lower > 1.0 + margin and domination < -margin:
        verdict = "certified"
    elif expansion_lower <= 1.0 or domination >= 0.0:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return HyperbolicityCertificate(
        domination_ratio_log=domination,
        expansion_lower=expansion_lower,
        constants=constants,
        samples=samples,
        verdict=verdict,
        per_sample=tuple(records),
    )
