import math

import numpy as np
import pytest

import oracles
from uthermo import (
    compose,
    Cocycle,
    MapDescriptor,
    OseledetsReport,
    TorusPoint,
    certify_partial_hyperbolicity,
    derivative,
    lyapunov_spectrum,
    sample_path,
    skew_step,
    unstable_dimension,
)
from uthermo.oseledets import _positive_qr
from uthermo.rds import SkewState


def _report_with(exponents, multiplicities=None):
    exps = tuple(float(v) for v in exponents)
    mult = tuple(multiplicities or (1,) * len(exps))
    d = sum(mult)
    u = sum(1 for v in exps if v > 0.01)
    udim = sum(m for v, m in zip(exps, mult) if v > 0.01)
    return OseledetsReport(
        exponents=exps,
        multiplicities=mult,
        unstable_index=u,
        eu_frame=np.eye(d)[:, :udim],
        fu_frame=np.eye(d)[:, udim:],
        orbit_length=1000,
        raw_exponents=exps,
    )


class TestSpectrum:
    def test_cat_map_matches_eigenvalues(self, cat_cocycle, trivial_system):
        path = sample_path(trivial_system, 10_100, 1)
        rep = lyapunov_spectrum(cat_cocycle, path, TorusPoint((0.3, 0.4)), 10_000)
        eig = np.sort(np.abs(np.linalg.eigvals(oracles.CAT_MATRIX.astype(float))))[::-1]
        assert rep.exponents[0] == pytest.approx(math.log(eig[0]), abs=1e-3)
        assert rep.exponents[1] == pytest.approx(math.log(eig[1]), abs=1e-3)
        assert rep.unstable_index == 1
        assert rep.multiplicities == (1, 1)

    def test_random_switching_matches_path_exact_value(self, iid_cocycle, iid_system):
        n = 10_000
        path = sample_path(iid_system, n + 200, 3)
        rep = lyapunov_spectrum(iid_cocycle, path, TorusPoint((0.2, 0.7)), n)
        # closed form along this very path: symbol k contributes (k+1) log(lam+)
        steps = sum(path.symbol(j) + 1 for j in range(n))
        exact_top = steps / n * oracles.CAT_LOG
        assert rep.exponents[0] == pytest.approx(exact_top, abs=1e-3)
        assert rep.exponents[0] == pytest.approx(1.5 * oracles.CAT_LOG, abs=0.03)

    def test_t3_block_structure(self, t3_cocycle, t3_system):
        path = sample_path(t3_system, 4200, 5)
        rep = lyapunov_spectrum(t3_cocycle, path, TorusPoint((0.3, 0.7, 0.1)), 4000)
        assert rep.unstable_index == 1
        assert len(rep.exponents) == 3
        assert rep.exponents[0] == pytest.approx(oracles.CAT_LOG, abs=0.01)
        assert rep.exponents[1] == pytest.approx(0.0, abs=0.01)
        assert rep.exponents[2] == pytest.approx(-oracles.CAT_LOG, abs=0.01)

    def test_eu_frame_is_unstable_eigvector(self, cat_cocycle, trivial_system):
        path = sample_path(trivial_system, 1200, 1)
        rep = lyapunov_spectrum(cat_cocycle, path, TorusPoint((0.0, 0.0)), 1000)
        frame = rep.eu_frame[:, 0]
        assert abs(abs(frame @ oracles.CAT_UNSTABLE_DIR) - 1.0) < 1e-10
        assert np.linalg.norm(rep.eu_frame.T @ rep.eu_frame - np.eye(1)) < 1e-10

    def test_exponent_sum_matches_determinant_rate(self, iid_cocycle, iid_system):
        # chain rule for determinants, accumulated per step so nothing overflows
        n = 600
        path = sample_path(iid_system, n + 200, 9)
        x = TorusPoint((0.11, 0.83))
        rep = lyapunov_spectrum(iid_cocycle, path, x, n)
        total = sum(l * m for l, m in zip(rep.exponents, rep.multiplicities))
        log_det = 0.0
        pt = x
        for j in range(n):
            log_det += math.log(abs(np.linalg.det(
                derivative(iid_cocycle, path.shifted(j), 1, pt))))
            pt = compose(iid_cocycle, path.shifted(j), 1, pt)
        assert abs(total - log_det / n) < 1e-6

    def test_frame_seed_invariance(self, iid_cocycle, iid_system):
        path = sample_path(iid_system, 2200, 21)
        x = TorusPoint((0.5, 0.25))
        r1 = lyapunov_spectrum(iid_cocycle, path, x, 2000, frame_seed=1)
        r2 = lyapunov_spectrum(iid_cocycle, path, x, 2000, frame_seed=999)
        assert np.max(np.abs(np.array(r1.exponents) - np.array(r2.exponents))) < 2e-3

    def test_eu_frame_equivariance(self, cat_cocycle, trivial_system):
        path = sample_path(trivial_system, 1300, 2)
        x = TorusPoint((0.21, 0.86))
        rep = lyapunov_spectrum(cat_cocycle, path, x, 1000)
        state = SkewState(path=path, point=x)
        nxt = skew_step(cat_cocycle, state, 1)
        rep_next = lyapunov_spectrum(cat_cocycle, nxt.path, nxt.point, 1000)
        pushed = cat_cocycle.maps[0].matrix.astype(float) @ rep.eu_frame
        pushed, _ = _positive_qr(pushed)
        angle = math.acos(min(1.0, abs(float(pushed[:, 0] @ rep_next.eu_frame[:, 0]))))
        assert angle <= 1e-3

    def test_short_orbit_rejected(self, cat_cocycle, trivial_system):
        path = sample_path(trivial_system, 200, 1)
        with pytest.raises(ValueError):
            lyapunov_spectrum(cat_cocycle, path, TorusPoint((0.1, 0.1)), 50)


class TestUnstableDimension:
    def test_positive_block(self):
        assert unstable_dimension(_report_with((0.96, -0.96))) == 1

    def test_no_expansion(self):
        assert unstable_dimension(_report_with((-0.1, -0.5))) == 0

    def test_zero_exponent_excluded(self):
        assert unstable_dimension(_report_with((0.96, 0.0, -0.96))) == 1


class TestCertificates:
    def test_cat_certified(self, cat_cocycle, trivial_system):
        cert = certify_partial_hyperbolicity(cat_cocycle, trivial_system, samples=10, n=40, seed=1)
        assert cert.verdict == "certified"
        assert cert.expansion_lower == pytest.approx(oracles.CAT_EIGENVALUE, abs=1e-9)
        assert cert.domination_ratio_log == pytest.approx(-2.0 * oracles.CAT_LOG, abs=0.01)

    def test_identity_violated(self, trivial_system):
        ident = Cocycle(maps=(MapDescriptor(matrix=np.eye(2)),))
        cert = certify_partial_hyperbolicity(ident, trivial_system, samples=10, n=20, seed=1)
        assert cert.verdict == "violated"
        assert cert.expansion_lower == 0.0

    def test_t3_certified_with_central_gap(self, t3_cocycle, t3_system):
        cert = certify_partial_hyperbolicity(t3_cocycle, t3_system, samples=12, n=40, seed=9)
        assert cert.verdict == "certified"
        assert cert.expansion_lower == pytest.approx(oracles.CAT_EIGENVALUE, abs=1e-6)
        assert cert.domination_ratio_log == pytest.approx(-oracles.CAT_LOG, abs=0.05)

    def test_too_few_samples_rejected(self, cat_cocycle, trivial_system):
        with pytest.raises(ValueError):
            certify_partial_hyperbolicity(cat_cocycle, trivial_system, samples=3, n=10)
