from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbadiabatic.errors import InvalidInputError, PreconditionError, TruncationError
from mbadiabatic.models import tfim_family
from mbadiabatic.operators import LatticeSpec, LocalOperator, pauli
from mbadiabatic.spectra import SpectralData, eigendecompose
from mbadiabatic.spectral_filter import (
    CONVENTION,
    apply_filter_quadrature,
    apply_filter_spectral,
    build_filter,
    filter_omega_action,
    filter_range_growth,
    transfer,
)


@pytest.fixture(scope="module")
def spec1():
    return build_filter(1.0)


class TestTransfer:
    def test_outside_window(self, spec1):
        assert spec1.hat_h(2.0) == pytest.approx(0.5j, abs=1e-15)
        assert spec1.hat_h(-3.0) == pytest.approx(-1j / 3, abs=1e-15)

    def test_endpoint(self, spec1):
        assert spec1.hat_h(1.0) == pytest.approx(1j, abs=1e-15)
        assert spec1.window(1.0) == 0.0

    def test_zero_frequency(self, spec1):
        assert spec1.hat_h(0.0) == 0.0

    @given(st.floats(-50, 50, allow_nan=False), st.floats(0.1, 5))
    def test_odd_imaginary_bounded(self, w, g):
        val = transfer(w, g)
        assert val.real == 0.0
        assert transfer(-w, g) == pytest.approx(-val, abs=1e-15)
        assert abs(val) <= 2.0 / g

    def test_window_real_and_supported_below_gap(self, spec1):
        w = np.linspace(-5, 5, 1001)
        v = spec1.window(w)
        assert np.all(v[np.abs(w) >= 1.0] == 0.0)
        assert np.allclose(spec1.hat_h(w[w != 0]), 1j * (1 / w[w != 0] + v[w != 0]))


class TestBuildFilter:
    def test_round_trip_on_band(self, spec1):
        w = np.linspace(1.0, 10.0, 301)
        # direct complex sum over every node, not the paired sine form used internally
        direct = np.exp(-1j * np.outer(w, spec1.times)) @ (spec1.weights * spec1.values)
        assert np.max(np.abs(direct - 1j / w)) <= 1e-6

    def test_tail(self, spec1):
        late = np.abs(spec1.times) >= spec1.cutoff
        assert late.any()
        assert np.all(np.abs(spec1.values[late]) <= spec1.tail_tol)

    def test_profile_real_and_odd(self, spec1):
        assert np.isrealobj(spec1.values)
        assert np.allclose(spec1.values, -spec1.values[::-1])

    def test_scaling_with_gap(self):
        spec = build_filter(2.5)
        assert spec.consistency <= 1e-6
        assert spec.cutoff < build_filter(1.0).cutoff

    def test_rejects_bad_gap(self):
        with pytest.raises(InvalidInputError):
            build_filter(0.0)

    def test_convention_recorded(self, spec1):
        assert spec1.convention == CONVENTION


def _two_level(E1: float) -> SpectralData:
    return SpectralData(np.array([0.0, E1]), np.eye(2, dtype=complex), 0.0)


class TestSpectralBackend:
    def test_two_level_flip(self, spec1):
        sd = _two_level(1.7)
        X = np.array([[0.0, 0.3], [0.3, 0.0]])
        out = apply_filter_spectral(spec1, sd, X) @ sd.ground
        assert out[0] == 0.0
        assert out[1] == pytest.approx(1j / 1.7 * 0.3)

    def test_ground_sector_identity(self, rng):
        fam = tfim_family(6, 2.0, longitudinal=0.3)
        sd = eigendecompose(fam.dense_H(0.0))
        spec = build_filter(0.9 * sd.gap)
        H = sd.shifted_matrix()
        om = sd.ground
        for _ in range(3):
            M = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
            X = M - np.vdot(om, M @ om) * np.eye(64)
            res = apply_filter_spectral(spec, sd, X) @ om
            assert np.linalg.norm(H @ res - 1j * X @ om) <= 1e-9
            assert np.allclose(res, filter_omega_action(spec, sd, X), atol=1e-12)

    def test_identity_rejected(self, spec1):
        with pytest.raises(PreconditionError):
            filter_omega_action(spec1, _two_level(2.0), np.eye(2))

    def test_unshifted_rejected(self, spec1):
        with pytest.raises(PreconditionError):
            apply_filter_spectral(spec1, SpectralData(np.array([1.0, 2.0]), np.eye(2), 0.0), np.eye(2))

    def test_hermitian_input_gives_hermitian_output(self, rng):
        fam = tfim_family(4, 1.8)
        sd = eigendecompose(fam.dense_H(0.0))
        spec = build_filter(0.9 * sd.gap)
        M = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        out = apply_filter_spectral(spec, sd, M + M.conj().T)
        assert np.allclose(out, out.conj().T, atol=1e-12)


class TestQuadratureBackend:
    def test_commuting_input_is_annihilated(self):
        lat = LatticeSpec(4)
        H = LocalOperator.zero(lat)
        for i in range(4):
            H = H + pauli(lat, f"Z{i}", -1.0)
        res = apply_filter_quadrature(build_filter(1.5), H, pauli(lat, "Z1"))
        # only frequency 0 occurs, where the odd weights sum to zero
        assert res.operator.is_zero

    def test_agrees_with_spectral_on_omega(self):
        fam = tfim_family(8, 2.0, longitudinal=0.3)
        sd = eigendecompose(fam.dense_H(0.0))
        spec = build_filter(0.9 * sd.gap)
        X = pauli(fam.lattice, "Y3")
        quad = apply_filter_quadrature(spec, fam.local(0.0), X)
        Xd = X.dense()
        Xd0 = Xd - np.vdot(sd.ground, Xd @ sd.ground) * np.eye(Xd.shape[0])
        diff = np.linalg.norm(quad.operator.dense() @ sd.ground - filter_omega_action(spec, sd, Xd0))
        assert diff <= 1e-4

    def test_truncated_region_within_estimate(self):
        fam = tfim_family(8, 2.5)
        sd = eigendecompose(fam.dense_H(0.0))
        spec = build_filter(0.9 * sd.gap)
        X = pauli(fam.lattice, "Y0")
        quad = apply_filter_quadrature(spec, fam.local(0.0), X, radius=2)
        full = apply_filter_quadrature(spec, fam.local(0.0), X)
        mismatch = np.linalg.norm(quad.operator.dense() @ sd.ground - full.operator.dense() @ sd.ground)
        assert quad.truncation_estimate > 0
        assert mismatch <= 3 * quad.truncation_estimate
        with pytest.raises(TruncationError) as err:
            apply_filter_quadrature(spec, fam.local(0.0), X, radius=1, max_error=1e-8)
        assert err.value.achieved_bound > 1e-8

    def test_range_grows_with_cutoff(self):
        fam = tfim_family(8, 2.0, boundary="open")
        rows = filter_range_growth(build_filter(1.5), fam.local(0.0), pauli(fam.lattice, "Y0"), [0.25, 0.5, 1.0, 2.0], threshold=1e-4)
        ranges = [r for _, r in rows]
        assert ranges == sorted(ranges)
        assert ranges[-1] > ranges[0] + 2

    def test_lattice_mismatch(self, spec1):
        with pytest.raises(InvalidInputError):
            apply_filter_quadrature(spec1, pauli(LatticeSpec(3), "Z0"), pauli(LatticeSpec(4), "Z0"))
