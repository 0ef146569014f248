from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbadiabatic import tfim
from mbadiabatic.errors import GaplessModelError, InvalidInputError
from mbadiabatic.models import (
    constant_family,
    single_spin_family,
    single_spin_ground_state,
    smooth_switch,
    smooth_switch_derivative,
    tfim_family,
)
from mbadiabatic.operators import LatticeSpec, pauli, pauli_matrix
from mbadiabatic.spectra import eigendecompose, ground_family, min_gap

X, Z = pauli_matrix("X"), pauli_matrix("Z")


class TestEigendecompose:
    def test_single_z(self):
        sd = eigendecompose(Z)
        assert np.allclose(sd.energies, [0.0, 2.0])
        assert sd.gap == pytest.approx(2.0)
        assert sd.shift == pytest.approx(-1.0)

    def test_open_pair_against_direct_solve(self):
        H = -2 * (np.kron(Z, np.eye(2)) + np.kron(np.eye(2), Z)) - np.kron(X, X)
        sd = eigendecompose(tfim_family(2, 2.0, boundary="open").dense_H(0.0))
        # direct 4x4 oracle
        ev = np.sort(np.linalg.eigvalsh(H))
        assert np.allclose(sd.energies, ev - ev[0], atol=1e-12)
        assert sd.gap == pytest.approx(ev[1] - ev[0], abs=1e-12)

    def test_ising_gap_matches_free_fermions(self):
        sd = eigendecompose(tfim_family(8, 2.0).dense_H(0.0))
        assert abs(sd.gap - tfim.many_body_gap(8, 2.0)) <= 1e-8

    def test_degenerate_ground_rejected(self):
        with pytest.raises(GaplessModelError) as err:
            eigendecompose(np.diag([1.0, 1.0, 3.0]))
        assert err.value.splitting == pytest.approx(0.0)

    def test_non_hermitian_rejected(self):
        with pytest.raises(InvalidInputError):
            eigendecompose(np.array([[0.0, 1.0], [0.0, 1.0]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_residuals_and_shift(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        H = M + M.conj().T
        sd = eigendecompose(H)
        assert sd.energies[0] == 0.0
        Hs = H - sd.shift * np.eye(6)
        res = np.linalg.norm(Hs @ sd.vectors - sd.vectors * sd.energies, axis=0)
        assert res.max() <= 1e-10 * np.linalg.norm(H, 2)


class TestSwitch:
    def test_flat_ends(self):
        assert smooth_switch(0.0) == 0.0 and smooth_switch(1.0) == 1.0
        assert smooth_switch_derivative(1e-3) < 1e-200
        assert smooth_switch(0.5) == pytest.approx(0.5)

    def test_derivative_matches_difference(self):
        s = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        fd = (smooth_switch(s + h) - smooth_switch(s - h)) / (2 * h)
        assert np.allclose(fd, smooth_switch_derivative(s), atol=1e-8)


class TestGroundFamily:
    def test_constant_family(self):
        fam = constant_family(pauli(LatticeSpec(2), "Z0") + pauli(LatticeSpec(2), "Z1"))
        gsf = ground_family(fam, np.linspace(0, 1, 11))
        assert np.allclose(gsf.states, gsf.states[0])
        assert np.max(np.abs(gsf.derivatives)) == 0.0

    def test_single_spin_analytic(self):
        fam = single_spin_family(0.0, 1.0)
        grid = np.linspace(0, 1, 41)
        gsf = ground_family(fam, grid)
        for s, om, d in zip(grid, gsf.states, gsf.derivatives):
            a, da = fam.angle(s), fam.angle_derivative(s)
            exact = single_spin_ground_state(a)
            dexact = 0.5 * da * np.array([-np.sin(a / 2), np.cos(a / 2)])
            assert np.allclose(om, exact, atol=1e-12)
            assert np.allclose(d, dexact, atol=1e-10)

    def test_gauge_invariants(self, lf6):
        gsf = ground_family(lf6, np.linspace(0, 1, 101))
        overlaps = np.einsum("ij,ij->i", gsf.states[:-1].conj(), gsf.states[1:])
        assert np.all(np.abs(overlaps.imag) <= 1e-12) and np.all(overlaps.real > 0)
        berry = np.einsum("ij,ij->i", gsf.states.conj(), gsf.derivatives)
        assert np.max(np.abs(berry)) <= 1e-8
        for s, om, d in zip(gsf.grid[::10], gsf.states[::10], gsf.derivatives[::10]):
            H = lf6.dense_H(s) - eigendecompose(lf6.dense_H(s)).shift * np.eye(lf6.dim)
            dH = lf6.dense_dH(s)
            assert np.linalg.norm(H @ om) <= 1e-10
            lhs = H @ d + dH @ om - np.vdot(om, dH @ om) * om
            assert np.linalg.norm(lhs) <= 1e-8

    def test_refinement_reduces_mismatch_fourfold(self, lf6):
        coarse = ground_family(lf6, np.linspace(0, 1, 51))
        fine = ground_family(lf6, np.linspace(0, 1, 101))
        # interior points shared by both grids; second-order differences shrink by ~4
        ratio = coarse.berry_residuals[1:-1].max() / fine.berry_residuals[2:-2:2].max()
        assert ratio >= 3.0

    def test_table_columns(self, lf6):
        gsf = ground_family(lf6, np.linspace(0, 1, 5))
        assert len(gsf.table()) == 5 and len(gsf.table()[0]) == 4


class TestMinGap:
    def test_single_z(self):
        assert min_gap(constant_family(pauli(LatticeSpec(1), "Z0"))) == pytest.approx(2.0)

    def test_ising_family_minimum_at_smallest_field(self):
        fam = tfim_family(8, 3.0, 1.5)
        grid = np.linspace(0, 1, 11)
        gaps = [eigendecompose(fam.dense_H(s)).gap for s in grid]
        assert min_gap(fam, grid) == pytest.approx(min(gaps))
        assert int(np.argmin(gaps)) == grid.size - 1
        assert min_gap(fam, grid) == pytest.approx(tfim.many_body_gap(8, 1.5), abs=1e-8)

    def test_crossing_into_ordered_phase_rejected(self):
        fam = tfim_family(10, 2.0, 0.1)
        with pytest.raises(GaplessModelError) as err:
            min_gap(fam, np.linspace(0, 1, 6))
        assert err.value.s > 0.5
        assert err.value.splitting < 1e-8
