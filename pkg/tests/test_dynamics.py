from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbadiabatic.dynamics import (
    DriveProtocol,
    diabatic_error,
    duhamel_diagnostic,
    evolve,
    naive_bound,
    orthogonality_demo,
    reference_states,
)
from mbadiabatic.errors import InvalidInputError
from mbadiabatic.models import (
    Envelope,
    InteractionFamily,
    constant_envelope,
    constant_family,
    single_spin_family,
    tfim_family,
)
from mbadiabatic.operators import LatticeSpec, LocalOperator, pauli
from mbadiabatic.spectra import eigendecompose, ground_family

SPIN = LatticeSpec(1)


def lz_family(sweep: float, coupling: float) -> InteractionFamily:
    """``H = sweep (s - 1/2) Z + coupling X``: a linear Landau-Zener crossing at s = 1/2."""
    return InteractionFamily(
        SPIN,
        [pauli(SPIN, "Z0"), pauli(SPIN, "X0")],
        [Envelope(lambda s: sweep * (s - 0.5), lambda s: sweep), constant_envelope(coupling)],
    )


def lz_final_excitation(fam, eps, **kw):
    psi0 = eigendecompose(fam.dense_H(0.0)).ground
    traj = evolve(fam, DriveProtocol(eps, np.linspace(0, 1, 101), **kw), psi0)
    excited = eigendecompose(fam.dense_H(1.0)).vectors[:, 1]
    return abs(np.vdot(excited, traj.states[-1])) ** 2


class TestEvolve:
    def test_zero_energy_ground_state_is_stationary(self):
        op = pauli(SPIN, "Z0") + LocalOperator.identity(SPIN)
        fam = constant_family(op)
        om = eigendecompose(fam.dense_H(0.0)).ground
        traj = evolve(fam, DriveProtocol(0.1, np.linspace(0, 1, 11)), om)
        assert np.allclose(traj.states, om, atol=1e-14)

    def test_initial_state_kept_exactly(self, lf6):
        psi0 = eigendecompose(lf6.dense_H(0.0)).ground
        traj = evolve(lf6, DriveProtocol(0.2, np.linspace(0, 1, 5)), psi0)
        assert np.array_equal(traj.states[0], psi0)

    def test_norm_conservation_sparse_path(self):
        fam = tfim_family(8, 2.5, 1.5, longitudinal=0.3)
        psi0 = eigendecompose(fam.dense_H(0.0)).ground
        traj = evolve(fam, DriveProtocol(0.1, np.linspace(0, 1, 21), tol=1e-8), psi0)
        assert traj.norm_drift <= 1e-9

    def test_landau_zener(self):
        sweep, coupling, eps = 100.0, 1.0, 0.05
        fam = lz_family(sweep, coupling)
        p = lz_final_excitation(fam, eps, tol=1e-11)
        # rate of change of the diabatic splitting 2 sweep (s - 1/2) in physical time s/eps
        closed = math.exp(-2 * math.pi * coupling**2 / (2 * sweep * eps))
        assert abs(p - closed) / closed <= 0.02
        p_half = lz_final_excitation(fam, eps, steps=400)
        p_full = lz_final_excitation(fam, eps, steps=800)
        assert abs(p_half - p_full) <= 1e-8

    def test_fourth_order_convergence(self):
        fam = lz_family(20.0, 1.0)
        psi0 = eigendecompose(fam.dense_H(0.0)).ground
        grid = np.array([0.0, 1.0])

        def final(steps):
            return evolve(fam, DriveProtocol(0.1, grid, steps=steps), psi0).states[-1]

        ref = final(6400)
        e1 = np.linalg.norm(final(400) - ref)
        e2 = np.linalg.norm(final(800) - ref)
        assert e1 / e2 >= 12

    def test_gauge_covariance(self, lf6):
        lat = lf6.lattice
        shifted = InteractionFamily(
            lat,
            list(lf6.operators) + [LocalOperator.identity(lat)],
            list(lf6.envelopes) + [Envelope(lambda s: 3 * math.sin(5 * s), lambda s: 15 * math.cos(5 * s))],
        )
        O = {"y0": pauli(lat, "Y0").dense(), "xx": pauli(lat, "X0 X1").dense()}
        psi0 = eigendecompose(lf6.dense_H(0.0)).ground
        grid = np.linspace(0, 1, 11)
        a = evolve(lf6, DriveProtocol(0.2, grid, tol=1e-11), psi0, O)
        b = evolve(shifted, DriveProtocol(0.2, grid, tol=1e-11), psi0, O)
        for k in O:
            assert np.max(np.abs(a.observables[k] - b.observables[k])) <= 1e-10

    def test_rate_validation(self):
        with pytest.raises(InvalidInputError):
            DriveProtocol(1.5)
        with pytest.raises(InvalidInputError):
            DriveProtocol(0.1, np.array([0.5, 0.2]))

    def test_unnormalized_start_rejected(self):
        with pytest.raises(InvalidInputError):
            evolve(lz_family(1, 1), DriveProtocol(0.1), np.array([1.0, 1.0]))

    def test_trajectory_table(self):
        fam = lz_family(5, 1)
        psi0 = eigendecompose(fam.dense_H(0.0)).ground
        traj = evolve(fam, DriveProtocol(0.5, np.linspace(0, 1, 3)), psi0, {"z": pauli(SPIN, "Z0").dense()})
        rows = traj.table()
        assert [r["s"] for r in rows] == [0.0, 0.5, 1.0]
        assert set(rows[0]) == {"s", "norm", "z"}


class TestDiabaticError:
    def test_constant_family(self):
        fam = constant_family(pauli(LatticeSpec(2), "Z0") + pauli(LatticeSpec(2), "Z1"))
        grid = np.linspace(0, 1, 6)
        refs = reference_states(fam, grid)
        traj = evolve(fam, DriveProtocol(0.1, grid), refs[0])
        err = diabatic_error(traj, refs, pauli(LatticeSpec(2), "X0").dense())
        assert err["max"] <= 1e-14

    def test_linear_in_rate(self, lf6):
        grid = np.linspace(0, 1, 21)
        refs = reference_states(lf6, grid)
        O = pauli(lf6.lattice, "Y0").dense()
        eps = np.array([0.04, 0.08, 0.16])
        errs = [diabatic_error(evolve(lf6, DriveProtocol(e, grid, tol=1e-9), refs[0]), refs, O)["max"] for e in eps]
        assert abs(np.polyfit(np.log(eps), np.log(errs), 1)[0] - 1.0) <= 0.15

    def test_shape_mismatch(self):
        fam = lz_family(5, 1)
        traj = evolve(fam, DriveProtocol(0.5, np.linspace(0, 1, 3)), eigendecompose(fam.dense_H(0.0)).ground)
        with pytest.raises(InvalidInputError):
            diabatic_error(traj, np.zeros((2, 2)), np.eye(2))


class TestNaiveBound:
    def test_constant_family(self):
        fam = constant_family(pauli(SPIN, "Z0"))
        assert naive_bound(fam, ground_family(fam, np.linspace(0, 1, 11)), 0.1) == 0.0

    def test_extensive(self):
        grid = np.linspace(0, 1, 51)
        b4 = naive_bound(tfim_family(4, 5.0, 4.0), ground_family(tfim_family(4, 5.0, 4.0), grid), 0.1)
        b8 = naive_bound(tfim_family(8, 5.0, 4.0), ground_family(tfim_family(8, 5.0, 4.0), grid), 0.1)
        assert b8 / b4 == pytest.approx(2.0, rel=1e-2)

    def test_single_spin_closed_form(self):
        fam = single_spin_family(0.2, 1.4)
        # |H'| = |a'| and the gap is 2, so the integral is |a(1) - a(0)| / 4
        bound = naive_bound(fam, ground_family(fam), 0.3)
        assert bound == pytest.approx(0.3 * 1.2 / 4, abs=1e-6)


@pytest.fixture(scope="module")
def demo():
    return orthogonality_demo(single_spin_family(0.0, 1.0), [10, 100, 1000], 0.1)


class TestOrthogonality:
    def test_log_fidelity_linear(self, demo):
        V = np.array([r["V"] for r in demo["rows"]], float)
        logf = np.array([r["log_fidelity"] for r in demo["rows"]])
        slope, icpt = np.polyfit(V, logf, 1)
        assert slope < 0
        assert slope == pytest.approx(demo["log_overlap2"], abs=1e-10)
        assert np.allclose(logf, slope * V + icpt, atol=1e-10)

    def test_local_error_flat(self, demo):
        local = [r["local_error"] for r in demo["rows"]]
        assert max(local) - min(local) <= 1e-12
        assert local[0] > 0

    def test_slow_limit(self):
        slow = orthogonality_demo(single_spin_family(0.0, 1.0), [10], 0.002)
        assert slow["rows"][0]["fidelity"] > 0.999

    def test_needs_one_site(self, lf6):
        with pytest.raises(InvalidInputError):
            orthogonality_demo(lf6, [10], 0.1)


class TestDuhamel:
    def test_zero_driving(self):
        fam = tfim_family(4, 2.0, 1.5)
        out = duhamel_diagnostic(
            fam, DriveProtocol(0.2, np.linspace(0, 0.5, 6)), lambda s: np.zeros((16, 16)), pauli(fam.lattice, "Z0").dense()
        )
        assert np.all(out["norms"] == 0.0) and out["bound"] == 0.0

    def test_separated_supports_commute_at_equal_times(self):
        fam = tfim_family(10, 2.0, 1.5)
        Y = pauli(fam.lattice, "Z4").dense()
        out = duhamel_diagnostic(fam, DriveProtocol(0.2, np.array([0.5])), lambda s: Y, pauli(fam.lattice, "Y0").dense())
        assert out["norms"][-1] <= 1e-8

    @settings(max_examples=4, deadline=None)
    @given(st.floats(0.02, 0.2), st.floats(0.3, 1.0))
    def test_bounds_trajectory_difference(self, amp, s_end):
        fam = tfim_family(4, 2.5, 1.5, longitudinal=0.3)
        lat = fam.lattice
        grid = np.linspace(0, s_end, 81)
        V = (pauli(lat, "Y1") + pauli(lat, "X1 Z2")).dense()

        def drive(s):
            return amp * math.sin(math.pi * s) * V

        O = pauli(lat, "Y0").dense()
        eps = 0.15
        psi0 = eigendecompose(fam.dense_H(0.0)).ground
        bare = evolve(fam, DriveProtocol(eps, grid, tol=1e-11), psi0)
        driven = evolve(fam, DriveProtocol(eps, grid, tol=1e-11, extra=drive), psi0)
        diff = abs(np.vdot(bare.states[-1], O @ bare.states[-1]) - np.vdot(driven.states[-1], O @ driven.states[-1]))
        out = duhamel_diagnostic(fam, DriveProtocol(eps, grid, tol=1e-11), drive, O)
        assert diff <= out["bound"]
