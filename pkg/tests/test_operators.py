from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbadiabatic.errors import InvalidInputError, ResourceError
from mbadiabatic.operators import (
    LatticeSpec,
    LocalOperator,
    PauliString,
    commutator,
    dense_realization,
    local_norm,
    multiply,
    pauli,
    pauli_matrix,
    product,
)

I2 = np.eye(2)
X, Y, Z = (pauli_matrix(c) for c in "XYZ")

chain3 = LatticeSpec(3)

letters = st.sampled_from("IXYZ")


@st.composite
def pauli_strings(draw, lattice=chain3):
    word = {i: c for i in range(lattice.n_sites) if (c := draw(letters)) != "I"}
    coef = complex(draw(st.floats(-2, 2)), draw(st.floats(-2, 2)))
    return PauliString(coef, word, lattice)


@st.composite
def local_ops(draw, lattice=chain3, max_terms=5):
    n = draw(st.integers(0, max_terms))
    strings = [draw(pauli_strings(lattice)) for _ in range(n)]
    return LocalOperator.from_strings(lattice, strings)


def tfim_operator(L: int, h: float) -> LocalOperator:
    lat = LatticeSpec(L)
    op = LocalOperator.zero(lat)
    for i in range(L):
        op = op + pauli(lat, f"Z{i}", -h) + pauli(lat, f"X{i} X{(i + 1) % L}", -1.0)
    return op


class TestLattice:
    def test_torus_distance(self):
        lat = LatticeSpec(6)
        assert lat.distance(0, 5) == 1
        assert lat.distance(0, 3) == 3
        assert LatticeSpec(6, boundary="open").distance(0, 5) == 5

    def test_two_dimensional_sites(self):
        lat = LatticeSpec(3, dimension=2)
        assert lat.n_sites == 9
        assert lat.site(lat.coords(7)) == 7
        assert lat.distance(lat.site((0, 0)), lat.site((2, 2))) == 2

    def test_bad_site(self):
        with pytest.raises(InvalidInputError):
            pauli(chain3, "X3")


class TestMultiply:
    def test_xy_is_iz(self):
        p = multiply(PauliString.single(0, "X", lattice=chain3), PauliString.single(0, "Y", lattice=chain3))
        assert p.letters == ((0, "Z"),)
        assert p.coefficient == 1j

    def test_square_drops_site(self):
        a = PauliString(2.0, {0: "X", 1: "Z"}, chain3)
        p = multiply(a, PauliString.single(0, "X", lattice=chain3))
        assert p.letters == ((1, "Z"),)
        assert p.coefficient == 2.0

    @given(pauli_strings())
    def test_identity_is_neutral(self, p):
        one = PauliString(1.0, {}, chain3)
        assert multiply(one, p) == p
        assert multiply(p, one) == p

    def test_lattice_mismatch(self):
        with pytest.raises(InvalidInputError):
            multiply(PauliString.single(0, "X", lattice=chain3), PauliString.single(0, "X", lattice=LatticeSpec(4)))

    def test_zero_coefficient_dropped(self):
        op = LocalOperator.from_strings(chain3, [PauliString(0.0, {0: "X"}, chain3)])
        assert op.is_zero

    @given(pauli_strings(), pauli_strings())
    def test_swap_sign_is_anticommuting_parity(self, a, b):
        ab, ba = multiply(a, b), multiply(b, a)
        if ab.coefficient == 0:
            return
        shared = set(dict(a.letters)) & set(dict(b.letters))
        flips = sum(dict(a.letters)[i] != dict(b.letters)[i] for i in shared)
        assert ab.letters == ba.letters
        assert np.isclose(ab.coefficient, (-1) ** flips * ba.coefficient)


class TestCommutator:
    def test_xy(self):
        c = commutator(pauli(chain3, "X0"), pauli(chain3, "Y0"))
        assert c == pauli(chain3, "Z0", 2j)

    def test_disjoint_is_zero(self):
        lat = LatticeSpec(5)
        assert commutator(pauli(lat, "X0"), pauli(lat, "Z3")).is_zero

    def test_z_with_bond(self):
        c = commutator(pauli(chain3, "Z0"), pauli(chain3, "X0 X1"))
        assert c == pauli(chain3, "Y0 X1", 2j)

    def test_result_support_is_union(self):
        lat = LatticeSpec(5)
        c = commutator(pauli(lat, "X0 X1"), pauli(lat, "Z1 Z2"))
        assert set(c.terms) == {frozenset({0, 1, 2})}

    @settings(max_examples=40, deadline=None)
    @given(local_ops(), local_ops())
    def test_dense_homomorphism(self, a, b):
        da, db = a.dense(), b.dense()
        assert np.max(np.abs(commutator(a, b).dense() - (da @ db - db @ da))) <= 1e-12
        assert np.max(np.abs(product(a, b).dense() - da @ db)) <= 1e-12
        assert np.max(np.abs((a + b).dense() - (da + db))) <= 1e-12

    def test_random_three_site(self, rng):
        lat = LatticeSpec(3)
        a = LocalOperator.from_dense(lat, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
        b = LocalOperator.from_dense(lat, rng.normal(size=(8, 8)))
        diff = commutator(a, b).dense() - (a.dense() @ b.dense() - b.dense() @ a.dense())
        assert np.max(np.abs(diff)) <= 1e-12


class TestLocalNorm:
    def test_field_sum(self):
        lat = LatticeSpec(5)
        op = LocalOperator.zero(lat)
        for i in range(5):
            op = op + pauli(lat, f"Z{i}", -0.7)
        assert np.isclose(local_norm(op), 0.7)

    @pytest.mark.parametrize("h", [0.5, 2.0, 3.0])
    def test_ising_chain(self, h):
        assert np.isclose(local_norm(tfim_operator(6, h)), h + 2)

    def test_single_block(self, rng):
        lat = LatticeSpec(4)
        M = rng.normal(size=(4, 4))
        M = M + M.T
        parts = LocalOperator.from_dense(lat, M, sites=[0, 1])
        op = LocalOperator.from_strings(lat, [q for _, q in parts.strings()], support={0, 1})
        assert len(op.terms) == 1
        assert np.isclose(local_norm(op), np.linalg.norm(M, 2))

    def test_block_norm_uses_support_only(self):
        op = pauli(LatticeSpec(12), "X0 Y1", 3.0)
        assert op.block_norm({0, 1}) == pytest.approx(3.0)

    @settings(max_examples=40, deadline=None)
    @given(local_ops(), local_ops(), st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
    def test_triangle_and_homogeneity(self, a, b, c):
        assert local_norm(a + b) <= local_norm(a) + local_norm(b) + 1e-12
        assert np.isclose(local_norm(a.scale(c)), abs(c) * local_norm(a), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(local_ops(LatticeSpec(6)), local_ops(LatticeSpec(6)))
    def test_commutator_norm_bound(self, a, b):
        # each block of [A, B] pairs overlapping supports; counting those pairs per site
        # gives 2((r_A + 1)^d + (r_B + 1)^d) |A|_loc |B|_loc
        d = 1
        bound = 2 * ((a.range + 1) ** d + (b.range + 1) ** d) * local_norm(a) * local_norm(b)
        assert local_norm(commutator(a, b)) <= bound + 1e-12

    def test_bond_field_pair_exceeds_max_range_form(self):
        lat = LatticeSpec(6)
        bonds, fields = LocalOperator.zero(lat), LocalOperator.zero(lat)
        for i in range(6):
            bonds = bonds + pauli(lat, f"X{i} X{(i + 1) % 6}")
            fields = fields + pauli(lat, f"Z{i}")
        lhs = local_norm(commutator(bonds, fields))
        assert lhs == pytest.approx(8.0)
        assert lhs > 2 * max(bonds.range, fields.range + 1) * local_norm(bonds) * local_norm(fields)


class TestDense:
    def test_single_site(self):
        assert np.array_equal(pauli(LatticeSpec(1), "Z0").dense(), np.diag([1.0, -1.0]))

    def test_kron_order(self):
        assert np.array_equal(pauli(LatticeSpec(2), "X0").dense(), np.kron(X, I2))
        assert np.array_equal(pauli(LatticeSpec(2), "Y1").dense(), np.kron(I2, Y))

    @given(local_ops())
    def test_adjoint_commutes_with_realization(self, a):
        assert np.allclose(a.adjoint().dense(), a.dense().conj().T, atol=1e-14)

    def test_cap(self):
        lat = LatticeSpec(15)
        with pytest.raises(ResourceError, match="14"):
            dense_realization(pauli(lat, "Z0"))

    def test_sparse_matches_dense(self):
        op = tfim_operator(5, 1.3)
        assert np.allclose(op.sparse().toarray(), op.dense())


class TestLocalOperator:
    def test_hermitian_flag_checked(self):
        with pytest.raises(InvalidInputError):
            LocalOperator(chain3, {(0,): {((0, "X"),): 1j}}, hermitian=True)

    def test_range(self):
        lat = LatticeSpec(8)
        assert pauli(lat, "X0 X3").range == 3
        assert pauli(lat, "X0 X7").range == 1

    def test_small_blocks_dropped(self):
        op = pauli(chain3, "X0") + pauli(chain3, "X0", -1 + 1e-16)
        assert op.is_zero

    @settings(max_examples=30, deadline=None)
    @given(local_ops())
    def test_text_round_trip(self, a):
        assert LocalOperator.from_text(a.to_text()) == a

    def test_from_dense_round_trip(self, rng):
        M = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        assert np.allclose(LocalOperator.from_dense(chain3, M).dense(), M, atol=1e-13)
