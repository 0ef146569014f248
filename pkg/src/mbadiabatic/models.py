"""Parametrized Hamiltonian families ``H_s = sum_i f_i(s) O_i``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import InvalidInputError
from .operators import DEFAULT_SITE_CAP, LatticeSpec, LocalOperator, pauli


def smooth_switch(s):
    """C-infinity step: 0 on s <= 0, 1 on s >= 1, all derivatives vanish at both ends."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    inside = (s > 0) & (s < 1)
    si = np.where(inside, s, 0.5)
    # f(s)/(f(s)+f(1-s)) with f = exp(-1/s) equals expit(1/(1-s) - 1/s)
    val = expit(1.0 / (1.0 - si) - 1.0 / si)
    out = np.where(inside, val, out)
    return out if out.ndim else float(out)


def smooth_switch_derivative(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    si = np.where(inside, s, 0.5)
    th = expit(1.0 / (1.0 - si) - 1.0 / si)
    d = th * (1.0 - th) * (1.0 / si**2 + 1.0 / (1.0 - si) ** 2)
    out = np.where(inside, d, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Envelope:
    """Scalar coefficient ``f(s)`` with its first derivative."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    label: str = ""

    def __call__(self, s: float) -> float:
        return float(self.value(s))


def constant_envelope(c: float) -> Envelope:
    return Envelope(lambda s: c, lambda s: 0.0, f"const({c:g})")


def switch_envelope(start: float, stop: float) -> Envelope:
    """``start + (stop - start) * theta(s)`` with the smooth switch ``theta``."""
    delta = stop - start
    return Envelope(
        lambda s: start + delta * smooth_switch(s),
        lambda s: delta * smooth_switch_derivative(s),
        f"switch({start:g}->{stop:g})",
    )


@dataclass
class InteractionFamily:
    """Sum of fixed local operators weighted by smooth envelopes.

    Dense and sparse realizations of each operator are cached on first use.
    """

    lattice: LatticeSpec
    operators: Sequence[LocalOperator]
    envelopes: Sequence[Envelope]
    name: str = "family"
    params: dict = field(default_factory=dict)
    _dense: list | None = field(default=None, init=False, repr=False)
    _sparse: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if len(self.operators) != len(self.envelopes):
            raise InvalidInputError("need one envelope per operator")
        for op in self.operators:
            if op.lattice != self.lattice:
                raise InvalidInputError("operator lattice does not match the family")
            if not op.is_hermitian():
                raise InvalidInputError("family operators must be Hermitian")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def coefficients(self, s: float) -> np.ndarray:
        return np.array([e(s) for e in self.envelopes])

    def coefficient_derivatives(self, s: float) -> np.ndarray:
        return np.array([float(e.derivative(s)) for e in self.envelopes])

    def local(self, s: float) -> LocalOperator:
        out = LocalOperator.zero(self.lattice)
        for c, op in zip(self.coefficients(s), self.operators):
            out = out + op.scale(c)
        return out

    def local_derivative(self, s: float) -> LocalOperator:
        out = LocalOperator.zero(self.lattice)
        for c, op in zip(self.coefficient_derivatives(s), self.operators):
            out = out + op.scale(c)
        return out

    def _dense_terms(self, cap: int = DEFAULT_SITE_CAP):
        if self._dense is None:
            self._dense = [op.dense(cap) for op in self.operators]
        return self._dense

    def _sparse_terms(self, cap: int = DEFAULT_SITE_CAP):
        if self._sparse is None:
            self._sparse = [op.sparse(cap) for op in self.operators]
        return self._sparse

    def dense_H(self, s: float) -> np.ndarray:
        return sum(c * m for c, m in zip(self.coefficients(s), self._dense_terms()))

    def dense_dH(self, s: float) -> np.ndarray:
        return sum(c * m for c, m in zip(self.coefficient_derivatives(s), self._dense_terms()))

    def sparse_H(self, s: float) -> sparse.csr_matrix:
        return sum(c * m for c, m in zip(self.coefficients(s), self._sparse_terms()))

    def sparse_dH(self, s: float) -> sparse.csr_matrix:
        return sum(
            c * m for c, m in zip(self.coefficient_derivatives(s), self._sparse_terms())
        )

    def is_constant(self) -> bool:
        grid = np.linspace(0, 1, 11)
        return all(
            np.allclose([float(e.derivative(s)) for s in grid], 0.0) for e in self.envelopes
        )


def _sum(lattice: LatticeSpec, labels: list[str]) -> LocalOperator:
    out = LocalOperator.zero(lattice)
    for lab in labels:
        out = out + pauli(lattice, lab)
    return out


def tfim_family(
    length: int,
    field_start: float,
    field_stop: float | None = None,
    coupling: float = 1.0,
    longitudinal: float = 0.0,
    boundary: str = "periodic",
) -> InteractionFamily:
    """``H_s = -sum_i (h_s Z_i + J X_i X_{i+1} + g X_i)`` with ``h_s`` switched smoothly.

    A nonzero longitudinal field ``g`` breaks the spin-flip symmetry, which
    keeps the ground state simple and the model nonintegrable.
    """
    lat = LatticeSpec(length, 1, boundary)
    n = lat.n_sites
    if field_stop is None:
        field_stop = field_start
    bonds = [f"X{i} X{(i + 1) % n}" for i in range(n if boundary == "periodic" else n - 1)]
    if boundary == "periodic" and n == 2:
        bonds = bonds[:1]
    ops = [_sum(lat, [f"Z{i}" for i in range(n)]), _sum(lat, bonds)]
    envs = [switch_envelope(-field_start, -field_stop), constant_envelope(-coupling)]
    if longitudinal:
        ops.append(_sum(lat, [f"X{i}" for i in range(n)]))
        envs.append(constant_envelope(-longitudinal))
    return InteractionFamily(
        lat,
        ops,
        envs,
        name="tfim",
        params=dict(
            length=length,
            field_start=field_start,
            field_stop=field_stop,
            coupling=coupling,
            longitudinal=longitudinal,
            boundary=boundary,
        ),
    )


def single_spin_family(angle_start: float, angle_stop: float) -> InteractionFamily:
    """``H_s = -(cos a_s Z + sin a_s X)`` with ``a_s`` switched smoothly."""
    lat = LatticeSpec(1)
    da = angle_stop - angle_start

    def angle(s):
        return angle_start + da * smooth_switch(s)

    def dangle(s):
        return da * smooth_switch_derivative(s)

    envs = [
        Envelope(lambda s: -math.cos(angle(s)), lambda s: math.sin(angle(s)) * dangle(s), "-cos a"),
        Envelope(lambda s: -math.sin(angle(s)), lambda s: -math.cos(angle(s)) * dangle(s), "-sin a"),
    ]
    fam = InteractionFamily(
        lat,
        [pauli(lat, "Z0"), pauli(lat, "X0")],
        envs,
        name="single-spin",
        params=dict(angle_start=angle_start, angle_stop=angle_stop),
    )
    fam.angle = angle  # type: ignore[attr-defined]
    fam.angle_derivative = dangle  # type: ignore[attr-defined]
    return fam


def single_spin_ground_state(angle: float) -> np.ndarray:
    """Ground state of ``-(cos a Z + sin a X)``: a spin rotated by ``a`` about y."""
    return np.array([math.cos(angle / 2), math.sin(angle / 2)], dtype=complex)


def constant_family(operator: LocalOperator) -> InteractionFamily:
    return InteractionFamily(
        operator.lattice, [operator], [constant_envelope(1.0)], name="constant"
    )


FAMILIES = {
    "tfim": tfim_family,
    "single-spin": single_spin_family,
}


def make_family(name: str, **params) -> InteractionFamily:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise InvalidInputError(f"unknown family {name!r}; known: {sorted(FAMILIES)}") from None
    return factory(**params)
