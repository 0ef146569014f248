"""Linear response of an extensive observable to a slow parameter drive."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DriveProtocol, evolve
from .errors import InvalidInputError, NumericalError, PreconditionError
from .models import Envelope, InteractionFamily
from .operators import LocalOperator
from .spectra import SpectralData, eigendecompose
from .spectral_filter import apply_filter_spectral, build_filter


@dataclass
class ResponseSetup:
    """Family driven through a scalar parameter ``lam(s)`` and an observable ``X``."""

    family: InteractionFamily
    observable: LocalOperator
    parameter: Envelope

    def __post_init__(self):
        if not self.observable.is_hermitian():
            raise InvalidInputError("observable must be Hermitian")
        if self.observable.lattice != self.family.lattice:
            raise InvalidInputError("observable and family live on different lattices")
        self._X = None

    @property
    def volume(self) -> int:
        return self.family.lattice.n_sites

    @property
    def X(self) -> np.ndarray:
        if self._X is None:
            self._X = self.observable.dense()
        return self._X

    def rate(self, s: float) -> float:
        return float(self.parameter.derivative(s))


def transverse_field_setup(family: InteractionFamily, observable: LocalOperator) -> ResponseSetup:
    """``lam = h`` for the Ising families, whose first envelope is ``-h(s)``."""
    env = family.envelopes[0]
    lam = Envelope(lambda s: -env.value(s), lambda s: -env.derivative(s), "h")
    return ResponseSetup(family, observable, lam)


def first_order_generator(
    setup: ResponseSetup, s: float, gap_fraction: float = 0.9, per_unit_rate: bool = True
) -> tuple[SpectralData, np.ndarray]:
    """``A_1 = filter(K)`` with ``K = -filter(H')`` at ``s``.

    With ``per_unit_rate`` the derivative is taken with respect to ``lam``
    (``H' / lam'``), which is the generator entering the response coefficient.
    """
    fam = setup.family
    sd = eigendecompose(fam.dense_H(s))
    spec = build_filter(gap_fraction * sd.gap)
    dH = fam.dense_dH(s)
    if per_unit_rate:
        rate = setup.rate(s)
        if abs(rate) < 1e-12:
            raise PreconditionError(f"drive rate d lam/ds vanishes at s = {s}; the quotient is undefined")
        dH = dH / rate
    K = -apply_filter_spectral(spec, sd, dH)
    K = 0.5 * (K + K.conj().T)
    A1 = apply_filter_spectral(spec, sd, K)
    return sd, 0.5 * (A1 + A1.conj().T)


def kubo_f(setup: ResponseSetup, sd: SpectralData, A1: np.ndarray, X: np.ndarray | None = None) -> float:
    """``i <Omega|[A_1, X]|Omega> / L^d``; real for Hermitian ``A_1`` and ``X``."""
    X = setup.X if X is None else np.asarray(X)
    for name, M in (("A_1", A1), ("X", X)):
        if np.max(np.abs(M - M.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
            raise InvalidInputError(f"{name} must be Hermitian")
    om = sd.ground
    val = 1j * np.vdot(om, (A1 @ X - X @ A1) @ om) / setup.volume
    if abs(val.imag) > 1e-10:
        raise NumericalError(f"response coefficient has imaginary part {val.imag:.3g}")
    return float(val.real)


def evolve_to(setup: ResponseSetup, eps: float, s: float, tol: float = 1e-9):
    fam = setup.family
    psi0 = eigendecompose(fam.dense_H(0.0)).ground
    grid = np.array([0.0, s]) if s > 0 else np.array([0.0])
    if s <= 0:
        return psi0
    traj = evolve(fam, DriveProtocol(eps, grid, tol=tol), psi0)
    return traj.states[-1]


def numeric_response(setup: ResponseSetup, eps: float, s: float, tol: float = 1e-9) -> float:
    """``(<psi|X psi> - <Omega|X Omega>) / (L^d eps lam'(s))`` after evolving to ``s``."""
    rate = setup.rate(s)
    if abs(rate) < 1e-12:
        raise PreconditionError(f"drive rate d lam/ds vanishes at s = {s}; the quotient is undefined")
    psi = evolve_to(setup, eps, s, tol)
    om = eigendecompose(setup.family.dense_H(s)).ground
    X = setup.X
    dev = np.vdot(psi, X @ psi).real - np.vdot(om, X @ om).real
    return float(dev / (setup.volume * eps * rate))


def second_order_deviation(setup: ResponseSetup, eps_values, s: float, tol: float = 1e-10) -> dict:
    """``D(eps) = |<psi|X psi> - <Omega|X Omega> - i eps <Omega|[A_1, X] Omega>|`` and ``max D/(L eps^2)``.

    Here ``A_1`` is the generator for the ``s``-parametrized drive.
    """
    sd, A1 = first_order_generator(setup, s, per_unit_rate=False)
    om = sd.ground
    X = setup.X
    first = (1j * np.vdot(om, (A1 @ X - X @ A1) @ om)).real
    base = np.vdot(om, X @ om).real
    rows = []
    for eps in eps_values:
        psi = evolve_to(setup, eps, s, tol)
        D = abs(np.vdot(psi, X @ psi).real - base - eps * first)
        rows.append({"eps": float(eps), "D": float(D), "C": float(D / (setup.volume * eps**2))})
    return {"rows": rows, "C": max(r["C"] for r in rows), "first_order": float(first)}
