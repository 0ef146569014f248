"""Exact spectral data and gauge-fixed ground-state families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .errors import GaplessModelError, InvalidInputError
from .models import InteractionFamily

DEGENERACY_TOL = 1e-8
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class SpectralData:
    """Full eigendecomposition with the ground energy shifted to zero."""

    energies: np.ndarray
    vectors: np.ndarray
    shift: float

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0]) if self.energies.size > 1 else np.inf

    @property
    def ground(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def dim(self) -> int:
        return self.energies.size

    def shifted_matrix(self) -> np.ndarray:
        return (self.vectors * self.energies) @ self.vectors.conj().T

    def to_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ X @ self.vectors

    def from_eigenbasis(self, Xe: np.ndarray) -> np.ndarray:
        return self.vectors @ Xe @ self.vectors.conj().T


def eigendecompose(
    H: np.ndarray,
    degeneracy_tol: float = DEGENERACY_TOL,
    hermitian_tol: float = HERMITIAN_TOL,
) -> SpectralData:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError("expected a square matrix")
    asym = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if asym > hermitian_tol * max(1.0, np.max(np.abs(H))):
        raise InvalidInputError(f"matrix is not Hermitian (asymmetry {asym:.3g})")
    H = 0.5 * (H + H.conj().T)
    if np.iscomplexobj(H) and not np.any(H.imag):
        H = H.real
    E, V = np.linalg.eigh(H)
    shift = float(E[0])
    E = E - shift
    E[0] = 0.0
    if E.size > 1 and E[1] < degeneracy_tol:
        raise GaplessModelError(
            f"ground state is degenerate to {E[1]:.3g} (threshold {degeneracy_tol:g})",
            splitting=float(E[1]),
        )
    return SpectralData(E, V.astype(complex), shift)


def ground_state_sparse(H, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs of a large sparse Hermitian matrix."""
    H = sparse.csr_matrix(H)
    vals, vecs = eigsh(H, k=k, which="SA", tol=1e-13)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class GroundStateFamily:
    grid: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    gaps: np.ndarray
    shifts: np.ndarray
    berry_residuals: np.ndarray
    spectra: tuple[SpectralData, ...] | None = None

    @property
    def min_gap(self) -> float:
        return float(np.min(self.gaps))

    def index(self, s: float) -> int:
        i = int(np.argmin(np.abs(self.grid - s)))
        if abs(self.grid[i] - s) > 1e-12:
            raise InvalidInputError(f"s = {s} is not a grid point")
        return i

    def table(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(s), float(e), float(g), float(b))
            for s, e, g, b in zip(self.grid, self.shifts, self.gaps, self.berry_residuals)
        ]


def _derivative(sd: SpectralData, dH: np.ndarray) -> np.ndarray:
    omega = sd.ground
    coeff = sd.vectors.conj().T @ (dH @ omega)
    coeff[0] = 0.0
    coeff[1:] /= sd.energies[1:]
    # dOmega = -H^{-1} Q dH Omega, which is orthogonal to Omega by construction
    return -(sd.vectors @ coeff)


def ground_family(
    family: InteractionFamily,
    grid=None,
    keep_spectra: bool = False,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> GroundStateFamily:
    """Ground states on ``grid`` in the smooth Berry gauge.

    Phases follow discrete parallel transport; derivatives use first-order
    perturbation theory in the shifted gauge ``H Omega = 0``.
    """
    grid = np.linspace(0.0, 1.0, 201) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly ascending")
    states, derivs, gaps, shifts, spectra = [], [], [], [], []
    prev = None
    for s in grid:
        try:
            sd = eigendecompose(family.dense_H(s), degeneracy_tol=degeneracy_tol)
        except GaplessModelError as exc:
            raise GaplessModelError(
                f"family is not gapped at s = {s:.6g}: {exc}", exc.splitting, float(s)
            ) from None
        omega = sd.ground
        if prev is not None:
            ov = np.vdot(prev, omega)
            phase = np.conj(ov) / abs(ov) if abs(ov) > 0 else 1.0
        else:
            # fix the initial phase by making the largest component real positive
            j = int(np.argmax(np.abs(omega)))
            phase = np.conj(omega[j]) / abs(omega[j])
        if phase != 1.0:
            vecs = sd.vectors.copy()
            vecs[:, 0] *= phase
            sd = SpectralData(sd.energies, vecs, sd.shift)
            omega = sd.ground
        prev = omega
        states.append(omega)
        derivs.append(_derivative(sd, family.dense_dH(s)))
        gaps.append(sd.gap)
        shifts.append(sd.shift)
        if keep_spectra:
            spectra.append(sd)
    states = np.array(states)
    derivs = np.array(derivs)
    berry = np.zeros(grid.size)
    if grid.size >= 3:
        fd = np.gradient(states, grid, axis=0, edge_order=2)
        berry = np.linalg.norm(fd - derivs, axis=1)
    return GroundStateFamily(
        grid=grid,
        states=states,
        derivatives=derivs,
        gaps=np.array(gaps),
        shifts=np.array(shifts),
        berry_residuals=berry,
        spectra=tuple(spectra) if keep_spectra else None,
    )


def min_gap(family: InteractionFamily, grid=None) -> float:
    grid = np.linspace(0.0, 1.0, 201) if grid is None else np.asarray(grid, dtype=float)
    gaps = []
    for s in grid:
        try:
            gaps.append(eigendecompose(family.dense_H(s)).gap)
        except GaplessModelError as exc:
            raise GaplessModelError(
                f"family is not gapped at s = {s:.6g}: {exc}", exc.splitting, float(s)
            ) from None
    return float(min(gaps))
