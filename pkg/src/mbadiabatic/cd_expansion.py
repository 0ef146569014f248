"""Order-by-order counterdiabatic expansion around a gapped ground-state path.

With ``U = exp(-iA)`` and ``A = sum_j eps^j A_j`` the dressed state
``phi = U Omega`` obeys ``eps phi' = -i(H + Y) phi`` for

    Y = i eps U' U^+ + eps U K U^+ + U H U^+ - H.

Conjugating back, ``U^+ Y U = sum_p eps^p T_p`` with ``T_p = M_p + N_p``:

    M_p = sum_{d(j)=p} -(i^k/k!) ad_{A_jk} ... ad_{A_j1}(H)
    N_p = sum_{d(j)=p-1} (i^{k-1}/k!) ad_{A_jk} ... ad_{A_j2}(A_j1')     (p >= 2)
    N_1 = K

where ``j = (j1, ..., jk)`` runs over compositions.  Each ``A_p`` is fixed by
``T_p Omega = 0``: ``A_p = filter(R_p) + C_p`` with
``R_p = T_p + i[A_p, H]`` and the real constant ``C_{p-1}`` chosen so that
``<Omega, R_p Omega> = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import expm

from .errors import (
    ConstantsIntegrationError,
    DependencyError,
    InvalidInputError,
    NumericalError,
    RecursionResidualError,
)
from .models import InteractionFamily
from .operators import LocalOperator, commutator as local_commutator
from .spectra import GroundStateFamily, SpectralData, ground_family
from .spectral_filter import FilterSpec, apply_filter_quadrature, apply_filter_spectral, build_filter

DEFAULT_MAX_ORDER = 4
DEFAULT_GRID = 401


@lru_cache(maxsize=None)
def _compositions(p: int) -> tuple[tuple[int, ...], ...]:
    if p == 0:
        return ((),)
    out = []
    for first in range(p, 0, -1):
        for rest in _compositions(p - first):
            out.append((first,) + rest)
    return tuple(out)


def compositions(p: int) -> list[tuple[int, ...]]:
    """All compositions of ``p``, ordered by length, then descending lexicographically."""
    if int(p) < 1:
        raise InvalidInputError("p must be a positive integer")
    return sorted(_compositions(int(p)), key=lambda j: (len(j), tuple(-x for x in j)))


def _comm(a, b):
    if isinstance(a, LocalOperator):
        return local_commutator(a, b)
    return a @ b - b @ a


class _NestedAd:
    """Memoized ``ad_{A_jk} ... ad_{A_j1}(base)`` keyed by the index tuple."""

    def __init__(self, A: Mapping[int, object], base):
        self.A = A
        self.memo = {(): base}

    def __call__(self, idx: tuple[int, ...]):
        if idx in self.memo:
            return self.memo[idx]
        head = self(idx[:-1])
        j = idx[-1]
        if j not in self.A:
            raise DependencyError(f"A_{j} is required but not available")
        val = _comm(self.A[j], head)
        self.memo[idx] = val
        return val


def _zero_like(H):
    if isinstance(H, LocalOperator):
        return LocalOperator.zero(H.lattice)
    return np.zeros_like(H, dtype=complex)


def _mn_sums(
    p: int,
    A: Mapping[int, object],
    dA: Mapping[int, object],
    H,
    K,
    max_entry: int | None = None,
    drop_leading: bool = False,
    cache: _NestedAd | None = None,
):
    ad = cache or _NestedAd(A, H)
    M = _zero_like(H)
    for j in compositions(p):
        if max_entry is not None and max(j) > max_entry:
            continue
        if drop_leading and len(j) == 1:
            continue
        k = len(j)
        M = M + (-(1j**k) / math.factorial(k)) * ad(j)
    if p == 1:
        if K is None:
            raise DependencyError("K is required for N_1")
        return M, _zero_like(H) + K
    N = _zero_like(H)
    for j in compositions(p - 1):
        if max_entry is not None and max(j) > max_entry:
            continue
        if drop_leading and len(j) == 1:
            continue
        if j[0] not in dA:
            raise DependencyError(f"derivative of A_{j[0]} is required but not available")
        val = dA[j[0]]
        for jj in j[1:]:
            if jj not in A:
                raise DependencyError(f"A_{jj} is required but not available")
            val = _comm(A[jj], val)
        k = len(j)
        N = N + (1j ** (k - 1) / math.factorial(k)) * val
    return M, N


def build_MN(p: int, A: Mapping[int, object], dA: Mapping[int, object], H, K=None):
    """``(M_p, N_p)`` by direct nested commutators (dense matrices or LocalOperators)."""
    if int(p) < 1:
        raise InvalidInputError("p must be a positive integer")
    return _mn_sums(int(p), A, dA, H, K)


def series_coefficients(
    A: Mapping[int, np.ndarray],
    dA: Mapping[int, np.ndarray],
    H: np.ndarray,
    K: np.ndarray,
    orders,
    radius: float = 0.5,
    n_points: int = 64,
) -> dict[int, np.ndarray]:
    """Taylor coefficients of ``U^{-1} Y U`` in ``eps`` by a discrete Cauchy integral.

    Independent of the composition sums: ``U`` and ``U'`` come from matrix
    exponentials at complex ``eps``, the derivative through the block
    exponential ``exp([[X, X'], [0, X]])``.
    """
    dim = H.shape[0]
    orders = list(orders)
    acc = {p: np.zeros((dim, dim), dtype=complex) for p in orders}
    for m in range(n_points):
        z = radius * np.exp(2j * np.pi * m / n_points)
        Az = sum(z**j * a for j, a in A.items())
        dAz = sum(z**j * a for j, a in dA.items())
        big = np.zeros((2 * dim, 2 * dim), dtype=complex)
        big[:dim, :dim] = -1j * Az
        big[dim:, dim:] = -1j * Az
        big[:dim, dim:] = -1j * dAz
        E = expm(big)
        U, dU = E[:dim, :dim], E[:dim, dim:]
        Uinv = expm(1j * Az)
        Yt = 1j * z * Uinv @ dU + z * K + H - Uinv @ H @ U
        for p in orders:
            acc[p] += Yt * z ** (-p)
    return {p: v / n_points for p, v in acc.items()}


def _fd_derivative(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Sixth-order finite differences along axis 0 of a uniform grid.

    Interior points use Richardson extrapolation of central differences at
    spacings ``h``, ``2h`` and ``3h``; points near the ends fall back to
    fourth-order stencils (central where possible, otherwise one-sided).
    """
    n = values.shape[0]
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0):
        raise InvalidInputError("finite differences need a uniform grid")
    if n < 7:
        raise InvalidInputError("need at least 7 grid points")
    f = values
    out = np.empty_like(values)
    out[3:-3] = (45 * (f[4:-2] - f[2:-4]) - 9 * (f[5:-1] - f[1:-5]) + (f[6:] - f[:-6])) / (60 * h)
    for i in (2, n - 3):
        out[i] = (8 * (f[i + 1] - f[i - 1]) - (f[i + 2] - f[i - 2])) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def _trapezoid_cumulative(y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(grid))
    return out


def _hermitize(X: np.ndarray, tol: float, what: str) -> tuple[np.ndarray, float]:
    asym = float(np.max(np.abs(X - X.conj().T))) if X.size else 0.0
    if asym > tol:
        raise NumericalError(f"{what} is not Hermitian (asymmetry {asym:.3g})")
    return 0.5 * (X + X.conj().T), asym


def qa_generator(
    gsf: GroundStateFamily,
    family: InteractionFamily,
    spec: FilterSpec,
    s: float,
    tol: float = 1e-7,
) -> np.ndarray:
    """Dense ``K = -filter(H')`` at a grid point, checked against ``Omega' = -i K Omega``."""
    if gsf.spectra is None:
        raise InvalidInputError("ground family must keep its spectral data")
    i = gsf.index(s)
    sd = gsf.spectra[i]
    if sd.gap < spec.g * (1 - 1e-12):
        raise InvalidInputError(f"gap {sd.gap:.6g} at s = {s} is below the filter gap {spec.g:.6g}")
    K = -apply_filter_spectral(spec, sd, family.dense_dH(s))
    K, _ = _hermitize(K, 1e-9, "K")
    res = float(np.linalg.norm(gsf.derivatives[i] + 1j * K @ gsf.states[i]))
    if res > tol:
        raise NumericalError(f"|Omega' + i K Omega| = {res:.3g} at s = {s}")
    return K


@dataclass
class CDExpansion:
    """Generators ``A_p = F_p + C_p`` on a uniform grid, ``p = 1 .. order-1``.

    ``order`` is the ``n`` of the residual drive ``Y_n``; the constant
    ``C_{n-1}`` is fixed by the order-``n`` solvability condition.
    """

    order: int
    grid: np.ndarray
    family: InteractionFamily
    gsf: GroundStateFamily
    filter_spec: FilterSpec
    backend: str
    H: np.ndarray  # shifted Hamiltonians, H Omega = 0
    K: np.ndarray
    F: dict[int, np.ndarray]
    dF: dict[int, np.ndarray]
    C: dict[int, np.ndarray]
    dC: dict[int, np.ndarray]
    residuals: dict[int, np.ndarray]
    qa_residuals: np.ndarray
    hermiticity: dict[int, float]
    records: list[dict] = field(default_factory=list)
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def A(self, p: int, i: int) -> np.ndarray:
        if p not in self.F:
            raise DependencyError(f"A_{p} was not constructed (order {self.order})")
        return self.F[p][i] + self.C[p][i] * np.eye(self.dim)

    def dA(self, p: int, i: int) -> np.ndarray:
        return self.dF[p][i] + self.dC[p][i] * np.eye(self.dim)

    def generator(self, eps: float, i: int) -> np.ndarray:
        return sum(eps**p * self.A(p, i) for p in self.F)

    # ---- off-grid evaluation -----------------------------------------
    def _spline(self, name: str, p: int | None = None):
        key = (name, p)
        if key not in self._splines:
            data = {"K": self.K, "F": self.F.get(p), "dF": self.dF.get(p), "C": self.C.get(p), "dC": self.dC.get(p)}[name]
            self._splines[key] = CubicSpline(self.grid, data, axis=0)
        return self._splines[key]

    def at(self, s: float) -> dict:
        """Interpolated ``K``, ``A_p`` and ``A_p'`` at an arbitrary ``s``."""
        eye = np.eye(self.dim)
        A = {p: self._spline("F", p)(s) + float(self._spline("C", p)(s)) * eye for p in self.F}
        dA = {p: self._spline("dF", p)(s) + float(self._spline("dC", p)(s)) * eye for p in self.F}
        return {"K": self._spline("K")(s), "A": A, "dA": dA}

    def driving_at(self, eps: float, s: float, H: np.ndarray | None = None) -> np.ndarray:
        """``Y_n`` at an arbitrary ``s`` from spline-interpolated generators."""
        d = self.at(s)
        if H is None:
            H = self.family.dense_H(s)
        Yt, _ = _assemble_tilde(self.order, d["A"], d["dA"], H, d["K"], eps)
        U = _unitary(sum(eps**p * a for p, a in d["A"].items()))
        Y = U @ Yt @ U.conj().T
        return 0.5 * (Y + Y.conj().T)

    def table(self) -> list[dict]:
        return list(self.records)


def _unitary(A: np.ndarray) -> np.ndarray:
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    return (V * np.exp(-1j * w)) @ V.conj().T


def _assemble_tilde(n, A, dA, H, K, eps):
    """``sum_{p=n}^{2n} eps^p T_p`` with entries ``< n``, plus the norm of order ``2n+1``."""
    ad = _NestedAd(A, H)
    total = np.zeros_like(H, dtype=complex)
    for p in range(n, 2 * n + 1):
        M, N = _mn_sums(p, A, dA, H, K, max_entry=n - 1, cache=ad)
        total = total + eps**p * (M + N)
    M, N = _mn_sums(2 * n + 1, A, dA, H, K, max_entry=n - 1, cache=ad)
    tail = float(np.linalg.norm(eps ** (2 * n + 1) * (M + N), 2))
    return total, tail


def build_expansion(
    family: InteractionFamily,
    order: int,
    grid=None,
    backend: str = "spectral",
    filter_gap: float | None = None,
    gap_fraction: float = 0.9,
    residual_tol: float | None = 1e-8,
    gsf: GroundStateFamily | None = None,
    quadrature_radius: int | None = None,
) -> CDExpansion:
    """Solve the recursion for ``A_1 .. A_{order-1}`` on a uniform grid.

    ``residual_tol`` bounds ``|(M_p + N_p) Omega|`` for ``p < order``; pass
    None to only record the residuals.
    """
    if int(order) < 1:
        raise InvalidInputError("order must be >= 1")
    if backend not in ("spectral", "quadrature"):
        raise InvalidInputError(f"unknown backend {backend!r}")
    n = int(order)
    grid = np.linspace(0.0, 1.0, DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    if gsf is None or gsf.spectra is None:
        gsf = ground_family(family, grid, keep_spectra=True)
    spectra: tuple[SpectralData, ...] = gsf.spectra
    g = filter_gap if filter_gap is not None else gap_fraction * gsf.min_gap
    spec = build_filter(g)
    ng = grid.size
    H = np.array([sd.shifted_matrix() for sd in spectra])
    dH = np.array([family.dense_dH(s) for s in grid])
    Hloc = [family.local(s) for s in grid] if backend == "quadrature" else None
    region_cache: list[dict] = [{} for _ in range(ng)]
    lat = family.lattice

    def filt(i: int, X: np.ndarray) -> np.ndarray:
        if backend == "spectral":
            return apply_filter_spectral(spec, spectra[i], X)
        X = 0.5 * (X + X.conj().T)
        res = apply_filter_quadrature(
            spec, Hloc[i], LocalOperator.from_dense(lat, X, threshold=1e-13), radius=quadrature_radius,
            cache=region_cache[i],
        )
        return res.operator.dense()

    K = np.empty_like(H)
    qa_res = np.empty(ng)
    for i in range(ng):
        K[i], _ = _hermitize(-filt(i, dH[i]), 1e-9, "K")
        qa_res[i] = np.linalg.norm(gsf.derivatives[i] + 1j * K[i] @ gsf.states[i])

    F: dict[int, np.ndarray] = {}
    dF: dict[int, np.ndarray] = {}
    C: dict[int, np.ndarray] = {}
    dC: dict[int, np.ndarray] = {}
    residuals: dict[int, np.ndarray] = {}
    herm: dict[int, float] = {}
    eye = np.eye(H.shape[1])

    def operators_at(i: int, upto: int, with_dC: bool = True):
        A = {j: F[j][i] + C[j][i] * eye for j in range(1, upto + 1) if j in C}
        A.update({j: F[j][i] for j in range(1, upto + 1) if j not in C})
        dA = {j: dF[j][i] + (dC[j][i] if j in dC else 0.0) * eye for j in range(1, upto + 1)}
        return A, dA

    for p in range(1, n + 1):
        L = np.empty_like(H)
        dCprev = np.zeros(ng)
        for i in range(ng):
            A, dA = operators_at(i, p - 1)
            Mx, Nx = _mn_sums(p, A, dA, H[i], K[i], drop_leading=True)
            L[i] = Mx + Nx
            if p >= 2:
                om = gsf.states[i]
                rhs = np.vdot(om, (1j * (K[i] @ A[p - 1] - A[p - 1] @ K[i]) - L[i]) @ om)
                if abs(rhs.imag) > 1e-9:
                    raise ConstantsIntegrationError(
                        f"constants equation has imaginary part {rhs.imag:.3g} at s = {grid[i]:.6g}, p = {p}"
                    )
                dCprev[i] = rhs.real
        if p >= 2:
            dC[p - 1] = dCprev
            C[p - 1] = _trapezoid_cumulative(dCprev, grid)
        if p == n:
            break
        R = np.empty_like(H)
        Fp = np.empty_like(H)
        res = np.empty(ng)
        worst = 0.0
        for i in range(ng):
            R[i] = L[i] + (dF[p - 1][i] + dC[p - 1][i] * eye if p >= 2 else 0.0)
            Fp[i], asym = _hermitize(filt(i, R[i]), 1e-9, f"A_{p}")
            worst = max(worst, asym)
            T = -1j * (Fp[i] @ H[i] - H[i] @ Fp[i]) + R[i]
            res[i] = np.linalg.norm(T @ gsf.states[i])
        F[p] = Fp
        dF[p] = _fd_derivative(Fp, grid)
        residuals[p] = res
        herm[p] = worst
        if residual_tol is not None and np.max(res) > residual_tol:
            i = int(np.argmax(res))
            raise RecursionResidualError(
                f"order-{p} residual {res[i]:.3g} exceeds {residual_tol:g} at s = {grid[i]:.6g}",
                order=p,
                s=float(grid[i]),
                residual=float(res[i]),
            )
        # check the solvability expectation left after the constant is fixed
        if p >= 2:
            expect = max(abs(np.vdot(gsf.states[i], R[i] @ gsf.states[i])) for i in range(ng))
            if expect > 1e-7 and residual_tol is not None:
                raise ConstantsIntegrationError(
                    f"<Omega, R_{p} Omega> = {expect:.3g} after the constant adjustment"
                )
    records = []
    for i, s in enumerate(grid):
        for p in sorted(F):
            records.append(
                {
                    "s": float(s),
                    "p": p,
                    "residual": float(residuals[p][i]),
                    "norm": float(np.linalg.norm(F[p][i], 2)),
                    "constant": float(C[p][i]) if p in C else 0.0,
                }
            )
    return CDExpansion(
        order=n,
        grid=grid,
        family=family,
        gsf=gsf,
        filter_spec=spec,
        backend=backend,
        H=H,
        K=K,
        F=F,
        dF=dF,
        C=C,
        dC=dC,
        residuals=residuals,
        qa_residuals=qa_res,
        hermiticity=herm,
        records=records,
    )


def assemble_Yn(expansion: CDExpansion, eps: float, s: float):
    """``(Y~_n, Y_n, tail)`` at grid point ``s``; tail is the norm of the first dropped order."""
    i = expansion.gsf.index(s)
    n = expansion.order
    A = {p: expansion.A(p, i) for p in expansion.F}
    dA = {p: expansion.dA(p, i) for p in expansion.F}
    if n == 1:
        Yt = eps * expansion.K[i]
        return Yt, Yt.copy(), 0.0
    Yt, tail = _assemble_tilde(n, A, dA, expansion.H[i], expansion.K[i], eps)
    U = _unitary(expansion.generator(eps, i))
    Y = U @ Yt @ U.conj().T
    asym = float(np.max(np.abs(Y - Y.conj().T)))
    if asym > 1e-9:
        raise NumericalError(f"Y_n is not Hermitian (asymmetry {asym:.3g})")
    return 0.5 * (Yt + Yt.conj().T), 0.5 * (Y + Y.conj().T), tail


def dressing_unitary(expansion: CDExpansion, eps: float, s: float):
    """``U = exp(-iA)`` and the dressed state ``phi = U Omega`` at grid point ``s``."""
    i = expansion.gsf.index(s)
    if not expansion.F:
        U = np.eye(expansion.dim, dtype=complex)
    else:
        U = _unitary(expansion.generator(eps, i))
    dev = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))
    if dev > 1e-10:
        raise NumericalError(f"dressing transformation is not unitary ({dev:.3g})")
    return U, U @ expansion.gsf.states[i]


def growth_diagnostic(
    expansion: CDExpansion, threshold: float = 1e-12, max_points: int | None = 101
) -> list[dict]:
    """Per order: max over the grid of ``|A_p|_loc`` (identity part excluded) and range.

    With ``max_points`` the maximum is taken over that many evenly spaced grid points.
    """
    lat = expansion.family.lattice
    n = expansion.grid.size
    if max_points is None or max_points >= n:
        idx = np.arange(n)
    else:
        idx = np.unique(np.linspace(0, n - 1, max_points).round().astype(int))
    rows = []
    prev = None
    for p in sorted(expansion.F):
        norms, ranges = [], []
        for i in idx:
            op = LocalOperator.from_dense(lat, expansion.F[p][i], threshold=threshold)
            norms.append(op.local_norm())
            ranges.append(op.range)
        nrm = float(max(norms))
        rows.append(
            {
                "p": p,
                "local_norm": nrm,
                "range": int(max(ranges)),
                "ratio": (nrm / prev) if prev else float("nan"),
            }
        )
        prev = nrm
    return rows
