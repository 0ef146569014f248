"""Spectral filter realizing ``i H^{-1}`` on excitations above a gap.

The transfer function is

    hat_h(w) = i * theta(|w|/g) / w,     hat_h(0) = 0,

with ``theta`` the smooth switch from :mod:`mbadiabatic.models`.  It equals
``i/w`` exactly for ``|w| >= g``, is odd and purely imaginary (so Hermitian
inputs give Hermitian outputs), and is bounded by about ``1.25/g``.

Fourier convention: ``hat_h(w) = int h(t) exp(-i w t) dt`` together with
``tau_t(X) = exp(-itH) X exp(itH)``, so the eigenbasis multiplier at entry
``(m, n)`` is ``hat_h(E_m - E_n)`` and ``int h(t) tau_t(X) dt`` has exactly
that action.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import FilterConstructionError, InvalidInputError, PreconditionError, TruncationError
from .models import smooth_switch
from .operators import LocalOperator, _accumulate_strings
from .spectra import SpectralData

CONVENTION = "hat_h(w)=int h(t)exp(-iwt)dt; tau_t(X)=exp(-itH)X exp(itH); multiplier hat_h(E_m-E_n)"


def transfer(omega, g: float) -> np.ndarray:
    """Exact filter transfer function ``hat_h`` (complex, purely imaginary)."""
    w = np.asarray(omega, dtype=float)
    x = np.abs(w) / g
    safe = np.where(w == 0, 1.0, w)
    return 1j * np.where(w == 0, 0.0, smooth_switch(x) / safe)


def _apodization(omega, start: float, width: float) -> np.ndarray:
    w = np.abs(np.asarray(omega, dtype=float))
    return np.where(w <= start, 1.0, np.exp(-((w - start) ** 2) / (2 * width**2)))


@dataclass(frozen=True)
class FilterSpec:
    g: float
    times: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    cutoff: float
    omega_max: float
    apodization_start: float
    apodization_width: float
    tail_tol: float
    consistency: float
    convention: str = CONVENTION

    def hat_h(self, omega) -> np.ndarray:
        return transfer(omega, self.g)

    def window(self, omega) -> np.ndarray:
        """Real correction ``v`` with ``hat_h = i (1/w + v)``; zero for ``|w| >= g``."""
        w = np.asarray(omega, dtype=float)
        safe = np.where(w == 0, 1.0, w)
        return np.where(w == 0, 0.0, (smooth_switch(np.abs(w) / self.g) - 1.0) / safe)

    def quadrature_transfer(self, omega, cutoff: float | None = None) -> np.ndarray:
        """``sum_j w_j h(t_j) exp(-i w t_j)``, the transfer function actually applied
        by the time-domain quadrature."""
        w = np.asarray(omega, dtype=float)
        flat = w.ravel()
        mask = self.times > 0
        if cutoff is not None:
            mask &= self.times <= cutoff
        t = self.times[mask]
        wh = self.weights[mask] * self.values[mask]
        out = np.empty(flat.size)
        chunk = max(1, 2_000_000 // max(t.size, 1))
        for i in range(0, flat.size, chunk):
            # h is odd, so positive and negative nodes pair into a sine sum
            out[i : i + chunk] = np.sin(np.outer(flat[i : i + chunk], t)) @ wh
        return (-2j * out).reshape(w.shape)

    def diagnostics(self, n_omega: int = 201):
        omegas = np.linspace(-10 * self.g, 10 * self.g, n_omega)
        hh = self.hat_h(omegas)
        return (
            [(float(w), float(v.real), float(v.imag)) for w, v in zip(omegas, hh)],
            [(float(t), float(v)) for t, v in zip(self.times, self.values)],
        )


def build_filter(
    g: float,
    omega_max_factor: float = 40.0,
    apodization_factor: float = 20.0,
    apodization_width_factor: float = 3.0,
    tail_tol: float = 1e-8,
    consistency_tol: float = 1e-6,
    check_band: tuple[float, float] = (1.0, 10.0),
) -> FilterSpec:
    """Sample the time profile ``h`` by inverse Fourier transform and verify it."""
    if not g > 0:
        raise InvalidInputError("gap g must be positive")
    omega_max = omega_max_factor * g
    apo_start = apodization_factor * g
    apo_width = apodization_width_factor * g
    band_hi = check_band[1] * g
    # nodes spaced so that aliased copies of the band-limited profile miss [0, band_hi]
    dt = 2 * np.pi / (omega_max + band_hi + 10 * g)

    # frequency grid fine enough that the discrete transform's period exceeds any cutoff used
    t_probe = 2000.0 / g
    dw = min(g / 400.0, np.pi / t_probe)
    omegas = np.arange(0.0, omega_max + dw / 2, dw)
    fw = (transfer(omegas, g).imag * _apodization(omegas, apo_start, apo_width)) * dw
    fw[0] *= 0.5
    fw[-1] *= 0.5

    def profile(t):
        # h(t) = (1/2pi) int hat_h e^{iwt} dw = -(1/pi) int_0 o(w) sin(wt) dw
        t = np.atleast_1d(t)
        out = np.empty(t.size)
        chunk = max(1, 4_000_000 // omegas.size)
        for i in range(0, t.size, chunk):
            out[i : i + chunk] = -(np.sin(np.outer(t[i : i + chunk], omegas)) @ fw) / np.pi
        return out

    # march outward in blocks until a whole block is below the tail tolerance
    block = 256
    vals: list[np.ndarray] = []
    start = 1
    cutoff_index = None
    while cutoff_index is None:
        idx = np.arange(start, start + block)
        v = profile(idx * dt)
        vals.append(v)
        big = np.nonzero(np.abs(np.concatenate(vals)) >= tail_tol)[0]
        last_big = int(big[-1]) + 1 if big.size else 0
        if (start + block - 1) - last_big >= block:
            cutoff_index = last_big + 1
        start += block
        if start * dt > t_probe:
            raise FilterConstructionError(
                "time profile does not decay below tail tolerance", worst_omega=0.0, deviation=np.inf
            )
    hpos = np.concatenate(vals)[:cutoff_index]
    jpos = np.arange(1, cutoff_index + 1)
    times = np.concatenate([-jpos[::-1] * dt, [0.0], jpos * dt])
    values = np.concatenate([-hpos[::-1], [0.0], hpos])
    weights = np.full(times.size, dt)
    spec = FilterSpec(
        g=float(g),
        times=times,
        weights=weights,
        values=values,
        cutoff=float(cutoff_index * dt),
        omega_max=float(omega_max),
        apodization_start=float(apo_start),
        apodization_width=float(apo_width),
        tail_tol=tail_tol,
        consistency=np.nan,
    )
    probe = np.linspace(check_band[0] * g, band_hi, 400)
    dev = np.abs(spec.quadrature_transfer(probe) - spec.hat_h(probe))
    worst = int(np.argmax(dev))
    if dev[worst] > consistency_tol:
        raise FilterConstructionError(
            f"quadrature misses hat_h by {dev[worst]:.3g} at w = {probe[worst]:.6g}",
            worst_omega=float(probe[worst]),
            deviation=float(dev[worst]),
        )
    return FilterSpec(**{**spec.__dict__, "consistency": float(dev[worst])})


def apply_filter_spectral(spec: FilterSpec, sd: SpectralData, X: np.ndarray) -> np.ndarray:
    """Multiply eigenbasis entries ``X_mn`` by ``hat_h(E_m - E_n)``."""
    E = sd.energies
    if E[0] != 0.0:
        raise PreconditionError("spectral data must be shifted so that E_0 = 0")
    mult = spec.hat_h(E[:, None] - E[None, :])
    return sd.from_eigenbasis(mult * sd.to_eigenbasis(X))


def filter_omega_action(
    spec: FilterSpec, sd: SpectralData, X: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """``(filter X) Omega``, which equals ``i H^{-1} X Omega`` for X without ground component."""
    omega = sd.ground
    xo = X @ omega
    expect = np.vdot(omega, xo)
    if abs(expect) > tol:
        raise PreconditionError(
            f"<Omega, X Omega> = {abs(expect):.3g} is nonzero; the inverse is undefined on the ground sector"
        )
    coeff = sd.vectors.conj().T @ xo
    coeff *= spec.hat_h(sd.energies - sd.energies[0])
    return sd.vectors @ coeff


@dataclass(frozen=True)
class QuadratureResult:
    operator: LocalOperator
    truncation_estimate: float
    radius: int | None
    n_nodes: int


def _region_filter(spec, H: LocalOperator, region: list[int], Y: np.ndarray, cutoff, cache=None):
    key = frozenset(region)
    hit = cache.get((key, cutoff)) if cache is not None else None
    if hit is None:
        block_terms: dict = {}
        for X, block in H.blocks():
            if X <= key:
                for w, c in block.items():
                    block_terms[w] = block_terms.get(w, 0) + c
        HR = _accumulate_strings(block_terms, region)
        E, V = np.linalg.eigh(0.5 * (HR + HR.conj().T))
        # the transfer is odd, so only the upper triangle of frequencies is evaluated
        iu = np.triu_indices(E.size, 1)
        mult = np.zeros((E.size, E.size), dtype=complex)
        mult[iu] = spec.quadrature_transfer(E[iu[0]] - E[iu[1]], cutoff=cutoff)
        mult = mult - mult.T
        hit = (V, mult)
        if cache is not None:
            cache[(key, cutoff)] = hit
    V, mult = hit
    Ye = V.conj().T @ Y @ V
    return V @ (mult * Ye) @ V.conj().T


def apply_filter_quadrature(
    spec: FilterSpec,
    H: LocalOperator,
    X: LocalOperator,
    radius: int | None = None,
    max_error: float | None = None,
    cutoff: float | None = None,
    threshold: float = 1e-12,
    cache: dict | None = None,
) -> QuadratureResult:
    """``sum_j w_j h(t_j) tau_{t_j}(X)`` with dynamics restricted to balls of ``radius``.

    Each block of ``X`` evolves under the terms of ``H`` inside the ball of
    the given radius around its support (the whole lattice when ``radius``
    is None or the ball covers it).  Within a region the time sum is carried
    out exactly in the eigenbasis of the region Hamiltonian.  The truncation
    estimate is the change caused by enlarging every region by one site.
    ``cache`` may be shared between calls with the same ``H`` to reuse region
    eigenbases.
    """
    if H.lattice != X.lattice:
        raise InvalidInputError("H and X live on different lattices")
    lat = X.lattice
    everything = frozenset(range(lat.n_sites))

    def region_of(support, r):
        if r is None:
            return everything
        return lat.ball(support, r) if support else everything

    groups: dict[frozenset, dict] = defaultdict(dict)
    for support, block in X.blocks():
        R = region_of(support, radius)
        dst = groups[R]
        for w, c in block.items():
            dst[w] = dst.get(w, 0) + c

    out = LocalOperator.zero(lat)
    estimate = 0.0
    for R, strings in sorted(groups.items(), key=lambda kv: sorted(kv[0])):
        region = sorted(R)
        Y = _accumulate_strings(strings, region)
        F = _region_filter(spec, H, region, Y, cutoff, cache)
        if R != everything and radius is not None:
            R2 = sorted(lat.ball(R, 1))
            Y2 = _accumulate_strings(strings, R2)
            F2 = _region_filter(spec, H, R2, Y2, cutoff, cache)
            F1 = _accumulate_strings(
                _strings_of(LocalOperator.from_dense(lat, F, region, threshold)), R2
            )
            estimate += float(np.linalg.norm(F2 - F1, 2))
        out = out + LocalOperator.from_dense(lat, F, region, threshold)
    if max_error is not None and estimate > max_error:
        raise TruncationError(
            f"region truncation error {estimate:.3g} exceeds {max_error:.3g} at radius {radius}",
            achieved_bound=estimate,
        )
    n_nodes = int(np.sum(spec.times != 0) if cutoff is None else np.sum((spec.times != 0) & (np.abs(spec.times) <= cutoff)))
    return QuadratureResult(out, estimate, radius, n_nodes)


def _strings_of(op: LocalOperator) -> dict:
    merged: dict = {}
    for _, block in op.blocks():
        for w, c in block.items():
            merged[w] = merged.get(w, 0) + c
    return merged


def filter_range_growth(
    spec: FilterSpec,
    H: LocalOperator,
    X: LocalOperator,
    cutoffs,
    threshold: float = 1e-6,
) -> list[tuple[float, int]]:
    """Range of the filtered operator when the time integral stops at each cutoff.

    Strings with coefficient below ``threshold`` are ignored when measuring range.
    """
    rows = []
    for T in cutoffs:
        res = apply_filter_quadrature(spec, H, X, cutoff=float(T), threshold=threshold)
        rows.append((float(T), res.operator.range))
    return rows
