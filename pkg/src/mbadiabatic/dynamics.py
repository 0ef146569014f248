"""Rescaled-time Schrodinger evolution ``eps psi' = -i (H_s + Y_s) psi`` and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .errors import IntegrationError, InvalidInputError
from .models import InteractionFamily
from .spectra import GroundStateFamily, eigendecompose

ALPHA1 = (3 - 2 * math.sqrt(3)) / 12
ALPHA2 = (3 + 2 * math.sqrt(3)) / 12
NODE1 = 0.5 - math.sqrt(3) / 6
NODE2 = 0.5 + math.sqrt(3) / 6

DENSE_LIMIT = 64
ROUNDOFF_FLOOR = 1e-14


@dataclass(frozen=True)
class DriveProtocol:
    """Rate, output grid and step control for one run.

    With ``steps`` set the integrator uses that many equal steps per output
    interval; otherwise it adapts by step doubling to ``tol`` (state error
    per unit ``s``).
    """

    eps: float
    output_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 101))
    tol: float = 1e-10
    max_step: float = 0.02
    min_step: float = 1e-7
    steps: int | None = None
    extra: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise InvalidInputError("eps must lie in (0, 1]")
        grid = np.asarray(self.output_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise InvalidInputError("output grid must be strictly ascending")
        object.__setattr__(self, "output_grid", grid)


@dataclass(frozen=True)
class Trajectory:
    s: np.ndarray
    states: np.ndarray
    observables: dict[str, np.ndarray]
    norms: np.ndarray
    n_steps: int
    propagators: np.ndarray | None = None

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - 1.0)))

    def table(self) -> list[dict]:
        rows = []
        for i, s in enumerate(self.s):
            row = {"s": float(s), "norm": float(self.norms[i])}
            row.update({k: float(v[i]) for k, v in sorted(self.observables.items())})
            rows.append(row)
        return rows


class _Generator:
    """``H_s (+ Y_s)`` in the representation matching the dimension."""

    def __init__(self, family: InteractionFamily, extra, dense: bool):
        self.family = family
        self.extra = extra
        self.dense = dense

    def __call__(self, s: float):
        if self.dense:
            H = self.family.dense_H(s)
        else:
            H = self.family.sparse_H(s)
        if self.extra is not None:
            Y = self.extra(s)
            H = (H.toarray() if sparse.issparse(H) else H) + Y
        return H


def _expm_apply(M, vecs: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i tau M) vecs`` for a Hermitian M."""
    if sparse.issparse(M):
        return expm_multiply(-1j * tau * M, vecs)
    M = np.asarray(M)
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    return (V * np.exp(-1j * tau * w)) @ (V.conj().T @ vecs)


def _cf4_step(gen, s: float, ds: float, eps: float, vecs: np.ndarray) -> np.ndarray:
    H1 = gen(s + NODE1 * ds)
    H2 = gen(s + NODE2 * ds)
    tau = ds / eps
    vecs = _expm_apply(ALPHA2 * H1 + ALPHA1 * H2, vecs, tau)
    return _expm_apply(ALPHA1 * H1 + ALPHA2 * H2, vecs, tau)


def evolve(
    family: InteractionFamily,
    proto: DriveProtocol,
    psi0: np.ndarray,
    observables: Mapping[str, np.ndarray] | None = None,
    propagator: bool = False,
) -> Trajectory:
    """Integrate from ``output_grid[0]`` with a fourth-order commutator-free Magnus stepper.

    With ``propagator=True`` the columns of the identity are evolved and the
    propagators from the first output point are stored as well.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if not propagator and abs(np.linalg.norm(psi0) - 1) > 1e-12:
        raise InvalidInputError("initial state must be normalized")
    dim = family.dim
    if psi0.shape[0] != dim:
        raise InvalidInputError(f"state dimension {psi0.shape[0]} does not match {dim}")
    dense = dim <= DENSE_LIMIT or propagator or proto.extra is not None
    gen = _Generator(family, proto.extra, dense)
    obs = {k: np.asarray(v) for k, v in (observables or {}).items()}
    grid = proto.output_grid
    vecs = np.eye(dim, dtype=complex) if propagator else psi0.reshape(dim, 1).copy()

    def record(v):
        psi = v[:, 0] if not propagator else v @ psi0
        vals = {k: float(np.real(np.vdot(psi, O @ psi))) for k, O in obs.items()}
        return psi.copy(), vals, float(np.linalg.norm(psi))

    states, norms = [], []
    series = {k: [] for k in obs}
    props = [] if propagator else None
    n_steps = 0
    s = float(grid[0])
    ds = min(proto.max_step, 1e-3)

    psi, vals, nrm = record(vecs)
    states.append(psi)
    norms.append(nrm)
    for k in obs:
        series[k].append(vals[k])
    if propagator:
        props.append(vecs.copy())

    for target in grid[1:]:
        if proto.steps is not None:
            h = (target - s) / proto.steps
            for _ in range(proto.steps):
                vecs = _cf4_step(gen, s, h, proto.eps, vecs)
                s += h
            n_steps += proto.steps
            s = float(target)
        else:
            while s < target - 1e-15:
                h = min(ds, target - s, proto.max_step)
                full = _cf4_step(gen, s, h, proto.eps, vecs)
                half = _cf4_step(gen, s, h / 2, proto.eps, vecs)
                half = _cf4_step(gen, s + h / 2, h / 2, proto.eps, half)
                err = float(np.linalg.norm(full - half)) / 15.0
                # floor at roundoff so short steps before an output point are accepted
                allowed = max(proto.tol * h, ROUNDOFF_FLOOR)
                if err <= allowed or h <= proto.min_step:
                    if err > allowed:
                        raise IntegrationError(
                            f"step control failed at s = {s:.6g} (error {err:.3g} at minimum step)",
                            achieved_tol=err / h,
                        )
                    # Richardson-corrected half steps stay unitary up to roundoff only
                    # before correction, so keep the two-half-step result
                    vecs = half
                    s += h
                    n_steps += 1
                    fac = 0.9 * (allowed / max(err, 1e-300)) ** 0.2
                    ds = h * min(2.0, max(0.3, fac))
                else:
                    fac = 0.9 * (allowed / err) ** 0.2
                    ds = h * max(0.2, fac)
            s = float(target)
        psi, vals, nrm = record(vecs)
        states.append(psi)
        norms.append(nrm)
        for k in obs:
            series[k].append(vals[k])
        if propagator:
            props.append(vecs.copy())
    return Trajectory(
        s=grid.copy(),
        states=np.array(states),
        observables={k: np.array(v) for k, v in series.items()},
        norms=np.array(norms),
        n_steps=n_steps,
        propagators=np.array(props) if propagator else None,
    )


def diabatic_error(traj: Trajectory, references: np.ndarray, O: np.ndarray) -> dict:
    """``|<psi|O psi> - <ref|O ref>|`` per output point, with ``references[i]`` at ``traj.s[i]``."""
    refs = np.asarray(references)
    if refs.shape != traj.states.shape:
        raise InvalidInputError("need one reference state per trajectory point")
    a = np.einsum("ij,jk,ik->i", traj.states.conj(), O, traj.states).real
    b = np.einsum("ij,jk,ik->i", refs.conj(), O, refs).real
    err = np.abs(a - b)
    return {"s": traj.s, "error": err, "max": float(err.max()), "argmax": float(traj.s[int(np.argmax(err))])}


def reference_states(family: InteractionFamily, s_values) -> np.ndarray:
    """Instantaneous ground states (phase irrelevant for expectation values)."""
    return np.array([eigendecompose(family.dense_H(s)).ground for s in s_values])


def naive_bound(family: InteractionFamily, gsf: GroundStateFamily, eps: float) -> float:
    """``eps * int |H_s'| / g_s^2 ds`` by the trapezoidal rule on the family grid."""
    vals = np.array(
        [np.linalg.norm(family.dense_dH(s), 2) / g**2 for s, g in zip(gsf.grid, gsf.gaps)]
    )
    if gsf.grid.size < 2:
        return 0.0
    return float(eps * np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(gsf.grid)))


def orthogonality_demo(
    site_family: InteractionFamily,
    volumes,
    eps: float,
    s_eval: float = 0.5,
    observable: np.ndarray | None = None,
) -> dict:
    """Product of ``V`` identical driven spins: global fidelity versus local error.

    One site is evolved exactly; the ``V``-site state is its tensor power, so
    ``log F_V = V log |<Omega, psi>|^2`` and every single-site expectation is
    that of the one-site state.
    """
    if site_family.dim != 2:
        raise InvalidInputError("orthogonality demo needs a single-site family")
    grid = np.linspace(0.0, s_eval, 51)
    sd0 = eigendecompose(site_family.dense_H(0.0))
    traj = evolve(site_family, DriveProtocol(eps, grid), sd0.ground)
    omega = eigendecompose(site_family.dense_H(s_eval)).ground
    psi = traj.states[-1] / np.linalg.norm(traj.states[-1])
    overlap2 = float(abs(np.vdot(omega, psi)) ** 2)
    if observable is None:
        observable = np.array([[0, -1j], [1j, 0]])
    local = abs(np.vdot(psi, observable @ psi).real - np.vdot(omega, observable @ omega).real)
    rows = []
    for V in volumes:
        V = int(V)
        # expectation of O on site 0 of the V-fold product: other factors contribute norm 1
        local_V = abs(
            np.vdot(psi, observable @ psi).real * np.linalg.norm(psi) ** (2 * (V - 1))
            - np.vdot(omega, observable @ omega).real
        )
        rows.append(
            {
                "V": V,
                "log_fidelity": V * math.log(overlap2),
                "fidelity": overlap2**V,
                "local_error": float(local_V),
            }
        )
    return {"overlap2": overlap2, "log_overlap2": math.log(overlap2), "local_error": float(local), "rows": rows}


def duhamel_diagnostic(
    family: InteractionFamily,
    proto: DriveProtocol,
    driving: Callable[[float], np.ndarray],
    O: np.ndarray,
    s: float | None = None,
) -> dict:
    """``|[Y_{s'}, O(s, s')]|`` on the output grid up to ``s``.

    ``O(s, s') = U(s, s')^+ O U(s, s')`` is the bare Heisenberg evolution
    from ``s'`` to ``s``; the integral ``eps^{-1} int |[Y, O(s, s')]| ds'``
    bounds the difference of ``<O>`` between the bare and driven runs.
    """
    grid = proto.output_grid
    if s is not None:
        grid = grid[grid <= s + 1e-15]
    bare = DriveProtocol(proto.eps, grid, proto.tol, proto.max_step, proto.min_step, proto.steps)
    traj = evolve(family, bare, np.eye(family.dim)[:, 0], propagator=True)
    Uend = traj.propagators[-1]
    norms = []
    for i, sp in enumerate(grid):
        # U(s, s') = U(s, 0) U(s', 0)^+
        Uss = Uend @ traj.propagators[i].conj().T
        Oh = Uss.conj().T @ O @ Uss
        Y = driving(float(sp))
        norms.append(float(np.linalg.norm(Y @ Oh - Oh @ Y, 2)))
    norms = np.array(norms)
    integral = float(np.sum(0.5 * (norms[1:] + norms[:-1]) * np.diff(grid))) if grid.size > 1 else 0.0
    return {"s_prime": grid, "norms": norms, "integral": integral, "bound": integral / proto.eps}
