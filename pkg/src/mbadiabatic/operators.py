"""Pauli-string algebra on finite lattices.

A ``LocalOperator`` is an extensive operator written as a sum of blocks
``B = sum_X B_X`` where each block lives on a finite support set ``X`` and is
itself a linear combination of Pauli strings supported inside ``X``.  The
block decomposition matters: the local norm ``sup_x sum_{X ni x} ||B_X||``
depends on it.

Dense realizations use the Kronecker order ``sigma_0 (x) sigma_1 (x) ...``,
i.e. site ``i`` is bit ``N - 1 - i`` of the basis index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy import sparse

from .errors import InvalidInputError, ResourceError

DEFAULT_SITE_CAP = 14
BLOCK_DROP_TOL = 1e-14

_LETTERS = ("X", "Y", "Z")
# single-site products: (a, b) -> (phase, letter or None for identity)
_SITE_PRODUCT: dict[tuple[str, str], tuple[complex, str | None]] = {
    ("X", "X"): (1, None),
    ("Y", "Y"): (1, None),
    ("Z", "Z"): (1, None),
    ("X", "Y"): (1j, "Z"),
    ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"),
    ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"),
    ("X", "Z"): (-1j, "Y"),
}

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

Word = tuple[tuple[int, str], ...]


@dataclass(frozen=True)
class LatticeSpec:
    """Hypercubic lattice ``Z^d / (L Z)^d`` (periodic) or a box (open)."""

    length: int
    dimension: int = 1
    boundary: str = "periodic"

    def __post_init__(self):
        if int(self.length) < 1 or int(self.dimension) < 1:
            raise InvalidInputError("lattice length and dimension must be positive")
        if self.boundary not in ("periodic", "open"):
            raise InvalidInputError(f"unknown boundary {self.boundary!r}")

    @property
    def n_sites(self) -> int:
        return self.length**self.dimension

    def coords(self, site: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(site, (self.length,) * self.dimension))

    def site(self, coords: Iterable[int]) -> int:
        c = tuple(int(x) % self.length for x in coords)
        return int(np.ravel_multi_index(c, (self.length,) * self.dimension))

    def distance(self, a: int, b: int) -> int:
        # graph metric: L1 distance, wrapped per axis on the torus
        total = 0
        for ca, cb in zip(self.coords(a), self.coords(b)):
            d = abs(ca - cb)
            if self.boundary == "periodic":
                d = min(d, self.length - d)
            total += d
        return total

    def diameter(self, sites: Iterable[int]) -> int:
        s = sorted(set(sites))
        if len(s) < 2:
            return 0
        return max(self.distance(a, b) for a, b in itertools.combinations(s, 2))

    def ball(self, sites: Iterable[int], radius: int) -> frozenset[int]:
        s = list(sites)
        return frozenset(
            x for x in range(self.n_sites) if any(self.distance(x, y) <= radius for y in s)
        )

    def check_site(self, site: int) -> None:
        if not 0 <= site < self.n_sites:
            raise InvalidInputError(f"site {site} outside lattice with {self.n_sites} sites")


def _normalize_word(letters) -> Word:
    if isinstance(letters, Mapping):
        items = letters.items()
    else:
        items = letters
    out = {}
    for site, letter in items:
        letter = str(letter).upper()
        if letter == "I":
            continue
        if letter not in _LETTERS:
            raise InvalidInputError(f"unknown Pauli letter {letter!r}")
        site = int(site)
        if site in out:
            raise InvalidInputError(f"site {site} appears twice in a Pauli word")
        out[site] = letter
    return tuple(sorted(out.items()))


@dataclass(frozen=True)
class PauliString:
    """``coefficient * prod_i sigma^{letter_i}_i``; identity on unlisted sites."""

    coefficient: complex
    letters: Word = ()
    lattice: LatticeSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        object.__setattr__(self, "letters", _normalize_word(self.letters))
        if self.lattice is not None:
            for site, _ in self.letters:
                self.lattice.check_site(site)

    @classmethod
    def single(cls, site: int, letter: str, coefficient: complex = 1.0, lattice=None):
        return cls(coefficient, ((site, letter),), lattice)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(s for s, _ in self.letters)

    def adjoint(self) -> "PauliString":
        return PauliString(np.conj(self.coefficient), self.letters, self.lattice)

    def label(self) -> str:
        return " ".join(f"{l}{s}" for s, l in self.letters) or "I"


def word_product(wa: Word, wb: Word) -> tuple[complex, Word]:
    """Product of two unit-coefficient Pauli words: returns (phase, word)."""
    da = dict(wa)
    phase: complex = 1
    out = dict(da)
    for site, lb in wb:
        la = da.get(site)
        if la is None:
            out[site] = lb
            continue
        ph, letter = _SITE_PRODUCT[(la, lb)]
        phase *= ph
        if letter is None:
            del out[site]
        else:
            out[site] = letter
    return phase, tuple(sorted(out.items()))


def words_anticommute(wa: Word, wb: Word) -> bool:
    db = dict(wb)
    n = 0
    for site, la in wa:
        lb = db.get(site)
        if lb is not None and lb != la:
            n += 1
    return n % 2 == 1


def multiply(a: PauliString, b: PauliString) -> PauliString:
    if a.lattice is not None and b.lattice is not None and a.lattice != b.lattice:
        raise InvalidInputError("Pauli strings live on different lattices")
    phase, word = word_product(a.letters, b.letters)
    return PauliString(a.coefficient * b.coefficient * phase, word, a.lattice or b.lattice)


def _word_masks(word: Word, positions: Mapping[int, int], n: int) -> tuple[int, int, int]:
    xmask = zmask = ny = 0
    for site, letter in word:
        bit = 1 << (n - 1 - positions[site])
        if letter in ("X", "Y"):
            xmask |= bit
        if letter in ("Z", "Y"):
            zmask |= bit
        if letter == "Y":
            ny += 1
    return xmask, zmask, ny


def _popcount_parity(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return (np.bitwise_count(a) & 1).astype(a.dtype)
    a = a.copy()
    parity = np.zeros_like(a)
    while np.any(a):
        parity ^= a & 1
        a >>= 1
    return parity


def _accumulate_strings(
    strings: Mapping[Word, complex], sites: list[int], fmt: str = "dense"
):
    n = len(sites)
    dim = 1 << n
    positions = {s: i for i, s in enumerate(sites)}
    cols = np.arange(dim, dtype=np.int64)
    rows_all, cols_all, vals_all = [], [], []
    for word, coef in strings.items():
        xmask, zmask, ny = _word_masks(word, positions, n)
        sign = 1 - 2 * _popcount_parity(cols & zmask)
        # P|b> = i^ny (-1)^{popcount(b & z)} |b ^ x>
        vals_all.append(coef * (1j**ny) * sign)
        rows_all.append(cols ^ xmask)
        cols_all.append(cols)
    if not vals_all:
        if fmt == "dense":
            return np.zeros((dim, dim), dtype=complex)
        return sparse.csr_matrix((dim, dim), dtype=complex)
    mat = sparse.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(dim, dim),
    )
    if fmt == "dense":
        return mat.toarray()
    return mat.tocsr()


# Pauli decomposition: coefficient tensor from an operator on n qubits
_DECOMP = np.array(
    [_PAULI_MATS[l].T.reshape(4) for l in ("I", "X", "Y", "Z")], dtype=complex
) / 2.0


def pauli_coefficients(matrix: np.ndarray) -> np.ndarray:
    """Coefficients c[a_0,...,a_{n-1}] with M = sum c * sigma^{a_0} (x) ... ."""
    m = np.asarray(matrix, dtype=complex)
    dim = m.shape[0]
    n = int(round(math.log2(dim)))
    if (1 << n) != dim or m.shape != (dim, dim):
        raise InvalidInputError("matrix dimension must be a power of two")
    t = m.reshape((2,) * (2 * n))
    order = [ax for i in range(n) for ax in (i, n + i)]
    t = np.transpose(t, order).reshape((4,) * n) if n else t.reshape(())
    for axis in range(n):
        t = np.moveaxis(np.tensordot(_DECOMP, t, axes=([1], [axis])), 0, axis)
    return t


class LocalOperator:
    """Finite sum of blocks ``B_X``, each a combination of Pauli strings in ``X``.

    Instances are treated as immutable; arithmetic returns new objects.
    """

    __slots__ = ("lattice", "_terms")

    def __init__(
        self,
        lattice: LatticeSpec,
        terms: Mapping[Iterable[int], Mapping[Word, complex]] | None = None,
        hermitian: bool = False,
        hermitian_tol: float = 1e-12,
    ):
        self.lattice = lattice
        clean: dict[frozenset[int], dict[Word, complex]] = {}
        for key, block in (terms or {}).items():
            support = frozenset(int(s) for s in key)
            for s in support:
                lattice.check_site(s)
            merged = clean.setdefault(support, {})
            for word, coef in block.items():
                word = _normalize_word(word)
                if not frozenset(s for s, _ in word) <= support:
                    raise InvalidInputError(
                        f"Pauli word {word} not contained in block support {sorted(support)}"
                    )
                merged[word] = merged.get(word, 0) + complex(coef)
        self._terms = {}
        for support, block in clean.items():
            block = {w: c for w, c in block.items() if c != 0}
            if sum(abs(c) for c in block.values()) >= BLOCK_DROP_TOL:
                self._terms[support] = block
        if hermitian and not self.is_hermitian(hermitian_tol):
            raise InvalidInputError("operator flagged Hermitian has non-Hermitian blocks")

    # ---- constructors -------------------------------------------------
    @classmethod
    def zero(cls, lattice: LatticeSpec) -> "LocalOperator":
        return cls(lattice)

    @classmethod
    def identity(cls, lattice: LatticeSpec, coefficient: complex = 1.0) -> "LocalOperator":
        return cls(lattice, {(): {(): coefficient}})

    @classmethod
    def from_strings(
        cls, lattice: LatticeSpec, strings: Iterable[PauliString], support=None
    ) -> "LocalOperator":
        """Each string goes to its own support (or to ``support`` if given)."""
        terms: dict[frozenset[int], dict[Word, complex]] = {}
        for p in strings:
            key = frozenset(support) if support is not None else p.support
            block = terms.setdefault(key, {})
            block[p.letters] = block.get(p.letters, 0) + p.coefficient
        return cls(lattice, terms)

    @classmethod
    def from_dense(
        cls,
        lattice: LatticeSpec,
        matrix: np.ndarray,
        sites: Iterable[int] | None = None,
        threshold: float = 1e-12,
    ) -> "LocalOperator":
        """Pauli-decompose a dense operator acting on ``sites`` (default: all).

        Strings are grouped by their exact support; coefficients with modulus
        below ``threshold`` are dropped.
        """
        sites = list(range(lattice.n_sites)) if sites is None else list(sites)
        coeffs = pauli_coefficients(matrix)
        idx = np.argwhere(np.abs(coeffs) >= threshold)
        letters = ("I", "X", "Y", "Z")
        terms: dict[frozenset[int], dict[Word, complex]] = {}
        for multi in idx:
            word = tuple(
                (sites[i], letters[a]) for i, a in enumerate(multi) if a != 0
            )
            word = tuple(sorted(word))
            key = frozenset(s for s, _ in word)
            terms.setdefault(key, {})[word] = coeffs[tuple(multi)]
        return cls(lattice, terms)

    # ---- basic views ---------------------------------------------------
    @property
    def terms(self) -> dict[frozenset[int], dict[Word, complex]]:
        return {k: dict(v) for k, v in self._terms.items()}

    def blocks(self) -> Iterator[tuple[frozenset[int], dict[Word, complex]]]:
        return iter(self._terms.items())

    def strings(self) -> Iterator[tuple[frozenset[int], PauliString]]:
        for support, block in self._terms.items():
            for word, coef in block.items():
                yield support, PauliString(coef, word, self.lattice)

    @property
    def n_strings(self) -> int:
        return sum(len(b) for b in self._terms.values())

    @property
    def support(self) -> frozenset[int]:
        return frozenset().union(*self._terms.keys()) if self._terms else frozenset()

    @property
    def range(self) -> int:
        """Largest torus diameter of a nonempty block support."""
        return max((self.lattice.diameter(X) for X in self._terms if X), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def __repr__(self):
        return (
            f"LocalOperator(L={self.lattice.length}, d={self.lattice.dimension}, "
            f"blocks={len(self._terms)}, strings={self.n_strings})"
        )

    # ---- arithmetic ----------------------------------------------------
    def _check_lattice(self, other: "LocalOperator"):
        if not isinstance(other, LocalOperator):
            raise InvalidInputError("expected a LocalOperator")
        if other.lattice != self.lattice:
            raise InvalidInputError("operators live on different lattices")

    def __add__(self, other: "LocalOperator") -> "LocalOperator":
        self._check_lattice(other)
        terms = self.terms
        for k, block in other._terms.items():
            dst = terms.setdefault(k, {})
            for w, c in block.items():
                dst[w] = dst.get(w, 0) + c
        return LocalOperator(self.lattice, terms)

    def __neg__(self) -> "LocalOperator":
        return self.scale(-1)

    def __sub__(self, other: "LocalOperator") -> "LocalOperator":
        return self + (-other)

    def scale(self, c: complex) -> "LocalOperator":
        return LocalOperator(
            self.lattice, {k: {w: c * v for w, v in b.items()} for k, b in self._terms.items()}
        )

    def __mul__(self, c):
        if isinstance(c, LocalOperator):
            return product(self, c)
        return self.scale(c)

    __rmul__ = scale

    def adjoint(self) -> "LocalOperator":
        return LocalOperator(
            self.lattice,
            {k: {w: np.conj(v) for w, v in b.items()} for k, b in self._terms.items()},
        )

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        # Pauli strings are Hermitian, so a block is Hermitian iff its coefficients are real
        return all(abs(c.imag) <= tol for b in self._terms.values() for c in b.values())

    def truncate(self, threshold: float) -> "LocalOperator":
        return LocalOperator(
            self.lattice,
            {k: {w: c for w, c in b.items() if abs(c) >= threshold} for k, b in self._terms.items()},
        )

    def regroup(self) -> "LocalOperator":
        """Re-key every string by its own support."""
        return LocalOperator.from_strings(self.lattice, (p for _, p in self.strings()))

    # ---- norms and realizations ---------------------------------------
    def block_dense(self, support: Iterable[int]) -> np.ndarray:
        key = frozenset(support)
        return _accumulate_strings(self._terms.get(key, {}), sorted(key))

    def block_norm(self, support: Iterable[int]) -> float:
        key = frozenset(support)
        block = self._terms.get(key, {})
        if not block:
            return 0.0
        if len(block) == 1:
            return float(abs(next(iter(block.values()))))
        return float(np.linalg.norm(_accumulate_strings(block, sorted(key)), 2))

    def block_norms(self) -> dict[frozenset[int], float]:
        return {k: self.block_norm(k) for k in self._terms}

    def local_norm(self) -> float:
        per_site = np.zeros(self.lattice.n_sites)
        for support, nrm in self.block_norms().items():
            for x in support:
                per_site[x] += nrm
        return float(per_site.max()) if per_site.size else 0.0

    def _check_cap(self, cap: int):
        n = self.lattice.n_sites
        if n > cap:
            raise ResourceError(
                f"dense realization needs {n} sites but the cap is {cap} sites"
            )

    def dense(self, cap: int = DEFAULT_SITE_CAP) -> np.ndarray:
        self._check_cap(cap)
        sites = list(range(self.lattice.n_sites))
        merged: dict[Word, complex] = {}
        for block in self._terms.values():
            for w, c in block.items():
                merged[w] = merged.get(w, 0) + c
        return _accumulate_strings(merged, sites)

    def sparse(self, cap: int = DEFAULT_SITE_CAP) -> sparse.csr_matrix:
        self._check_cap(cap)
        merged: dict[Word, complex] = {}
        for block in self._terms.values():
            for w, c in block.items():
                merged[w] = merged.get(w, 0) + c
        return _accumulate_strings(merged, list(range(self.lattice.n_sites)), fmt="sparse")

    # ---- serialization -------------------------------------------------
    def to_text(self) -> str:
        lat = self.lattice
        lines = [
            "# LocalOperator v1",
            f"lattice {lat.length} {lat.dimension} {lat.boundary}",
        ]
        for support in sorted(self._terms, key=lambda k: (len(k), sorted(k))):
            sup = ",".join(str(s) for s in sorted(support)) or "-"
            for word, c in sorted(self._terms[support].items()):
                label = " ".join(f"{l}{s}" for s, l in word) or "I"
                lines.append(f"{sup} | {label} | {c.real:.17g} | {c.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LocalOperator":
        lattice = None
        terms: dict[frozenset[int], dict[Word, complex]] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("lattice"):
                _, L, d, bc = line.split()
                lattice = LatticeSpec(int(L), int(d), bc)
                continue
            try:
                sup, label, re_, im_ = (p.strip() for p in line.split("|"))
            except ValueError as exc:
                raise InvalidInputError(f"malformed operator line: {raw!r}") from exc
            support = frozenset() if sup == "-" else frozenset(int(s) for s in sup.split(","))
            word = () if label == "I" else tuple((int(tok[1:]), tok[0]) for tok in label.split())
            block = terms.setdefault(support, {})
            block[_normalize_word(word)] = complex(float(re_), float(im_))
        if lattice is None:
            raise InvalidInputError("operator text has no lattice line")
        return cls(lattice, terms)

    def __eq__(self, other):
        if not isinstance(other, LocalOperator):
            return NotImplemented
        return self.lattice == other.lattice and self._terms == other._terms

    __hash__ = None


def commutator(a: LocalOperator, b: LocalOperator) -> LocalOperator:
    """``[A, B]`` block by block; disjoint supports are skipped."""
    a._check_lattice(b)
    out: dict[frozenset[int], dict[Word, complex]] = {}
    for X, ba in a._terms.items():
        for Y, bb in b._terms.items():
            if not (X & Y):
                continue
            dst = out.setdefault(X | Y, {})
            for wa, ca in ba.items():
                for wb, cb in bb.items():
                    if not words_anticommute(wa, wb):
                        continue
                    phase, w = word_product(wa, wb)
                    dst[w] = dst.get(w, 0) + 2 * phase * ca * cb
    return LocalOperator(a.lattice, out)


def product(a: LocalOperator, b: LocalOperator) -> LocalOperator:
    """Operator product ``A B``; every block pair contributes at key ``X | Y``."""
    a._check_lattice(b)
    out: dict[frozenset[int], dict[Word, complex]] = {}
    for X, ba in a._terms.items():
        for Y, bb in b._terms.items():
            dst = out.setdefault(X | Y, {})
            for wa, ca in ba.items():
                for wb, cb in bb.items():
                    phase, w = word_product(wa, wb)
                    dst[w] = dst.get(w, 0) + phase * ca * cb
    return LocalOperator(a.lattice, out)


def local_norm(b: LocalOperator) -> float:
    return b.local_norm()


def dense_realization(b: LocalOperator, cap: int = DEFAULT_SITE_CAP) -> np.ndarray:
    return b.dense(cap)


def pauli(lattice: LatticeSpec, label: str, coefficient: complex = 1.0) -> LocalOperator:
    """Single-string operator from a label such as ``"X0 Z1"``."""
    word = () if label.strip() in ("", "I") else tuple(
        (int(tok[1:]), tok[0]) for tok in label.split()
    )
    return LocalOperator.from_strings(lattice, [PauliString(coefficient, word, lattice)])


def pauli_matrix(letter: str) -> np.ndarray:
    return _PAULI_MATS[letter.upper()].copy()
