"""Symbolic word libraries over an alphabet of fields and derivative symbols.

A word is a product of differentiated fields.  Uniqueness rules are baked
into the representation: a word is a multiset of factors, each factor a
field with a derivative multi-index, so reorderings of factors or of the
derivatives inside a factor cannot produce distinct words, and a derivative
with nothing to act on is unrepresentable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

__all__ = [
    "Alphabet",
    "SymbolicWord",
    "Library",
    "enumerate_words",
    "count",
    "canonicalize",
    "upper_bound",
    "make_word",
    "ks_alphabet",
    "mhd_alphabet",
    "ks_dynamic_library",
    "ks_spatial_library",
]

# factor = (field symbol, ((derivative symbol, count), ...)) with counts > 0
Factor = tuple[str, tuple[tuple[str, int], ...]]


@dataclass(frozen=True)
class Alphabet:
    """Ordered field and derivative symbols; the orderings fix canonical form."""

    fields: tuple[str, ...]
    derivatives: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "derivatives", tuple(self.derivatives))
        symbols = self.fields + self.derivatives
        if len(set(symbols)) != len(symbols):
            raise ValueError("duplicate symbols in alphabet")
        if not self.fields:
            raise ValueError("alphabet needs at least one field")

    @property
    def size(self) -> int:
        return len(self.fields) + len(self.derivatives)

    def factor_key(self, factor: Factor):
        """Total order on factors: field position, then the derivative count
        vector in alphabet order (lexicographic)."""
        field_sym, derivs = factor
        counts = dict(derivs)
        return (
            self.fields.index(field_sym),
            tuple(counts.get(d, 0) for d in self.derivatives),
        )


def _factor_length(factor: Factor) -> int:
    return 1 + sum(c for _, c in factor[1])


def _factor_display(factor: Factor) -> str:
    field_sym, derivs = factor
    out = field_sym
    for d, c in reversed(derivs):
        out = f"{d}^{c}({out})" if c > 1 else f"{d}({out})"
    return out


@dataclass(frozen=True)
class SymbolicWord:
    """Canonical product of differentiated fields."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("empty word")
        for _, derivs in self.factors:
            if any(c <= 0 for _, c in derivs):
                raise ValueError("derivative counts must be positive")

    @property
    def length(self) -> int:
        return sum(_factor_length(f) for f in self.factors)

    def display(self) -> str:
        """Fixed grammar, e.g. ``u^2*dx^3(u)`` for u*u*(d^3u/dx^3)."""
        parts = []
        i = 0
        while i < len(self.factors):
            j = i
            while j < len(self.factors) and self.factors[j] == self.factors[i]:
                j += 1
            base = _factor_display(self.factors[i])
            parts.append(base if j - i == 1 else f"{base}^{j - i}")
            i = j
        return "*".join(parts)

    def derivative_order(self, deriv: str) -> int:
        """Total count of one derivative symbol across all factors."""
        return sum(dict(d).get(deriv, 0) for _, d in self.factors)

    def to_obj(self):
        return [[f, [list(dc) for dc in derivs]] for f, derivs in self.factors]

    @classmethod
    def from_obj(cls, obj) -> "SymbolicWord":
        return cls(
            tuple(
                (f, tuple((d, int(c)) for d, c in derivs)) for f, derivs in obj
            )
        )


def make_word(alphabet: Alphabet, factors) -> SymbolicWord:
    """Build a canonical word from (field, {derivative: count}) pairs."""
    built = []
    for field_sym, counts in factors:
        if field_sym not in alphabet.fields:
            raise ValueError(f"unknown field symbol {field_sym!r}")
        derivs = tuple(
            (d, int(counts[d]))
            for d in alphabet.derivatives
            if counts.get(d, 0) > 0
        )
        unknown = set(counts) - set(alphabet.derivatives)
        if unknown:
            raise ValueError(f"unknown derivative symbols {sorted(unknown)}")
        built.append((field_sym, derivs))
    built.sort(key=alphabet.factor_key)
    return SymbolicWord(tuple(built))


@dataclass(frozen=True)
class Library:
    """Ordered collection of canonical words, with optional pinned terms.

    ``extra_terms`` are listed first in ``terms`` and may use derivative
    symbols outside the enumeration alphabet (e.g. a single time-derivative
    term pinned alongside an otherwise spatial library).
    """

    words: tuple[SymbolicWord, ...]
    alphabet: Alphabet
    max_length: int
    extra_terms: tuple[SymbolicWord, ...] = ()

    def __post_init__(self):
        seen = set()
        for w in self.extra_terms + self.words:
            if w.factors in seen:
                raise ValueError(f"duplicate word {w.display()}")
            seen.add(w.factors)
        for w in self.words:
            if w.length > self.max_length:
                raise ValueError("word exceeds max_length")

    @property
    def terms(self) -> tuple[SymbolicWord, ...]:
        return self.extra_terms + self.words

    @property
    def size(self) -> int:
        return len(self.extra_terms) + len(self.words)

    def labels(self) -> tuple[str, ...]:
        return tuple(w.display() for w in self.terms)

    def with_extra(self, *terms: SymbolicWord) -> "Library":
        return Library(
            self.words, self.alphabet, self.max_length, self.extra_terms + terms
        )

    def to_json(self, path) -> None:
        doc = {
            "alphabet": {
                "fields": list(self.alphabet.fields),
                "derivatives": list(self.alphabet.derivatives),
            },
            "max_length": self.max_length,
            "extra_terms": [w.to_obj() for w in self.extra_terms],
            "words": [w.to_obj() for w in self.words],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "Library":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            tuple(SymbolicWord.from_obj(o) for o in doc["words"]),
            Alphabet(
                tuple(doc["alphabet"]["fields"]),
                tuple(doc["alphabet"]["derivatives"]),
            ),
            int(doc["max_length"]),
            tuple(SymbolicWord.from_obj(o) for o in doc["extra_terms"]),
        )


# ---------------------------------------------------------------------------
# enumeration and counting
# ---------------------------------------------------------------------------


def _count_vectors(total: int, slots: int):
    """All nonnegative integer vectors of given length summing to total."""
    if slots == 0:
        if total == 0:
            yield ()
        return
    if slots == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _count_vectors(total - head, slots - 1):
            yield (head,) + tail


def _all_factors(alphabet: Alphabet, max_length: int) -> list[Factor]:
    """Every distinct factor of length <= max_length, sorted by length then
    canonical key (the sort order only drives enumeration pruning)."""
    out: list[Factor] = []
    for field_sym in alphabet.fields:
        for ell in range(1, max_length + 1):
            for vec in _count_vectors(ell - 1, len(alphabet.derivatives)):
                derivs = tuple(
                    (d, c) for d, c in zip(alphabet.derivatives, vec) if c > 0
                )
                out.append((field_sym, derivs))
    out.sort(key=lambda f: (_factor_length(f),) + alphabet.factor_key(f))
    return out


def enumerate_words(alphabet: Alphabet, max_length: int) -> Library:
    """All distinct canonical words of length <= max_length.

    Words are multisets of factors, generated as nondecreasing sequences in
    a fixed factor order so each multiset appears exactly once.
    """
    if max_length < 1:
        return Library((), alphabet, max(max_length, 0))
    factors = _all_factors(alphabet, max_length)
    lengths = [_factor_length(f) for f in factors]
    words: list[SymbolicWord] = []

    def grow(start: int, budget: int, picked: list[Factor]):
        for i in range(start, len(factors)):
            if lengths[i] > budget:
                break  # factors sorted by length
            picked.append(factors[i])
            words.append(
                SymbolicWord(tuple(sorted(picked, key=alphabet.factor_key)))
            )
            grow(i, budget - lengths[i], picked)
            picked.pop()

    grow(0, max_length, [])
    words.sort(key=lambda w: (w.length, tuple(map(alphabet.factor_key, w.factors))))
    return Library(tuple(words), alphabet, max_length)


def count(alphabet: Alphabet, n: int) -> int:
    """Library size |enumerate_words(alphabet, n)| without materializing it.

    Counts multisets of factors by a truncated generating-function product
    in exact integer arithmetic, so it stays cheap and overflow-free at
    word lengths where explicit enumeration is hopeless.  Agreement with
    explicit enumeration is covered by tests.
    """
    if n < 1:
        return 0
    D = len(alphabet.derivatives)
    # number of distinct factors of each length
    types = {
        ell: len(alphabet.fields) * math.comb(ell - 2 + D, D - 1)
        if D > 0
        else (len(alphabet.fields) if ell == 1 else 0)
        for ell in range(1, n + 1)
    }
    dp = [0] * (n + 1)
    dp[0] = 1
    for ell, t in types.items():
        if t == 0:
            continue
        new = [0] * (n + 1)
        for b in range(n + 1):
            if dp[b] == 0:
                continue
            j = 0
            while b + j * ell <= n:
                new[b + j * ell] += dp[b] * math.comb(j + t - 1, j)
                j += 1
        dp = new
    return sum(dp[1:])


def canonicalize(alphabet: Alphabet, letters) -> SymbolicWord:
    """Parse a raw letter sequence into a canonical word.

    Each maximal run of derivative letters binds to the next field letter.
    Sequences ending in a derivative are rejected (a derivative must act on
    something); unknown symbols raise.
    """
    pending: dict[str, int] = {}
    factors: list[Factor] = []
    for sym in letters:
        if sym in alphabet.derivatives:
            pending[sym] = pending.get(sym, 0) + 1
        elif sym in alphabet.fields:
            derivs = tuple(
                (d, pending[d]) for d in alphabet.derivatives if pending.get(d, 0)
            )
            factors.append((sym, derivs))
            pending = {}
        else:
            raise ValueError(f"unknown symbol {sym!r}")
    if pending:
        raise ValueError("dangling derivative")
    if not factors:
        raise ValueError("empty word")
    factors.sort(key=alphabet.factor_key)
    return SymbolicWord(tuple(factors))


def upper_bound(alphabet_size: int, n: int) -> int:
    """Geometric-sum bound |A| (|A|^n - 1)/(|A| - 1) on the library size.

    Exact arbitrary-precision integers, so there is no overflow to flag.
    """
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    return alphabet_size * (alphabet_size**n - 1) // (alphabet_size - 1)


# ---------------------------------------------------------------------------
# stock alphabets / libraries
# ---------------------------------------------------------------------------


def ks_alphabet() -> Alphabet:
    """Scalar field with one spatial derivative: words in u and d/dx."""
    return Alphabet(("u",), ("dx",))


def mhd_alphabet() -> Alphabet:
    """Eight 3+1D fields (velocity, magnetic field, density, pressure) and
    four spacetime derivatives: the 12-letter counting example."""
    return Alphabet(
        ("ux", "uy", "uz", "Bx", "By", "Bz", "rho", "P"),
        ("dt", "dx", "dy", "dz"),
    )


def time_derivative_term() -> SymbolicWord:
    """The pinned dt(u) term used by the dynamic library."""
    return SymbolicWord((("u", (("dt", 1),)),))


def ks_dynamic_library(max_length: int = 10) -> Library:
    """dt(u) pinned once, plus every {u, dx} word up to the length cap."""
    return enumerate_words(ks_alphabet(), max_length).with_extra(
        time_derivative_term()
    )


def ks_spatial_library(max_length: int = 10) -> Library:
    """The same enumeration without any time derivative."""
    return enumerate_words(ks_alphabet(), max_length)
