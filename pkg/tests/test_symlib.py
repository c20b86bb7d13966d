import itertools

import numpy as np
import pytest

from sprintreg.symlib import (
    Alphabet,
    Library,
    SymbolicWord,
    canonicalize,
    count,
    enumerate_words,
    ks_alphabet,
    ks_dynamic_library,
    make_word,
    mhd_alphabet,
    time_derivative_term,
    upper_bound,
)


class TestCanonicalize:
    def test_derivative_order_within_factor(self):
        A = mhd_alphabet()
        w1 = canonicalize(A, ["dx", "dt", "ux"])
        w2 = canonicalize(A, ["dt", "dx", "ux"])
        assert w1 == w2

    def test_field_commutation(self):
        A = mhd_alphabet()
        assert canonicalize(A, ["uy", "ux"]) == canonicalize(A, ["ux", "uy"])

    def test_trailing_derivative_rejected(self):
        A = mhd_alphabet()
        with pytest.raises(ValueError, match="dangling derivative"):
            canonicalize(A, ["rho", "dx"])

    def test_unknown_symbol_rejected(self):
        with pytest.raises(ValueError, match="unknown symbol"):
            canonicalize(mhd_alphabet(), ["q"])

    def test_idempotent_on_emitted_letters(self):
        # same-field factors with distinct multi-indices sort canonically
        A = mhd_alphabet()
        w1 = canonicalize(A, ["dy", "rho", "dt", "dx", "rho"])
        w2 = canonicalize(A, ["dt", "dx", "rho", "dy", "rho"])
        assert w1 == w2


class TestEnumerate:
    def test_single_field_single_derivative_length3(self):
        lib = enumerate_words(ks_alphabet(), 3)
        got = {w.display() for w in lib.words}
        assert got == {"u", "dx(u)", "dx^2(u)", "u^2", "u*dx(u)", "u^3"}

    def test_mhd_length_one_is_the_bare_fields(self):
        lib = enumerate_words(mhd_alphabet(), 1)
        assert len(lib.words) == 8
        assert {w.display() for w in lib.words} == set(mhd_alphabet().fields)

    def test_ks_dynamic_library_has_139_terms(self):
        assert ks_dynamic_library(10).size == 139

    def test_zero_length_empty(self):
        assert enumerate_words(ks_alphabet(), 0).size == 0

    def test_no_duplicates_and_length_bound(self):
        lib = enumerate_words(mhd_alphabet(), 3)
        seen = {w.factors for w in lib.words}
        assert len(seen) == len(lib.words)
        assert all(w.length <= 3 for w in lib.words)

    def test_matches_brute_force_letter_strings(self):
        # enumerate agrees with canonicalize-and-dedupe over all raw strings
        for fields, derivs in [(("a",), ("d",)), (("a", "b"), ("d",)), (("a",), ("d", "e"))]:
            A = Alphabet(fields, derivs)
            symbols = fields + derivs
            for n in range(1, 5):
                brute = set()
                for length in range(1, n + 1):
                    for combo in itertools.product(symbols, repeat=length):
                        try:
                            brute.add(canonicalize(A, combo).factors)
                        except ValueError:
                            pass
                lib = enumerate_words(A, n)
                assert {w.factors for w in lib.words} == brute

    def test_closure_under_factor_permutation(self):
        A = Alphabet(("a", "b"), ("d",))
        lib = enumerate_words(A, 4)
        in_lib = {w.factors for w in lib.words}
        for w in lib.words:
            for perm in itertools.permutations(w.factors):
                rebuilt = SymbolicWord(
                    tuple(sorted(perm, key=A.factor_key))
                )
                assert rebuilt.factors in in_lib


class TestCount:
    def test_equals_enumeration(self):
        for nf, nd in [(1, 1), (2, 1), (1, 2), (3, 2), (2, 0)]:
            A = Alphabet(
                tuple(f"f{i}" for i in range(nf)),
                tuple(f"d{i}" for i in range(nd)),
            )
            for n in range(1, 6):
                assert count(A, n) == len(enumerate_words(A, n).words)

    def test_mhd_sizes(self):
        A = mhd_alphabet()
        assert count(A, 1) == 8
        c5 = count(A, 5)
        assert 5_000 <= c5 <= 50_000

    def test_bounded_and_increasing(self):
        A = mhd_alphabet()
        prev = 0
        for n in range(1, 6):
            c = count(A, n)
            assert c <= upper_bound(A.size, n)
            assert c > prev
            prev = c


class TestUpperBound:
    def test_values(self):
        assert upper_bound(12, 1) == 12
        assert upper_bound(12, 2) == 12 * (144 - 1) // 11  # 156
        assert upper_bound(2, 3) == 14

    def test_exact_big_integers(self):
        # arbitrary-precision: no overflow at sizes far beyond 64-bit
        val = upper_bound(12, 60)
        assert val == 12 * (12**60 - 1) // 11

    def test_input_validation(self):
        with pytest.raises(ValueError):
            upper_bound(1, 3)
        with pytest.raises(ValueError):
            upper_bound(12, 0)


class TestLibrary:
    def test_pinned_term_first_and_deduplicated(self):
        lib = ks_dynamic_library(4)
        assert lib.labels()[0] == "dt(u)"
        with pytest.raises(ValueError, match="duplicate"):
            lib.with_extra(time_derivative_term())

    def test_json_roundtrip(self, tmp_path):
        lib = ks_dynamic_library(5)
        p = tmp_path / "lib.json"
        lib.to_json(p)
        back = Library.from_json(p)
        assert back.labels() == lib.labels()
        assert back.alphabet == lib.alphabet
        assert back.terms == lib.terms

    def test_display_grammar(self):
        A = ks_alphabet()
        w = make_word(A, [("u", {}), ("u", {}), ("u", {"dx": 3})])
        assert w.display() == "u^2*dx^3(u)"
        assert w.length == 6
