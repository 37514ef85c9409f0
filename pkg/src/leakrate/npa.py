"""Noncommutative monomial algebra over projective measurement operators and
moment-matrix structure for NPA local levels 1 and 2.

Letters are projectors P(a|x) for party A or B. Only the first
``num_outputs - 1`` outcomes per input are retained (the last is eliminated
through completeness), all letters are self-adjoint idempotents, projectors
of the same input with different outcomes are orthogonal, and letters of
different parties commute.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core_math import DomainError
from .scenario import BellScenario

__all__ = ["Letter", "Monomial", "ZERO", "IDENTITY", "canonicalize",
           "local_level_basis", "moment_structure", "MomentStructure"]


@dataclass(frozen=True, order=True)
class Letter:
    party: str  # "A" or "B"
    input: int
    outcome: int

    def __post_init__(self):
        if self.party not in ("A", "B"):
            raise DomainError("party must be 'A' or 'B'")

    def __repr__(self):
        return f"{self.party}{self.outcome}|{self.input}"


class _Zero:
    """Distinguished marker for a word that collapses to the zero operator."""

    def __repr__(self):
        return "ZERO"


ZERO = _Zero()


@dataclass(frozen=True)
class Monomial:
    """Canonical word: all A letters before B letters, no adjacent letters of
    the same input. The empty word is the identity."""

    word: tuple[Letter, ...] = ()

    def __repr__(self):
        return "1" if not self.word else " ".join(map(repr, self.word))

    @property
    def a_part(self) -> tuple[Letter, ...]:
        return tuple(l for l in self.word if l.party == "A")

    @property
    def b_part(self) -> tuple[Letter, ...]:
        return tuple(l for l in self.word if l.party == "B")


IDENTITY = Monomial()


def _reduce_same_party(letters: tuple[Letter, ...]):
    """Collapse adjacent same-input letters (idempotence / orthogonality)
    to a fixed point. Returns a tuple of letters or ZERO."""
    word = list(letters)
    changed = True
    while changed:
        changed = False
        i = 0
        while i + 1 < len(word):
            u, v = word[i], word[i + 1]
            if u.input == v.input:
                if u.outcome != v.outcome:
                    return ZERO
                del word[i + 1]
                changed = True
            else:
                i += 1
    return tuple(word)


def canonicalize(letters):
    """Canonical form of a product of letters: sort A before B (stable within
    each party), then apply idempotence and orthogonality to a fixed point.
    Returns a Monomial, or ZERO if the product vanishes."""
    letters = tuple(letters)
    a_word = _reduce_same_party(tuple(l for l in letters if l.party == "A"))
    if a_word is ZERO:
        return ZERO
    b_word = _reduce_same_party(tuple(l for l in letters if l.party == "B"))
    if b_word is ZERO:
        return ZERO
    return Monomial(a_word + b_word)


def _party_words(num_inputs: int, num_outcomes: int, party: str, level: int):
    """All canonical single-party words of length <= level, graded-lex order."""
    alphabet = [Letter(party, x, a)
                for x in range(num_inputs) for a in range(num_outcomes - 1)]
    words: list[tuple[Letter, ...]] = []
    seen = set()
    for length in range(level + 1):
        for combo in itertools.product(alphabet, repeat=length):
            w = _reduce_same_party(combo)
            if w is ZERO or len(w) != length or w in seen:
                continue
            seen.add(w)
            words.append(w)
    return words


def local_level_basis(s: BellScenario, level: int) -> list[Monomial]:
    """Monomial basis for NPA local level 1 or 2: products of an A word and a
    B word, each of length <= level. Deterministic graded-lex order with the
    identity first."""
    if level not in (1, 2):
        raise DomainError(f"unsupported local level {level}")
    a_words = _party_words(s.num_inputs_a, s.num_outputs_a, "A", level)
    b_words = _party_words(s.num_inputs_b, s.num_outputs_b, "B", level)
    basis = [Monomial(aw + bw) for aw in a_words for bw in b_words]
    key = lambda m: (len(m.a_part), len(m.b_part),
                     tuple((l.input, l.outcome) for l in m.word))
    return sorted(basis, key=key)


@dataclass
class MomentStructure:
    """Symmetry-class structure of the moment matrix over a monomial basis.

    ``entry_class[i][j]`` holds the class id of moment <u_i^dag u_j>; all
    entries in one class share a scalar variable. ``zero_class`` marks entries
    that vanish identically (None if no entry vanishes). ``identity_class`` is
    the normalization entry <1>. ``behavior_map`` links each retained
    (a, b, x, y) to a class, and ``marginal_a``/``marginal_b`` do the same for
    the single-party marginals.
    """

    basis: list[Monomial]
    entry_class: np.ndarray
    class_monomials: list[Monomial]
    identity_class: int
    zero_class: int | None
    behavior_map: dict[tuple[int, int, int, int], int]
    marginal_a: dict[tuple[int, int], int]
    marginal_b: dict[tuple[int, int], int]

    @property
    def num_classes(self) -> int:
        return len(self.class_monomials)

    def dump(self) -> str:
        """Stable text dump of the basis and class table for golden files."""
        lines = [f"basis {len(self.basis)}"]
        lines += [f"  [{i}] {m!r}" for i, m in enumerate(self.basis)]
        lines.append(f"classes {self.num_classes}")
        lines += [f"  ({c}) {m!r}" for c, m in enumerate(self.class_monomials)]
        return "\n".join(lines) + "\n"


def moment_structure(basis: list[Monomial]) -> MomentStructure:
    """Group moment-matrix entries <u_i^dag u_j> into symmetry classes.

    Letters are self-adjoint, so the adjoint of a word is its reversal.
    """
    n = len(basis)
    class_of: dict[Monomial, int] = {}
    class_monomials: list[Monomial] = []
    entry_class = np.empty((n, n), dtype=int)
    zero_class: int | None = None

    def class_id(m) -> int:
        nonlocal zero_class
        if m is ZERO:
            if zero_class is None:
                zero_class = len(class_monomials)
                class_monomials.append(m)
            return zero_class
        if m not in class_of:
            class_of[m] = len(class_monomials)
            class_monomials.append(m)
        return class_of[m]

    for i, u in enumerate(basis):
        for j in range(i, n):
            m = canonicalize(tuple(reversed(u.word)) + basis[j].word)
            c = class_id(m)
            entry_class[i, j] = c
            entry_class[j, i] = c

    identity_class = int(entry_class[0, 0])
    if basis[0].word:
        raise DomainError("basis must start with the identity monomial")

    parties = {"A": set(), "B": set()}
    for m in basis:
        for l in m.word:
            parties[l.party].add((l.input, l.outcome))

    marginal_a = {}
    for x, a in sorted(parties["A"]):
        mono = canonicalize([Letter("A", x, a)])
        if mono in class_of:
            marginal_a[(a, x)] = class_of[mono]
    marginal_b = {}
    for y, b in sorted(parties["B"]):
        mono = canonicalize([Letter("B", y, b)])
        if mono in class_of:
            marginal_b[(b, y)] = class_of[mono]

    behavior_map = {}
    for (x, a) in sorted(parties["A"]):
        for (y, b) in sorted(parties["B"]):
            mono = canonicalize([Letter("A", x, a), Letter("B", y, b)])
            if mono in class_of:
                behavior_map[(a, b, x, y)] = class_of[mono]

    return MomentStructure(basis, entry_class, class_monomials, identity_class,
                           zero_class, behavior_map, marginal_a, marginal_b)
