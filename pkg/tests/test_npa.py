import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leakrate.core_math import DomainError
from leakrate.npa import (IDENTITY, ZERO, Letter, Monomial, canonicalize,
                          local_level_basis, moment_structure)
from leakrate.scenario import BellScenario

letters_2in = st.builds(Letter,
                        party=st.sampled_from(["A", "B"]),
                        input=st.integers(0, 1),
                        outcome=st.just(0))
words = st.lists(letters_2in, max_size=6)


def op_of_letter(letter: Letter, projectors_a, projectors_b) -> np.ndarray:
    table = projectors_a if letter.party == "A" else projectors_b
    return table[letter.input][letter.outcome]


def word_operator(word, proj_a, proj_b, dim) -> np.ndarray:
    """Evaluate a word in an explicit two-qubit representation (A ops on the
    first factor, B ops on the second; different parties commute)."""
    op = np.eye(dim * dim, dtype=complex)
    for letter in word:
        local = op_of_letter(letter, proj_a, proj_b)
        full = (np.kron(local, np.eye(dim)) if letter.party == "A"
                else np.kron(np.eye(dim), local))
        op = op @ full
    return op


def angle_projectors(theta):
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    obs = math.sin(theta) * X + math.cos(theta) * Z
    return [(np.eye(2) + s * obs) / 2 for s in (1, -1)]


class TestCanonicalize:
    def test_identity(self):
        assert canonicalize([]) == IDENTITY

    def test_idempotence(self):
        l = Letter("A", 0, 0)
        assert canonicalize([l, l]) == canonicalize([l])

    def test_orthogonality(self):
        assert canonicalize([Letter("A", 0, 0), Letter("A", 0, 1)]) is ZERO

    def test_party_sorting(self):
        a, b = Letter("A", 0, 0), Letter("B", 1, 0)
        assert canonicalize([b, a]) == canonicalize([a, b])

    @given(words)
    def test_canonicalization_idempotent(self, word):
        first = canonicalize(word)
        if first is ZERO:
            return
        assert canonicalize(first.word) == first

    @given(words, st.randoms())
    @settings(max_examples=200)
    def test_confluence_under_cross_party_swaps(self, word, rnd):
        """Reordering letters of different parties never changes the result."""
        shuffled = list(word)
        for _ in range(5):
            i = rnd.randrange(max(len(shuffled), 1)) if shuffled else 0
            if i + 1 < len(shuffled) and \
                    shuffled[i].party != shuffled[i + 1].party:
                shuffled[i], shuffled[i + 1] = shuffled[i + 1], shuffled[i]
        a, b = canonicalize(word), canonicalize(shuffled)
        if a is ZERO or b is ZERO:
            assert a is b
        else:
            assert a == b

    @given(words)
    @settings(max_examples=200)
    def test_matches_operator_representation(self, word):
        """Canonical form evaluates to the same operator as the raw word."""
        proj_a = [angle_projectors(t) for t in (0.3, 1.1)]
        proj_b = [angle_projectors(t) for t in (0.7, 2.0)]
        raw = word_operator(word, proj_a, proj_b, 2)
        canon = canonicalize(word)
        if canon is ZERO:
            assert np.allclose(raw, 0.0, atol=1e-12)
        else:
            assert np.allclose(raw, word_operator(canon.word, proj_a, proj_b, 2),
                               atol=1e-12)


class TestBasis:
    def test_counts_two_input(self):
        s = BellScenario(2, 2)
        assert len(local_level_basis(s, 1)) == 9
        assert len(local_level_basis(s, 2)) == 25

    def test_counts_four_input(self):
        s = BellScenario(4, 4)
        assert len(local_level_basis(s, 1)) == 25

    def test_identity_first_and_unique(self):
        basis = local_level_basis(BellScenario(2, 2), 2)
        assert basis[0] == IDENTITY
        assert len(set(basis)) == len(basis)

    def test_deterministic_order(self):
        s = BellScenario(2, 2)
        assert local_level_basis(s, 2) == local_level_basis(s, 2)

    def test_level_domain(self):
        with pytest.raises(DomainError):
            local_level_basis(BellScenario(2, 2), 3)


class TestMomentStructure:
    def test_class_count_two_input_level2(self):
        ms = moment_structure(local_level_basis(BellScenario(2, 2), 2))
        assert ms.num_classes == 77

    def test_symmetry_and_maps(self):
        ms = moment_structure(local_level_basis(BellScenario(2, 2), 1))
        assert np.array_equal(ms.entry_class, ms.entry_class.T)
        assert ms.identity_class == int(ms.entry_class[0, 0])
        assert set(ms.behavior_map) == {(a, b, x, y) for a in (0,)
                                        for b in (0,) for x in (0, 1)
                                        for y in (0, 1)}
        assert set(ms.marginal_a) == {(0, 0), (0, 1)}

    def test_dump_stable(self):
        ms = moment_structure(local_level_basis(BellScenario(2, 2), 1))
        dump = ms.dump()
        assert dump.startswith("basis 9")
        assert dump == ms.dump()

    def test_entries_consistent_with_quantum_strategy(self):
        """Moment matrix of an explicit strategy: same class -> same value,
        PSD, behavior entries match Born probabilities."""
        basis = local_level_basis(BellScenario(2, 2), 2)
        ms = moment_structure(basis)
        proj_a = [angle_projectors(t) for t in (0.0, math.pi / 2)]
        proj_b = [angle_projectors(t) for t in (math.pi / 4, 3 * math.pi / 4)]
        phi = np.zeros(4, dtype=complex)
        phi[0] = phi[3] = 1 / math.sqrt(2)
        n = len(basis)
        gamma = np.empty((n, n))
        for i, u in enumerate(basis):
            ui = word_operator(tuple(reversed(u.word)), proj_a, proj_b, 2)
            for j, v in enumerate(basis):
                vj = word_operator(v.word, proj_a, proj_b, 2)
                gamma[i, j] = (phi.conj() @ (ui @ vj) @ phi).real

        class_value = {}
        for i in range(n):
            for j in range(n):
                cls = int(ms.entry_class[i, j])
                if cls == ms.zero_class:
                    assert abs(gamma[i, j]) < 1e-12
                    continue
                if cls in class_value:
                    assert gamma[i, j] == pytest.approx(class_value[cls],
                                                        abs=1e-12)
                else:
                    class_value[cls] = gamma[i, j]
        assert np.linalg.eigvalsh(0.5 * (gamma + gamma.T)).min() > -1e-10

        for (a, b, x, y), cls in ms.behavior_map.items():
            op = np.kron(proj_a[x][a], proj_b[y][b])
            born = (phi.conj() @ op @ phi).real
            assert class_value[cls] == pytest.approx(born, abs=1e-12)
