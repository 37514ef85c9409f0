import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leakrate.core_math import DomainError
from leakrate.scenario import (BellScenario, BehaviorViolation,
                               InputDistribution, LeakageContext, LeakageKind,
                               LeakageModel, TargetBehavior, WernerSpec,
                               chsh_value, convert_leakage_param,
                               validate_behavior, werner_behavior)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def werner_density_oracle(spec: WernerSpec) -> np.ndarray:
    """Density-matrix oracle: q-depolarized singlet-rotated Bell state."""
    phi = np.zeros(4, dtype=complex)
    phi[0] = phi[3] = 1 / math.sqrt(2)
    return (1 - 2 * spec.q) * np.outer(phi, phi.conj()) \
        + 2 * spec.q * np.eye(4) / 4


def angle_projectors(theta: float):
    obs = math.sin(theta) * X + math.cos(theta) * Z
    return [(np.eye(2) + s * obs) / 2 for s in (1, -1)]


def behavior_from_oracle(spec: WernerSpec) -> np.ndarray:
    rho = werner_density_oracle(spec)
    nx, ny = len(spec.angles_a), len(spec.angles_b)
    table = np.empty((nx, ny, 2, 2))
    for x, ta in enumerate(spec.angles_a):
        for y, tb in enumerate(spec.angles_b):
            pa = angle_projectors(ta)
            pb = angle_projectors(tb)
            for a in range(2):
                for b in range(2):
                    table[x, y, a, b] = np.trace(
                        rho @ np.kron(pa[a], pb[b])).real
    return table


CHSH_ANGLES = ((0.0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4))
MY_ANGLES = ((0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4),) * 2


class TestWernerBehavior:
    @pytest.mark.parametrize("angles", [CHSH_ANGLES, MY_ANGLES])
    @pytest.mark.parametrize("q", [0.0, 0.05, 0.2, 0.5])
    def test_matches_density_matrix_oracle(self, angles, q):
        spec = WernerSpec(q, *angles)
        expect = behavior_from_oracle(spec)
        got = werner_behavior(spec).table
        assert np.allclose(got, expect, atol=1e-12)

    @pytest.mark.parametrize("angles", [CHSH_ANGLES, MY_ANGLES])
    def test_valid_behavior_across_grid(self, angles):
        for q in np.linspace(0.0, 0.5, 11):
            b = werner_behavior(WernerSpec(q, *angles))
            assert validate_behavior(b) == []

    def test_chsh_affine_in_q(self):
        for q in np.linspace(0.0, 0.5, 11):
            b = werner_behavior(WernerSpec(q, *CHSH_ANGLES))
            s = chsh_value(b, 1, 0, 0, 1)
            assert s == pytest.approx(2 * math.sqrt(2) * (1 - 2 * q), abs=1e-12)

    def test_q_domain(self):
        with pytest.raises(DomainError):
            WernerSpec(-0.01, *CHSH_ANGLES)
        with pytest.raises(DomainError):
            WernerSpec(0.51, *CHSH_ANGLES)


class TestTargetBehavior:
    def test_json_round_trip(self):
        b = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES))
        again = TargetBehavior.from_json(b.to_json())
        assert again == b

    def test_csv_header(self):
        b = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES))
        lines = b.to_csv().splitlines()
        assert lines[0] == "x,y,a,b,p"
        assert len(lines) == 1 + 2 * 2 * 2 * 2

    def test_shape_validation(self):
        with pytest.raises(DomainError):
            TargetBehavior(np.zeros((2, 2, 2)))


class TestValidateBehavior:
    def test_detects_signalling(self):
        b = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES))
        t = b.table.copy()
        t[0, 0, 0, 0] += 0.05
        t[0, 0, 0, 1] -= 0.05
        kinds = {v.kind for v in validate_behavior(TargetBehavior(t))}
        assert "no-signalling" in kinds

    def test_detects_negativity_and_normalization(self):
        t = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES)).table.copy()
        t[0, 0, 0, 0] = -0.01
        kinds = {v.kind for v in validate_behavior(TargetBehavior(t))}
        assert "negativity" in kinds and "normalization" in kinds

    def test_violation_fields(self):
        t = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES)).table.copy()
        t[1, 1] = [[0.5, 0.5], [0.5, 0.5]]
        out = validate_behavior(TargetBehavior(t))
        assert all(isinstance(v, BehaviorViolation) and v.magnitude > 0
                   for v in out)


class TestInputDistribution:
    def test_uniform_test_point_gen(self):
        s = BellScenario(2, 2)
        d = InputDistribution.uniform_test_point_gen(s)
        assert np.allclose(d.p_test, 0.25)
        assert d.generation_input() == (0, 0)

    def test_generation_requires_point_mass(self):
        dist = InputDistribution(np.full((2, 2), 0.25), np.full((2, 2), 0.25))
        with pytest.raises(DomainError):
            dist.generation_input()

    def test_normalization_enforced(self):
        with pytest.raises(DomainError):
            InputDistribution(np.full((2, 2), 0.3), np.full((2, 2), 0.25))


class TestLeakage:
    def test_model_domain(self):
        with pytest.raises(DomainError):
            LeakageModel(LeakageKind.BOUNDED_WEIGHT, 1.0)
        LeakageModel(LeakageKind.BOUNDED_WEIGHT, 0.0)

    @given(st.floats(0.0, 0.2))
    def test_convert_factors(self, dp):
        assert convert_leakage_param(
            dp, LeakageContext.JOINT_FROM_PER_REGISTER) == pytest.approx(4 * dp)
        assert convert_leakage_param(
            dp, LeakageContext.SINGLE_ROUND_TWO_REGISTER) == pytest.approx(2 * dp)
        assert convert_leakage_param(
            dp, LeakageContext.ACCOUNTING_ONE_REGISTER) == pytest.approx(dp)

    def test_convert_rejects_vacuous(self):
        with pytest.raises(DomainError):
            convert_leakage_param(0.3, LeakageContext.JOINT_FROM_PER_REGISTER)


class TestScenario:
    def test_minimum_counts(self):
        with pytest.raises(DomainError):
            BellScenario(1, 2)
        with pytest.raises(DomainError):
            BellScenario(2, 2, num_outputs_a=1)
