import numpy as np
import pytest

from steerlp.grid import Measure, build_partition, discretize_controls
from steerlp.reachability import (check_sufficient_condition, control_word,
                                  reachable_sets)
from steerlp.systems import TranslationSystem
from steerlp.ulam import TransitionTensor, build_tensor

from oracles import random_tensor, reach_by_word_enumeration, word_reaches


def three_cell_line():
    part = build_partition((-1.5,), (1.5,), (3,))
    ctrl = discretize_controls((-1.0,), (1.0,), (3,))
    sysm = TranslationSystem((-1.5,), (1.5,), clamp=True)
    return build_tensor(sysm, part, ctrl, q=8)


def identity_tensor(n_x):
    return TransitionTensor(matrices=[np.eye(n_x)], q=1,
                            partition_fingerprint="id",
                            controls_fingerprint="id")


class TestReachableSets:
    def test_middle_cell_reaches_everything_in_one_step(self):
        tensor = three_cell_line()
        sets = reachable_sets(tensor, 1)
        assert np.array_equal(sets.at(0), np.eye(3, dtype=bool))
        assert sets.at(1)[1].all()

    def test_identity_dynamics_stays_identity(self):
        tensor = identity_tensor(5)
        sets = reachable_sets(tensor, 4)
        for n in range(5):
            assert np.array_equal(sets.at(n), np.eye(5, dtype=bool))

    def test_matches_word_enumeration(self):
        rng = np.random.default_rng(21)
        for trial in range(5):
            tensor = random_tensor(rng, n_x=4, n_u=2, density=0.4)
            for horizon in (1, 2, 3):
                sets = reachable_sets(tensor, horizon)
                oracle = reach_by_word_enumeration(tensor, horizon)
                assert np.array_equal(sets.at(horizon), oracle)

    def test_cumulative_contains_exact(self):
        rng = np.random.default_rng(8)
        tensor = random_tensor(rng, n_x=5, n_u=2, density=0.3)
        exact = reachable_sets(tensor, 3)
        cum = reachable_sets(tensor, 3, cumulative=True)
        for n in range(4):
            assert np.all(cum.at(n) >= exact.at(n))

    def test_monotone_union_over_controls(self):
        rng = np.random.default_rng(33)
        full = random_tensor(rng, n_x=5, n_u=3, density=0.4)
        sub = TransitionTensor(matrices=full.matrices[:2], q=1,
                               partition_fingerprint="s",
                               controls_fingerprint="s")
        full_sets = reachable_sets(full, 3)
        sub_sets = reachable_sets(sub, 3)
        for n in range(4):
            assert np.all(full_sets.at(n) >= sub_sets.at(n))


class TestSufficientCondition:
    def test_splitting_instance_satisfied(self):
        tensor = three_cell_line()
        sets = reachable_sets(tensor, 1)
        mu0 = Measure.unit(3, 1)
        muf = Measure(np.array([0.5, 0.0, 0.5]))
        verdict = check_sufficient_condition(sets, mu0, muf, 1)
        assert verdict.satisfied
        assert verdict.witnesses == []

    def test_identity_split_measures_violated(self):
        tensor = identity_tensor(2)
        sets = reachable_sets(tensor, 1)
        half = Measure(np.array([0.5, 0.5]))
        verdict = check_sufficient_condition(sets, half, half, 1)
        assert not verdict.satisfied
        assert set(verdict.witnesses) == {(0, 1), (1, 0)}

    def test_self_loop_dirac_satisfied_at_any_horizon(self):
        tensor = identity_tensor(3)
        for n in (1, 2, 5):
            sets = reachable_sets(tensor, n)
            mu = Measure.unit(3, 1)
            assert check_sufficient_condition(sets, mu, mu, n).satisfied

    def test_violated_never_lies(self):
        # every witness pair must fail under exhaustive word enumeration
        rng = np.random.default_rng(14)
        for trial in range(5):
            tensor = random_tensor(rng, n_x=4, n_u=2, density=0.25)
            sets = reachable_sets(tensor, 2)
            mu = Measure(np.full(4, 0.25))
            verdict = check_sufficient_condition(sets, mu, mu, 2)
            oracle = reach_by_word_enumeration(tensor, 2)
            for i, j in verdict.witnesses:
                assert not oracle[i, j]

    def test_mismatched_measures_raise(self):
        tensor = identity_tensor(3)
        sets = reachable_sets(tensor, 1)
        with pytest.raises(ValueError):
            check_sufficient_condition(sets, Measure.unit(2, 0), Measure.unit(3, 0), 1)


class TestControlWord:
    def test_splitting_witnesses(self):
        tensor = three_cell_line()
        assert control_word(tensor, 1, 0, 1) == [0]
        assert control_word(tensor, 1, 2, 1) == [2]
        assert control_word(tensor, 1, 1, 1) == [1]

    def test_word_confirmed_by_simulation(self):
        rng = np.random.default_rng(77)
        for trial in range(8):
            tensor = random_tensor(rng, n_x=5, n_u=3, density=0.3)
            horizon = int(rng.integers(1, 4))
            sets = reachable_sets(tensor, horizon)
            reach = sets.at(horizon)
            for i in range(5):
                for j in range(5):
                    word = control_word(tensor, i, j, horizon)
                    if reach[i, j]:
                        assert word is not None and len(word) == horizon
                        assert word_reaches(tensor, i, j, word)
                    else:
                        assert word is None

    def test_unreachable_returns_none(self):
        tensor = identity_tensor(2)
        assert control_word(tensor, 0, 1, 3) is None
