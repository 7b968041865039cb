from itertools import permutations

import numpy as np
import pytest

from gen import small_alphabet
from ltlnav.buchi import BuchiAutomaton, Transition, compile_formula
from ltlnav.ltl import TRUE, Alphabet, Atom, Not, And, eval_bool, parse
from ltlnav.subgoals import (
    LassoPath, NoValidSubgoal, Subgoal, UniverseTooLarge, build_universe,
    decode_subgoal, encode_subgoal, extract_subgoals, find_lassos,
    sample_subgoal,
)


def compile_str(text, alphabet=None):
    return compile_formula(parse(text), alphabet)


# -- independent oracles ------------------------------------------------------


def brute_edges(aut):
    """Edge relation computed directly from guards over all letters."""
    n_letters = 1 << aut.alphabet.n
    edges = set()
    for t in aut.transitions:
        for letter in range(n_letters):
            if eval_bool(t.guard, letter, aut.alphabet):
                edges.add((t.src, t.dst))
                break
    return edges


def brute_lassos(aut, q):
    """Enumerate accepting simple lassos from q by filtering permutations."""
    edges = brute_edges(aut)
    others = [s for s in range(aut.n_states) if s != q]
    found = set()
    for length in range(0, aut.n_states):
        for tail in permutations(others, length):
            path = (q,) + tail
            if any((path[i], path[i + 1]) not in edges for i in range(len(path) - 1)):
                continue
            for j in range(len(path)):
                if (path[-1], path[j]) in edges and \
                        any(s in aut.accepting for s in path[j:]):
                    found.add((path, j))
    return found


def brute_successors(aut, q, letter):
    return {t.dst for t in aut.transitions
            if t.src == q and eval_bool(t.guard, letter, aut.alphabet)}


def random_automaton(rng, n_states=5, n_props=2):
    ab = small_alphabet(n_props)
    transitions = []
    for src in range(n_states):
        for dst in range(n_states):
            if rng.random() < 0.3:
                lits = []
                for name in ab.names:
                    r = rng.random()
                    if r < 0.3:
                        lits.append(Atom(name))
                    elif r < 0.6:
                        lits.append(Not(Atom(name)))
                guard = TRUE
                for lit in lits:
                    guard = And(guard, lit) if guard is not TRUE else lit
                transitions.append(Transition(src, guard, dst))
    n_acc = int(rng.integers(0, n_states + 1))
    accepting = frozenset(int(x) for x in rng.choice(n_states, size=n_acc, replace=False))
    return BuchiAutomaton(ab, n_states, 0, accepting, tuple(transitions))


# -- find_lassos --------------------------------------------------------------


class TestFindLassos:
    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(20)
        for _ in range(200):
            aut = random_automaton(rng, n_states=int(rng.integers(2, 6)))
            for q in range(aut.n_states):
                got = {(lp.path, lp.cycle_start) for lp in find_lassos(aut, q)}
                assert got == brute_lassos(aut, q)

    def test_accepting_self_loop_is_a_lasso(self):
        aut = compile_str("F a")
        lassos = find_lassos(aut, 1)
        assert LassoPath((1,), 0) in lassos

    def test_prefix_and_cycle_views(self):
        lp = LassoPath((0, 1, 2), 1)
        assert lp.prefix == (0,)
        assert lp.cycle == (1, 2)

    def test_cached_per_automaton(self):
        aut = compile_str("F a")
        assert find_lassos(aut, 0) is find_lassos(aut, 0)


# -- extraction ---------------------------------------------------------------


class TestExtractSubgoals:
    def test_worked_example_two_subgoals(self):
        ab = small_alphabet(5)
        aut = compile_str("!(d | e) U ((a & b) | c)", ab)
        achievable = (ab.mask("a", "b"), ab.mask("c"), ab.mask("d"), ab.mask("e"))
        got = extract_subgoals(aut, frozenset({0}), frozenset(), achievable)
        avoid = frozenset({ab.mask("d"), ab.mask("e")})
        assert got == [
            (0, Subgoal(ab.mask("a", "b"), avoid)),
            (0, Subgoal(ab.mask("c"), avoid)),
        ]

    def test_eventually_reach_all_avoid_empty(self):
        ab = small_alphabet(2)
        aut = compile_str("F a", ab)
        achievable = (ab.mask("a"), ab.mask("b"))
        got = extract_subgoals(aut, frozenset({0}), frozenset(), achievable)
        # b merely stalls on a live state: neither reach nor avoid
        assert got == [(0, Subgoal(ab.mask("a"), frozenset()))]

    def test_until_reach_and_avoid(self):
        ab = small_alphabet(2)
        aut = compile_str("!a U b", ab)
        achievable = (ab.mask("a"), ab.mask("b"), ab.mask("a", "b"))
        got = extract_subgoals(aut, frozenset({0}), frozenset(), achievable)
        avoid = frozenset({ab.mask("a")})
        assert got == [
            (0, Subgoal(ab.mask("b"), avoid)),
            (0, Subgoal(ab.mask("a", "b"), avoid)),
        ]

    def test_unsat_pairs_filtered(self):
        ab = small_alphabet(2)
        aut = compile_str("F (a | b)", ab)
        achievable = (ab.mask("a"), ab.mask("b"))
        unsat = frozenset({(0, ab.mask("a"))})
        got = extract_subgoals(aut, frozenset({0}), unsat, achievable)
        assert [sub.reach for _, sub in got] == [ab.mask("b")]

    def test_empty_when_no_accepting_lasso(self):
        ab = small_alphabet(2)
        aut = compile_str("a & !a", ab)
        got = extract_subgoals(aut, frozenset({0}), frozenset(), (1, 2))
        assert got == []

    def test_soundness_on_random_automata(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            aut = random_automaton(rng, n_states=int(rng.integers(2, 6)))
            n_letters = 1 << aut.alphabet.n
            k = int(rng.integers(1, n_letters))
            achievable = tuple(
                int(x) + 1 for x in sorted(rng.choice(n_letters - 1, size=k,
                                                      replace=False)))
            live = {s for s in range(aut.n_states) if brute_lassos(aut, s)}
            states = frozenset(
                int(x) for x in rng.choice(aut.n_states,
                                           size=int(rng.integers(1, aut.n_states + 1)),
                                           replace=False))
            got = extract_subgoals(aut, states, frozenset(), achievable)
            by_state = {}
            for q, sub in got:
                by_state.setdefault(q, []).append(sub)
            for q in states:
                expected_avoid = frozenset(
                    a for a in achievable
                    if not (brute_successors(aut, q, a) & live))
                seconds = set()
                for path, j in brute_lassos(aut, q):
                    seconds.add(path[1] if len(path) > 1 else path[j])
                expected_reach = {
                    a for a in achievable
                    if a not in expected_avoid and brute_successors(aut, q, a) & seconds}
                subs = by_state.get(q, [])
                assert {s.reach for s in subs} == expected_reach
                for s in subs:
                    assert s.avoid == expected_avoid
                    assert s.reach not in s.avoid
                    # taking the reach assignment lands on a live state
                    assert brute_successors(aut, q, s.reach) & live

    def test_deterministic_order(self):
        ab = small_alphabet(2)
        aut = compile_str("F (a | b)", ab)
        achievable = (ab.mask("a"), ab.mask("b"), ab.mask("a", "b"))
        got = extract_subgoals(aut, frozenset({0}), frozenset(), achievable)
        keys = [(sub.reach, tuple(sorted(sub.avoid)), q) for q, sub in got]
        assert keys == sorted(keys)


# -- universe -----------------------------------------------------------------


class TestUniverse:
    def test_counts_and_order(self):
        universe = build_universe((1, 2, 4))
        # 3 reach targets x subsets of the other two
        assert len(universe) == 3 * 4
        assert len(set(universe)) == len(universe)
        assert universe[0] == Subgoal(1, frozenset())
        reaches = [s.reach for s in universe]
        assert reaches == sorted(reaches)
        for s in universe:
            assert s.reach not in s.avoid

    def test_letterworld_scale(self):
        singles = tuple(1 << i for i in range(12))
        universe = build_universe(singles)
        assert len(universe) == 12 * (1 << 11)

    def test_cap(self):
        with pytest.raises(UniverseTooLarge):
            build_universe((1, 2, 4), cap=10)

    def test_conflict_hook(self):
        conflict = lambda a, b: (a | b) == 3  # a and b mutually exclusive
        universe = build_universe((1, 2, 4), conflict=conflict)
        for s in universe:
            if s.reach == 1:
                assert 2 not in s.avoid
            if s.reach == 2:
                assert 1 not in s.avoid
        assert len(universe) == 2 * 2 + 4

    def test_rejects_empty_assignment(self):
        with pytest.raises(ValueError):
            build_universe((0, 1))


# -- encoding -----------------------------------------------------------------


class TestEncoding:
    def test_round_trip(self):
        ab = small_alphabet(3)
        rng = np.random.default_rng(22)
        universe = build_universe(tuple(range(1, 8)))
        for _ in range(200):
            sub = universe[int(rng.integers(len(universe)))]
            vec = encode_subgoal(sub, ab)
            assert vec.shape == (3 + 8,)
            assert set(np.unique(vec)) <= {0.0, 1.0}
            assert decode_subgoal(vec, ab) == sub

    def test_dimension_grows_with_alphabet(self):
        sub = Subgoal(1, frozenset({2}))
        assert encode_subgoal(sub, small_alphabet(4)).shape == (4 + 16,)
        assert encode_subgoal(sub, small_alphabet(10)).shape == (10 + 1024,)

    def test_out_of_range_rejected(self):
        ab = small_alphabet(2)
        with pytest.raises(ValueError):
            encode_subgoal(Subgoal(4, frozenset()), ab)
        with pytest.raises(ValueError):
            decode_subgoal(np.zeros(5), ab)


# -- sampling -----------------------------------------------------------------


class TestSampling:
    def test_respects_current_label(self):
        universe = build_universe((1, 2, 4))
        rng = np.random.default_rng(23)
        for _ in range(500):
            sub = sample_subgoal(universe, rng, current_label=2)
            assert sub.reach != 2
            assert 2 not in sub.avoid

    def test_uniform_chi_squared(self):
        from scipy.stats import chisquare
        universe = build_universe((1, 2, 4))
        rng = np.random.default_rng(24)
        counts = {s: 0 for s in universe}
        n = 100_000
        for _ in range(n):
            counts[sample_subgoal(universe, rng)] += 1
        stat, p = chisquare(list(counts.values()))
        assert p > 0.01

    def test_no_valid_subgoal(self):
        with pytest.raises(NoValidSubgoal):
            sample_subgoal([], np.random.default_rng(0))
        universe = [Subgoal(1, frozenset({2})), Subgoal(2, frozenset())]
        with pytest.raises(NoValidSubgoal):
            sample_subgoal(universe, np.random.default_rng(0), current_label=2)
