"""Tests for grammars, bottom-up automata, node tests, and decisions."""

import itertools
import random

import pytest

from artifact.core import (
    MarkedAlphabet, RankedAlphabet, Tree, addresses, all_trees, leaf,
    mark_node, parse_tree, serialize_tree, subtree_at,
)
from artifact.regular import (
    AutomatonTest, BottomUpAutomaton, OracleTest, RegularTreeGrammar,
    ResourceError, SubTest, automaton_all, automaton_none,
    automaton_to_grammar, decide, derivation_grammar, derivation_yield_tree,
    enumerate_grammar, enumerate_language, eval_test, grammar_finite,
    grammar_to_automaton, lift_mark, run_automaton, sub_test,
    subtest_to_marked, to_automaton_test,
)

SIGMA_E = RankedAlphabet({"sigma": 2, "e": 0})
STA = RankedAlphabet({"sigma": 2, "tau": 1, "a": 0})


def parity_automaton():
    """delta(t) tracks the parity of the number of leaves."""
    delta = {("e", ()): "odd"}
    for a in ("odd", "even"):
        for b in ("odd", "even"):
            par = "even" if (a == "odd") == (b == "odd") else "odd"
            delta[("sigma", (a, b))] = par
    return BottomUpAutomaton(SIGMA_E, ["odd", "even"], ["even"], delta)


def singleton_automaton(t, alphabet):
    """Accepts exactly {t}, via the grammar conversion."""
    g = RegularTreeGrammar(["S"], alphabet, ["S"], [("S", t)])
    return grammar_to_automaton(g)


# ---------------------------------------------------------------------------
# automata

def test_run_automaton_leaf():
    aut = parity_automaton()
    assert run_automaton(aut, leaf("e")) == ("odd", False)


def test_run_automaton_two_leaves():
    aut = parity_automaton()
    t = parse_tree("sigma(e,e)", SIGMA_E)
    assert run_automaton(aut, t) == ("even", True)


def test_all_finals_accepts_everything():
    aut = automaton_all(SIGMA_E)
    for t in all_trees(SIGMA_E, 5):
        assert aut.accepts(t)


def test_totality_enforced():
    with pytest.raises(ValueError):
        BottomUpAutomaton(SIGMA_E, ["p"], ["p"], {("e", ()): "p"})


def test_automaton_text_roundtrip():
    aut = parity_automaton()
    aut2 = BottomUpAutomaton.parse(aut.format())
    for t in all_trees(SIGMA_E, 5):
        assert aut.accepts(t) == aut2.accepts(t)


# ---------------------------------------------------------------------------
# boolean operations

def test_intersection_with_complement_empty():
    aut = parity_automaton()
    inter = aut.intersect(aut.complement())
    empty, finite, witness = decide(inter)
    assert empty and witness is None


def test_union_with_complement_total():
    aut = parity_automaton()
    u = aut.union(aut.complement())
    for t in all_trees(SIGMA_E, 6):
        assert u.accepts(t)


def test_boolean_ops_pointwise():
    a = parity_automaton()
    b = singleton_automaton(parse_tree("sigma(e,e)", SIGMA_E), SIGMA_E)
    for t in all_trees(SIGMA_E, 6):
        assert a.intersect(b).accepts(t) == (a.accepts(t) and b.accepts(t))
        assert a.union(b).accepts(t) == (a.accepts(t) or b.accepts(t))


def test_intersection_enumeration_example():
    # trees with >= 1 tau, intersected with trees of height <= 1
    g1 = RegularTreeGrammar.parse(
        "alphabet:\nsigma:2\ntau:1\na:0\n"
        "initial: S\n"
        "S -> tau(T)\nS -> sigma(S,T)\nS -> sigma(T,S)\nS -> sigma(S,S)\n"
        "S -> tau(S)\n"
        "T -> a\nT -> tau(T)\nT -> sigma(T,T)\n")
    has_tau = grammar_to_automaton(g1)
    low = {t for t in all_trees(STA, 4) if t.height <= 1}
    # brute-force the intersection among trees up to size 4
    got = {t for t in all_trees(STA, 4) if has_tau.accepts(t) and t in low}
    assert got == {parse_tree("tau(a)", STA)}


# ---------------------------------------------------------------------------
# grammar <-> automaton

def test_grammar_singleton():
    aut = singleton_automaton(leaf("e"), SIGMA_E)
    assert aut.accepts(leaf("e"))
    assert not aut.accepts(parse_tree("sigma(e,e)", SIGMA_E))


def test_paper_example_grammar():
    g = RegularTreeGrammar.parse(
        "alphabet:\nsigma:2\ntau:1\na:0\n"
        "initial: S\n"
        "S -> sigma(X,Y)\nX -> tau(Y)\nY -> tau(a)\nY -> a\n")
    aut = grammar_to_automaton(g)
    assert aut.accepts(parse_tree("sigma(tau(tau(a)),a)", STA))
    expected = enumerate_grammar(g, 7)
    for t in all_trees(STA, 7):
        assert aut.accepts(t) == (t in expected)


def test_roundtrip_random_grammars():
    """grammar -> automaton -> grammar preserves membership, 50 random
    grammars, trees up to size 6."""
    rng = random.Random(7)
    small = all_trees(SIGMA_E, 6)
    for _ in range(50):
        g = _random_grammar(rng)
        aut = grammar_to_automaton(g)
        g2 = automaton_to_grammar(aut)
        aut2 = grammar_to_automaton(g2)
        lang = enumerate_grammar(g, 6)
        for t in small:
            assert aut.accepts(t) == (t in lang)
            assert aut2.accepts(t) == (t in lang)


def _random_grammar(rng):
    nts = ["S", "A", "B"][:rng.randint(1, 3)]
    ext = RankedAlphabet(dict(SIGMA_E.symbols, **{n: 0 for n in nts}))
    rules = []
    for nt in nts:
        for _ in range(rng.randint(1, 3)):
            rules.append((nt, _random_rhs(rng, nts, depth=2)))
    return RegularTreeGrammar(nts, SIGMA_E, ["S"], rules)


def _random_rhs(rng, nts, depth):
    if depth <= 0:
        choices = ["e"] + nts
    else:
        choices = ["e", "sigma", "sigma"] + nts
    label = rng.choice(choices)
    if label == "e":
        return leaf("e")
    if label in nts:
        return leaf(label)
    return Tree("sigma", [_random_rhs(rng, nts, depth - 1) for _ in range(2)])


def test_subset_construction_ceiling():
    g = _random_grammar(random.Random(0))
    with pytest.raises(ResourceError):
        grammar_to_automaton(g, ceiling=1)


# ---------------------------------------------------------------------------
# decide / enumerate

def test_decide_empty():
    empty, finite, witness = decide(automaton_none(SIGMA_E))
    assert (empty, finite, witness) == (True, True, None)


def test_decide_singleton():
    aut = singleton_automaton(leaf("e"), SIGMA_E)
    empty, finite, witness = decide(aut)
    assert (empty, finite) == (False, True)
    assert witness == leaf("e")


def test_decide_all_trees_infinite():
    empty, finite, witness = decide(automaton_all(SIGMA_E))
    assert (empty, finite) == (False, False)
    assert witness == leaf("e")


def test_decide_finiteness_agrees_with_grammar():
    rng = random.Random(11)
    for _ in range(30):
        g = _random_grammar(rng)
        aut = grammar_to_automaton(g)
        _, finite, _ = decide(aut)
        assert finite == grammar_finite(g)


def test_enumerate_language_singleton():
    aut = singleton_automaton(leaf("e"), SIGMA_E)
    assert enumerate_language(aut, 3) == {leaf("e")}


def test_enumerate_language_all():
    got = enumerate_language(automaton_all(SIGMA_E), 3)
    assert got == {leaf("e"), parse_tree("sigma(e,e)", SIGMA_E)}


def test_enumerate_language_empty():
    assert enumerate_language(automaton_none(SIGMA_E), 4) == set()


def test_enumerate_matches_membership():
    aut = parity_automaton()
    got = enumerate_language(aut, 6)
    assert got == {t for t in all_trees(SIGMA_E, 6) if aut.accepts(t)}


def test_nonempty_has_small_witness():
    """decide's witness stays within the state-count-derived size bound."""
    rng = random.Random(3)
    for _ in range(20):
        aut = grammar_to_automaton(_random_grammar(rng))
        empty, _, witness = decide(aut)
        bound = len(aut.states) * max(aut.alphabet.max_rank, 1) + 1
        if not empty:
            assert witness is not None
            assert aut.accepts(witness)
            assert witness.size <= 2 ** bound  # loose sanity cap
            assert enumerate_language(aut, witness.size - 1) == set() or \
                min(t.size for t in enumerate_language(aut, witness.size)) \
                == witness.size


# ---------------------------------------------------------------------------
# node tests

def test_always_true_test():
    for t in all_trees(SIGMA_E, 4):
        for u in addresses(t):
            assert eval_test(None, t, u)


def test_sub_test_leaf_language():
    T = sub_test(singleton_automaton(leaf("e"), SIGMA_E))
    for t in all_trees(SIGMA_E, 4):
        for u in addresses(t):
            expected = subtree_at(t, u) == leaf("e")
            assert eval_test(T, t, u) == expected


def test_sub_test_of_all_and_none():
    top = sub_test(automaton_all(SIGMA_E))
    bot = sub_test(automaton_none(SIGMA_E))
    for t in all_trees(SIGMA_E, 4):
        for u in addresses(t):
            assert eval_test(top, t, u)
            assert not eval_test(bot, t, u)


def test_subtest_to_marked_agrees():
    T = sub_test(parity_automaton())
    M = subtest_to_marked(T)
    for t in all_trees(SIGMA_E, 5):
        for u in addresses(t):
            assert eval_test(T, t, u) == eval_test(M, t, u)


def test_to_automaton_test_none():
    M = to_automaton_test(None, SIGMA_E)
    for t in all_trees(SIGMA_E, 4):
        for u in addresses(t):
            assert eval_test(M, t, u)


def test_lift_mark_disregards_marking():
    """mu(T) on a marked tree agrees with T on the unmarked tree."""
    base_tests = [
        sub_test(parity_automaton()),
        subtest_to_marked(sub_test(parity_automaton())),
        OracleTest(lambda t, u: subtree_at(t, u).label == "e", "is-e"),
    ]
    marked = MarkedAlphabet(SIGMA_E)
    for T in base_tests:
        mu = lift_mark(T)
        for t in all_trees(SIGMA_E, 4):
            for w in addresses(t):
                mt = mark_node(t, w)
                for u in addresses(mt):
                    assert eval_test(mu, mt, u) == eval_test(T, t, u)


def test_subtest_complement_law():
    """complement of T(L) equals T(complement L) under eval."""
    L = parity_automaton()
    t_l = sub_test(L)
    t_not = sub_test(L.complement())
    for t in all_trees(SIGMA_E, 5):
        for u in addresses(t):
            assert eval_test(t_not, t, u) == (not eval_test(t_l, t, u))


def test_subtest_intersection_law():
    L1 = parity_automaton()
    L2 = singleton_automaton(parse_tree("sigma(e,e)", SIGMA_E), SIGMA_E)
    t12 = sub_test(L1.intersect(L2))
    ta, tb = sub_test(L1), sub_test(L2)
    for t in all_trees(SIGMA_E, 5):
        for u in addresses(t):
            assert eval_test(t12, t, u) == \
                (eval_test(ta, t, u) and eval_test(tb, t, u))


# ---------------------------------------------------------------------------
# derivation grammars

def test_derivation_grammar_paper_example():
    g = RegularTreeGrammar.parse(
        "alphabet:\nsigma:2\ntau:1\na:0\n"
        "initial: S\n"
        "S -> sigma(X,Y)\nX -> tau(Y)\nY -> tau(a)\nY -> a\n")
    der = derivation_grammar(g)
    derivations = enumerate_grammar(der, 10)
    target = parse_tree(
        "S3(sigma,X2(tau,Y2(tau,a)),Y1(a))", der.terminals)
    assert target in derivations


def test_derivation_grammar_singleton():
    g = RegularTreeGrammar(["S"], SIGMA_E, ["S"], [("S", leaf("e"))])
    der = derivation_grammar(g)
    assert enumerate_grammar(der, 3) == {parse_tree("S1(e)", der.terminals)}


def test_derivation_yields_match_direct_enumeration():
    rng = random.Random(23)
    for _ in range(20):
        g = _random_grammar(rng)
        der = derivation_grammar(g)
        lang = enumerate_grammar(g, 6)
        for d in enumerate_grammar(der, 11):
            t = derivation_yield_tree(d, g)
            if t.size <= 6:
                assert t in lang


def test_forward_deterministic_singleton_and_height():
    """A forward-deterministic grammar derives at most one tree, and its
    derivation tree height is at most the number of nonterminals."""
    # forward deterministic: at most one rule per nonterminal
    g = RegularTreeGrammar.parse(
        "alphabet:\nsigma:2\ne:0\n"
        "initial: S\n"
        "S -> sigma(A,B)\nA -> sigma(B,B)\nB -> e\n")
    lang = enumerate_grammar(g, 12)
    assert len(lang) == 1
    der = derivation_grammar(g)
    ds = enumerate_grammar(der, 12)
    assert len(ds) == 1
    assert next(iter(ds)).height <= len(g.nonterminals)
