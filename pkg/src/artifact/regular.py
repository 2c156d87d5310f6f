"""Regular tree grammars, total deterministic bottom-up tree automata,
regular node tests, and their decision procedures.

The canonical representation of a node test is a total deterministic
bottom-up automaton over the marked alphabet (one distinguished node).
Tests that arise as domains of auxiliary walkers are kept as exact
per-tree oracles instead; only an explicit conversion pays the
exponential automaton-construction cost.
"""

import itertools

from .core import (
    AlphabetError, MarkedAlphabet, RankedAlphabet, Tree, leaf, mark_node,
    marked_name, serialize_tree, split_marked_name, subtree_at, unmark_tree,
)


class ResourceError(RuntimeError):
    """A configurable construction ceiling was exceeded."""


# ---------------------------------------------------------------------------
# Bottom-up automata

class BottomUpAutomaton:
    """A total deterministic bottom-up tree automaton (Sigma, P, F, delta).

    ``delta`` maps (symbol, state tuple) to a state and must be defined for
    every symbol and every state tuple of matching arity.
    """

    __slots__ = ("alphabet", "states", "finals", "delta")

    def __init__(self, alphabet, states, finals, delta, check_total=True):
        self.alphabet = alphabet
        self.states = frozenset(states)
        self.finals = frozenset(finals)
        self.delta = dict(delta)
        if not self.finals <= self.states:
            raise ValueError("finals must be a subset of states")
        if check_total:
            self._check_total()

    def _check_total(self):
        if not self.states:
            raise ValueError("automaton needs at least one state")
        states = sorted(self.states, key=repr)
        for sym in self.alphabet.symbols:
            rank = self.alphabet.rank(sym)
            for combo in itertools.product(states, repeat=rank):
                key = (sym, combo)
                if key not in self.delta:
                    raise ValueError("delta undefined for %r" % (key,))
                if self.delta[key] not in self.states:
                    raise ValueError("delta maps outside the state set at %r"
                                     % (key,))

    def run(self, t):
        """Return delta(t), memoized over shared subtrees."""
        memo = {}

        def go(node):
            r = memo.get(id(node))
            if r is not None:
                return r
            if node.label not in self.alphabet:
                raise AlphabetError("symbol %r not in automaton alphabet"
                                    % (node.label,))
            r = self.delta[(node.label, tuple(go(c) for c in node.children))]
            memo[id(node)] = r
            return r

        return go(t)

    def accepts(self, t):
        return self.run(t) in self.finals

    def complement(self):
        return BottomUpAutomaton(self.alphabet, self.states,
                                 self.states - self.finals, self.delta,
                                 check_total=False)

    def _product(self, other, final_pred):
        if self.alphabet.symbols != other.alphabet.symbols:
            raise AlphabetError("boolean operations need a common alphabet")
        states = set(itertools.product(self.states, other.states))
        delta = {}
        for sym in self.alphabet.symbols:
            rank = self.alphabet.rank(sym)
            for combo in itertools.product(states, repeat=rank):
                left = self.delta[(sym, tuple(p for p, _ in combo))]
                right = other.delta[(sym, tuple(q for _, q in combo))]
                delta[(sym, combo)] = (left, right)
        finals = {(p, q) for p, q in states
                  if final_pred(p in self.finals, q in other.finals)}
        return BottomUpAutomaton(self.alphabet, states, finals, delta,
                                 check_total=False)

    def intersect(self, other):
        return self._product(other, lambda a, b: a and b)

    def union(self, other):
        return self._product(other, lambda a, b: a or b)

    def format(self):
        lines = ["alphabet:"]
        lines.append(self.alphabet.format().rstrip("\n"))
        names = _state_names(self.states)
        lines.append("states:")
        lines.append(" ".join(names[p] for p in sorted(self.states, key=repr)))
        lines.append("finals:")
        lines.append(" ".join(names[p] for p in sorted(self.finals, key=repr)))
        for (sym, combo), p in sorted(self.delta.items(),
                                      key=lambda kv: (kv[0][0], repr(kv[0][1]))):
            args = ",".join([sym] + [names[q] for q in combo])
            lines.append("delta(%s) = %s" % (args, names[p]))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text):
        section = None
        alpha_lines, states, finals, delta_lines = [], [], [], []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line in ("alphabet:", "states:", "finals:"):
                section = line[:-1]
                continue
            if line.startswith("delta("):
                delta_lines.append(line)
                continue
            if section == "alphabet":
                alpha_lines.append(line)
            elif section == "states":
                states.extend(line.split())
            elif section == "finals":
                finals.extend(line.split())
            else:
                raise ValueError("unexpected line %r" % line)
        alphabet = RankedAlphabet.parse("\n".join(alpha_lines))
        delta = {}
        for line in delta_lines:
            head, _, result = line.partition("=")
            result = result.strip()
            inner = head.strip()[len("delta("):].rstrip()
            if not inner.endswith(")"):
                raise ValueError("bad delta line %r" % line)
            parts = [p.strip() for p in inner[:-1].split(",")]
            sym, args = parts[0], tuple(parts[1:])
            if alphabet.rank(sym) != len(args):
                raise ValueError("arity mismatch in %r" % line)
            delta[(sym, args)] = result
        return cls(alphabet, states, finals, delta)


def _state_names(states):
    names = {}
    for p in sorted(states, key=repr):
        names[p] = p if isinstance(p, str) else "s%d" % len(names)
    return names


def run_automaton(aut, t):
    """Return (state, accepted)."""
    p = aut.run(t)
    return p, p in aut.finals


def automaton_all(alphabet):
    """The automaton accepting every tree over the alphabet."""
    delta = {}
    for sym in alphabet.symbols:
        rank = alphabet.rank(sym)
        for combo in itertools.product(["*"], repeat=rank):
            delta[(sym, combo)] = "*"
    return BottomUpAutomaton(alphabet, ["*"], ["*"], delta, check_total=False)


def automaton_none(alphabet):
    aut = automaton_all(alphabet)
    return aut.complement()


# ---------------------------------------------------------------------------
# Decision procedures

def _realizable(aut):
    """States with a nonempty language, with a minimal witness each
    (ties broken by size then serialized text)."""
    witness = {}
    changed = True
    while changed:
        changed = False
        for (sym, combo), p in aut.delta.items():
            if all(q in witness for q in combo):
                cand = Tree(sym, [witness[q] for q in combo])
                if p not in witness or cand < witness[p]:
                    witness[p] = cand
                    changed = True
    return witness


def _coreachable(aut, realizable):
    co = set(aut.finals)
    changed = True
    while changed:
        changed = False
        for (sym, combo), p in aut.delta.items():
            if p in co and all(q in realizable for q in combo):
                for q in combo:
                    if q not in co:
                        co.add(q)
                        changed = True
    return co


def decide(aut):
    """Return (empty, finite, witness) for the automaton's language."""
    witness = _realizable(aut)
    best = None
    for p in aut.finals:
        if p in witness and (best is None or witness[p] < best):
            best = witness[p]
    if best is None:
        return True, True, None
    useful = _coreachable(aut, witness) & set(witness)
    # p -> p'' whenever p can be embedded in a one-symbol context whose
    # remaining slots are realizable; a useful state on a cycle pumps.
    edges = {}
    for (sym, combo), p2 in aut.delta.items():
        if not combo:
            continue
        if all(q in witness for q in combo):
            for q in combo:
                edges.setdefault(q, set()).add(p2)
    finite = True
    for p in useful:
        seen = set()
        frontier = set(edges.get(p, ()))
        while frontier:
            if p in frontier:
                finite = False
                break
            seen |= frontier
            frontier = {r for q in frontier for r in edges.get(q, ())} - seen
        if not finite:
            break
    return False, finite, best


def enumerate_language(aut, max_size):
    """Exactly the accepted trees of size <= max_size (DP over
    (state, size))."""
    by_state_size = {}
    for size in range(1, max_size + 1):
        for sym in sorted(aut.alphabet.symbols):
            rank = aut.alphabet.rank(sym)
            if rank == 0:
                if size == 1:
                    p = aut.delta[(sym, ())]
                    by_state_size.setdefault((p, 1), []).append(leaf(sym))
                continue
            for sizes in _compositions(size - 1, rank):
                pools = []
                ok = True
                for s in sizes:
                    pool = [(p, t) for (p, sz), ts in by_state_size.items()
                            if sz == s for t in ts]
                    if not pool:
                        ok = False
                        break
                    pools.append(pool)
                if not ok:
                    continue
                for picks in itertools.product(*pools):
                    p = aut.delta[(sym, tuple(q for q, _ in picks))]
                    by_state_size.setdefault((p, size), []).append(
                        Tree(sym, [t for _, t in picks]))
    out = set()
    for (p, _), ts in by_state_size.items():
        if p in aut.finals:
            out.update(ts)
    return out


def _compositions(total, k):
    if k == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - (k - 1) + 1):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Regular tree grammars

class RegularTreeGrammar:
    """Rules map a nonterminal to a tree over the terminal alphabet whose
    leaves may also be nonterminals (treated as rank 0)."""

    __slots__ = ("nonterminals", "terminals", "initials", "rules")

    def __init__(self, nonterminals, terminals, initials, rules):
        self.nonterminals = frozenset(nonterminals)
        self.terminals = terminals
        self.initials = frozenset(initials)
        self.rules = tuple(rules)
        if not self.initials <= self.nonterminals:
            raise ValueError("initials must be nonterminals")
        for lhs, rhs in self.rules:
            if lhs not in self.nonterminals:
                raise ValueError("rule lhs %r is not a nonterminal" % (lhs,))
            self._check_rhs(rhs)

    def _check_rhs(self, rhs):
        if rhs.label in self.nonterminals:
            if rhs.children:
                raise ValueError("nonterminal %r used with children"
                                 % (rhs.label,))
            return
        if self.terminals.rank(rhs.label) != len(rhs.children):
            raise ValueError("arity mismatch at %r" % (rhs.label,))
        for c in rhs.children:
            self._check_rhs(c)

    def is_nonterminal(self, label):
        return label in self.nonterminals

    def rules_for(self, nt):
        return [rhs for lhs, rhs in self.rules if lhs == nt]

    def format(self):
        lines = ["alphabet:"]
        lines.append(self.terminals.format().rstrip("\n"))
        lines.append("initial: " + " ".join(
            sorted(str(i) for i in self.initials)))
        for lhs, rhs in self.rules:
            lines.append("%s -> %s" % (lhs, serialize_tree(rhs)))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text):
        alpha_lines, initials, rule_lines = [], [], []
        section = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "alphabet:":
                section = "alphabet"
                continue
            if line.startswith("initial:"):
                initials = line[len("initial:"):].split()
                section = "rules"
                continue
            if "->" in line:
                rule_lines.append(line)
                section = "rules"
                continue
            if section == "alphabet":
                alpha_lines.append(line)
            else:
                raise ValueError("unexpected line %r" % line)
        terminals = RankedAlphabet.parse("\n".join(alpha_lines))
        nonterminals = set(initials)
        parsed = []
        for line in rule_lines:
            lhs, _, rhs_text = line.partition("->")
            nonterminals.add(lhs.strip())
            parsed.append((lhs.strip(), rhs_text.strip()))
        # nonterminals are the rule left-hand sides plus the initials;
        # any other name in a rhs must be a terminal
        ext = RankedAlphabet(dict(terminals.symbols,
                                  **{nt: 0 for nt in nonterminals
                                     if nt not in terminals.symbols}))
        from .core import parse_tree
        rules = [(lhs, parse_tree(rhs_text, ext)) for lhs, rhs_text in parsed]
        return cls(nonterminals, terminals, initials, rules)


def _flatten_grammar(g):
    """Chain-eliminated, depth-1 rules: (lhs, symbol, tuple of nonterminal
    children).  Fresh nonterminals are introduced for nested right-hand
    sides."""
    # chain closure: lhs -> reachable nonterminals through single-NT rules
    chain = {nt: {nt} for nt in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in g.rules:
            if g.is_nonterminal(rhs.label):
                for src, reach in chain.items():
                    if lhs in reach and rhs.label not in reach:
                        reach.add(rhs.label)
                        changed = True
    flat = []
    fresh = itertools.count()

    def flatten_node(rhs):
        kids = []
        for c in rhs.children:
            if g.is_nonterminal(c.label):
                kids.append(c.label)
            else:
                nt = ("_flat", next(fresh))
                sym, ks = flatten_node(c)
                flat.append((nt, sym, ks))
                kids.append(nt)
        return rhs.label, tuple(kids)

    top = {}
    for lhs, rhs in g.rules:
        if not g.is_nonterminal(rhs.label):
            top.setdefault(lhs, []).append(flatten_node(rhs))
    for src in g.nonterminals:
        for mid in chain[src]:
            for sym, kids in top.get(mid, ()):
                flat.append((src, sym, kids))
    return flat


def grammar_to_automaton(g, ceiling=4096):
    """Subset construction over the grammar's flattened rules.  Raises
    ResourceError when more than ``ceiling`` subset states appear."""
    flat = _flatten_grammar(g)
    by_sym = {}
    for lhs, sym, kids in flat:
        by_sym.setdefault((sym, len(kids)), []).append((lhs, kids))
    states = set()
    delta = {}

    def target_of(sym, rank, combo):
        return frozenset(
            lhs for lhs, kids in by_sym.get((sym, rank), ())
            if all(k in s for k, s in zip(kids, combo)))

    def record(sym, combo, target, new_states):
        delta[(sym, combo)] = target
        if target not in states:
            states.add(target)
            new_states.append(target)
            if len(states) > ceiling:
                raise ResourceError(
                    "subset construction exceeded %d states" % ceiling)

    fresh = []
    for sym in g.terminals.symbols:
        if g.terminals.rank(sym) == 0:
            record(sym, (), target_of(sym, 0, ()), fresh)
    old = []
    while fresh:
        frontier, fresh = fresh, []
        known = old + frontier
        for sym in g.terminals.symbols:
            rank = g.terminals.rank(sym)
            if rank == 0:
                continue
            # only combos that touch at least one frontier state are new
            for i in range(rank):
                for combo in itertools.product(
                        *([old] * i + [frontier] + [known] * (rank - 1 - i))):
                    record(sym, combo, target_of(sym, rank, combo), fresh)
        old = known
    finals = {s for s in states if s & g.initials}
    return BottomUpAutomaton(g.terminals, states, finals, delta,
                             check_total=False)


def automaton_to_grammar(aut):
    """The inverse direction: one nonterminal per state, initials are the
    final states."""
    nts = {p: ("N", p) for p in aut.states}
    rules = []
    for (sym, combo), p in aut.delta.items():
        rules.append((nts[p], Tree(sym, [leaf(nts[q]) for q in combo])))
    return RegularTreeGrammar(nts.values(), aut.alphabet,
                              [nts[p] for p in aut.finals], rules)


def grammar_chain_closure(g, max_len=None):
    """Map each nonterminal to the nonterminals reachable through chain
    rules (paths of length <= max_len when given)."""
    step = {nt: set() for nt in g.nonterminals}
    for lhs, rhs in g.rules:
        if g.is_nonterminal(rhs.label):
            step[lhs].add(rhs.label)
    bound = max_len if max_len is not None else len(g.nonterminals)
    reach = {nt: {nt} for nt in g.nonterminals}
    for nt in g.nonterminals:
        frontier = {nt}
        for _ in range(bound):
            frontier = {y for x in frontier for y in step[x]} - reach[nt]
            if not frontier:
                break
            reach[nt] |= frontier
    return reach


def enumerate_grammar(g, max_size, max_chain_len=None):
    """All terminal trees of size <= max_size derivable from an initial
    nonterminal."""
    reach = grammar_chain_closure(g, max_chain_len)
    prods = {nt: [] for nt in g.nonterminals}
    for lhs, rhs in g.rules:
        if not g.is_nonterminal(rhs.label):
            prods[lhs].append(rhs)
    lang = {nt: set() for nt in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for nt in g.nonterminals:
            for mid in reach[nt]:
                for rhs in prods[mid]:
                    for t in _expand(rhs, g, lang, max_size):
                        if t not in lang[nt]:
                            lang[nt].add(t)
                            changed = True
    out = set()
    for nt in g.initials:
        out |= lang[nt]
    return out


def _expand(rhs, g, lang, max_size):
    """All instantiations of a rule rhs with current nonterminal languages,
    limited to result size <= max_size."""
    if g.is_nonterminal(rhs.label):
        return {t for t in lang[rhs.label] if t.size <= max_size}
    if not rhs.children:
        return {leaf(rhs.label)} if max_size >= 1 else set()
    results = set()
    child_sets = [_expand(c, g, lang, max_size - 1) for c in rhs.children]
    for picks in itertools.product(*child_sets):
        size = 1 + sum(t.size for t in picks)
        if size <= max_size:
            results.add(Tree(rhs.label, picks))
    return results


def grammar_finite(g):
    """Whether L(g) is finite.  A useful nonterminal that derives a proper
    context around itself pumps."""
    # productive nonterminals (nonempty language)
    prod = set()
    changed = True
    while changed:
        changed = False
        for lhs, rhs in g.rules:
            if lhs not in prod and _rhs_productive(rhs, g, prod):
                prod.add(lhs)
                changed = True
    reach = set(g.initials)
    changed = True
    while changed:
        changed = False
        for lhs, rhs in g.rules:
            if lhs in reach:
                for nt in _rhs_nonterminals(rhs, g):
                    if nt not in reach:
                        reach.add(nt)
                        changed = True
    useful = prod & reach
    # weighted edges: weight 1 when the rhs is bigger than a bare chain
    edges = {}
    for lhs, rhs in g.rules:
        if lhs not in useful:
            continue
        nts = [nt for nt in _rhs_nonterminals(rhs, g) if nt in useful]
        if g.is_nonterminal(rhs.label):
            for nt in nts:
                edges.setdefault(lhs, set()).add((nt, 0))
        else:
            ok = _rhs_productive(rhs, g, prod)
            if ok:
                for nt in nts:
                    edges.setdefault(lhs, set()).add((nt, 1))
    # infinite iff some cycle has positive weight
    for start in useful:
        # BFS over (node, sawWeight) pairs
        seen = set()
        frontier = {(nt, w) for nt, w in edges.get(start, ())}
        while frontier:
            if (start, 1) in frontier:
                return False
            nxt = set()
            for nt, w in frontier:
                if (nt, w) in seen:
                    continue
                seen.add((nt, w))
                for nt2, w2 in edges.get(nt, ()):
                    nxt.add((nt2, max(w, w2)))
            frontier = nxt - seen
    return True


def _rhs_nonterminals(rhs, g):
    out = []
    stack = [rhs]
    while stack:
        n = stack.pop()
        if g.is_nonterminal(n.label):
            out.append(n.label)
        stack.extend(n.children)
    return out


def _rhs_productive(rhs, g, prod):
    if g.is_nonterminal(rhs.label):
        return rhs.label in prod
    return all(_rhs_productive(c, g, prod) for c in rhs.children)


def derivation_grammar(g):
    """The grammar of g's derivation trees: each rule X -> zeta becomes
    X -> Xk(pre-order items of zeta) where k is the number of symbols in
    zeta, terminals appear as leaves, and nonterminal occurrences recurse."""
    symbols = {sym: 0 for sym in g.terminals.symbols}
    rules = []
    for lhs, rhs in g.rules:
        items = _preorder_items(rhs, g)
        name = "%s%d" % (lhs, len(items))
        symbols[name] = len(items)
        kids = []
        for kind, label in items:
            kids.append(leaf(label))
        rules.append((lhs, Tree(name, kids)))
    return RegularTreeGrammar(g.nonterminals,
                              RankedAlphabet(symbols),
                              g.initials, rules)


def _preorder_items(rhs, g):
    out = []
    stack = [rhs]
    while stack:
        n = stack.pop()
        if g.is_nonterminal(n.label):
            out.append(("nt", n.label))
        else:
            out.append(("term", n.label))
            stack.extend(reversed(n.children))
    return out


def derivation_yield_tree(d, g):
    """Reconstruct the derived tree from a derivation tree: read terminal
    leaves in pre-order and rebuild by rank."""
    labels = []

    def walk(node):
        if node.label in g.terminals.symbols and not node.children:
            labels.append(node.label)
        for c in node.children:
            walk(c)

    walk(d)
    pos = [0]

    def build():
        sym = labels[pos[0]]
        pos[0] += 1
        return Tree(sym, [build() for _ in range(g.terminals.rank(sym))])

    t = build()
    if pos[0] != len(labels):
        raise ValueError("derivation yield is not a single tree")
    return t


# ---------------------------------------------------------------------------
# Node tests

class NodeTest:
    subtest = False

    def eval(self, t, u):
        raise NotImplementedError


class AutomatonTest(NodeTest):
    """A regular test given by an automaton over the marked alphabet."""

    __slots__ = ("aut",)

    def __init__(self, aut):
        if not isinstance(aut.alphabet, MarkedAlphabet):
            raise ValueError("AutomatonTest needs a marked-alphabet automaton")
        self.aut = aut

    def eval(self, t, u):
        return self.aut.accepts(mark_node(t, u))

    def __repr__(self):
        return "AutomatonTest(%d states)" % len(self.aut.states)


class SubTest(NodeTest):
    """A sub-test T(L): holds at (t, u) iff the subtree at u is in L."""

    subtest = True
    __slots__ = ("aut",)

    def __init__(self, aut):
        self.aut = aut

    def eval(self, t, u):
        return self.aut.accepts(subtree_at(t, u))

    def __repr__(self):
        return "SubTest(%d states)" % len(self.aut.states)


class OracleTest(NodeTest):
    """An exact test backed by a deterministic, terminating evaluator
    closure; carries a description tag for diagnostics."""

    __slots__ = ("fn", "tag", "subtest")

    def __init__(self, fn, tag, subtest=False):
        self.fn = fn
        self.tag = tag
        self.subtest = subtest

    def eval(self, t, u):
        return bool(self.fn(t, u))

    def __repr__(self):
        return "OracleTest(%s)" % self.tag


def eval_test(test, t, u):
    """Evaluate a node test; None means the always-true (local) guard."""
    subtree_at(t, u)  # validates the address
    if test is None:
        return True
    return test.eval(t, u)


def sub_test(aut):
    return SubTest(aut)


def subtest_to_marked(test, base_alphabet=None):
    """Convert a SubTest into an equivalent AutomatonTest over the marked
    alphabet: run the subtree automaton below the mark, freeze the verdict
    at the marked node, and pass it upward."""
    aut = test.aut
    marked = MarkedAlphabet(base_alphabet or aut.alphabet)
    bot = [("bot", p) for p in aut.states]
    states = bot + [("top", False), ("top", True), ("sink",)]
    delta = {}
    for name in marked.symbols:
        base, bit = split_marked_name(name)
        rank = marked.rank(name)
        for combo in itertools.product(states, repeat=rank):
            tops = [x for x in combo if x[0] == "top"]
            if any(x == ("sink",) for x in combo) or len(tops) > 1 or \
                    (tops and bit == 1):
                delta[(name, combo)] = ("sink",)
            elif tops:
                delta[(name, combo)] = tops[0]
            else:
                p = aut.delta[(base, tuple(x[1] for x in combo))]
                if bit == 1:
                    delta[(name, combo)] = ("top", p in aut.finals)
                else:
                    delta[(name, combo)] = ("bot", p)
    return AutomatonTest(BottomUpAutomaton(
        marked, states, [("top", True)], delta, check_total=False))


def to_automaton_test(test, base_alphabet):
    """Normalize a (possibly None / SubTest) test to an AutomatonTest over
    the marked alphabet of ``base_alphabet``.  Oracle tests have no such
    normal form and are rejected."""
    if test is None:
        return AutomatonTest(automaton_all(MarkedAlphabet(base_alphabet)))
    if isinstance(test, AutomatonTest):
        return test
    if isinstance(test, SubTest):
        return subtest_to_marked(test, base_alphabet)
    raise ValueError("cannot convert %r to an automaton test" % (test,))


def lift_mark(test):
    """mu(T): the test on marked trees that disregards the tree's own
    marking."""
    if test is None:
        return None
    if isinstance(test, AutomatonTest):
        aut = test.aut
        outer = MarkedAlphabet(aut.alphabet)
        delta = {}
        for name in outer.symbols:
            inner_name, _outer_bit = split_marked_name(name)
            inner_base, _inner_bit = split_marked_name(inner_name)
            for key, p in aut.delta.items():
                sym, combo = key
                if sym == marked_name(inner_base, _outer_bit):
                    delta[(name, combo)] = p
        return AutomatonTest(BottomUpAutomaton(
            outer, aut.states, aut.finals, delta, check_total=False))
    if isinstance(test, SubTest):
        aut = test.aut
        outer = MarkedAlphabet(aut.alphabet)
        delta = {}
        for name in outer.symbols:
            base, _ = split_marked_name(name)
            for key, p in aut.delta.items():
                sym, combo = key
                if sym == base:
                    delta[(name, combo)] = p
        return SubTest(BottomUpAutomaton(
            outer, aut.states, aut.finals, delta, check_total=False))
    return OracleTest(lambda t, u, _t=test: _t.eval(unmark_tree(t), u),
                      "mu(%r)" % (test,), subtest=test.subtest)
