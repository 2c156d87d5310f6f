"""Unranked forests, their binary tree encoding, flattening of trees over
the concatenation alphabet, and the bridge transducers relating the two
output conventions.

A forest is a sequence of unranked trees written in bracket syntax,
``f ::= '' | sym '[' f ']' f``.  Its bracket length counts one unit per
label and one per bracket, so a forest with n nodes has bracket length 3n
and its binary encoding has exactly 2n + 1 nodes.
"""

from .core import (
    RankedAlphabet, Tree, TreeError, UP, down, leaf,
)
from .constructions import Pipeline
from .transducer import (
    Call, ContractError, Rule, Transducer, call, classify,
    enumerate_outputs, eval_deterministic, out,
)

CONCAT = "@"
LAMBDA = "lambda"


class Forest:
    """A sequence of unranked trees; each element is a (label, Forest)
    pair."""

    __slots__ = ("trees",)

    def __init__(self, trees=()):
        trees = tuple(trees)
        for el in trees:
            if (not isinstance(el, tuple) or len(el) != 2
                    or not isinstance(el[1], Forest)):
                raise TreeError("forest element must be (label, Forest), "
                                "got %r" % (el,))
        self.trees = trees

    def __eq__(self, other):
        return isinstance(other, Forest) and self.trees == other.trees

    def __hash__(self):
        return hash(("forest", self.trees))

    def __bool__(self):
        return bool(self.trees)

    def __lt__(self, other):
        return str(self) < str(other)

    def __str__(self):
        return "".join("%s[%s]" % (label, child)
                       for label, child in self.trees)

    def __repr__(self):
        return "Forest.parse(%r)" % (str(self),)

    @property
    def node_count(self):
        return sum(1 + child.node_count for _, child in self.trees)

    @property
    def bracket_length(self):
        """Length of the bracket string, one unit per label and per
        bracket."""
        return 3 * self.node_count

    def symbols(self):
        """All labels occurring in the forest."""
        syms = set()
        for label, child in self.trees:
            syms.add(label)
            syms |= child.symbols()
        return syms

    @classmethod
    def parse(cls, text):
        f, rest = _parse_forest(text.strip())
        if rest.strip():
            raise TreeError("trailing input in forest: %r" % (rest,))
        return f


EMPTY = Forest(())


def _parse_forest(text):
    trees = []
    rest = text.lstrip()
    while rest and rest[0] != "]":
        i = 0
        while i < len(rest) and rest[i] not in "[]" and not rest[i].isspace():
            i += 1
        if i == 0 or i >= len(rest) or rest[i] != "[":
            raise TreeError("expected sym'[' in forest at %r" % (rest,))
        label = rest[:i]
        child, rest = _parse_forest(rest[i + 1:])
        if not rest.startswith("]"):
            raise TreeError("missing ']' in forest at %r" % (rest,))
        trees.append((label, child))
        rest = rest[1:].lstrip()
    return Forest(trees), rest


def string_forest(labels):
    """The monadic-free forest a1[]a2[]...an[] spelling a string."""
    return Forest(tuple((label, EMPTY) for label in labels))


def bracket_tokens(f):
    """The bracket string of the forest as a token sequence."""
    toks = []
    for label, child in f.trees:
        toks.append(label)
        toks.append("[")
        toks.extend(bracket_tokens(f=child))
        toks.append("]")
    return tuple(toks)


def encoding_alphabets(symbols):
    """The rank-2 encoding alphabet (every symbol rank 2 plus e) and the
    concatenation alphabet (every symbol rank 1 plus rank-2 @ and e) for
    an unranked symbol set."""
    symbols = sorted(set(symbols))
    for reserved in ("e", CONCAT):
        if reserved in symbols:
            raise ContractError("symbol %r is reserved" % (reserved,))
    sigma_e = RankedAlphabet({**{s: 2 for s in symbols}, "e": 0})
    delta_at = RankedAlphabet({**{s: 1 for s in symbols},
                               CONCAT: 2, "e": 0})
    return sigma_e, delta_at


def encode(f):
    """The binary tree encoding of a forest: drop every left bracket,
    turn every right bracket into e, append one final e, and read the
    result back in pre-order with all labels at rank 2."""
    toks = [t if t != "]" else "e" for t in bracket_tokens(f) if t != "["]
    toks.append("e")
    pos = [0]

    def build():
        sym = toks[pos[0]]
        pos[0] += 1
        if sym == "e":
            return leaf("e")
        return Tree(sym, [build(), build()])

    return build()


def decode(t):
    """The inverse of encode: the rank-2 tree read back as a forest."""
    if not t.children:
        if t.label != "e":
            raise TreeError("decode leaf must be e, got %r" % (t.label,))
        return EMPTY
    if len(t.children) != 2:
        raise TreeError("decode needs rank-2 nodes, got %r" % (t.label,))
    head = (t.label, decode(t.children[0]))
    return Forest((head,) + decode(t.children[1]).trees)


def flatten(t):
    """The forest value of a tree over a concatenation alphabet:
    e is the empty forest, @ concatenates, and every rank-1 symbol wraps
    its argument.  Surjective but not injective."""
    if not t.children:
        if t.label != "e":
            raise TreeError("flatten leaf must be e, got %r" % (t.label,))
        return EMPTY
    if t.label == CONCAT:
        left = flatten(t.children[0])
        return Forest(left.trees + flatten(t.children[1]).trees)
    if len(t.children) != 1:
        raise TreeError("flatten symbol %r must have rank 1" % (t.label,))
    return Forest(((t.label, flatten(t.children[0])),))


def tree_yield(t, alphabet):
    """Leaf labels in pre-order, skipping the alphabet's yield-invisible
    symbols."""
    res = []
    stack = [t]
    while stack:
        node = stack.pop()
        if node.children:
            stack.extend(reversed(node.children))
        elif node.label not in alphabet.yield_invisible:
            res.append(node.label)
    return tuple(res)


# ---------------------------------------------------------------------------
# Running pipelines on forests

def _stages_of(P):
    if isinstance(P, Pipeline):
        return P.stages
    return (P,)

def _is_encoding_alphabet(A):
    return ("e" in A and A.rank("e") == 0
            and all(A.rank(s) == 2 for s in A if s != "e"))


def _is_concat_alphabet(A):
    return ("e" in A and A.rank("e") == 0
            and CONCAT in A and A.rank(CONCAT) == 2
            and all(A.rank(s) == 1 for s in A if s not in ("e", CONCAT)))


def forest_pipeline(P, mode, f, max_size=None, intermediate_size=None):
    """All forests obtained by encoding f, running it through the
    pipeline, and decoding (mode "dec") or flattening (mode "flat") each
    output.  Without a size bound every stage must be deterministic; with
    one, stage outputs are enumerated up to the bound."""
    stages = _stages_of(P)
    if mode not in ("dec", "flat"):
        raise ContractError("mode must be 'dec' or 'flat', got %r"
                            % (mode,))
    if not _is_encoding_alphabet(stages[0].input_alphabet):
        raise ContractError("pipeline input alphabet does not encode "
                            "forests")
    last = stages[-1].output_alphabet
    ok = _is_concat_alphabet(last) if mode == "flat" \
        else _is_encoding_alphabet(last)
    if not ok:
        raise ContractError("pipeline output alphabet does not fit mode "
                            "%r" % (mode,))
    outs = {encode(f)}
    for i, M in enumerate(stages):
        bound = max_size if i == len(stages) - 1 \
            else (intermediate_size if intermediate_size is not None
                  else max_size)
        nxt = set()
        for r in outs:
            if bound is None:
                if not classify(M).deterministic:
                    raise ContractError("nondeterministic stage needs a "
                                        "size bound")
                s, _ = eval_deterministic(M, r)
                if s is not None:
                    nxt.add(s)
            else:
                nxt |= enumerate_outputs(M, r, bound)
        outs = nxt
    convert = flatten if mode == "flat" else decode
    return {convert(s) for s in outs}


# ---------------------------------------------------------------------------
# Bridge transducers

def decode_homomorphism(symbols):
    """The homomorphism h from rank-2 encodings into the concatenation
    alphabet, h(d(t1,t2)) = @(d(h(t1)), h(t2)); flattening after h equals
    decoding."""
    sigma_e, delta_at = encoding_alphabets(symbols)
    rules = []
    for j in range(3):
        rules.append(Rule("q", "e", j, None, leaf("e")))
        for sym in sorted(set(symbols)):
            rules.append(Rule("q", sym, j, None,
                              out(CONCAT,
                                  out(sym, call("q", down(1))),
                                  call("q", down(2)))))
    return Transducer(sigma_e, delta_at, ["q"], ["q"], rules)


def flatten_simulator(symbols):
    """The local single-use deterministic machine computing
    encode(flatten(t)) by a depth-first traversal split across output
    branches: each rank-1 node starts one branch for its subforest and one
    for the forest following it."""
    sigma_e, delta_at = encoding_alphabets(symbols)
    syms = sorted(set(symbols))
    rules = []
    for j in range(3):
        rules.append(Rule("d", CONCAT, j, None, call("d", down(1))))
        rules.append(Rule("u1", CONCAT, j, None, call("d", down(2))))
        for sym in syms:
            rules.append(Rule("u1", sym, j, None, leaf("e")))
    for j in (1, 2):
        for sym in syms:
            rules.append(Rule("d", sym, j, None,
                              out(sym, call("d", down(1)),
                                  call("u%d" % j, UP))))
        rules.append(Rule("d", "e", j, None, call("u%d" % j, UP)))
        rules.append(Rule("u2", CONCAT, j, None, call("u%d" % j, UP)))
    for sym in syms:
        rules.append(Rule("d", sym, 0, None,
                          out(sym, call("d", down(1)), leaf("e"))))
    rules.append(Rule("d", "e", 0, None, leaf("e")))
    rules.append(Rule("u2", CONCAT, 0, None, leaf("e")))
    return Transducer(delta_at, sigma_e, ["d", "u1", "u2"], ["d"], rules)


def flatten_yield(symbols):
    """The deterministic top-down local machine whose output yield is the
    bracket string of the flattened input; the padding symbol is
    yield-invisible."""
    _, delta_at = encoding_alphabets(symbols)
    syms = sorted(set(symbols))
    omega = RankedAlphabet(
        {**{s: 0 for s in syms},
         "lbr": 0, "rbr": 0, LAMBDA: 0, CONCAT: 2, "omega": 4},
        yield_invisible=(LAMBDA,))
    rules = []
    for j in range(3):
        rules.append(Rule("p", CONCAT, j, None,
                          out(CONCAT, call("p", down(1)),
                              call("p", down(2)))))
        rules.append(Rule("p", "e", j, None, leaf(LAMBDA)))
        for sym in syms:
            rules.append(Rule("p", sym, j, None,
                              out("omega", leaf(sym), leaf("lbr"),
                                  call("p", down(1)), leaf("rbr"))))
    return Transducer(delta_at, omega, ["p"], ["p"], rules)


def chomsky_encoding(gamma):
    """The injection of trees over a ranked alphabet into rank-2 forest
    encodings, listing the children of each node as a chain of a fresh
    binary symbol, together with the local top-down single-use machine
    inverting it.  Returns the (homomorphism, inverse) pair."""
    if "omega" in gamma or "e" in gamma:
        raise ContractError("alphabet reserves 'omega' and 'e'")
    syms = sorted(gamma.symbols)
    delta_e = RankedAlphabet({**{s: 2 for s in syms}, "omega": 2, "e": 0})
    h_rules = []
    for j in range(gamma.max_rank + 1):
        for sym in syms:
            rank = gamma.rank(sym)
            chain = leaf("e")
            for i in range(rank, 0, -1):
                chain = out("omega", call("q", down(i)), chain)
            h_rules.append(Rule("q", sym, j, None,
                               out(sym, leaf("e"), chain)))
    h = Transducer(gamma, delta_e, ["q"], ["q"], h_rules)
    states = ["q%d" % i for i in range(gamma.max_rank + 1)]
    inv_rules = []
    for j in range(3):
        for sym in syms:
            rank = gamma.rank(sym)
            inv_rules.append(Rule("q0", sym, j, None,
                                  out(sym, *[call("q%d" % i, down(2))
                                             for i in range(1, rank + 1)])))
    inv_rules.append(Rule("q1", "omega", 2, None, call("q0", down(1))))
    for i in range(2, gamma.max_rank + 1):
        inv_rules.append(Rule("q%d" % i, "omega", 2, None,
                              call("q%d" % (i - 1), down(2))))
    inv = Transducer(delta_e, gamma, states, ["q0"], inv_rules)
    return h, inv


def build_bridge_transducers(symbols, gamma):
    """The four bridges between output conventions for an unranked symbol
    set and a ranked alphabet: the decode homomorphism, the flatten
    simulator, the yield-based flattener, and the rank-2 re-encoding
    pair."""
    return (decode_homomorphism(symbols), flatten_simulator(symbols),
            flatten_yield(symbols), chomsky_encoding(gamma))


# ---------------------------------------------------------------------------
# The concatenation-alphabet exponential fixture

def at_exponential():
    """The exponential duplicator re-targeted at the concatenation
    alphabet: rank-2 output nodes become @, output leaves become a
    rank-1 symbol over e, so the encoded string of n letters flattens to
    a string of 2^(n+1) letters."""
    from .fixtures import m_exp
    base = m_exp()
    _, omega_at = encoding_alphabets(["delta"])

    def convert(node):
        if isinstance(node.label, Call):
            return node
        if node.label == "sigma":
            return Tree(CONCAT, [convert(c) for c in node.children])
        return Tree("delta", [leaf("e")])

    rules = [Rule(r.state, r.symbol, r.child_no, r.test, convert(r.rhs))
             for r in base.rules]
    return Transducer(base.input_alphabet, omega_at, base.states,
                      base.initials, rules)
