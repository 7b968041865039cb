"""Buchi automata compiled from LTL formulas.

The pipeline: negation normal form, on-the-fly tableau expansion into a
generalized Buchi automaton (one acceptance set per Until subformula),
counting degeneralization to a single acceptance set, removal of states
with no reachable accepting cycle, collapsing of universal components into
explicit accepting sinks, a bisimulation quotient, and guard narrowing
toward accepting sink states. Every stage preserves the accepted language;
structural simplification only makes the automaton smaller.

States are dense ints, the initial state is 0 after renumbering, and
transition guards are Boolean formulas over the alphabet.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

from .ltl import (
    TRUE, Alphabet, And, Atom, Bool, Formula, Lasso, Next, Not, Or, Release,
    Until, alphabet_of, atoms, eval_bool, format_formula, is_boolean, nnf,
    parse,
)

__all__ = [
    "Transition", "StateClasses", "BuchiAutomaton", "compile_formula",
]


@dataclass(frozen=True)
class Transition:
    src: int
    guard: Formula
    dst: int


@dataclass(frozen=True)
class StateClasses:
    """Classification of automaton states.

    live: an accepting cycle is reachable from the state.
    accepting_sink: accepting state whose outgoing edges are self-loops
        covering every assignment, so acceptance is guaranteed forever.
    trap: no accepting cycle is reachable (complement of live).
    """

    live: frozenset[int]
    accepting_sink: frozenset[int]
    trap: frozenset[int]


def _fkey(f: Formula) -> str:
    return format_formula(f)


def _and_fold(parts: list[Formula]) -> Formula:
    if not parts:
        return TRUE
    return reduce(And, parts)


def _or_fold(parts: list[Formula]) -> Formula:
    return reduce(Or, parts)


def _simplify(f: Formula) -> Formula:
    """Constant folding and double negation removal for guard formulas."""
    if isinstance(f, Not):
        a = _simplify(f.arg)
        if isinstance(a, Bool):
            return Bool(not a.value)
        if isinstance(a, Not):
            return a.arg
        return Not(a)
    if isinstance(f, And):
        a, b = _simplify(f.lhs), _simplify(f.rhs)
        if isinstance(a, Bool):
            return b if a.value else a
        if isinstance(b, Bool):
            return a if b.value else b
        return And(a, b)
    if isinstance(f, Or):
        a, b = _simplify(f.lhs), _simplify(f.rhs)
        if isinstance(a, Bool):
            return a if a.value else b
        if isinstance(b, Bool):
            return b if b.value else a
        return Or(a, b)
    return f


def _sat_disjoint(guard: Formula, alphabet: Alphabet) -> bool:
    """Satisfiability by enumerating the guard's own atoms only."""
    names = sorted(atoms(guard))
    if not names:
        return eval_bool(guard, 0, alphabet)
    mask_bits = [alphabet.index(n) for n in names]
    for combo in range(1 << len(names)):
        letter = 0
        for i, bit in enumerate(mask_bits):
            if combo >> i & 1:
                letter |= 1 << bit
        if eval_bool(guard, letter, alphabet):
            return True
    return False


class BuchiAutomaton:
    """Nondeterministic Buchi automaton over assignment letters."""

    def __init__(self, alphabet: Alphabet, n_states: int, initial: int,
                 accepting: frozenset[int], transitions: tuple[Transition, ...]):
        if not (0 <= initial < n_states):
            raise ValueError("initial state out of range")
        names = set(alphabet.names)
        for t in transitions:
            if not (0 <= t.src < n_states and 0 <= t.dst < n_states):
                raise ValueError(f"transition endpoint out of range: {t}")
            if not is_boolean(t.guard):
                raise ValueError(f"guard must be a Boolean formula: {t.guard}")
            if not atoms(t.guard) <= names:
                raise ValueError(f"guard {t.guard} uses atoms outside the alphabet")
        self.alphabet = alphabet
        self.n_states = n_states
        self.initial = initial
        self.accepting = frozenset(accepting)
        self.transitions = tuple(transitions)
        self._out: list[list[tuple[Formula, int]]] = [[] for _ in range(n_states)]
        for t in self.transitions:
            self._out[t.src].append((t.guard, t.dst))
        self._step_cache: dict[tuple[int, int], frozenset[int]] = {}
        self._letters_cache: dict[tuple[int, tuple[int, ...]], frozenset[int]] = {}
        self._classes: StateClasses | None = None

    # -- basic queries ---------------------------------------------------

    def out(self, q: int) -> list[tuple[Formula, int]]:
        return self._out[q]

    def succ(self, q: int, letter: int) -> frozenset[int]:
        key = (q, letter)
        hit = self._step_cache.get(key)
        if hit is None:
            hit = frozenset(d for g, d in self._out[q]
                            if eval_bool(g, letter, self.alphabet))
            self._step_cache[key] = hit
        return hit

    def step(self, states: frozenset[int], letter: int) -> frozenset[int]:
        """All successors of the state set under one assignment letter."""
        out: set[int] = set()
        for q in states:
            out |= self.succ(q, letter)
        return frozenset(out)

    def transition_letters(self, t_index: int,
                           achievable: tuple[int, ...]) -> frozenset[int]:
        """Assignments among `achievable` satisfying one transition's guard."""
        key = (t_index, achievable)
        hit = self._letters_cache.get(key)
        if hit is None:
            guard = self.transitions[t_index].guard
            hit = frozenset(a for a in achievable
                            if eval_bool(guard, a, self.alphabet))
            self._letters_cache[key] = hit
        return hit

    # -- state classification --------------------------------------------

    def _graph_edges(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_states)]
        for t in self.transitions:
            if _sat_disjoint(t.guard, self.alphabet):
                adj[t.src].append(t.dst)
        return adj

    def live_states(self) -> frozenset[int]:
        adj = self._graph_edges()
        comp = _tarjan_scc(self.n_states, adj)
        has_internal_edge = [False] * (max(comp) + 1 if comp else 0)
        for src, dsts in enumerate(adj):
            for d in dsts:
                if comp[src] == comp[d]:
                    has_internal_edge[comp[src]] = True
        good = set()
        for q in self.accepting:
            if has_internal_edge[comp[q]]:
                good.add(q)
        # states in the same SCC as a good state, plus backward reachability
        good_comps = {comp[q] for q in good}
        seeds = [q for q in range(self.n_states) if comp[q] in good_comps]
        radj: list[list[int]] = [[] for _ in range(self.n_states)]
        for src, dsts in enumerate(adj):
            for d in dsts:
                radj[d].append(src)
        live = set(seeds)
        stack = list(seeds)
        while stack:
            q = stack.pop()
            for p in radj[q]:
                if p not in live:
                    live.add(p)
                    stack.append(p)
        return frozenset(live)

    def classify(self) -> StateClasses:
        if self._classes is not None:
            return self._classes
        live = self.live_states()
        support = self._support()
        sinks = set()
        for q in self.accepting:
            edges = self._out[q]
            if edges and all(d == q for _, d in edges):
                union = _or_fold([g for g, _ in edges])
                if _tautology(union, support, self.alphabet):
                    sinks.add(q)
        trap = frozenset(range(self.n_states)) - live
        self._classes = StateClasses(live=live, accepting_sink=frozenset(sinks),
                                     trap=trap)
        return self._classes

    def _support(self) -> tuple[str, ...]:
        names: set[str] = set()
        for t in self.transitions:
            names |= atoms(t.guard)
        return tuple(sorted(names))

    # -- lasso acceptance --------------------------------------------------

    def accepts_lasso(self, word: Lasso) -> bool:
        """Does some run over prefix . cycle^omega visit acceptance infinitely often?"""
        letters = word.prefix + word.cycle
        n = len(letters)
        loop = len(word.prefix)
        nq = self.n_states

        succ_mask: dict[int, list[int]] = {}
        for letter in set(letters):
            masks = []
            for q in range(nq):
                m = 0
                for d in self.succ(q, letter):
                    m |= 1 << d
                masks.append(m)
            succ_mask[letter] = masks

        def step_mask(states: int, letter: int) -> int:
            out = 0
            masks = succ_mask[letter]
            while states:
                low = states & -states
                out |= masks[low.bit_length() - 1]
                states &= states - 1
            return out

        # reachable state sets per position, iterated to a fixpoint over the loop
        reach = [0] * n
        reach[0] = 1 << self.initial
        changed = True
        while changed:
            changed = False
            for i in range(n):
                j = i + 1 if i + 1 < n else loop
                moved = step_mask(reach[i], letters[i])
                if moved | reach[j] != reach[j]:
                    reach[j] |= moved
                    changed = True

        acc_mask = 0
        for q in self.accepting:
            acc_mask |= 1 << q

        start_states = reach[loop]
        if start_states == 0:
            return False

        # one-full-cycle reachability per start state, tracking whether an
        # accepting state was visited on arrival at any step of the traversal
        cycle_letters = letters[loop:]
        full_reach: dict[int, int] = {}
        marked_reach: dict[int, int] = {}
        states = start_states
        while states:
            low = states & -states
            q = low.bit_length() - 1
            states &= states - 1
            plain, marked = 1 << q, 0
            for letter in cycle_letters:
                np_, nm = step_mask(plain, letter), step_mask(marked, letter)
                hit = np_ & acc_mask
                np_ &= ~acc_mask
                nm |= hit
                plain, marked = np_, nm
            full_reach[q] = plain | marked
            marked_reach[q] = marked

        nodes = sorted(full_reach)
        index = {q: i for i, q in enumerate(nodes)}
        adj = [[] for _ in nodes]
        for q in nodes:
            targets = full_reach[q]
            while targets:
                low = targets & -targets
                d = low.bit_length() - 1
                targets &= targets - 1
                if d in index:
                    adj[index[q]].append(index[d])
        comp = _tarjan_scc(len(nodes), adj)
        for q in nodes:
            targets = marked_reach[q]
            while targets:
                low = targets & -targets
                d = low.bit_length() - 1
                targets &= targets - 1
                if d in index and comp[index[q]] == comp[index[d]]:
                    return True
        return False

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet.names),
            "states": list(range(self.n_states)),
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "transitions": [
                {"src": t.src, "guard": format_formula(t.guard), "dst": t.dst}
                for t in self.transitions
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "BuchiAutomaton":
        alphabet = Alphabet(tuple(data["alphabet"]))
        states = data["states"]
        n = len(states)
        if sorted(states) != list(range(n)):
            raise ValueError("states must be dense ints starting at 0")
        transitions = []
        for t in data["transitions"]:
            guard = parse(t["guard"])
            transitions.append(Transition(int(t["src"]), guard, int(t["dst"])))
        return cls(alphabet, n, int(data["initial"]),
                   frozenset(int(q) for q in data["accepting"]),
                   tuple(transitions))

    def to_dot(self) -> str:
        lines = ["digraph buchi {", "  rankdir=LR;", '  node [shape=circle];',
                 '  __init [shape=point, label=""];',
                 f"  __init -> q{self.initial};"]
        for q in range(self.n_states):
            shape = "doublecircle" if q in self.accepting else "circle"
            lines.append(f"  q{q} [shape={shape}];")
        for t in self.transitions:
            label = format_formula(t.guard).replace('"', '\\"')
            lines.append(f'  q{t.src} -> q{t.dst} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _tarjan_scc(n: int, adj: list[list[int]]) -> list[int]:
    """Iterative Tarjan; returns the SCC id per node."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comp = [-1] * n
    counter = 0
    n_comp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, ei = work[-1]
            if ei == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while ei < len(adj[v]):
                w = adj[v][ei]
                ei += 1
                if index[w] == -1:
                    work[-1] = (v, ei)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comp
                    if w == v:
                        break
                n_comp += 1
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])
    return comp


def _tautology(guard: Formula, support: tuple[str, ...], alphabet: Alphabet) -> bool:
    names = sorted(set(support) | atoms(guard))
    if len(names) > 14:
        return False  # give up; treated as non-tautology, which is safe
    bits = [alphabet.index(nm) for nm in names]
    for combo in range(1 << len(names)):
        letter = 0
        for i, b in enumerate(bits):
            if combo >> i & 1:
                letter |= 1 << b
        if not eval_bool(guard, letter, alphabet):
            return False
    return True


# -- tableau construction ---------------------------------------------------


_INIT = -1


def _expand_tableau(root: Formula):
    """On-the-fly tableau expansion of an NNF formula.

    Returns (olds, nexts, incomings): per-node processed formula sets, next
    obligations, and incoming node ids (with -1 for the virtual initial node).
    Nodes are unique per (old, next) pair. Processing order is fixed by the
    formulas' canonical strings so construction is fully deterministic.
    """
    nodes: dict[tuple[frozenset, frozenset], int] = {}
    olds: list[frozenset] = []
    nexts: list[frozenset] = []
    incomings: list[set[int]] = []
    # worklist of closed nodes whose successors still need expansion
    pending: list[int] = []

    def close(new: set, old: frozenset, nxt: frozenset, inc: frozenset):
        while new:
            g = min(new, key=_fkey)
            new.discard(g)
            if isinstance(g, Bool):
                if not g.value:
                    return
                continue
            if g in old:
                continue
            if isinstance(g, Atom) or (isinstance(g, Not) and isinstance(g.arg, Atom)):
                contra = g.arg if isinstance(g, Not) else Not(g)
                if contra in old:
                    return
                old = old | {g}
                continue
            if isinstance(g, And):
                old = old | {g}
                new |= {g.lhs, g.rhs} - old
                continue
            if isinstance(g, Next):
                old = old | {g}
                nxt = nxt | {g.arg}
                continue
            if isinstance(g, Or):
                old2 = old | {g}
                close(new | ({g.lhs} - old2), old2, nxt, inc)
                close(new | ({g.rhs} - old2), old2, nxt, inc)
                return
            if isinstance(g, Until):
                old2 = old | {g}
                close(new | ({g.rhs} - old2), old2, nxt, inc)
                close(new | ({g.lhs} - old2), old2, nxt | {g}, inc)
                return
            if isinstance(g, Release):
                old2 = old | {g}
                close(new | ({g.lhs, g.rhs} - old2), old2, nxt, inc)
                close(new | ({g.rhs} - old2), old2, nxt | {g}, inc)
                return
            raise TypeError(f"formula not in negation normal form: {g}")
        key = (old, nxt)
        nid = nodes.get(key)
        if nid is None:
            nid = len(olds)
            nodes[key] = nid
            olds.append(old)
            nexts.append(nxt)
            incomings.append(set(inc))
            pending.append(nid)
        else:
            incomings[nid] |= inc

    close({root}, frozenset(), frozenset(), frozenset({_INIT}))
    while pending:
        nid = pending.pop(0)
        close(set(nexts[nid]), frozenset(), frozenset(), frozenset({nid}))
    return olds, nexts, incomings


def _guard_of(old: frozenset) -> Formula:
    lits = [g for g in old
            if isinstance(g, Atom) or (isinstance(g, Not) and isinstance(g.arg, Atom))]
    lits.sort(key=_fkey)
    return _and_fold(lits)


def _until_subformulas(f: Formula) -> list[Until]:
    found: set[Until] = set()

    def walk(g: Formula):
        if isinstance(g, Until):
            found.add(g)
        for attr in ("arg", "lhs", "rhs"):
            child = getattr(g, attr, None)
            if isinstance(child, Formula):
                walk(child)

    walk(f)
    return sorted(found, key=_fkey)


def compile_formula(f: Formula, alphabet: Alphabet | None = None) -> BuchiAutomaton:
    """Compile a formula into a pruned, simplified Buchi automaton."""
    if alphabet is None:
        alphabet = alphabet_of(f)
    else:
        missing = atoms(f) - set(alphabet.names)
        if missing:
            raise ValueError(f"formula atoms {sorted(missing)} not in alphabet")
    g = nnf(f)
    olds, nexts, incomings = _expand_tableau(g)
    untils = _until_subformulas(g)
    k = len(untils)

    # states: tableau nodes shifted by one, state 0 is the virtual initial
    n_states = len(olds) + 1
    initial = 0
    transitions: list[Transition] = []
    for nid in range(len(olds)):
        guard = _guard_of(olds[nid])
        for src in sorted(incomings[nid]):
            transitions.append(Transition(src + 1, guard, nid + 1))

    if k == 0:
        accepting = frozenset(range(n_states))
        aut = BuchiAutomaton(alphabet, n_states, initial, accepting,
                             tuple(transitions))
    else:
        acc_sets = []
        for u in untils:
            # a true right-hand side holds at every node even though the
            # closure never stores it
            rhs_trivial = isinstance(u.rhs, Bool) and u.rhs.value
            acc = frozenset(nid + 1 for nid in range(len(olds))
                            if u not in olds[nid] or rhs_trivial
                            or u.rhs in olds[nid])
            acc_sets.append(acc)
        if k == 1:
            aut = BuchiAutomaton(alphabet, n_states, initial, acc_sets[0],
                                 tuple(transitions))
        else:
            aut = _degeneralize(alphabet, n_states, initial, transitions, acc_sets)

    aut = _trim_transient_accepting(aut)
    aut = _prune(aut)
    aut = _merge_universal_sccs(aut)
    aut = _merge_bisimilar(aut)
    aut = _absorb_into_sinks(aut)
    aut = _prune(aut)
    return _renumber(aut)


def _degeneralize(alphabet: Alphabet, n_states: int, initial: int,
                  transitions: list[Transition],
                  acc_sets: list[frozenset[int]]) -> BuchiAutomaton:
    """Counting construction: one counter level per acceptance set.

    At level i, leaving a state in acceptance set i advances the counter;
    the run is accepting iff the counter wraps forever, which is equivalent
    to visiting every set infinitely often.
    """
    k = len(acc_sets)
    out: list[list[Transition]] = [[] for _ in range(n_states)]
    for t in transitions:
        out[t.src].append(t)
    index: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []

    def state_id(q: int, level: int) -> int:
        key = (q, level)
        sid = index.get(key)
        if sid is None:
            sid = len(order)
            index[key] = sid
            order.append(key)
        return sid

    start = state_id(initial, 0)
    new_transitions: list[Transition] = []
    i = 0
    while i < len(order):
        q, level = order[i]
        nxt_level = (level + 1) % k if q in acc_sets[level] else level
        for t in out[q]:
            new_transitions.append(
                Transition(state_id(q, level), t.guard, state_id(t.dst, nxt_level)))
        i += 1
    accepting = frozenset(sid for (q, level), sid in index.items()
                          if level == k - 1 and q in acc_sets[k - 1])
    return BuchiAutomaton(alphabet, len(order), start, accepting,
                          tuple(new_transitions))


def _prune(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Drop states with no reachable accepting cycle (keeping the initial
    state) and anything unreachable from the initial state."""
    live = aut.live_states()
    keep = set(live) | {aut.initial}
    adj = aut._graph_edges()
    reachable = {aut.initial}
    stack = [aut.initial]
    while stack:
        q = stack.pop()
        for d in adj[q]:
            if d in keep and d not in reachable:
                reachable.add(d)
                stack.append(d)
    keep &= reachable
    remap = {q: i for i, q in enumerate(sorted(keep))}
    transitions = tuple(
        Transition(remap[t.src], t.guard, remap[t.dst])
        for t in aut.transitions
        if t.src in remap and t.dst in remap and _sat_disjoint(t.guard, aut.alphabet))
    accepting = frozenset(remap[q] for q in aut.accepting if q in remap)
    return BuchiAutomaton(aut.alphabet, len(remap), remap[aut.initial],
                          accepting, transitions)


def _letters_of_support(support: tuple[str, ...], alphabet: Alphabet) -> list[int]:
    bits = [alphabet.index(nm) for nm in support]
    letters = []
    for combo in range(1 << len(support)):
        letter = 0
        for i, b in enumerate(bits):
            if combo >> i & 1:
                letter |= 1 << b
        letters.append(letter)
    return letters


def _trim_transient_accepting(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Unmark accepting states that no run can visit infinitely often.

    A run satisfies the acceptance condition iff it visits some single
    accepting state infinitely often, which requires a cycle through that
    state. Degeneralization marks counter-wrap copies of transient states
    as accepting; dropping those marks keeps the language and lets the
    bisimulation quotient fold the copies away.
    """
    adj = aut._graph_edges()
    comp = _tarjan_scc(aut.n_states, adj)
    size: dict[int, int] = {}
    for q in range(aut.n_states):
        size[comp[q]] = size.get(comp[q], 0) + 1
    keep = frozenset(q for q in aut.accepting
                     if size[comp[q]] > 1 or q in adj[q])
    if keep == aut.accepting:
        return aut
    return BuchiAutomaton(aut.alphabet, aut.n_states, aut.initial, keep,
                          aut.transitions)


def _merge_universal_sccs(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Collapse components that accept every continuation into one sink.

    An SCC is universal when no transition leaves it, every internal guard
    is a tautology, every member has a successor, and some member accepts:
    from any member, any word can forever stay inside while routing through
    the accepting state. Degeneralization turns fulfilled formulas into
    such counter cycles instead of a single looping state; merging them
    back restores an explicit accepting sink without changing the language.
    """
    support = aut._support()
    comp = _tarjan_scc(aut.n_states, aut._graph_edges())
    groups: dict[int, list[int]] = {}
    for q in range(aut.n_states):
        groups.setdefault(comp[q], []).append(q)
    universal: set[int] = set()
    for members in groups.values():
        mset = set(members)
        if not (mset & aut.accepting):
            continue
        if all(aut.out(q)
               and all(d in mset and _tautology(g, support, aut.alphabet)
                       for g, d in aut.out(q))
               for q in members):
            universal |= mset
    if not universal:
        return aut
    # close upward: a state every letter can move into the universal set is
    # itself universal, whatever its other edges do
    changed = True
    while changed:
        changed = False
        for q in range(aut.n_states):
            if q in universal:
                continue
            into = sorted((g for g, d in aut.out(q) if d in universal),
                          key=_fkey)
            if into and _tautology(_or_fold(into), support, aut.alphabet):
                universal.add(q)
                changed = True
    rep = min(universal)
    transitions = [Transition(rep, TRUE, rep)]
    for t in aut.transitions:
        if t.src in universal:
            continue
        dst = rep if t.dst in universal else t.dst
        transitions.append(Transition(t.src, t.guard, dst))
    initial = rep if aut.initial in universal else aut.initial
    accepting = frozenset(aut.accepting - universal) | {rep}
    return BuchiAutomaton(aut.alphabet, aut.n_states, initial, accepting,
                          tuple(transitions))


def _merge_bisimilar(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Quotient by strong bisimulation (acceptance-respecting)."""
    support = aut._support()
    if len(support) > 10:
        return aut
    letters = _letters_of_support(support, aut.alphabet)
    succ = [[frozenset(aut.succ(q, letter)) for letter in letters]
            for q in range(aut.n_states)]
    cls = [1 if q in aut.accepting else 0 for q in range(aut.n_states)]
    while True:
        sigs = {}
        new_cls = [0] * aut.n_states
        for q in range(aut.n_states):
            sig = (cls[q],
                   tuple(frozenset(cls[d] for d in succ[q][li])
                         for li in range(len(letters))))
            if sig not in sigs:
                sigs[sig] = len(sigs)
            new_cls[q] = sigs[sig]
        if new_cls == cls:
            break
        cls = new_cls
    n_classes = len(set(cls))
    if n_classes == aut.n_states:
        return aut
    rep = {}
    for q in range(aut.n_states):
        rep.setdefault(cls[q], q)  # smallest member is the representative
    transitions = []
    seen = set()
    for c, q in sorted(rep.items()):
        for guard, dst in aut.out(q):
            key = (c, _fkey(guard), cls[dst])
            if key not in seen:
                seen.add(key)
                transitions.append(Transition(c, guard, cls[dst]))
    accepting = frozenset(cls[q] for q in aut.accepting)
    return BuchiAutomaton(aut.alphabet, n_classes, cls[aut.initial],
                          accepting, tuple(transitions))


def _absorb_into_sinks(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Narrow guards that compete with an edge into an accepting sink.

    If a letter can move into an accepting sink, any alternative successor
    under that letter is redundant: the sink accepts every continuation.
    Removing the letter from competing guards keeps the language unchanged
    and makes progress toward the sink explicit.
    """
    support = aut._support()
    if len(support) > 10:
        return aut
    sinks = aut.classify().accepting_sink
    if not sinks:
        return aut
    transitions: list[Transition] = []
    for q in range(aut.n_states):
        edges = aut.out(q)
        sink_guards = sorted((g for g, d in edges if d in sinks), key=_fkey)
        if q in sinks or not sink_guards:
            transitions.extend(Transition(q, g, d) for g, d in edges)
            continue
        blocker = Not(_or_fold(sink_guards))
        for g, d in edges:
            if d in sinks:
                transitions.append(Transition(q, g, d))
                continue
            narrowed = _simplify(And(g, blocker))
            if _sat_disjoint(narrowed, aut.alphabet):
                transitions.append(Transition(q, narrowed, d))
    return BuchiAutomaton(aut.alphabet, aut.n_states, aut.initial,
                          aut.accepting, tuple(transitions))


def _renumber(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Canonical breadth-first state numbering with the initial state at 0."""
    order = [aut.initial]
    seen = {aut.initial}
    i = 0
    while i < len(order):
        q = order[i]
        i += 1
        for guard, dst in sorted(aut.out(q), key=lambda e: (_fkey(e[0]), e[1])):
            if dst not in seen:
                seen.add(dst)
                order.append(dst)
    remap = {q: i for i, q in enumerate(order)}
    transitions = sorted(
        (Transition(remap[t.src], t.guard, remap[t.dst])
         for t in aut.transitions if t.src in remap and t.dst in remap),
        key=lambda t: (t.src, _fkey(t.guard), t.dst))
    accepting = frozenset(remap[q] for q in aut.accepting if q in remap)
    return BuchiAutomaton(aut.alphabet, len(order), 0, accepting,
                          tuple(transitions))
