"""Derive application conditions that make a rule preserve a graph constraint.

Pipeline per rule/constraint pair: glue the rule's right-hand side with the
constraint premise, turn each gluing into a post-condition (premise plus basic
and reduced conclusions), translate it back over the rule into an application
condition on the left-hand side, and categorize the result.

Satisfiability of attribute constraints is decided exactly: min/max terms are
split into cases and the resulting linear systems are checked by
Fourier-Motzkin elimination over rationals. Whether a satisfiable condition
actually restricts the rule is decided by a bounded search for a weakly
consistent topology on which it blocks the rule; that search is delegated to
an SMT solver.
"""

from __future__ import annotations

import enum
import itertools
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .patterns import (
    PARAM_PREFIX,
    Falsum,
    GraphConstraint,
    GraphPattern,
    LinkVar,
    Polarity,
    StateIn,
    WExpr,
    WeightCmp,
    builtin_constraints,
    check_constraint,
)
from .rules import ACKind, Applied, ApplicationCondition, Inapplicable, RefinedRule, try_apply
from .topology import ACTIVE, INACTIVE, UNCLASSIFIED, LinkState, Topology

# ---------------------------------------------------------------------------
# Gluings
# ---------------------------------------------------------------------------

_LETTERS = string.ascii_uppercase


@dataclass(frozen=True)
class Gluing:
    index: int
    pattern: GraphPattern
    left_map: dict
    right_map: dict

    def label(self) -> str:
        inv = {v: k for k, v in self.right_map.items()}
        pairs = [f"{l}={inv[g]}" for l, g in self.left_map.items() if g in inv and l in _node_vars(self)]
        return ", ".join(pairs)


def _node_vars(g: Gluing) -> set:
    return {l for l, gv in g.left_map.items() if gv in g.pattern.nodes}


def _link_name(src: str, tgt: str, taken: set) -> str:
    name = src + tgt
    while name in taken:
        name += "'"
    taken.add(name)
    return name


def _glue(l: GraphPattern, r: GraphPattern, f: Mapping[str, str]) -> tuple[GraphPattern, dict, dict]:
    """Gluing of ``l`` and ``r`` identifying each l-node x with r-node f[x]."""
    lnode = {x: _LETTERS[i] for i, x in enumerate(l.nodes)}
    inv = {rv: lv for lv, rv in f.items()}
    rnode = {}
    nxt = len(l.nodes)
    for y in r.nodes:
        if y in inv:
            rnode[y] = lnode[inv[y]]
        else:
            rnode[y] = _LETTERS[nxt]
            nxt += 1
    nodes = tuple(lnode[x] for x in l.nodes) + tuple(rnode[y] for y in r.nodes if y not in inv)
    taken: set = set()
    links = []
    lmap = dict(lnode)
    for lv in l.links:
        name = _link_name(lnode[lv.src], lnode[lv.tgt], taken)
        lmap[lv.name] = name
        links.append(LinkVar(name, lnode[lv.src], lnode[lv.tgt]))
    rmap = dict(rnode)
    used = set()
    for rv in r.links:
        s, t = rnode[rv.src], rnode[rv.tgt]
        twin = next((lv for lv in l.links if lv.name not in used
                     and lnode[lv.src] == s and lnode[lv.tgt] == t
                     and lv.src in f and lv.tgt in f), None)
        if twin is not None:
            used.add(twin.name)
            rmap[rv.name] = lmap[twin.name]
        else:
            name = _link_name(s, t, taken)
            rmap[rv.name] = name
            links.append(LinkVar(name, s, t))
    constraints = tuple(c.rename(lmap) for c in l.constraints) + tuple(c.rename(rmap) for c in r.constraints)
    return GraphPattern(nodes, tuple(links), constraints), lmap, rmap


def _automorphisms(p: GraphPattern) -> list[dict]:
    """Node permutations of ``p`` preserving links and constraints."""
    out = []
    key = _pattern_key(_rename_nodes(p, {n: n for n in p.nodes}))
    for perm in itertools.permutations(p.nodes):
        m = dict(zip(p.nodes, perm))
        if _pattern_key(_rename_nodes(p, m)) == key:
            out.append(m)
    return out


def _rename_nodes(p: GraphPattern, m: Mapping[str, str]) -> GraphPattern:
    """Rename nodes; links are renamed canonically after their endpoints."""
    taken: set = set()
    lm = {}
    for lv in sorted(p.links, key=lambda lv: (m[lv.src], m[lv.tgt], lv.name)):
        lm[lv.name] = _link_name("<" + m[lv.src], m[lv.tgt] + ">", taken)
    full = dict(m)
    full.update(lm)
    return p.rename(full)


def _pattern_key(p: GraphPattern) -> tuple:
    return (frozenset(p.nodes), frozenset((lv.name, lv.src, lv.tgt) for lv in p.links),
            frozenset(str(c) for c in p.constraints))


def enumerate_gluings(l: GraphPattern, r: GraphPattern,
                      context: Optional[GraphPattern] = None) -> list[Gluing]:
    """All overlaps of ``l`` and ``r`` sharing at least one node, up to isomorphism.

    An overlap is an injective partial map from l's nodes to r's nodes. They are
    enumerated lexicographically by the images of l's nodes in declaration
    order, with "unmapped" last, and numbered from 1. Symmetries of ``l`` are
    taken from ``context`` when given (a pattern over the same nodes carrying
    extra structure, such as the whole rule).
    """
    aut_l, aut_r = _automorphisms(context or l), _automorphisms(r)
    seen = set()
    out = []
    choices = list(r.nodes) + [None]
    for images in itertools.product(choices, repeat=len(l.nodes)):
        mapped = [y for y in images if y is not None]
        if not mapped or len(set(mapped)) != len(mapped):
            continue
        f = {x: y for x, y in zip(l.nodes, images) if y is not None}
        canon = min(tuple(sorted((a[x], b[y]) for x, y in f.items())) for a in aut_l for b in aut_r)
        if canon in seen:
            continue
        seen.add(canon)
        pattern, lmap, rmap = _glue(l, r, f)
        out.append(Gluing(len(out) + 1, pattern, lmap, rmap))
    return out


# ---------------------------------------------------------------------------
# Satisfiability
# ---------------------------------------------------------------------------


def _frac(x: float) -> Fraction:
    return Fraction(repr(float(x))) if isinstance(x, float) else Fraction(x)


def _term_var(term: str) -> str:
    return term if term.startswith(PARAM_PREFIX) else "w:" + term


def _linear_cases(cons: list[WeightCmp]) -> Iterable[list]:
    """Yield linear systems, one per choice of argmin/argmax in every aggregate.

    A row ``(coeffs, bound, strict)`` reads ``sum(coeffs[v] * v) < bound`` when
    strict and ``<=`` otherwise.
    """
    aggs = []
    for c in cons:
        for e in (c.lhs, c.rhs):
            if e.agg != "id" and len(e.terms) > 1 and (e.agg, e.terms) not in aggs:
                aggs.append((e.agg, e.terms))
    for pick in itertools.product(*(range(len(t)) for _, t in aggs)):
        chosen = {}
        rows = []
        for (agg, terms), i in zip(aggs, pick):
            chosen[(agg, terms)] = terms[i]
            sel = _term_var(terms[i])
            for other in terms:
                o = _term_var(other)
                if o == sel:
                    continue
                # min picks a term no larger than the others, max one no smaller
                lo, hi = (sel, o) if agg == "min" else (o, sel)
                rows.append(({lo: Fraction(1), hi: Fraction(-1)}, Fraction(0), False))

        def lin(e: WExpr) -> tuple[dict, Fraction]:
            coef = _frac(e.coef)
            if not e.terms:
                return {}, coef
            term = e.terms[0] if e.agg == "id" or len(e.terms) == 1 else chosen[(e.agg, e.terms)]
            return {_term_var(term): coef}, Fraction(0)

        for c in cons:
            (lc, lk), (rc, rk) = lin(c.lhs), lin(c.rhs)
            # lhs - rhs (op) 0
            diff = dict(lc)
            for v, a in rc.items():
                diff[v] = diff.get(v, 0) - a
            const = lk - rk
            if c.op in ("<", "<="):
                rows.append((diff, -const, c.op == "<"))
            elif c.op in (">", ">="):
                rows.append(({v: -a for v, a in diff.items()}, const, c.op == ">"))
            else:
                rows.append((diff, -const, False))
                rows.append(({v: -a for v, a in diff.items()}, const, False))
        yield rows


def _fm_feasible(rows: list) -> bool:
    """Fourier-Motzkin elimination over the rationals with strict/non-strict rows."""
    rows = [({v: a for v, a in co.items() if a != 0}, b, s) for co, b, s in rows]
    variables = sorted({v for co, _, _ in rows for v in co})
    for v in variables:
        pos, neg, rest = [], [], []
        for row in rows:
            a = row[0].get(v, 0)
            (pos if a > 0 else neg if a < 0 else rest).append(row)
        new = set()
        for co, b, s in rest:
            new.add((frozenset(co.items()), b, s))
        for cp, bp, sp in pos:
            ap = cp[v]
            for cn, bn, sn in neg:
                an = -cn[v]
                co = {}
                for x in set(cp) | set(cn):
                    if x == v:
                        continue
                    val = cp.get(x, 0) * an + cn.get(x, 0) * ap
                    if val != 0:
                        co[x] = val
                new.add((frozenset(co.items()), bp * an + bn * ap, sp or sn))
        rows = [(dict(co), b, s) for co, b, s in new]
        for co, b, s in rows:
            if not co and (b < 0 or (s and b == 0)):
                return False
    return all((b > 0 if s else b >= 0) for co, b, s in rows if not co)


def is_satisfiable(p: GraphPattern) -> bool:
    """Whether some topology and parameter values admit a match of ``p``."""
    if p.is_structurally_degenerate():
        return False
    states: dict = {}
    weights = []
    for c in p.constraints:
        if isinstance(c, Falsum):
            return False
        if isinstance(c, StateIn):
            states[c.link] = states.get(c.link, frozenset(LinkState)) & c.states
            if not states[c.link]:
                return False
        else:
            weights.append(c)
    if not weights:
        return True
    variables = {_term_var(x) for c in weights for e in (c.lhs, c.rhs) for x in e.terms}
    positivity = [({v: Fraction(-1)}, Fraction(0), True) for v in sorted(variables)]
    return any(_fm_feasible(rows + positivity) for rows in _linear_cases(weights))


# ---------------------------------------------------------------------------
# Post-conditions and reverse translation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PostCondition:
    gluing: Gluing
    kind: ACKind
    premise: GraphPattern
    conclusions: tuple
    reduced_total: int = 0
    pruned: int = 0


def _merges(fresh: list, old: list):
    """Every way to identify fresh nodes with old ones or with each other, except none."""
    def rec(i: int, m: dict):
        if i == len(fresh):
            if any(m[f] != f for f in fresh):
                yield dict(m)
            return
        reps = [f for f in fresh[:i] if m[f] == f]
        for target in old + reps + [fresh[i]]:
            m[fresh[i]] = target
            yield from rec(i + 1, m)
        del m[fresh[i]]
    yield from rec(0, {})


def _extend_conclusion(g: Gluing, conclusion: GraphPattern, premise: GraphPattern) -> tuple[GraphPattern, list]:
    """Basic conclusion over the gluing plus the list of its fresh node names."""
    extra_nodes = [n for n in conclusion.nodes if n not in premise.nodes]
    extra_links = [lv for lv in conclusion.links if lv.name not in premise.link_names]
    m = dict(g.right_map)
    taken = set(g.pattern.nodes)
    fresh = []
    for n in extra_nodes:
        name = next(x for x in _LETTERS if x not in taken)
        taken.add(name)
        m[n] = name
        fresh.append(name)
    ltaken = set(g.pattern.link_names)
    links = []
    for lv in extra_links:
        name = _link_name(m[lv.src], m[lv.tgt], ltaken)
        m[lv.name] = name
        links.append(LinkVar(name, m[lv.src], m[lv.tgt]))
    basic = g.pattern.extend(fresh, links, tuple(c.rename(m) for c in conclusion.constraints))
    return basic, fresh


def _merge(p: GraphPattern, m: Mapping[str, str]) -> GraphPattern:
    """Identify node variables per ``m``; link variables keep their names."""
    nodes = tuple(dict.fromkeys(m.get(n, n) for n in p.nodes))
    links = tuple(LinkVar(lv.name, m.get(lv.src, lv.src), m.get(lv.tgt, lv.tgt)) for lv in p.links)
    return GraphPattern(nodes, links, p.constraints)


def _rule_span(rule: RefinedRule) -> GraphPattern:
    """RHS nodes with all links and constraints of both sides, for symmetry detection."""
    lhs = {lv.name: lv for lv in rule.lhs.links}
    extra = [LinkVar("lhs:" + n, lv.src, lv.tgt) for n, lv in lhs.items()
             if lv.src in rule.rhs.nodes and lv.tgt in rule.rhs.nodes]
    ren = {lv.name: "lhs:" + lv.name for lv in rule.lhs.links}
    cons = tuple(c.rename(ren) for c in rule.lhs.constraints
                 if all(("lhs:" + x) in {e.name for e in extra} for x in c.links()))
    return rule.rhs.extend((), extra, cons)


def derive_postconditions(rule: RefinedRule, constraint: GraphConstraint) -> list[PostCondition]:
    """One post-condition per gluing of the rule's RHS with the constraint premise."""
    kind = ACKind.PAC if constraint.polarity is Polarity.POSITIVE else ACKind.NAC
    out = []
    for g in enumerate_gluings(rule.rhs, constraint.premise, _rule_span(rule)):
        conclusions = []
        total = pruned = 0
        for q in constraint.conclusions:
            basic, fresh = _extend_conclusion(g, q, constraint.premise)
            candidates = [basic]
            for m in _merges(fresh, list(g.pattern.nodes)):
                candidates.append(_merge(basic, m))
                total += 1
            for cand in candidates:
                if is_satisfiable(cand):
                    conclusions.append(cand)
                else:
                    pruned += 1
        out.append(PostCondition(g, kind, g.pattern, tuple(conclusions), total, pruned))
    return out


@dataclass(frozen=True)
class TranslatedCondition:
    condition: ApplicationCondition
    lhs_map: dict  # rule LHS variable -> condition variable
    gluing: Gluing
    pruned: int = 0


def _assignments(rule: RefinedRule, lmap: Mapping[str, str]) -> tuple[dict, dict]:
    """State and weight values the RHS assigns, keyed by gluing link variable."""
    states, weights = {}, {}
    for c in rule.rhs.constraints:
        if isinstance(c, StateIn) and len(c.states) == 1:
            states[lmap[c.link]] = next(iter(c.states))
        elif isinstance(c, WeightCmp) and c.op == "=" and c.lhs.agg == "id" and len(c.lhs.terms) == 1 \
                and not c.lhs.terms[0].startswith(PARAM_PREFIX) and c.rhs.params():
            weights[lmap[c.lhs.terms[0]]] = c.rhs.terms[0]
    return states, weights


def _substitute(p: GraphPattern, rhs_cons: set, states: dict, weights: dict) -> list:
    out = []
    for c in p.constraints:
        if c in rhs_cons:
            continue
        if isinstance(c, StateIn) and c.link in states:
            if states[c.link] not in c.states:
                out.append(Falsum())
            continue
        if isinstance(c, WeightCmp) and any(x in weights for x in c.links()):
            c = c.rename(weights)
            if c.lhs == c.rhs and c.op in ("=", "<=", ">="):
                continue
            if c.lhs == c.rhs:
                out.append(Falsum())
                continue
        out.append(c)
    return out


def reverse_translate(rule: RefinedRule, post: PostCondition) -> TranslatedCondition:
    """Turn a post-condition over the RHS into an application condition over the LHS."""
    g = post.gluing
    lmap = g.left_map
    lhs_vars = set(rule.lhs.nodes) | set(rule.lhs.link_names)
    rhs_vars = set(rule.rhs.nodes) | set(rule.rhs.link_names)
    created = {lmap[v] for v in rhs_vars - lhs_vars}
    states, weights = _assignments(rule, lmap)
    rhs_cons = {c.rename(lmap) for c in rule.rhs.constraints}

    # names for variables only the LHS has (deleted by the rule)
    full = {v: lmap[v] for v in lhs_vars & rhs_vars}
    taken_nodes = set(post.premise.nodes) | {n for q in post.conclusions for n in q.nodes}
    for n in rule.lhs.nodes:
        if n not in full:
            full[n] = next(x for x in _LETTERS if x not in taken_nodes)
            taken_nodes.add(full[n])
    taken_links = set(post.premise.link_names) | {x for q in post.conclusions for x in q.link_names}
    deleted_links = []
    for lv in rule.lhs.links:
        if lv.name not in full:
            full[lv.name] = _link_name(full[lv.src], full[lv.tgt], taken_links)
            deleted_links.append(LinkVar(full[lv.name], full[lv.src], full[lv.tgt]))
    deleted_nodes = [full[n] for n in rule.lhs.nodes if n not in rhs_vars]
    lhs_cons = tuple(c.rename(full) for c in rule.lhs.constraints)

    def translate(p: GraphPattern) -> GraphPattern:
        cons = _substitute(p, rhs_cons, states, weights)
        links = [lv for lv in p.links if lv.name not in created]
        nodes = [n for n in p.nodes if n not in created]
        dangling = any(lv.src in created or lv.tgt in created for lv in links)
        if dangling:
            links = [lv for lv in links if lv.src not in created and lv.tgt not in created]
            cons = [c for c in cons if all(x in {lv.name for lv in links} for x in c.links())]
            cons.append(Falsum())
        cons = [c for c in cons if all(x not in created for x in c.links())]
        return GraphPattern(tuple(nodes) + tuple(deleted_nodes), tuple(links) + tuple(deleted_links),
                            tuple(cons) + lhs_cons)

    premise = translate(post.premise)
    conclusions = []
    pruned = 0
    for q in post.conclusions:
        tq = translate(q)
        if is_satisfiable(tq):
            conclusions.append(tq)
        else:
            pruned += 1
    name = f"{post.kind.value}_{rule.code},{g.index}"
    ac = ApplicationCondition(name, post.kind, premise, tuple(conclusions))
    return TranslatedCondition(ac, full, g, pruned)


# ---------------------------------------------------------------------------
# Categorization
# ---------------------------------------------------------------------------


class Category(enum.Enum):
    UNSATISFIABLE = "UNSATISFIABLE"
    PRESUMED_REDUNDANT = "PRESUMED_REDUNDANT"
    RESTRICTIVE = "RESTRICTIVE"


class BoundTooSmall(ValueError):
    pass


@dataclass
class DerivedCondition:
    rule_name: str
    constraint_name: str
    gluing_index: int
    gluing_label: str
    condition: ApplicationCondition
    category: Category
    lhs_map: dict = field(default_factory=dict)
    counterexample: Optional[Topology] = None
    binding: dict = field(default_factory=dict)  # rule LHS variables and parameters in the counterexample
    search_bound: Optional[int] = None


def _constraint_k(constraint: GraphConstraint) -> float:
    coefs = [e.coef for q in (constraint.premise,) + tuple(constraint.conclusions)
             for c in q.constraints if isinstance(c, WeightCmp) for e in (c.lhs, c.rhs)]
    return max([1.0] + coefs)


def weight_grid(k: float, eps: Optional[float] = None) -> list[Fraction]:
    kf = _frac(k)
    ef = _frac(eps) if eps is not None else kf / 10
    return sorted({Fraction(1), kf - ef, kf, kf + ef, kf * kf})


_STATE_CODE = {ACTIVE: 0, INACTIVE: 1, UNCLASSIFIED: 2}
_CODE_STATE = {v: s for s, v in _STATE_CODE.items()}


class _Encoder:
    """SMT encoding of a topology with at most ``n`` nodes and grid weights."""

    def __init__(self, n: int, grid: list):
        import z3
        self.z3 = z3
        self.n = n
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        self.E = {p: z3.Bool(f"e_{p[0]}_{p[1]}") for p in pairs}
        self.S = {p: z3.Int(f"s_{p[0]}_{p[1]}") for p in pairs}
        self.W = {p: z3.Real(f"w_{p[0]}_{p[1]}") for p in pairs}
        self.P: dict = {}
        self.gvals = [z3.RealVal(str(x)) for x in grid]
        self.base = []
        for p in pairs:
            self.base.append(z3.And(self.S[p] >= 0, self.S[p] <= 2))
            self.base.append(z3.Or([self.W[p] == v for v in self.gvals]))

    def param(self, name: str):
        if name not in self.P:
            self.P[name] = self.z3.Real(f"p_{name}")
        return self.P[name]

    def param_domain(self, names: Iterable[str]) -> list:
        z3 = self.z3
        return [z3.Or([self.param(n) == v for v in self.gvals]) for n in names]

    def _expr(self, e: WExpr, lm: Mapping):
        z3 = self.z3
        vals = [self.param(x[1:]) if x.startswith(PARAM_PREFIX) else self.W[lm[x]] for x in e.terms]
        coef = z3.RealVal(str(_frac(e.coef)))
        if not vals:
            return coef
        v = vals[0]
        for other in vals[1:]:
            v = z3.If(v <= other, v, other) if e.agg == "min" else z3.If(v >= other, v, other)
        return coef * v

    def pattern(self, p: GraphPattern, sigma: Mapping[str, int]):
        z3 = self.z3
        lm = {}
        for lv in p.links:
            pair = (sigma[lv.src], sigma[lv.tgt])
            if pair[0] == pair[1] or pair in lm.values():
                return z3.BoolVal(False)
            lm[lv.name] = pair
        conj = [self.E[pair] for pair in lm.values()]
        for c in p.constraints:
            if isinstance(c, Falsum):
                return z3.BoolVal(False)
            if isinstance(c, StateIn):
                conj.append(z3.Or([self.S[lm[c.link]] == _STATE_CODE[s] for s in c.states]))
            else:
                lhs, rhs = self._expr(c.lhs, lm), self._expr(c.rhs, lm)
                conj.append({"<": lhs < rhs, "<=": lhs <= rhs, "=": lhs == rhs,
                             ">=": lhs >= rhs, ">": lhs > rhs}[c.op])
        return z3.And(conj)

    def extensions(self, p: GraphPattern, sigma: Mapping[str, int]):
        free = [n for n in p.nodes if n not in sigma]
        used = set(sigma.values())
        for combo in itertools.permutations([i for i in range(self.n) if i not in used], len(free)):
            s = dict(sigma)
            s.update(zip(free, combo))
            yield s

    def holds_everywhere(self, c: GraphConstraint):
        z3 = self.z3
        out = []
        for sigma in self.extensions(c.premise, {}):
            prem = self.pattern(c.premise, sigma)
            if c.polarity is Polarity.NEGATIVE:
                out.append(z3.Not(prem))
            else:
                alts = [self.pattern(q, s2) for q in c.conclusions for s2 in self.extensions(q, sigma)]
                out.append(z3.Implies(prem, z3.Or(alts)))
        return z3.And(out)

    def condition_violated(self, ac: ApplicationCondition, sigma: Mapping[str, int]):
        z3 = self.z3
        parts = [self.pattern(ac.premise, sigma)]
        if ac.kind is ACKind.PAC:
            for q in ac.conclusions:
                for s2 in self.extensions(q, sigma):
                    parts.append(z3.Not(self.pattern(q, s2)))
        return z3.And(parts)

    def condition_holds_at(self, ac: ApplicationCondition, sigma: Mapping[str, int]):
        z3 = self.z3
        return z3.And([z3.Not(self.condition_violated(ac, s)) for s in self.extensions(ac.premise, sigma)])

    def topology(self, model, params: Iterable[str]) -> tuple[Topology, dict]:
        z3 = self.z3
        t = Topology()
        for i in range(self.n):
            t.add_node(i)
        for p, e in self.E.items():
            if z3.is_true(model.eval(e, model_completion=True)):
                w = model.eval(self.W[p], model_completion=True)
                s = model.eval(self.S[p], model_completion=True).as_long()
                t.add_link(p[0], p[1], float(Fraction(str(w.as_fraction()))), state=_CODE_STATE[s])
        values = {}
        for name in params:
            values[name] = float(model.eval(self.param(name), model_completion=True).as_fraction())
        return t, values


_ENCODERS: dict = {}


def _encoder(bound: int, grid: list, consistency: tuple) -> tuple[_Encoder, list]:
    """Encoder and weak-consistency formulas, cached per bound, grid and constraint set."""
    key = (bound, tuple(grid), consistency)
    hit = _ENCODERS.get(key)
    if hit is None:
        enc = _Encoder(bound, grid)
        hit = _ENCODERS[key] = (enc, enc.base + [enc.holds_everywhere(c) for c in consistency])
    return hit


def _search(rule: RefinedRule, tc: TranslatedCondition, consistency: Iterable[GraphConstraint],
            bound: int, grid: list):
    """Find a weakly consistent topology where the rule applies but the condition is violated."""
    ac = tc.condition
    params = list(dict.fromkeys(ac.premise.params() + tuple(
        p for q in ac.conclusions for p in q.params()) + tuple(rule.weight_params)))
    enc, formulas = _encoder(bound, grid, tuple(consistency))
    z3 = enc.z3
    sigma = {n: i for i, n in enumerate(ac.premise.nodes)}
    lhs_sigma = {v: sigma[tc.lhs_map[v]] for v in rule.lhs.nodes}
    solver = z3.Solver()
    solver.add(*formulas)
    solver.add(*enc.param_domain(params))
    for base_ac in rule.conditions:
        solver.add(enc.condition_holds_at(base_ac, lhs_sigma))
    solver.add(enc.condition_violated(ac, sigma))
    if solver.check() != z3.sat:
        return None
    t, pvals = enc.topology(solver.model(), params)
    binding = {v: sigma[tc.lhs_map[v]] for v in rule.lhs.nodes}
    for lv in rule.lhs.links:
        binding[lv.name] = t.link_between(binding[lv.src], binding[lv.tgt])
    binding.update({p: pvals[p] for p in rule.weight_params})
    return t, binding


def categorize(rule: RefinedRule, constraint: GraphConstraint, tc: TranslatedCondition,
               bound: int = 4, k: Optional[float] = None, eps: Optional[float] = None,
               consistency: Optional[Iterable[GraphConstraint]] = None) -> DerivedCondition:
    """Classify a derived condition as unsatisfiable, restrictive or presumed redundant.

    Restrictive means: some weakly consistent topology with at most ``bound``
    nodes admits an application of the rule that the condition blocks.
    """
    ac = tc.condition
    g = tc.gluing
    base = dict(rule_name=rule.name, constraint_name=constraint.name, gluing_index=g.index,
                gluing_label=g.label(), condition=ac, lhs_map=tc.lhs_map)
    if not is_satisfiable(g.pattern) or not is_satisfiable(ac.premise):
        return DerivedCondition(category=Category.UNSATISFIABLE, **base)
    if bound < len(ac.premise.nodes):
        raise BoundTooSmall(f"bound {bound} < {len(ac.premise.nodes)} premise nodes of {ac.name}")
    k = _constraint_k(constraint) if k is None else k
    if consistency is None:
        cs = builtin_constraints(k)
        consistency = (cs["active-link"], cs["inactive-link"])
    found = _search(rule, tc, consistency, bound, weight_grid(k, eps))
    if found is None:
        return DerivedCondition(category=Category.PRESUMED_REDUNDANT, search_bound=bound, **base)
    t, binding = found
    return DerivedCondition(category=Category.RESTRICTIVE, counterexample=t, binding=binding,
                            search_bound=bound, **base)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class RefinementReport:
    rule_name: str
    constraint_name: str
    k: float
    conditions: list

    @property
    def gluing_count(self) -> int:
        return len(self.conditions)

    def count(self, category: Category) -> int:
        return sum(1 for d in self.conditions if d.category is category)

    def tally(self) -> tuple[int, int, int]:
        return (self.gluing_count, self.count(Category.UNSATISFIABLE), self.count(Category.RESTRICTIVE))

    def rows(self) -> list[dict]:
        return [{
            "rule": d.rule_name, "constraint": d.constraint_name, "gluing": d.gluing_index,
            "overlap": d.gluing_label, "name": d.condition.name, "category": d.category.value,
            "condition": d.condition.render().replace("\n", " / "),
        } for d in self.conditions]

    def render(self) -> str:
        g, u, r = self.tally()
        lines = [f"refinement of {self.rule_name} against {self.constraint_name} (k={self.k})",
                 f"gluings: {g}  unsatisfiable: {u}  restrictive: {r}  "
                 f"presumed redundant: {self.count(Category.PRESUMED_REDUNDANT)}"]
        for d in self.conditions:
            lines.append(f"[{d.gluing_index}] {d.gluing_label}: {d.category.value}")
            lines.append("    " + d.condition.render().replace("\n", "\n    "))
            if d.counterexample is not None:
                links = " ".join(f"{l.src}->{l.tgt}:{l.weight:g}:{l.state.value}"
                                 for l in d.counterexample.links.values())
                lines.append(f"    counterexample: {links} at {d.binding}")
        return "\n".join(lines)


def refine(rule: RefinedRule, constraint: GraphConstraint, bound: int = 4, k: Optional[float] = None,
           eps: Optional[float] = None) -> RefinementReport:
    k = _constraint_k(constraint) if k is None else k
    derived = []
    for post in derive_postconditions(rule, constraint):
        tc = reverse_translate(rule, post)
        derived.append(categorize(rule, constraint, tc, bound, k, eps))
    return RefinementReport(rule.name, constraint.name, k, derived)


def replay_counterexample(rule: RefinedRule, constraint: GraphConstraint, d: DerivedCondition) -> tuple[bool, bool]:
    """(constraint violated after unrestricted application, rule blocked by the condition)."""
    assert d.counterexample is not None
    t = d.counterexample.copy()
    violated = isinstance(try_apply(rule, t, d.binding), Applied) and \
        not check_constraint(t, constraint).fulfilled
    guarded = RefinedRule(rule.name, rule.code, rule.lhs, rule.rhs, rule.effects, rule.parameters,
                          rule.weight_params, rule.pacs + ((d.condition,) if d.condition.kind is ACKind.PAC else ()),
                          rule.nacs + ((d.condition,) if d.condition.kind is ACKind.NAC else ()))
    blocked = isinstance(try_apply(guarded, d.counterexample.copy(), d.binding), Inapplicable)
    return violated, blocked


def equivalent_conditions(a: ApplicationCondition, a_lhs: Mapping[str, str],
                          b: ApplicationCondition, b_lhs: Mapping[str, str]) -> bool:
    """Whether two conditions are equal up to renaming, with LHS variables anchored.

    ``a_lhs``/``b_lhs`` map the rule's LHS node variables to each condition's names.
    """
    if a.kind is not b.kind or len(a.premise.nodes) != len(b.premise.nodes):
        return False
    anchor = {a_lhs[v]: b_lhs[v] for v in a_lhs if v in b_lhs}
    free_a = [n for n in a.premise.nodes if n not in anchor]
    free_b = [n for n in b.premise.nodes if n not in anchor.values()]
    for perm in itertools.permutations(free_b):
        m = dict(anchor)
        m.update(zip(free_a, perm))
        pa = _rename_nodes(a.premise, m)
        if _pattern_key(pa) != _pattern_key(_rename_nodes(b.premise, {n: n for n in b.premise.nodes})):
            continue
        if _conclusions_match(a, b, m):
            return True
    return False


def _conclusions_match(a: ApplicationCondition, b: ApplicationCondition, m: dict) -> bool:
    if len(a.conclusions) != len(b.conclusions):
        return False
    keys_b = []
    for q in b.conclusions:
        keys_b.append(_pattern_key(_rename_nodes(q, {n: n for n in q.nodes})))
    remaining = list(keys_b)
    for q in a.conclusions:
        extra_a = [n for n in q.nodes if n not in m]
        hit = None
        for qb in b.conclusions:
            extra_b = [n for n in qb.nodes if n not in m.values()]
            if len(extra_a) != len(extra_b):
                continue
            for perm in itertools.permutations(extra_b):
                mm = dict(m)
                mm.update(zip(extra_a, perm))
                key = _pattern_key(_rename_nodes(q, mm))
                if key in remaining:
                    hit = key
                    break
            if hit:
                break
        if hit is None:
            return False
        remaining.remove(hit)
    return True


TC_PAIRS = (
    ("unclassification", "inactive-link"), ("activation", "inactive-link"),
    ("inactivation", "inactive-link"), ("unclassification", "active-link"),
    ("activation", "active-link"), ("inactivation", "active-link"),
)
