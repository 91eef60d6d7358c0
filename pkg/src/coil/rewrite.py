"""Term-rewriting simplifier over CIN statements and expressions.

Rules live in an ordered registry so tests and users can extend them. They are
applied innermost-first, left-to-right, and repeated to fixpoint; every rule
either strictly shrinks the term or removes a loop/sieve, so fixpoint is
reached within a small multiple of the node count (guarded).

Absorbing elements deliberately outrank missing-propagation: 0 annihilates a
product even when another factor might be missing at runtime, and the
interpreter and dense oracle implement the same choice.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Tuple

from .cin import (
    Access,
    Assign,
    Cursor,
    Forall,
    Furl,
    Mod,
    Multi,
    PassStmt,
    Proto,
    Sieve,
    Stmt,
    Where,
    results,
)
from .expr import Call, Expr, Extent, Lit, Read, Search, Var, le
from .values import (
    MISSING,
    EvalError,
    PURE_OPS,
    additive_identity,
    apply_op,
    multiplicative_identity,
)

Rule = Tuple[str, Callable]


class RewriteError(Exception):
    pass


# -- generic traversal --------------------------------------------------------


def _map_expr_children(e: Expr, fn) -> Expr:
    if isinstance(e, Call):
        return Call(e.op, tuple(fn(a) for a in e.args))
    if isinstance(e, Access):
        base = fn(e.base) if isinstance(e.base, Expr) else e.base
        return Access(base, tuple(fn(i) for i in e.idx))
    if isinstance(e, Mod):
        return Mod(e.kind, tuple(fn(p) for p in e.params), fn(e.inner))
    if isinstance(e, Proto):
        return Proto(e.proto, fn(e.inner))
    return e


def _map_stmt_children(s: Stmt, fs, fe) -> Stmt:
    if isinstance(s, Assign):
        return Assign(fe(s.lhs), s.op, fe(s.rhs))
    if isinstance(s, Forall):
        ext = s.ext
        if ext is not None:
            ext = Extent(fe(ext.start), fe(ext.stop))
        return Forall(s.idx, ext, fs(s.body))
    if isinstance(s, Where):
        return Where(fs(s.cons), fs(s.prod), s.inits)
    if isinstance(s, Multi):
        return Multi(tuple(fs(p) for p in s.parts))
    if isinstance(s, Sieve):
        return Sieve(fe(s.cond), fs(s.body))
    return s


def node_count(n) -> int:
    total = 1
    if isinstance(n, Expr):
        if isinstance(n, Call):
            total += sum(node_count(a) for a in n.args)
        elif isinstance(n, Access):
            if isinstance(n.base, Expr):
                total += node_count(n.base)
            total += sum(node_count(i) for i in n.idx)
        elif isinstance(n, (Mod, Proto)):
            total += sum(node_count(c) for c in n.child_exprs())
        return total
    if isinstance(n, Assign):
        return 1 + node_count(n.lhs) + node_count(n.rhs)
    if isinstance(n, Forall):
        return 1 + node_count(n.body)
    if isinstance(n, Where):
        return 1 + node_count(n.cons) + node_count(n.prod)
    if isinstance(n, Multi):
        return 1 + sum(node_count(p) for p in n.parts)
    if isinstance(n, Sieve):
        return 1 + node_count(n.cond) + node_count(n.body)
    return 1


# -- the rules ----------------------------------------------------------------


def _is_lit(e, v) -> bool:
    if not isinstance(e, Lit):
        return False
    if isinstance(v, bool):
        return e.value is v
    return type(e.value) is type(v) and e.value == v


def _lit_missing(e) -> bool:
    return isinstance(e, Lit) and e.value is MISSING


def _zero_like(e) -> bool:
    if not isinstance(e, Lit):
        return False
    v = e.value
    return v is False or (isinstance(v, (int, float)) and not isinstance(v, bool) and v == 0)


def _one_like(e) -> bool:
    if not isinstance(e, Lit):
        return False
    v = e.value
    return v is True or (isinstance(v, (int, float)) and not isinstance(v, bool) and v == 1)


def r_constant_fold(n):
    if isinstance(n, Call) and n.op in PURE_OPS and n.op not in ("coalesce", "select"):
        if n.args and all(isinstance(a, Lit) for a in n.args):
            try:
                return Lit(apply_op(n.op, [a.value for a in n.args]))
            except EvalError:
                return None
    return None


def r_select_const(n):
    if isinstance(n, Call) and n.op == "select":
        c = n.args[0]
        if _lit_missing(c):
            return Lit(MISSING)
        if isinstance(c, Lit) and isinstance(c.value, bool):
            return n.args[1] if c.value else n.args[2]
    return None


def r_loop_over_pass(n):
    if isinstance(n, Forall) and isinstance(n.body, PassStmt):
        return n.body
    return None


def r_where_empty_pass(n):
    if isinstance(n, Where) and isinstance(n.prod, PassStmt) and not n.prod.tensors:
        return n.cons
    return None


def r_sieve_resolve(n):
    if isinstance(n, Sieve) and isinstance(n.cond, Lit):
        if n.cond.value is True:
            return n.body
        if n.cond.value is False:
            return PassStmt(results(n.body))
    return None


def r_add_flatten(n):
    if isinstance(n, Call) and n.op == "add":
        if any(isinstance(a, Call) and a.op == "add" for a in n.args):
            flat = []
            for a in n.args:
                if isinstance(a, Call) and a.op == "add":
                    flat.extend(a.args)
                else:
                    flat.append(a)
            return Call("add", tuple(flat))
    return None


def r_add_identity(n):
    if isinstance(n, Call) and n.op == "add":
        kept = tuple(a for a in n.args if not _zero_like(a))
        if len(kept) != len(n.args):
            if not kept:
                return Lit(0)
            if len(kept) == 1:
                return kept[0]
            return Call("add", kept)
        if len(n.args) == 1:
            return n.args[0]
    return None


def r_sub_normalize(n):
    if isinstance(n, Call) and n.op == "sub":
        return Call("add", (n.args[0], Call("neg", (n.args[1],))))
    return None


def r_neg_neg(n):
    if isinstance(n, Call) and n.op == "neg":
        a = n.args[0]
        if isinstance(a, Call) and a.op == "neg":
            return a.args[0]
    return None


def r_mul_flatten(n):
    if isinstance(n, Call) and n.op == "mul":
        if any(isinstance(a, Call) and a.op == "mul" for a in n.args):
            flat = []
            for a in n.args:
                if isinstance(a, Call) and a.op == "mul":
                    flat.extend(a.args)
                else:
                    flat.append(a)
            return Call("mul", tuple(flat))
    return None


def r_mul_annihilate(n):
    if isinstance(n, Call) and n.op == "mul":
        for a in n.args:
            if _zero_like(a):
                v = a.value
                return Lit(0.0 if isinstance(v, float) else 0)
    return None


def r_mul_identity(n):
    if isinstance(n, Call) and n.op == "mul":
        kept = tuple(a for a in n.args if not _one_like(a))
        if len(kept) != len(n.args):
            if not kept:
                return Lit(1)
            if len(kept) == 1:
                return kept[0]
            return Call("mul", kept)
        if len(n.args) == 1:
            return n.args[0]
    return None


def r_mul_neg_hoist(n):
    if isinstance(n, Call) and n.op == "mul":
        for k, a in enumerate(n.args):
            if isinstance(a, Call) and a.op == "neg":
                inner = n.args[:k] + (a.args[0],) + n.args[k + 1:]
                return Call("neg", (Call("mul", inner),))
    return None


def r_and(n):
    if isinstance(n, Call) and n.op == "and":
        if any(_is_lit(a, False) for a in n.args):
            return Lit(False)
        kept = tuple(a for a in n.args if not _is_lit(a, True))
        if not kept:
            return Lit(True)
        if len(kept) == 1:
            return kept[0]
        if len(kept) != len(n.args):
            return Call("and", kept)
    return None


def r_or(n):
    if isinstance(n, Call) and n.op == "or":
        if any(_is_lit(a, True) for a in n.args):
            return Lit(True)
        kept = tuple(a for a in n.args if not _is_lit(a, False))
        if not kept:
            return Lit(False)
        if len(kept) == 1:
            return kept[0]
        if len(kept) != len(n.args):
            return Call("or", kept)
    return None


def r_missing_propagate(n):
    if isinstance(n, Call) and n.op not in ("coalesce", "select"):
        if any(_lit_missing(a) for a in n.args):
            return Lit(MISSING)
    return None


def r_coalesce(n):
    if isinstance(n, Call) and n.op == "coalesce":
        kept = tuple(a for a in n.args if not _lit_missing(a))
        if not kept:
            return Lit(MISSING)
        if isinstance(kept[0], Lit):
            return kept[0]
        if len(kept) == 1:
            return kept[0]
        if len(kept) != len(n.args):
            return Call("coalesce", kept)
    return None


def r_access_missing_index(n):
    if isinstance(n, Access) and any(_lit_missing(i) for i in n.idx):
        return Lit(MISSING)
    return None


def r_access_const_base(n):
    """An access whose base collapsed to a scalar denotes a constant subtree."""
    if isinstance(n, Access) and isinstance(n.base, Lit):
        return n.base
    return None


def r_access_collapse_empty(n):
    """A fully-resolved access is just its scalar base."""
    if isinstance(n, Access) and not n.idx and isinstance(n.base, Expr):
        if not isinstance(n.base, (Cursor, Furl)):
            return n.base
    return None


def r_assign_identity(n):
    if isinstance(n, Assign) and isinstance(n.lhs.base, str):
        if n.op == "add" and isinstance(n.rhs, Lit) and additive_identity(n.rhs.value):
            return PassStmt((n.lhs.base,))
        if n.op == "or" and _is_lit(n.rhs, False):
            return PassStmt((n.lhs.base,))
        if n.op == "mul" and isinstance(n.rhs, Lit) and multiplicative_identity(n.rhs.value):
            return PassStmt((n.lhs.base,))
    return None


def _uses_index(e: Expr, idx: str) -> bool:
    if isinstance(e, Var):
        return e.name == idx
    if isinstance(e, Furl):
        return True  # conservative: unresolved structure may depend on any index
    if isinstance(e, Lit):
        return False
    if isinstance(e, Call):
        return any(_uses_index(a, idx) for a in e.args)
    if isinstance(e, Read):
        return any(_uses_index(i, idx) for i in e.idx)
    if isinstance(e, Search):
        return any(_uses_index(x, idx) for x in (e.lo, e.hi, e.key))
    if isinstance(e, Access):
        if isinstance(e.base, Expr) and _uses_index(e.base, idx):
            return True
        return any(_uses_index(i, idx) for i in e.idx)
    if isinstance(e, (Mod, Proto)):
        return any(_uses_index(c, idx) for c in e.child_exprs())
    if hasattr(e, "child_exprs"):
        return any(_uses_index(c, idx) for c in e.child_exprs())
    return False


def r_loop_invariant_update(n):
    """A loop repeating an invariant update collapses to a single update;
    repeated adds multiply by the trip count (stop - start + 1)."""
    if not (isinstance(n, Forall) and n.ext is not None and isinstance(n.body, Assign)):
        return None
    a = n.body
    if a.op not in ("add", "min", "max", "or"):
        return None
    if not isinstance(a.lhs.base, str):
        return None
    i = n.idx
    if _uses_index(a.rhs, i) or any(_uses_index(x, i) for x in a.lhs.idx):
        return None
    if a.op == "add":
        rhs = Call("mul", (a.rhs, n.ext.length_expr()))
    else:
        rhs = a.rhs
    from .expr import const_diff

    out = Assign(a.lhs, a.op, rhs)
    d = const_diff(n.ext.stop, n.ext.start)
    if d is not None:
        return out if d >= 0 else PassStmt(results(a))
    return Sieve(le(n.ext.start, n.ext.stop), out)


def r_multi_trivial(n):
    if isinstance(n, Multi):
        if len(n.parts) == 1:
            return n.parts[0]
        if all(isinstance(p, PassStmt) for p in n.parts):
            out = []
            for p in n.parts:
                for t in p.tensors:
                    if t not in out:
                        out.append(t)
            return PassStmt(tuple(out))
    return None


DEFAULT_RULES: List[Rule] = [
    ("constant_fold", r_constant_fold),
    ("select_const", r_select_const),
    ("loop_over_pass", r_loop_over_pass),
    ("where_empty_pass", r_where_empty_pass),
    ("sieve_resolve", r_sieve_resolve),
    ("add_flatten", r_add_flatten),
    ("add_identity", r_add_identity),
    ("sub_normalize", r_sub_normalize),
    ("neg_neg", r_neg_neg),
    ("mul_flatten", r_mul_flatten),
    ("mul_annihilate", r_mul_annihilate),
    ("mul_identity", r_mul_identity),
    ("mul_neg_hoist", r_mul_neg_hoist),
    ("and_rules", r_and),
    ("or_rules", r_or),
    ("missing_propagate", r_missing_propagate),
    ("coalesce_rules", r_coalesce),
    ("access_missing_index", r_access_missing_index),
    ("access_const_base", r_access_const_base),
    ("access_collapse_empty", r_access_collapse_empty),
    ("assign_identity", r_assign_identity),
    ("loop_invariant_update", r_loop_invariant_update),
    ("multi_trivial", r_multi_trivial),
]


class Ruleset:
    def __init__(self, rules: Optional[List[Rule]] = None):
        self.rules = list(DEFAULT_RULES if rules is None else rules)

    def add(self, name: str, fn: Callable) -> "Ruleset":
        self.rules.append((name, fn))
        return self

    def copy(self) -> "Ruleset":
        return Ruleset(list(self.rules))


def simplify(node, ruleset: Optional[Ruleset] = None):
    """Rewrite a statement or expression to fixpoint, innermost first."""
    rules = (ruleset or _DEFAULT).rules
    budget = [8 * node_count(node) + 64]

    def go(n):
        while True:
            if isinstance(n, Expr):
                n2 = _map_expr_children(n, go)
            elif isinstance(n, Stmt):
                n2 = _map_stmt_children(n, go, go)
            else:
                return n
            fired = None
            for _, rule in rules:
                out = rule(n2)
                if out is not None and out != n2:
                    fired = out
                    break
            if fired is None:
                return n2
            budget[0] -= 1
            if budget[0] < 0:
                raise RewriteError("simplification did not reach a fixpoint")
            n = fired

    return go(node)


_DEFAULT = Ruleset()
