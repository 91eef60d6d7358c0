"""Concrete index notation AST, pretty printer, and scope analyses.

Statements: assignment (with update operators), forall, where, multi, sieve,
pass. Accesses carry per-index protocol annotations and modifier chains
(window / offset / permit). During lowering, accesses are progressively
rewritten in place: tensor names become level cursors, and unfurled looplets
appear as Furl leaves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .expr import Call, Expr, Extent, Lit, Var, eq, print_expr, subst


class CinError(Exception):
    """Frontend diagnostic (syntax, binding, or scope errors)."""


# -- expression extensions ----------------------------------------------------


@dataclass(frozen=True)
class Access(Expr):
    """Tensor access; base is a tensor name until lowering installs cursors."""

    base: object
    idx: Tuple[Expr, ...]

    def subst_into(self, env):
        base = subst(self.base, env) if isinstance(self.base, Expr) else self.base
        return Access(base, tuple(subst(i, env) for i in self.idx))

    def child_exprs(self):
        out = list(self.idx)
        if isinstance(self.base, Expr):
            out.append(self.base)
        return out

    def pprint(self, prec=0):
        base = self.base if isinstance(self.base, str) else print_expr(self.base)
        return f"{base}[{', '.join(print_expr(i) for i in self.idx)}]"


@dataclass(frozen=True)
class Mod(Expr):
    """Index modifier applied around an index expression (innermost first)."""

    kind: str  # window | offset | permit
    params: Tuple[Expr, ...]
    inner: Expr

    def subst_into(self, env):
        return Mod(self.kind, tuple(subst(p, env) for p in self.params), subst(self.inner, env))

    def child_exprs(self):
        return list(self.params) + [self.inner]

    def pprint(self, prec=0):
        inner = print_expr(self.inner)
        if self.params:
            ps = ", ".join(print_expr(p) for p in self.params)
            return f"{self.kind}({ps})[{inner}]"
        return f"{self.kind}[{inner}]"


@dataclass(frozen=True)
class Proto(Expr):
    """Protocol annotation on an index use: i::gallop."""

    proto: str
    inner: Expr

    def subst_into(self, env):
        return Proto(self.proto, subst(self.inner, env))

    def child_exprs(self):
        return [self.inner]

    def pprint(self, prec=0):
        return f"{print_expr(self.inner)}::{self.proto}"


@dataclass(frozen=True)
class Cursor(Expr):
    """A fiber handle installed as an access base during lowering: the fiber at
    1-based position `pos` within level `depth` of `tensor`."""

    tensor: str
    depth: int
    pos: Expr

    def subst_into(self, env):
        return Cursor(self.tensor, self.depth, subst(self.pos, env))

    def child_exprs(self):
        return [self.pos]

    def pprint(self, prec=0):
        return f"{self.tensor}@{self.depth}<{print_expr(self.pos)}>"


_furl_tags = itertools.count(1)


@dataclass(frozen=True)
class Furl(Expr):
    """An unfurled looplet over `index`; tag identifies the node during passes."""

    looplet: object
    index: str
    tag: int = field(default_factory=lambda: next(_furl_tags))

    def subst_into(self, env):
        return self

    def child_exprs(self):
        return []

    def pprint(self, prec=0):
        return f"<furl#{self.tag}:{self.index}>"


# -- statements ---------------------------------------------------------------


class Stmt:
    __slots__ = ()


UPDATE_OPS = ("set", "add", "mul", "min", "max", "or")


@dataclass(frozen=True)
class Assign(Stmt):
    lhs: Access
    op: str
    rhs: Expr


@dataclass(frozen=True)
class Forall(Stmt):
    idx: str
    ext: Optional[Extent]
    body: Stmt


@dataclass(frozen=True)
class Where(Stmt):
    """consumer where producer; `inits` lists tensors whose init/finalize this
    statement owns (filled by assign_scopes)."""

    cons: Stmt
    prod: Stmt
    inits: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Multi(Stmt):
    parts: Tuple[Stmt, ...]


@dataclass(frozen=True)
class Sieve(Stmt):
    cond: Expr
    body: Stmt


@dataclass(frozen=True)
class PassStmt(Stmt):
    tensors: Tuple[str, ...]


# -- printer -------------------------------------------------------------------

_OP_TOKEN = {"set": "=", "add": "+=", "mul": "*=", "min": "<<min>>=",
             "max": "<<max>>=", "or": "<<or>>="}


def print_stmt(s: Stmt) -> str:
    if isinstance(s, Assign):
        return f"{s.lhs.pprint()} {_OP_TOKEN[s.op]} {print_expr(s.rhs)}"
    if isinstance(s, Forall):
        chain = []
        cur = s
        while isinstance(cur, Forall) and cur.ext is None:
            chain.append(cur.idx)
            cur = cur.body
        if chain:
            return f"@V {' '.join(chain)} {_wrap(cur)}"
        ext = f" in {print_expr(s.ext.start)}:{print_expr(s.ext.stop)}"
        return f"@V {s.idx}{ext} {_wrap(s.body)}"
    if isinstance(s, Where):
        return f"({print_stmt(s.cons)}) where ({print_stmt(s.prod)})"
    if isinstance(s, Multi):
        return "@multi { " + "; ".join(print_stmt(p) for p in s.parts) + " }"
    if isinstance(s, Sieve):
        return f"@sieve {print_expr(s.cond)} {_wrap(s.body)}"
    if isinstance(s, PassStmt):
        return "@pass" + "".join(f" {t}" for t in s.tensors)
    raise TypeError(f"cannot print {s!r}")


def _wrap(s: Stmt) -> str:
    text = print_stmt(s)
    if isinstance(s, Multi):
        return text
    return f"({text})"


# -- structural helpers --------------------------------------------------------


def map_exprs(s: Stmt, fn) -> Stmt:
    """Rebuild a statement with fn applied to every top-level expression."""
    if isinstance(s, Assign):
        lhs = fn(s.lhs)
        return Assign(lhs, s.op, fn(s.rhs))
    if isinstance(s, Forall):
        ext = s.ext
        if ext is not None:
            ext = Extent(fn(ext.start), fn(ext.stop))
        return Forall(s.idx, ext, map_exprs(s.body, fn))
    if isinstance(s, Where):
        return Where(map_exprs(s.cons, fn), map_exprs(s.prod, fn), s.inits)
    if isinstance(s, Multi):
        return Multi(tuple(map_exprs(p, fn) for p in s.parts))
    if isinstance(s, Sieve):
        return Sieve(fn(s.cond), map_exprs(s.body, fn))
    if isinstance(s, PassStmt):
        return s
    raise TypeError(f"cannot map {s!r}")


def walk_exprs(s: Stmt):
    if isinstance(s, Assign):
        yield s.lhs
        yield s.rhs
    elif isinstance(s, Forall):
        if s.ext is not None:
            yield s.ext.start
            yield s.ext.stop
        yield from walk_exprs(s.body)
    elif isinstance(s, Where):
        yield from walk_exprs(s.cons)
        yield from walk_exprs(s.prod)
    elif isinstance(s, Multi):
        for p in s.parts:
            yield from walk_exprs(p)
    elif isinstance(s, Sieve):
        yield s.cond
        yield from walk_exprs(s.body)


def subexprs(e: Expr):
    yield e
    if isinstance(e, Call):
        for a in e.args:
            yield from subexprs(a)
    elif isinstance(e, Access):
        if isinstance(e.base, Expr):
            yield from subexprs(e.base)
        for i in e.idx:
            yield from subexprs(i)
    elif isinstance(e, (Mod, Proto)):
        for a in e.child_exprs():
            yield from subexprs(a)


def results(s: Stmt) -> Tuple[str, ...]:
    """The tensors a statement returns."""
    if isinstance(s, Assign):
        base = s.lhs.base
        return (base,) if isinstance(base, str) else ()
    if isinstance(s, (Forall, Sieve)):
        return results(s.body)
    if isinstance(s, Where):
        return results(s.cons)
    if isinstance(s, Multi):
        out = []
        for p in s.parts:
            for t in results(p):
                if t not in out:
                    out.append(t)
        return tuple(out)
    if isinstance(s, PassStmt):
        return s.tensors
    raise TypeError(f"no results for {s!r}")


def written_tensors(s: Stmt) -> Tuple[str, ...]:
    out = []
    if isinstance(s, Assign):
        if isinstance(s.lhs.base, str):
            out.append(s.lhs.base)
    elif isinstance(s, (Forall, Sieve)):
        out.extend(written_tensors(s.body))
    elif isinstance(s, Where):
        out.extend(written_tensors(s.cons))
        out.extend(written_tensors(s.prod))
    elif isinstance(s, Multi):
        for p in s.parts:
            out.extend(written_tensors(p))
    dedup = []
    for t in out:
        if t not in dedup:
            dedup.append(t)
    return tuple(dedup)


# -- scope analysis ------------------------------------------------------------


def assign_scopes(s: Stmt):
    """Mark each Where with the tensors it initializes/finalizes.

    A result tensor is owned by the outermost where that has it on the
    producer (right-hand) side; everything else initializes at program start.
    Returns (annotated statement, program-start tensors).
    """
    seen: set = set()

    def visit(node: Stmt) -> Stmt:
        if isinstance(node, Where):
            owned = tuple(t for t in results(node.prod) if t not in seen)
            seen.update(owned)
            prod = visit(node.prod)
            cons = visit(node.cons)
            return Where(cons, prod, owned)
        if isinstance(node, Forall):
            return Forall(node.idx, node.ext, visit(node.body))
        if isinstance(node, Sieve):
            return Sieve(node.cond, visit(node.body))
        if isinstance(node, Multi):
            parts = tuple(visit(p) for p in node.parts)
            claimed: dict = {}
            for p in node.parts:
                for t in written_tensors(p):
                    if t in claimed and claimed[t] is not p:
                        raise CinError(
                            f"tensor {t!r} written in two parallel branches without a where")
                    claimed[t] = p
            return Multi(parts)
        return node

    annotated = visit(s)
    root = tuple(t for t in (results(s) + written_tensors(s)) if t not in seen)
    dedup = []
    for t in root:
        if t not in dedup:
            dedup.append(t)
    return annotated, tuple(dedup)


def result_scopes(s: Stmt) -> dict:
    """tensor -> ('program',) or ('where', printed producer) init/finalize point."""
    annotated, root = assign_scopes(s)
    scopes = {t: ("program",) for t in root}

    def visit(node):
        if isinstance(node, Where):
            for t in node.inits:
                scopes[t] = ("where", print_stmt(node.prod))
            visit(node.prod)
            visit(node.cons)
        elif isinstance(node, (Forall, Sieve)):
            visit(node.body)
        elif isinstance(node, Multi):
            for p in node.parts:
                visit(p)

    visit(annotated)
    return scopes


# -- extent inference ------------------------------------------------------------


def _index_constraints(use: Expr, lo: Expr, hi: Expr, out: dict, strong: bool):
    """Record candidate extents for the index at the core of a use."""
    if isinstance(use, Var) and not use.name.startswith("$"):
        out.setdefault(use.name, []).append((Extent(lo, hi), strong))
        return
    if isinstance(use, Proto):
        _index_constraints(use.inner, lo, hi, out, strong)
        return
    if isinstance(use, Mod):
        from .expr import iadd, isub, ONE

        if use.kind == "window":
            a, b = use.params
            _index_constraints(use.inner, Lit(1), iadd(isub(b, a), ONE), out, strong)
        elif use.kind == "offset":
            d = use.params[0]
            _index_constraints(use.inner, iadd(lo, d), iadd(hi, d), out, strong)
        elif use.kind == "permit":
            _index_constraints(use.inner, lo, hi, out, False)
        return
    # opaque index expression: no constraint


def _gather_constraints(s: Stmt, dims: dict, out: dict, strict: bool = True):
    for e in walk_exprs(s):
        for sub in subexprs(e):
            if isinstance(sub, Access) and isinstance(sub.base, str):
                if sub.base not in dims:
                    if strict:
                        raise CinError(f"kernel references unbound tensor {sub.base!r}")
                    continue
                ds = dims[sub.base]
                if len(sub.idx) != len(ds):
                    raise CinError(
                        f"tensor {sub.base!r} has rank {len(ds)}, accessed with "
                        f"{len(sub.idx)} indices")
                for k, use in enumerate(sub.idx):
                    _index_constraints(use, Lit(1), Lit(ds[k]), out, True)


def _param_only(ext: Extent) -> bool:
    from .expr import free_vars

    return all(v.startswith("$") for v in free_vars(ext.start) | free_vars(ext.stop))


def annotate_extents(s: Stmt, dims: dict, strict: bool = True) -> Stmt:
    """Fill in inferred extents for foralls without explicit bounds.

    The extent of an index comes from the dimensions of the tensor modes it
    addresses; all non-permit uses must agree. Permit-wrapped uses are weak
    fallbacks (permit lifts the bounds restriction).
    """
    constraints: dict = {}
    _gather_constraints(s, dims, constraints, strict)

    def pick(idx: str) -> Optional[Extent]:
        cands = constraints.get(idx, [])
        for tier in (True, False):
            tiered = [e for e, strong in cands if strong == tier]
            pref = [e for e in tiered if _param_only(e)] or tiered
            if pref:
                first = pref[0]
                for other in pref[1:]:
                    if other != first:
                        raise CinError(
                            f"index {idx!r} has conflicting extents {first} and {other}")
                return first
        if not strict:
            return None
        raise CinError(f"cannot infer an extent for index {idx!r}")

    def visit(node: Stmt) -> Stmt:
        if isinstance(node, Forall):
            ext = node.ext if node.ext is not None else pick(node.idx)
            return Forall(node.idx, ext, visit(node.body))
        if isinstance(node, Where):
            return Where(visit(node.cons), visit(node.prod), node.inits)
        if isinstance(node, Multi):
            return Multi(tuple(visit(p) for p in node.parts))
        if isinstance(node, Sieve):
            return Sieve(node.cond, visit(node.body))
        return node

    return visit(s)


# -- binder audit ---------------------------------------------------------------


def check_bindings(s: Stmt, bound: Optional[set] = None, all_seen: Optional[set] = None):
    """Every index is bound exactly once and every use is under its binder."""
    if bound is None:
        bound = set()
        all_seen = set()
    if isinstance(s, Forall):
        if s.idx in all_seen:
            raise CinError(f"index {s.idx!r} bound more than once")
        all_seen.add(s.idx)
        check_bindings(s.body, bound | {s.idx}, all_seen)
        return
    if isinstance(s, (Sieve,)):
        _check_expr_bound(s.cond, bound)
        check_bindings(s.body, bound, all_seen)
        return
    if isinstance(s, Assign):
        _check_expr_bound(s.lhs, bound)
        _check_expr_bound(s.rhs, bound)
        return
    if isinstance(s, Where):
        check_bindings(s.cons, bound, all_seen)
        check_bindings(s.prod, bound, all_seen)
        return
    if isinstance(s, Multi):
        for p in s.parts:
            check_bindings(p, bound, all_seen)
        return
    if isinstance(s, PassStmt):
        return
    raise TypeError(f"cannot audit {s!r}")


def _check_expr_bound(e: Expr, bound: set):
    for sub in subexprs(e):
        if isinstance(sub, Var) and not sub.name.startswith("$") and sub.name not in bound:
            raise CinError(f"unbound index {sub.name!r}")


# -- scatter normalization -------------------------------------------------------


def _is_plain_index(e: Expr) -> bool:
    if isinstance(e, (Var, Lit)):
        return True
    if isinstance(e, (Mod, Proto)):
        return _is_plain_index(e.inner)
    return False


def _fresh_index(used: set) -> str:
    for name in "jklmnpqruvw":
        if name not in used:
            used.add(name)
            return name
    for n in itertools.count(1):
        name = f"j{n}"
        if name not in used:
            used.add(name)
            return name
    raise AssertionError


def normalize_scatter(s: Stmt, dims: Optional[dict] = None) -> Stmt:
    """Rewrite opaque read indices into fresh sieved loops:

        @V i A[i] = B[f(i)]   ->   @V i j @sieve j == f(i) (A[i] = B[j])
    """
    used = set()

    def collect_names(node):
        if isinstance(node, Forall):
            used.add(node.idx)
            collect_names(node.body)
        elif isinstance(node, (Sieve,)):
            collect_names(node.body)
        elif isinstance(node, Where):
            collect_names(node.cons)
            collect_names(node.prod)
        elif isinstance(node, Multi):
            for p in node.parts:
                collect_names(p)

    collect_names(s)

    def visit(node: Stmt) -> Stmt:
        if isinstance(node, Assign):
            return _rewrite_assign(node, used)
        if isinstance(node, Forall):
            return Forall(node.idx, node.ext, visit(node.body))
        if isinstance(node, Sieve):
            return Sieve(node.cond, visit(node.body))
        if isinstance(node, Where):
            return Where(visit(node.cons), visit(node.prod), node.inits)
        if isinstance(node, Multi):
            return Multi(tuple(visit(p) for p in node.parts))
        return node

    return visit(s)


def _rewrite_assign(a: Assign, used: set) -> Stmt:
    fresh: list = []  # (sym, replaced expr) in source order

    def fix_index(e: Expr) -> Expr:
        if _is_plain_index(e):
            return e
        if isinstance(e, Mod):
            return Mod(e.kind, e.params, fix_index(e.inner))
        if isinstance(e, Proto):
            return Proto(e.proto, fix_index(e.inner))
        sym = _fresh_index(used)
        fresh.append((sym, e))
        return Var(sym)

    def fix_expr(e: Expr) -> Expr:
        if isinstance(e, Access):
            return Access(e.base, tuple(fix_index(i) for i in e.idx))
        if isinstance(e, Call):
            return Call(e.op, tuple(fix_expr(x) for x in e.args))
        return e

    rhs = fix_expr(a.rhs)
    if not fresh:
        return a
    out: Stmt = Assign(a.lhs, a.op, rhs)
    for sym, e in reversed(fresh):
        out = Sieve(eq(Var(sym), e), out)
    for sym, _ in reversed(fresh):
        out = Forall(sym, None, out)
    return out
