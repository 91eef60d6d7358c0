"""Deterministic interpreter for the target IR, with operation counters.

Buffers hold flat value lists addressed 1-based. Writers realize output
tensors: dense writers are plain buffers, append writers (sparse list /
run-length) accept ascending-index writes and seal their position structure
on finalize.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .expr import Call, Expr, Lit, Read, Search, Var
from .target import (
    AssignVar,
    Block,
    BufferWrite,
    CallStmt,
    For,
    IfChain,
    Let,
    Nop,
    TargetStmt,
    While,
)
from .values import MISSING, EvalError, apply_op, coerce, value_repr


class InterpError(Exception):
    pass


@dataclass
class ExecCounters:
    loop_iterations: int = 0
    buffer_reads: int = 0
    buffer_writes: int = 0
    multiplies: int = 0
    adds: int = 0
    searches: int = 0
    compares: int = 0
    reads_by_buffer: Dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "loop_iterations": self.loop_iterations,
            "buffer_reads": self.buffer_reads,
            "buffer_writes": self.buffer_writes,
            "multiplies": self.multiplies,
            "adds": self.adds,
            "searches": self.searches,
            "compares": self.compares,
            "reads_by_buffer": dict(sorted(self.reads_by_buffer.items())),
        }


class Buf:
    """Flat 1-based value buffer with a dtype used to coerce writes."""

    __slots__ = ("name", "data", "dtype")

    def __init__(self, name: str, data: List, dtype: Optional[str] = None):
        self.name = name
        self.data = list(data)
        self.dtype = dtype

    def get(self, i: int):
        if not isinstance(i, int) or isinstance(i, bool) or not (1 <= i <= len(self.data)):
            raise InterpError(f"out-of-bounds read {self.name}[{i}] (size {len(self.data)})")
        return self.data[i - 1]

    def set(self, i: int, v):
        if not (1 <= i <= len(self.data)):
            raise InterpError(f"out-of-bounds write {self.name}[{i}] (size {len(self.data)})")
        self.data[i - 1] = v

    def __len__(self):
        return len(self.data)


_CMP = {"eq", "ne", "lt", "le", "gt", "ge", "min", "max"}


class Scope:
    __slots__ = ("frames",)

    def __init__(self, base: Optional[dict] = None):
        self.frames = [dict(base or {})]

    def push(self):
        self.frames.append({})

    def pop(self):
        self.frames.pop()

    def lookup(self, name: str):
        for fr in reversed(self.frames):
            if name in fr:
                return fr[name]
        raise InterpError(f"unbound symbol {name!r}")

    def define(self, name: str, v):
        self.frames[-1][name] = v

    def assign(self, name: str, v):
        for fr in reversed(self.frames):
            if name in fr:
                fr[name] = v
                return
        raise InterpError(f"assignment to undeclared variable {name!r}")


class Machine:
    def __init__(self, buffers: Dict[str, Buf], params: Optional[dict] = None,
                 writers: Optional[dict] = None, trace: bool = False):
        self.buffers = buffers
        self.vars = Scope(params)
        self.writers = writers or {}
        self.counters = ExecCounters()
        self.trace: Optional[List] = [] if trace else None

    # -- expressions ------------------------------------------------------

    def eval(self, e: Expr):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Var):
            return self.vars.lookup(e.name)
        if isinstance(e, Read):
            if e.buf not in self.buffers:
                raise InterpError(f"unknown buffer {e.buf!r}")
            if len(e.idx) != 1:
                raise InterpError(f"buffer read of {e.buf} must be linearized")
            i = self.eval(e.idx[0])
            v = self.buffers[e.buf].get(i)
            self.counters.buffer_reads += 1
            rb = self.counters.reads_by_buffer
            rb[e.buf] = rb.get(e.buf, 0) + 1
            return v
        if isinstance(e, Search):
            buf = self.buffers[e.buf]
            lo, hi, key = self.eval(e.lo), self.eval(e.hi), self.eval(e.key)
            self.counters.searches += 1
            a, b = lo, hi + 1
            while a < b:
                mid = (a + b) // 2
                if buf.get(mid) >= key:
                    b = mid
                else:
                    a = mid + 1
            return a
        if isinstance(e, Call):
            return self._call(e)
        raise InterpError(f"cannot evaluate {e!r}")

    def _call(self, e: Call):
        op = e.op
        if op == "select":
            c = self.eval(e.args[0])
            if c is MISSING:
                return MISSING
            if not isinstance(c, bool):
                raise InterpError(f"select condition must be boolean, got {value_repr(c)}")
            return self.eval(e.args[1] if c else e.args[2])
        if op in ("and", "or"):
            halt = False if op == "and" else True
            saw_missing = False
            for a in e.args:
                v = self.eval(a)
                if v is halt:
                    return halt
                if v is MISSING:
                    saw_missing = True
                elif not isinstance(v, bool):
                    raise InterpError(f"{op} over non-boolean {value_repr(v)}")
            return MISSING if saw_missing else (not halt)
        args = [self.eval(a) for a in e.args]
        try:
            v = apply_op(op, args)
        except EvalError as ex:
            raise InterpError(str(ex)) from None
        n = len(args)
        if op == "mul":
            self.counters.multiplies += n - 1
        elif op == "add":
            self.counters.adds += n - 1
        elif op == "sub":
            self.counters.adds += 1
        elif op in _CMP:
            self.counters.compares += max(n - 1, 1) if op in ("min", "max") else 1
        if self.trace is not None:
            self.trace.append((op, n))
        return v

    # -- statements -------------------------------------------------------

    def exec(self, s: TargetStmt):
        if isinstance(s, Nop):
            return
        if isinstance(s, Block):
            for x in s.stmts:
                self.exec(x)
            return
        if isinstance(s, Let):
            self.vars.define(s.name, self.eval(s.value))
            return
        if isinstance(s, AssignVar):
            self.vars.assign(s.name, self.eval(s.value))
            return
        if isinstance(s, BufferWrite):
            self._write(s)
            return
        if isinstance(s, For):
            lo, hi = self.eval(s.lo), self.eval(s.hi)
            if not isinstance(lo, int) or not isinstance(hi, int):
                raise InterpError("for bounds must be integers")
            for i in range(lo, hi + 1):
                self.counters.loop_iterations += 1
                self.vars.push()
                self.vars.define(s.var, i)
                try:
                    self.exec(s.body)
                finally:
                    self.vars.pop()
            return
        if isinstance(s, While):
            prev_cursor = None
            while True:
                c = self.eval(s.cond)
                if c is MISSING or not isinstance(c, bool):
                    raise InterpError("while condition must be boolean")
                if not c:
                    return
                self.counters.loop_iterations += 1
                if s.cursor is not None:
                    cur = self.vars.lookup(s.cursor)
                    if prev_cursor is not None and not cur > prev_cursor:
                        raise InterpError(
                            f"loop cursor {s.cursor!r} did not advance (stuck at {cur})")
                    prev_cursor = cur
                self.vars.push()
                try:
                    self.exec(s.body)
                finally:
                    self.vars.pop()
        if isinstance(s, IfChain):
            for cond, body in s.cases:
                c = self.eval(cond)
                if c is MISSING:
                    raise InterpError("missing value in branch condition")
                if not isinstance(c, bool):
                    raise InterpError("branch condition must be boolean")
                if c:
                    self.vars.push()
                    try:
                        self.exec(body)
                    finally:
                        self.vars.pop()
                    return
            if s.orelse is not None:
                self.vars.push()
                try:
                    self.exec(s.orelse)
                finally:
                    self.vars.pop()
            return
        if isinstance(s, CallStmt):
            self._hook(s)
            return
        raise InterpError(f"cannot execute {s!r}")

    def _write(self, s: BufferWrite):
        if len(s.idx) != 1:
            raise InterpError("buffer writes must be linearized")
        buf = self.buffers[s.buf]
        i = self.eval(s.idx[0])
        v = self.eval(s.value)
        if v is MISSING:
            raise InterpError(f"missing value reached a write to {s.buf}")
        if buf.dtype is not None:
            try:
                v = coerce(buf.dtype, v)
            except EvalError as ex:
                raise InterpError(str(ex)) from None
        if s.op == "set":
            buf.set(i, v)
        else:
            old = buf.get(i)
            buf.set(i, apply_op(s.op, [old, v]))
        self.counters.buffer_writes += 1

    def _hook(self, s: CallStmt):
        tensor, _, action = s.fn.partition(".")
        writer = self.writers.get(tensor)
        if writer is None:
            raise InterpError(f"no writer bound for output {tensor!r}")
        args = [self.eval(a) for a in s.args]
        if action == "init":
            writer.init()
        elif action == "finalize":
            writer.finalize()
        elif action.startswith("append_"):
            if any(a is MISSING for a in args):
                raise InterpError(f"missing value reached a write to {tensor}")
            writer.append(args[:-1], action[len("append_"):], args[-1])
            self.counters.buffer_writes += 1
        elif action == "run_set":
            if args[-1] is MISSING:
                raise InterpError(f"missing value reached a write to {tensor}")
            writer.run_set(args[:-3], args[-3], args[-2], args[-1])
            self.counters.buffer_writes += 1
        else:
            raise InterpError(f"unknown writer hook {s.fn!r}")


def run_program(prog: TargetStmt, buffers: Dict[str, Buf], params: Optional[dict] = None,
                writers: Optional[dict] = None, trace: bool = False) -> Machine:
    m = Machine(buffers, params=params, writers=writers, trace=trace)
    m.exec(prog)
    return m
