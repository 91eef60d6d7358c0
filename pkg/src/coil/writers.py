"""Runtime output writers: dense buffers plus ascending-append sparse-list and
run-length writers. Append writers merge repeated writes to the same index,
pad gaps with fill, and seal their position structure on finalize."""

from __future__ import annotations

from typing import Dict

from .interp import Buf, InterpError
from .storage import (
    Dense,
    Element,
    RepeatRLE,
    SparseList,
    Tensor,
)
from .unfurl import WriterPlan
from .values import apply_op, coerce


def _combine(op: str, old, new):
    if op == "set":
        return new
    return apply_op(op, [old, new])


class Writer:
    def __init__(self, plan: WriterPlan):
        self.plan = plan
        self.buffers: Dict[str, Buf] = {}

    def init(self):
        raise NotImplementedError

    def finalize(self):
        pass

    def append(self, idx, op, value):
        raise InterpError(f"output {self.plan.name} does not accept appends")

    def run_set(self, prefix, lo, hi, value):
        raise InterpError(f"output {self.plan.name} does not accept run writes")

    def freeze(self) -> Tensor:
        raise NotImplementedError

    def _nfibers(self) -> int:
        n = 1
        for d in self.plan.dims[:-1]:
            n *= d
        return n

    def _prefix_pos(self, prefix) -> int:
        pos = 0
        for k, i in enumerate(prefix):
            d = self.plan.dims[k]
            if not (1 <= i <= d):
                raise InterpError(f"write index {i} out of bounds for {self.plan.name}")
            pos = pos * d + (i - 1)
        return pos + 1

    def _wrap_dense(self, leaf) -> Tensor:
        dims = self.plan.dims
        lvl = leaf
        outer = dims[:-1] if not isinstance(leaf, Element) else dims
        for d in reversed(outer):
            lvl = Dense(d, lvl)
        return Tensor(self.plan.name, list(dims), lvl, self.plan.fill, self.plan.dtype)


class DenseWriter(Writer):
    def __init__(self, plan: WriterPlan):
        super().__init__(plan)
        n = 1
        for d in plan.dims:
            n *= d
        self.buffers[plan.valbuf] = Buf(plan.valbuf, [plan.fill] * n, plan.dtype)

    def init(self):
        buf = self.buffers[self.plan.valbuf]
        for k in range(len(buf.data)):
            buf.data[k] = self.plan.fill

    def freeze(self) -> Tensor:
        leaf = Element(list(self.buffers[self.plan.valbuf].data))
        dims = self.plan.dims
        lvl = leaf
        for d in reversed(dims):
            lvl = Dense(d, lvl)
        return Tensor(self.plan.name, list(dims), lvl, self.plan.fill, self.plan.dtype)


class SparseListWriter(Writer):
    """Ascending-index append into the last mode; dense outer modes."""

    def __init__(self, plan: WriterPlan):
        super().__init__(plan)
        p = plan.name
        self.posb = Buf(f"{p}_pos", [], None)
        self.idxb = Buf(f"{p}_idx", [], None)
        self.valb = Buf(f"{p}_val", [], plan.dtype)
        self.buffers = {b.name: b for b in (self.posb, self.idxb, self.valb)}
        self.init()

    def init(self):
        self.posb.data[:] = [1]
        self.idxb.data[:] = []
        self.valb.data[:] = []
        self.cur_fiber = 1
        self.fiber_base = 0  # entries before the current fiber

    def _advance_to(self, f: int):
        if f < self.cur_fiber:
            raise InterpError(
                f"non-ascending write to append-only output {self.plan.name}")
        while self.cur_fiber < f:
            self.posb.data.append(len(self.idxb.data) + 1)
            self.cur_fiber += 1
            self.fiber_base = len(self.idxb.data)

    def append(self, idx, op, value):
        f = self._prefix_pos(idx[:-1])
        i = idx[-1]
        size = self.plan.dims[-1]
        if not (1 <= i <= size):
            raise InterpError(f"write index {i} out of bounds for {self.plan.name}")
        self._advance_to(f)
        value = coerce(self.plan.dtype, value)
        have = len(self.idxb.data) > self.fiber_base
        last = self.idxb.data[-1] if have else 0
        if have and i == last:
            self.valb.data[-1] = coerce(self.plan.dtype,
                                        _combine(op, self.valb.data[-1], value))
        elif i > last:
            self.idxb.data.append(i)
            self.valb.data.append(coerce(self.plan.dtype,
                                         _combine(op, self.plan.fill, value)))
        else:
            raise InterpError(
                f"non-ascending write to append-only output {self.plan.name}")

    def finalize(self):
        nf = self._nfibers()
        while self.cur_fiber <= nf:
            self.posb.data.append(len(self.idxb.data) + 1)
            self.cur_fiber += 1
        self.cur_fiber = nf + 1

    def freeze(self) -> Tensor:
        self.finalize()
        leaf = SparseList(self.plan.dims[-1], list(self.posb.data), list(self.idxb.data),
                          Element(list(self.valb.data)))
        return self._wrap_dense(leaf)


class RLEWriter(Writer):
    """Run-coalescing ascending writer; accepts whole-run writes."""

    def __init__(self, plan: WriterPlan):
        super().__init__(plan)
        p = plan.name
        self.posb = Buf(f"{p}_pos", [], None)
        self.idxb = Buf(f"{p}_idx", [], None)
        self.valb = Buf(f"{p}_val", [], plan.dtype)
        self.buffers = {b.name: b for b in (self.posb, self.idxb, self.valb)}
        self.init()

    def init(self):
        self.posb.data[:] = [1]
        self.idxb.data[:] = []
        self.valb.data[:] = []
        self.cur_fiber = 1
        self.fiber_base = 0
        self.last_end = 0

    def _push_run(self, end: int, value):
        have = len(self.idxb.data) > self.fiber_base
        if have and self.valb.data[-1] == value and type(self.valb.data[-1]) is type(value):
            self.idxb.data[-1] = end
        else:
            self.idxb.data.append(end)
            self.valb.data.append(value)
        self.last_end = end

    def _seal_fiber(self):
        size = self.plan.dims[-1]
        if self.last_end < size:
            self._push_run(size, self.plan.fill)
        self.posb.data.append(len(self.idxb.data) + 1)
        self.cur_fiber += 1
        self.fiber_base = len(self.idxb.data)
        self.last_end = 0

    def _advance_to(self, f: int):
        if f < self.cur_fiber:
            raise InterpError(
                f"non-ascending write to append-only output {self.plan.name}")
        while self.cur_fiber < f:
            self._seal_fiber()

    def append(self, idx, op, value):
        self.run_set(idx[:-1], idx[-1], idx[-1], value, op=op)

    def run_set(self, prefix, lo: int, hi: int, value, op: str = "set"):
        f = self._prefix_pos(prefix)
        size = self.plan.dims[-1]
        if not (1 <= lo <= hi <= size):
            raise InterpError(
                f"run write {lo}:{hi} out of bounds for {self.plan.name}")
        self._advance_to(f)
        value = coerce(self.plan.dtype, value)
        if lo <= self.last_end:
            if op == "set" or lo != self.last_end or lo != hi:
                raise InterpError(
                    f"non-ascending write to append-only output {self.plan.name}")
            # combining update at the most recent index: split the run if needed
            prev = self.valb.data[-1]
            prev_end = (self.idxb.data[-2]
                        if len(self.idxb.data) > self.fiber_base + 1 else 0)
            if self.idxb.data[-1] - prev_end == 1:
                self.valb.data[-1] = coerce(self.plan.dtype, _combine(op, prev, value))
            else:
                self.idxb.data[-1] = lo - 1
                self.idxb.data.append(lo)
                self.valb.data.append(coerce(self.plan.dtype, _combine(op, prev, value)))
            return
        if lo > self.last_end + 1:
            self._push_run(lo - 1, self.plan.fill)
        v = value if op == "set" else coerce(self.plan.dtype,
                                             _combine(op, self.plan.fill, value))
        self._push_run(hi, v)

    def finalize(self):
        nf = self._nfibers()
        while self.cur_fiber <= nf:
            self._seal_fiber()

    def freeze(self) -> Tensor:
        self.finalize()
        leaf = RepeatRLE(self.plan.dims[-1], list(self.posb.data),
                         list(self.idxb.data), list(self.valb.data))
        return self._wrap_dense(leaf)


def make_writer(plan: WriterPlan) -> Writer:
    if plan.mode == "dense":
        return DenseWriter(plan)
    if plan.mode == "splist":
        return SparseListWriter(plan)
    if plan.mode == "rle":
        return RLEWriter(plan)
    raise InterpError(f"unknown writer mode {plan.mode!r}")
