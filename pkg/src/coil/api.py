"""High-level compile/run API shared by the CLI and the test suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .cin import Stmt, results, written_tensors
from .interp import Buf, ExecCounters, Machine, run_program
from .lower import LowerCtx, lower_program
from .oracle import DenseData, evaluate as oracle_evaluate
from .parser import parse
from .rewrite import Ruleset
from .storage import Tensor, from_dense, normalize_spec, tensor_buffers, to_dense
from .target import TargetStmt, print_ir
from .unfurl import BoundTensor, CompileError, WriterPlan
from .values import Value
from .writers import Writer, make_writer


@dataclass
class InputSpec:
    dims: List[int]
    data: list
    format: List[str] = field(default_factory=lambda: ["dense"])
    fill: Value = 0.0
    dtype: Optional[str] = None
    protocols: Dict[int, str] = field(default_factory=dict)


@dataclass
class OutputSpec:
    dims: Optional[List[int]] = None  # None: inferred from the kernel extents
    format: List[str] = field(default_factory=lambda: ["dense"])
    fill: Value = 0.0
    dtype: str = "float"


@dataclass
class Compiled:
    program: TargetStmt
    tensors: Dict[str, BoundTensor]
    writers: Dict[str, WriterPlan]
    stages: Optional[List[str]] = None

    def ir_text(self) -> str:
        return print_ir(self.program)


def _infer_output_dims(stmt: Stmt, name: str, input_dims: Dict[str, List[int]],
                       params: Dict[str, Value]) -> List[int]:
    """Output dims come from the extents of the loops that index the output."""
    from .cin import Access, Forall, Multi, Sieve, Where, walk_exprs, subexprs
    from .expr import Lit, Var

    ext_of: Dict[str, Tuple] = {}

    def scan(node, bound):
        from .cin import Assign

        if isinstance(node, Forall):
            scan(node.body, {**bound, node.idx: node.ext})
        elif isinstance(node, Where):
            scan(node.cons, bound)
            scan(node.prod, bound)
        elif isinstance(node, Multi):
            for p in node.parts:
                scan(p, bound)
        elif isinstance(node, Sieve):
            scan(node.body, bound)
        elif isinstance(node, Assign):
            if node.lhs.base == name:
                for k, use in enumerate(node.lhs.idx):
                    core = use
                    while hasattr(core, "inner"):
                        core = core.inner
                    if isinstance(core, Var) and core.name in bound and bound[core.name]:
                        ext = bound[core.name]
                        lo, hi = ext.start, ext.stop
                        if isinstance(lo, Lit) and isinstance(hi, Lit):
                            ext_of.setdefault(k, hi.value - lo.value + 1)

    # annotate best-effort so every forall has an extent to read
    from .cin import annotate_extents

    s2 = annotate_extents(stmt, dict(input_dims), strict=False)
    scan(s2, {})
    rank = 0
    for e in walk_exprs(stmt):
        for sub in subexprs(e):
            if isinstance(sub, Access) and sub.base == name:
                rank = max(rank, len(sub.idx))
    dims = []
    for k in range(rank):
        if k not in ext_of:
            raise CompileError(
                f"cannot infer dimension {k + 1} of output {name!r}; bind it explicitly")
        dims.append(ext_of[k])
    return dims


def bind(stmt: Stmt, inputs: Dict[str, InputSpec], outputs: Dict[str, OutputSpec],
         params: Optional[Dict[str, Value]] = None):
    """Build the compile-time tensor table: inputs get static storage, outputs
    get writer plans; rank-0 intermediates are bound automatically."""
    params = params or {}
    tensors: Dict[str, BoundTensor] = {}
    writers: Dict[str, WriterPlan] = {}
    written = set(written_tensors(stmt)) | set(results(stmt))

    for name, spec in inputs.items():
        fmt = spec.format
        if fmt == ["dense"] and len(spec.dims) > 1:
            fmt = ["dense"] * len(spec.dims)
        t = from_dense(name, spec.dims, spec.data, fmt, spec.fill, spec.dtype)
        tensors[name] = BoundTensor(
            name=name, dims=list(spec.dims), fill=t.fill, dtype=t.dtype,
            kinds=t.format_spec(), tensor=t, protocols=dict(spec.protocols))

    outputs = dict(outputs)
    for name in written:
        if name not in outputs and name not in inputs:
            outputs[name] = OutputSpec()  # auto-bound intermediate / output

    input_dims = {n: s.dims for n, s in inputs.items()}
    for name, spec in outputs.items():
        if name in tensors:
            raise CompileError(f"tensor {name!r} bound as both input and output")
        dims = spec.dims
        if dims is None:
            dims = _infer_output_dims(stmt, name, input_dims, params)
        fmt = spec.format
        if fmt == ["dense"] and len(dims) > 1:
            fmt = ["dense"] * len(dims)
        kinds = ["elem"] if not dims else normalize_spec(fmt, len(dims))
        plan = WriterPlan(name, list(dims), spec.fill, spec.dtype, kinds)
        writers[name] = plan
        tensors[name] = BoundTensor(
            name=name, dims=list(dims), fill=spec.fill, dtype=spec.dtype,
            kinds=kinds, tensor=None, is_output=True)
    return tensors, writers


def compile_kernel(stmt: Stmt, inputs: Dict[str, InputSpec],
                   outputs: Optional[Dict[str, OutputSpec]] = None,
                   params: Optional[Dict[str, Value]] = None,
                   ruleset: Optional[Ruleset] = None,
                   stages: bool = False) -> Compiled:
    tensors, writers = bind(stmt, inputs, outputs or {}, params)
    ctx = LowerCtx(tensors, writers, ruleset=ruleset, collect_stages=stages)
    prog = lower_program(ctx, stmt)
    return Compiled(prog, tensors, writers, stages=ctx.stages)


@dataclass
class RunResult:
    outputs: Dict[str, Tensor]
    dense: Dict[str, list]
    counters: ExecCounters
    machine: Machine


def execute(compiled: Compiled, params: Optional[Dict[str, Value]] = None,
            trace: bool = False) -> RunResult:
    buffers: Dict[str, Buf] = {}
    for name, bt in compiled.tensors.items():
        if bt.tensor is not None:
            buffers.update(tensor_buffers(bt.tensor))
    writers: Dict[str, Writer] = {}
    for name, plan in compiled.writers.items():
        w = make_writer(plan)
        writers[name] = w
        buffers.update(w.buffers)
    mparams = {f"${k}": v for k, v in (params or {}).items()}
    machine = run_program(compiled.program, buffers, params=mparams,
                          writers=writers, trace=trace)
    outs = {name: w.freeze() for name, w in writers.items()}
    dense = {name: to_dense(t) for name, t in outs.items()}
    return RunResult(outs, dense, machine.counters, machine)


def run_kernel(text_or_stmt, inputs: Dict[str, InputSpec],
               outputs: Optional[Dict[str, OutputSpec]] = None,
               params: Optional[Dict[str, Value]] = None,
               ruleset: Optional[Ruleset] = None) -> RunResult:
    stmt = parse(text_or_stmt) if isinstance(text_or_stmt, str) else text_or_stmt
    compiled = compile_kernel(stmt, inputs, outputs, params, ruleset)
    return execute(compiled, params)


def oracle_outputs(text_or_stmt, inputs: Dict[str, InputSpec],
                   outputs: Optional[Dict[str, OutputSpec]] = None,
                   params: Optional[Dict[str, Value]] = None) -> Dict[str, list]:
    """Dense-oracle evaluation with the same binding conventions as execute."""
    stmt = parse(text_or_stmt) if isinstance(text_or_stmt, str) else text_or_stmt
    tensors, writers = bind(stmt, inputs, outputs or {}, params)
    dd: Dict[str, DenseData] = {}
    for name, bt in tensors.items():
        if bt.tensor is not None:
            dd[name] = DenseData(bt.dims, to_dense(bt.tensor), bt.fill, bt.dtype)
        else:
            n = 1
            for d in bt.dims:
                n *= d
            dd[name] = DenseData(bt.dims, [bt.fill] * n, bt.fill, bt.dtype)
    outs = oracle_evaluate(stmt, dd, params or {})
    return {name: outs[name] for name in writers if name in outs}
