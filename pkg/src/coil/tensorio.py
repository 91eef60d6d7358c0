"""Tensor file ingestion: MatrixMarket (.mtx) and a whitespace dense format.

Dense text format: first line `dims: d1 d2 ...`, then row-major values.
MatrixMarket support covers coordinate and array forms, real/integer/pattern
fields, general/symmetric symmetry; duplicate coordinates are summed.
"""

from __future__ import annotations

from typing import List, Tuple

from .values import Value


class TensorIOError(ValueError):
    pass


def read_matrix_market(path: str) -> Tuple[List[int], List[Tuple], str]:
    """Returns (dims, triples sorted row-major, value dtype).

    Triples are (i, j, v) with 1-based coordinates (or (i, v) for vectors);
    symmetric inputs are expanded to general, pattern entries read as 1.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket"):
            raise TensorIOError(f"{path}: missing MatrixMarket header")
        parts = header.split()
        if len(parts) < 5 or parts[1] != "matrix":
            raise TensorIOError(f"{path}: malformed header {header.strip()!r}")
        layout, field, symmetry = parts[2], parts[3], parts[4]
        if layout not in ("coordinate", "array"):
            raise TensorIOError(f"{path}: unsupported layout {layout!r}")
        if field not in ("real", "integer", "pattern"):
            raise TensorIOError(f"{path}: unsupported field {field!r}")
        if symmetry not in ("general", "symmetric"):
            raise TensorIOError(f"{path}: unsupported symmetry {symmetry!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        sizes = line.split()
        if layout == "coordinate":
            if len(sizes) != 3:
                raise TensorIOError(f"{path}: bad size line {line.strip()!r}")
            nrows, ncols, nnz = (int(x) for x in sizes)
        else:
            if len(sizes) != 2:
                raise TensorIOError(f"{path}: bad size line {line.strip()!r}")
            nrows, ncols = (int(x) for x in sizes)
            nnz = nrows * ncols

        def parse_value(tokens) -> Value:
            if field == "pattern":
                return 1
            if field == "integer":
                return int(tokens[0])
            return float(tokens[0])

        entries = {}

        def add(i, j, v):
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise TensorIOError(f"{path}: coordinate ({i},{j}) out of bounds")
            if (i, j) in entries:
                entries[(i, j)] = entries[(i, j)] + v
            else:
                entries[(i, j)] = v

        if layout == "coordinate":
            count = 0
            for line in fh:
                toks = line.split()
                if not toks or toks[0].startswith("%"):
                    continue
                count += 1
                i, j = int(toks[0]), int(toks[1])
                v = parse_value(toks[2:])
                add(i, j, v)
                if symmetry == "symmetric" and i != j:
                    add(j, i, v)
            if count != nnz:
                raise TensorIOError(f"{path}: expected {nnz} entries, found {count}")
        else:
            vals = []
            for line in fh:
                for tok in line.split():
                    vals.append(parse_value([tok]))
            if len(vals) != (nnz if symmetry == "general" else nrows * (nrows + 1) // 2):
                raise TensorIOError(f"{path}: wrong number of array values")
            if symmetry == "general":
                pos = 0
                for j in range(1, ncols + 1):  # array layout is column-major
                    for i in range(1, nrows + 1):
                        add(i, j, vals[pos])
                        pos += 1
            else:
                pos = 0
                for j in range(1, ncols + 1):
                    for i in range(j, nrows + 1):
                        add(i, j, vals[pos])
                        if i != j:
                            add(j, i, vals[pos])
                        pos += 1

        dtype = "float" if field == "real" else "int"
        triples = [(i, j, v) for (i, j), v in sorted(entries.items())]
        return [nrows, ncols], triples, dtype


def matrix_market_dense(path: str) -> Tuple[List[int], list, str]:
    """Scatter a MatrixMarket file into a row-major dense payload."""
    dims, triples, dtype = read_matrix_market(path)
    zero = 0.0 if dtype == "float" else 0
    data = [zero] * (dims[0] * dims[1])
    for i, j, v in triples:
        data[(i - 1) * dims[1] + (j - 1)] = v
    return dims, data, dtype


def read_dense_text(path: str) -> Tuple[List[int], list, str]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.lower().startswith("dims:"):
            raise TensorIOError(f"{path}: first line must be 'dims: d1 d2 ...'")
        dims = [int(x) for x in first.split(":", 1)[1].split()]
        toks = fh.read().split()
    total = 1
    for d in dims:
        total *= d
    if len(toks) != total:
        raise TensorIOError(f"{path}: expected {total} values, found {len(toks)}")
    is_float = any(("." in t or "e" in t.lower()) and t not in ("true", "false")
                   for t in toks)
    if all(t in ("true", "false") for t in toks):
        data = [t == "true" for t in toks]
        return dims, data, "bool"
    if is_float:
        return dims, [float(t) for t in toks], "float"
    return dims, [int(t) for t in toks], "int"


def write_dense_text(path: str, dims: List[int], data: list):
    from .values import value_repr

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dims: " + " ".join(str(d) for d in dims) + "\n")
        fh.write(" ".join(value_repr(v) for v in data) + "\n")
