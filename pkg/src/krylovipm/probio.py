"""Problem and solution files.

Problem files are line oriented text: ``key value value ...``. Floats are written
in shortest round-trip form and infinities as the literal tokens ``-inf`` /
``+inf``, so ``parse_problem(write_problem(p))`` reproduces ``p`` bit for bit.
The full field list is in docs/format.md.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .linops import BfgsOperator, CsrMatrix, DiagonalOperator, DimensionError, SymmetricCsrOperator
from .problem import FAMILIES, ProblemError, QpProblem

MAGIC = "krylovipm-qp"
VERSION = 1
SOLUTION_FORMAT = "krylovipm-solution/1"


class ParseError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def _fmt(v):
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(v)


def _vec_line(key, arr):
    vals = np.asarray(arr, dtype=np.float64).tolist()
    return " ".join([key, *map(_fmt, vals)])


def _int_line(key, arr):
    return " ".join([key, *map(str, np.asarray(arr, dtype=np.int64).tolist())])


def write_problem(prob: QpProblem) -> str:
    h = prob.hessian
    lines = [f"{MAGIC} {VERSION}", f"n {prob.n}", f"m {prob.m}"]
    if isinstance(h, DiagonalOperator):
        lines += ["hessian diag", _vec_line("h_diag", h.entries)]
    elif isinstance(h, SymmetricCsrOperator):
        mat = h.matrix
        lines += ["hessian csr", f"h_nnz {mat.nnz}", _int_line("h_offsets", mat.indptr),
                  _int_line("h_indices", mat.indices), _vec_line("h_values", mat.data)]
    elif isinstance(h, BfgsOperator):
        lines += ["hessian bfgs", _vec_line("h0_diag", h.h0_diag), f"bfgs_columns {h.column_count}"]
        for c, col in enumerate(h.update_matrix.T):
            lines.append(_vec_line(f"bfgs_u{c}", col))
        lines.append(_vec_line("bfgs_w", h.weights))
    else:
        raise TypeError(f"cannot serialize Hessian of type {type(h).__name__}")
    A = prob.A
    lines += [
        _vec_line("p", prob.p),
        f"a_nnz {A.nnz}",
        _int_line("a_offsets", A.indptr),
        _int_line("a_indices", A.indices),
        _vec_line("a_values", A.data),
        _vec_line("lin_lower", prob.l),
        _vec_line("lin_upper", prob.u),
        _vec_line("var_lower", prob.a),
        _vec_line("var_upper", prob.b),
        "end",
    ]
    return "\n".join(lines) + "\n"


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        yield lineno, key, rest.split()


def _floats(lineno, key, toks, size):
    if len(toks) != size:
        raise ParseError(f"expected {size} values, found {len(toks)}", lineno, key)
    try:
        arr = np.array(toks, dtype=np.float64) if toks else np.zeros(0)
    except ValueError:
        bad = next(t for t in toks if not _is_float(t))
        raise ParseError(f"invalid number {bad!r}", lineno, key) from None
    if np.any(np.isnan(arr)):
        raise ParseError("NaN is not allowed", lineno, key)
    return arr


def _is_float(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _ints(lineno, key, toks, size):
    if len(toks) != size:
        raise ParseError(f"expected {size} integers, found {len(toks)}", lineno, key)
    try:
        return np.array([int(t) for t in toks], dtype=np.int64)
    except ValueError:
        raise ParseError("invalid integer", lineno, key) from None


def _scalar(lineno, key, toks):
    if len(toks) != 1:
        raise ParseError("expected one integer", lineno, key)
    try:
        v = int(toks[0])
    except ValueError:
        raise ParseError(f"invalid integer {toks[0]!r}", lineno, key) from None
    if v < 0:
        raise ParseError("must be nonnegative", lineno, key)
    return v


def parse_problem(data) -> QpProblem:
    """Parse and validate a problem document (str or bytes)."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    stream = _tokens(text)
    fields: dict = {}
    where: dict = {}

    try:
        lineno, key, toks = next(stream)
    except StopIteration:
        raise ParseError("empty document") from None
    if key != MAGIC or toks != [str(VERSION)]:
        raise ParseError(f"expected header '{MAGIC} {VERSION}'", lineno)

    n = m = None
    kind = None
    ended = False
    for lineno, key, toks in stream:
        if ended:
            raise ParseError("content after 'end'", lineno, key)
        if key in fields:
            raise ParseError("duplicate field", lineno, key)
        where[key] = lineno
        if key == "end":
            ended = True
            fields[key] = True
        elif key in ("n", "m", "h_nnz", "a_nnz", "bfgs_columns"):
            fields[key] = _scalar(lineno, key, toks)
            if key == "n":
                n = fields[key]
            elif key == "m":
                m = fields[key]
        elif key == "hessian":
            if toks not in (["diag"], ["csr"], ["bfgs"]):
                raise ParseError("hessian kind must be diag, csr or bfgs", lineno, key)
            kind = fields[key] = toks[0]
        else:
            if n is None or m is None:
                raise ParseError("'n' and 'm' must precede data fields", lineno, key)
            fields[key] = (lineno, toks)
    if not ended:
        raise ParseError("missing 'end' line")
    for req in ("n", "m", "hessian"):
        if req not in fields:
            raise ParseError("required field missing", key=req)
    if n == 0:
        raise ParseError("n must be positive", where["n"], "n")

    def take(key, conv, size):
        if key not in fields:
            raise ParseError("required field missing", key=key)
        lineno, toks = fields.pop(key)
        return conv(lineno, key, toks, size)

    known = {"n", "m", "hessian", "end", "h_nnz", "a_nnz", "bfgs_columns"}
    try:
        if kind == "diag":
            hessian = DiagonalOperator(take("h_diag", _floats, n))
        elif kind == "csr":
            nnz = fields.get("h_nnz")
            if nnz is None:
                raise ParseError("required field missing", key="h_nnz")
            mat = CsrMatrix(n, n, take("h_offsets", _ints, n + 1), take("h_indices", _ints, nnz),
                            take("h_values", _floats, nnz))
            hessian = SymmetricCsrOperator(mat)
        else:
            h0 = take("h0_diag", _floats, n)
            ncols = fields.get("bfgs_columns")
            if ncols is None:
                raise ParseError("required field missing", key="bfgs_columns")
            cols = [take(f"bfgs_u{c}", _floats, n) for c in range(ncols)]
            w = take("bfgs_w", _floats, ncols)
            u = np.column_stack(cols) if cols else np.zeros((n, 0))
            hessian = BfgsOperator(h0, u, w)
        p = take("p", _floats, n)
        nnz = fields.get("a_nnz")
        if nnz is None:
            raise ParseError("required field missing", key="a_nnz")
        A = CsrMatrix(m, n, take("a_offsets", _ints, m + 1), take("a_indices", _ints, nnz),
                      take("a_values", _floats, nnz))
        l = take("lin_lower", _floats, m)
        u_ = take("lin_upper", _floats, m)
        a = take("var_lower", _floats, n)
        b = take("var_upper", _floats, n)
    except (DimensionError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from None
    leftover = [k for k in fields if k not in known]
    if leftover:
        k = leftover[0]
        raise ParseError("unknown field", fields[k][0] if isinstance(fields[k], tuple) else where.get(k), k)
    try:
        prob = QpProblem(hessian, p, A, l, u_, a, b)
        prob.check_convexity()
    except ProblemError as exc:
        raise ParseError(str(exc)) from None
    return prob


def load_problem(path) -> QpProblem:
    with open(path, "rb") as fh:
        return parse_problem(fh.read())


def save_problem(prob: QpProblem, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_problem(prob))


def _finite_or_token(v):
    v = float(v)
    return v if math.isfinite(v) else _fmt(v) if not math.isnan(v) else "nan"


def solution_document(result, prob: QpProblem, config=None, include_timings=False) -> dict:
    """Ordered dict for a finished solve (``ipm.SolveResult``)."""
    st = result.state
    doc = {
        "format": SOLUTION_FORMAT,
        "status": result.status,
        "message": result.message,
        "n": prob.n,
        "m": prob.m,
        "objective": _finite_or_token(result.objective),
        "residual_inf": _finite_or_token(result.residual_norm),
        "mu": _finite_or_token(result.mu),
        "ipm_iterations": result.iterations,
        "cg_iterations": result.cg_iterations,
        "cg_per_iteration": list(result.cg_per_iteration),
        "x": [_finite_or_token(v) for v in result.x.tolist()],
        "multipliers": {f: [_finite_or_token(v) for v in st.lam(f).tolist()] for f in FAMILIES},
        "config": dict(config or {}),
    }
    if include_timings:
        doc["timings_s"] = {k: float(v) for k, v in result.timings.items()}
    return doc


def write_solution(result, prob: QpProblem, config=None, include_timings=False) -> bytes:
    """Deterministic serialization: fixed key order, shortest round-trip floats.

    Wall-clock timings are omitted unless ``include_timings`` is set, since they
    would make otherwise identical runs differ.
    """
    doc = solution_document(result, prob, config, include_timings)
    return (json.dumps(doc, indent=1, allow_nan=False) + "\n").encode("utf-8")


def read_solution(data) -> dict:
    doc = json.loads(data)
    if doc.get("format") != SOLUTION_FORMAT:
        raise ParseError(f"not a {SOLUTION_FORMAT} document")
    if doc.get("status") not in ("converged", "iteration-limit", "error"):
        raise ParseError(f"invalid status {doc.get('status')!r}", key="status")
    return doc
