"""Symmetric matrix expressions affine in named decision variables.

An expression is a constant plus terms L @ X @ R (optionally with X
transposed, optionally symmetrized as L X R + (L X R)^T).  Scalar
variables are 1x1 and contribute x * (L @ R), which allows full-rank
coefficient matrices.  Expressions evaluate to numpy arrays for oracle
checks and lower to cvxpy for solving; evaluation symmetrizes and asserts
the asymmetry residual stays below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatchError

_SYM_TOL = 1e-10


@dataclass(frozen=True)
class VarSpec:
    """Declared decision variable: shape plus structural kind."""

    name: str
    shape: tuple[int, int]
    kind: str = "free"          # free | symmetric | scalar

    def __post_init__(self):
        if self.kind not in ("free", "symmetric", "scalar"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == "scalar" and self.shape != (1, 1):
            raise DimensionMismatchError("scalar variables must have shape (1, 1)")
        if self.kind == "symmetric" and self.shape[0] != self.shape[1]:
            raise DimensionMismatchError("symmetric variables must be square")


@dataclass(frozen=True)
class Term:
    var: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False
    sym: bool = False


class AffineMatrixExpr:
    """dim x dim symmetric-valued expression, affine in its variables."""

    def __init__(self, dim: int, constant: np.ndarray | None = None,
                 terms: list[Term] | None = None):
        self.dim = dim
        self.constant = np.zeros((dim, dim)) if constant is None else np.asarray(constant, dtype=float)
        if self.constant.shape != (dim, dim):
            raise DimensionMismatchError("constant term has wrong shape")
        self.terms: list[Term] = list(terms) if terms else []

    # -- construction -----------------------------------------------------

    def add_const(self, C, sym: bool = False) -> "AffineMatrixExpr":
        C = np.asarray(C, dtype=float)
        self.constant = self.constant + (C + C.T if sym else C)
        return self

    def add_term(self, var: str, left, right, transpose: bool = False,
                 sym: bool = False) -> "AffineMatrixExpr":
        left = np.atleast_2d(np.asarray(left, dtype=float))
        right = np.atleast_2d(np.asarray(right, dtype=float))
        if left.shape[0] != self.dim or right.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"term for {var!r}: outer shapes {left.shape[0]}x{right.shape[1]} "
                f"!= {self.dim}")
        self.terms.append(Term(var, left, right, transpose, sym))
        return self

    def __add__(self, other: "AffineMatrixExpr") -> "AffineMatrixExpr":
        if other.dim != self.dim:
            raise DimensionMismatchError("cannot add expressions of different dims")
        return AffineMatrixExpr(self.dim, self.constant + other.constant,
                                self.terms + other.terms)

    def __mul__(self, scalar: float) -> "AffineMatrixExpr":
        s = float(scalar)
        terms = [Term(t.var, s * t.left, t.right, t.transpose, t.sym) for t in self.terms]
        return AffineMatrixExpr(self.dim, s * self.constant, terms)

    __rmul__ = __mul__

    def __neg__(self) -> "AffineMatrixExpr":
        return self * -1.0

    def __sub__(self, other: "AffineMatrixExpr") -> "AffineMatrixExpr":
        return self + (-other)

    def congruence(self, T) -> "AffineMatrixExpr":
        """T^T (self) T; T maps the new space into this one (dim x new_dim)."""
        T = np.asarray(T, dtype=float)
        if T.shape[0] != self.dim:
            raise DimensionMismatchError("congruence transform has wrong row count")
        new = AffineMatrixExpr(T.shape[1], T.T @ self.constant @ T)
        for t in self.terms:
            new.terms.append(Term(t.var, T.T @ t.left, t.right @ T, t.transpose, t.sym))
        return new

    def placed_sym(self, left, right, out_dim: int) -> "AffineMatrixExpr":
        """Sym{ left @ (self) @ right } embedded into an out_dim expression.

        Used to place a (generally nonsymmetric) block off the diagonal of
        a larger symmetric expression; left is out_dim x dim, right is
        dim x out_dim.
        """
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        new = AffineMatrixExpr(out_dim)
        new.add_const(left @ self.constant @ right, sym=True)
        for t in self.terms:
            new.terms.append(Term(t.var, left @ t.left, t.right @ right, t.transpose, sym=True))
            if t.sym:
                # the transposed half of a symmetrized term re-expands
                new.terms.append(Term(t.var, left @ t.right.T, t.left.T @ right,
                                      not t.transpose, sym=True))
        return new

    # -- use ---------------------------------------------------------------

    def variables(self) -> set[str]:
        return {t.var for t in self.terms}

    def evaluate(self, assignment: dict[str, np.ndarray]) -> np.ndarray:
        out = self.constant.copy()
        for t in self.terms:
            X = np.atleast_2d(np.asarray(assignment[t.var], dtype=float))
            if X.shape == (1, 1):
                raw = float(X[0, 0]) * (t.left @ t.right)
            else:
                Xe = X.T if t.transpose else X
                raw = t.left @ Xe @ t.right
            out += raw + raw.T if t.sym else raw
        scale = max(1.0, float(np.abs(out).max()))
        asym = float(np.abs(out - out.T).max())
        if asym > _SYM_TOL * scale:
            raise DimensionMismatchError(
                f"expression not symmetric at this assignment (residual {asym:.3e})")
        return 0.5 * (out + out.T)

    def to_cvxpy(self, varmap: dict):
        import cvxpy as cp

        out = cp.Constant(self.constant)
        for t in self.terms:
            X = varmap[t.var]
            if X.shape in ((), (1, 1)):
                x = X if X.shape == () else X[0, 0]
                raw = cp.multiply(x, cp.Constant(t.left @ t.right))
            else:
                Xe = X.T if t.transpose else X
                raw = cp.Constant(t.left) @ Xe @ cp.Constant(t.right)
            out = out + raw + raw.T if t.sym else out + raw
        return out


class RectExpr:
    """Rectangular affine expression used for off-diagonal LMI blocks."""

    def __init__(self, rows: int, cols: int):
        self.rows = rows
        self.cols = cols
        self.constant = np.zeros((rows, cols))
        self.terms: list[Term] = []

    def add_const(self, C) -> "RectExpr":
        C = np.asarray(C, dtype=float)
        if C.shape != (self.rows, self.cols):
            raise DimensionMismatchError("rect constant has wrong shape")
        self.constant = self.constant + C
        return self

    def add_term(self, var: str, left, right, transpose: bool = False) -> "RectExpr":
        left = np.atleast_2d(np.asarray(left, dtype=float))
        right = np.atleast_2d(np.asarray(right, dtype=float))
        if left.shape[0] != self.rows or right.shape[1] != self.cols:
            raise DimensionMismatchError(f"rect term for {var!r} has wrong outer shape")
        self.terms.append(Term(var, left, right, transpose, sym=False))
        return self

    def place_into(self, big: AffineMatrixExpr, row_sel: np.ndarray, col_sel: np.ndarray):
        """Add Sym{ row_sel^T (self) col_sel } to a symmetric expression."""
        big.add_const(row_sel.T @ self.constant @ col_sel, sym=True)
        for t in self.terms:
            big.add_term(t.var, row_sel.T @ t.left, t.right @ col_sel,
                         transpose=t.transpose, sym=True)

    def evaluate(self, assignment: dict[str, np.ndarray]) -> np.ndarray:
        out = self.constant.copy()
        for t in self.terms:
            X = np.atleast_2d(np.asarray(assignment[t.var], dtype=float))
            if X.shape == (1, 1):
                out += float(X[0, 0]) * (t.left @ t.right)
            else:
                out += t.left @ (X.T if t.transpose else X) @ t.right
        return out


def var_expr(spec: VarSpec) -> AffineMatrixExpr:
    """The expression equal to a square variable itself."""
    d = spec.shape[0]
    e = AffineMatrixExpr(d)
    e.add_term(spec.name, np.eye(d), np.eye(d))
    return e


def selector(offset: int, size: int, total: int) -> np.ndarray:
    """Row selector picking [offset, offset+size) out of a total-dim vector."""
    S = np.zeros((size, total))
    S[:, offset:offset + size] = np.eye(size)
    return S


def partition_selectors(sizes: list[int]) -> list[np.ndarray]:
    """Selectors for consecutive blocks of the given sizes."""
    total = sum(sizes)
    out, off = [], 0
    for s in sizes:
        out.append(selector(off, s, total))
        off += s
    return out


@dataclass
class LmiProblem:
    """Feasibility problem: blocks required negative/positive definite."""

    variables: dict[str, VarSpec]
    neg_def: list[tuple[str, AffineMatrixExpr]] = field(default_factory=list)
    pos_def: list[tuple[str, AffineMatrixExpr]] = field(default_factory=list)
    nonneg_scalars: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_neg_def(self, label: str, expr: AffineMatrixExpr):
        self.neg_def.append((label, expr))

    def add_pos_def(self, label: str, expr: AffineMatrixExpr):
        self.pos_def.append((label, expr))

    def check_variables(self):
        declared = set(self.variables)
        used = set()
        for _, e in self.neg_def + self.pos_def:
            used |= e.variables()
        missing = used - declared
        if missing:
            raise DimensionMismatchError(f"undeclared variables in blocks: {sorted(missing)}")


def substitute_scalars(p: LmiProblem, values: dict[str, float]) -> LmiProblem:
    """Fold fixed scalar variables into the block constants.

    Returns a new problem over the remaining variables; used to polish a
    nearly-feasible point by re-solving with the troublesome scalars pinned.
    """
    def fold(e: AffineMatrixExpr) -> AffineMatrixExpr:
        out = AffineMatrixExpr(e.dim, e.constant.copy())
        for t in e.terms:
            if t.var in values:
                raw = float(values[t.var]) * (t.left @ t.right)
                out.constant = out.constant + (raw + raw.T if t.sym else raw)
            else:
                out.terms.append(t)
        return out

    keep = {n: spec for n, spec in p.variables.items() if n not in values}
    new = LmiProblem(
        variables=keep,
        neg_def=[(label, fold(e)) for label, e in p.neg_def],
        pos_def=[(label, fold(e)) for label, e in p.pos_def],
        nonneg_scalars=[n for n in p.nonneg_scalars if n not in values],
        meta=dict(p.meta))
    new.meta["substituted_scalars"] = dict(values)
    return new


def dump_problem(p: LmiProblem) -> str:
    """Text export: variable dictionary plus per-block coefficient triples.

    Constants are listed as sparse (i, j, value) triples; each term lists
    its variable, flags, and dense row-major L and R coefficients.  Meant
    for debugging and feeding other solvers, not for speed.
    """
    lines = ["[variables]"]
    for name, spec in sorted(p.variables.items()):
        lines.append(f"{name} {spec.shape[0]} {spec.shape[1]} {spec.kind}")
    lines.append("[nonneg]")
    lines.extend(sorted(p.nonneg_scalars))
    for sense, blocks in (("neg_def", p.neg_def), ("pos_def", p.pos_def)):
        for label, e in blocks:
            lines.append(f"[block {sense} {label} dim={e.dim}]")
            nz = np.nonzero(e.constant)
            for i, j in zip(*nz):
                lines.append(f"const {i} {j} {e.constant[i, j]:.17g}")
            for t in e.terms:
                flags = ("T" if t.transpose else "-") + ("S" if t.sym else "-")
                lines.append(f"term {t.var} {flags} L{t.left.shape} "
                             + " ".join(f"{v:.17g}" for v in t.left.ravel()))
                lines.append(f"  R{t.right.shape} "
                             + " ".join(f"{v:.17g}" for v in t.right.ravel()))
    return "\n".join(lines) + "\n"
