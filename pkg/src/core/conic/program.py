"""Solver-agnostic conic program representation.

Standard form::

    minimize    c^T x + offset
    subject to  A x = b
                x[block] in K_block   for every cone block

Free variables form the prefix of x; cone blocks partition the suffix in
the order nonnegative, second-order, psd_real. A psd_real block of
dimension m stores an m x m symmetric matrix as its upper triangle, row by
row, with off-diagonal entries scaled by sqrt(2), so the Euclidean inner
product of two stored vectors equals the Frobenius inner product of the
matrices.
"""

import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class ConeKind(str, Enum):
    """Supported cone kinds."""
    NONNEGATIVE = "nonnegative"
    SECOND_ORDER = "second_order"
    PSD_REAL = "psd_real"


def svec_dim(m: int) -> int:
    return m * (m + 1) // 2


def svec(X: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle storage of a real symmetric matrix."""
    rows, cols = np.triu_indices(X.shape[0])
    scale = np.where(rows == cols, 1.0, SQRT2)
    return X[rows, cols] * scale


def smat(x: np.ndarray, m: int) -> np.ndarray:
    """Inverse of svec."""
    rows, cols = np.triu_indices(m)
    scale = np.where(rows == cols, 1.0, 1.0 / SQRT2)
    X = np.zeros((m, m))
    X[rows, cols] = x * scale
    X[cols, rows] = x * scale
    return X


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian matrix."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10 * scale:
        raise ValueError("embed_hermitian requires a Hermitian matrix")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(X: np.ndarray) -> np.ndarray:
    """(X11 + X22)/2 + j (X21 - X12)/2, symmetrized."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0] // 2
    X11, X12 = X[:n, :n], X[:n, n:]
    X21, X22 = X[n:, :n], X[n:, n:]
    H = (X11 + X22) / 2.0 + 1j * (X21 - X12) / 2.0
    return (H + H.conj().T) / 2.0


class AffineExpr:
    """Sparse affine function sum_i a_i x_i + constant over builder variables."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "AffineExpr":
        return cls({int(index): float(coef)})

    @classmethod
    def linear(cls, indices: Iterable[int], coefs: Iterable[float], constant: float = 0.0) -> "AffineExpr":
        terms: Dict[int, float] = {}
        for i, a in zip(indices, coefs):
            if a != 0.0:
                terms[int(i)] = terms.get(int(i), 0.0) + float(a)
        return cls(terms, constant)

    @classmethod
    def const(cls, value: float) -> "AffineExpr":
        return cls(None, value)

    def _coerce(self, other) -> "AffineExpr":
        return other if isinstance(other, AffineExpr) else AffineExpr.const(float(other))

    def __add__(self, other) -> "AffineExpr":
        other = self._coerce(other)
        terms = dict(self.terms)
        for i, a in other.terms.items():
            terms[i] = terms.get(i, 0.0) + a
        return AffineExpr(terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr({i: -a for i, a in self.terms.items()}, -self.constant)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "AffineExpr":
        return self._coerce(other) - self

    def __mul__(self, scalar: float) -> "AffineExpr":
        s = float(scalar)
        return AffineExpr({i: a * s for i, a in self.terms.items()}, self.constant * s)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "AffineExpr":
        return self * (1.0 / float(scalar))

    def value(self, x: np.ndarray) -> float:
        return float(sum(a * x[i] for i, a in self.terms.items()) + self.constant)

    def __repr__(self) -> str:
        return f"AffineExpr({len(self.terms)} terms, constant={self.constant:.4g})"


def affine_sum(exprs: Iterable[Union[AffineExpr, float]]) -> AffineExpr:
    """Sum of expressions, merging term dictionaries in place."""
    terms: Dict[int, float] = {}
    constant = 0.0
    for e in exprs:
        if not isinstance(e, AffineExpr):
            constant += float(e)
            continue
        for i, a in e.terms.items():
            terms[i] = terms.get(i, 0.0) + a
        constant += e.constant
    return AffineExpr(terms, constant)


@dataclass(frozen=True)
class HermitianVar:
    """Complex Hermitian PSD matrix variable held as an embedded real PSD block."""
    n: int
    indices: np.ndarray

    def inner(self, M: np.ndarray) -> AffineExpr:
        """Re Tr(M V) = 1/2 <embed(M), embed(V)> for Hermitian M."""
        return AffineExpr.linear(self.indices, 0.5 * svec(embed_hermitian(M)))

    def quad(self, g: np.ndarray) -> AffineExpr:
        """g^H V g."""
        return self.inner(np.outer(g, np.conj(g)))

    def trace(self) -> AffineExpr:
        return self.inner(np.eye(self.n))

    def value(self, x: np.ndarray) -> np.ndarray:
        return extract_hermitian(smat(x[self.indices], 2 * self.n))


def hermitian_functional(blocks: Sequence[HermitianVar], M: np.ndarray) -> AffineExpr:
    """Re Tr(M sum_l V_l), the same functional applied to every block."""
    coefs = 0.5 * svec(embed_hermitian(M))
    terms: Dict[int, float] = {}
    for block in blocks:
        for i, a in zip(block.indices, coefs):
            if a != 0.0:
                terms[int(i)] = a
    return AffineExpr(terms)


@dataclass(frozen=True)
class ConeBlock:
    """Cone membership of x[start:stop]; `dim` is m for psd_real blocks."""
    kind: ConeKind
    dim: int
    start: int
    stop: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass
class ConicProgram:
    """Conic program in standard form plus bookkeeping for decoding."""
    n_vars: int
    objective: np.ndarray
    A: sparse.csr_matrix
    b: np.ndarray
    cone_blocks: List[ConeBlock]
    n_free: int
    objective_offset: float = 0.0
    maximize: bool = False
    groups: Dict[str, np.ndarray] = field(default_factory=dict)
    hermitian: Dict[str, HermitianVar] = field(default_factory=dict)
    constraints: List[Tuple[str, str]] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        position = self.n_free
        for block in self.cone_blocks:
            if block.start != position or block.stop <= block.start:
                raise ValueError(f"cone blocks must partition the suffix, bad block {block}")
            expected = svec_dim(block.dim) if block.kind == ConeKind.PSD_REAL else block.dim
            if block.stop - block.start != expected:
                raise ValueError(f"block {block} has inconsistent dimension")
            position = block.stop
        if position != self.n_vars:
            raise ValueError("cone blocks must end at the last variable")
        if self.A.shape != (self.b.size, self.n_vars):
            raise ValueError(f"A has shape {self.A.shape}, expected {(self.b.size, self.n_vars)}")

    def count(self, kind: str, family: Optional[str] = None) -> int:
        """Number of constraints of `kind` ("eq", "ge", "soc", "rsoc"), optionally per family prefix."""
        return sum(
            1 for k, label in self.constraints
            if k == kind and (family is None or label.startswith(family))
        )

    def blocks_of(self, kind: ConeKind) -> List[ConeBlock]:
        return [b for b in self.cone_blocks if b.kind == kind]

    def primal_residual(self, x: np.ndarray) -> float:
        """max |Ax - b| relative to 1 + max |b|."""
        if self.b.size == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ x - self.b)) / (1.0 + np.max(np.abs(self.b))))

    def cone_violation(self, x: np.ndarray) -> float:
        """Largest distance-like cone violation relative to 1 + max |x|."""
        worst = 0.0
        for block in self.cone_blocks:
            xs = x[block.slice]
            if block.kind == ConeKind.NONNEGATIVE:
                v = -float(np.min(xs))
            elif block.kind == ConeKind.SECOND_ORDER:
                v = float(np.linalg.norm(xs[1:]) - xs[0])
            else:
                v = -float(np.linalg.eigvalsh(smat(xs, block.dim)).min())
            worst = max(worst, v)
        return worst / (1.0 + float(np.max(np.abs(x), initial=0.0)))

    def evaluate(self, x: np.ndarray) -> float:
        """Objective in the caller's sense (maximization values are not negated)."""
        value = float(self.objective @ x) + self.objective_offset
        return -value if self.maximize else value

    def group(self, name: str, x: np.ndarray) -> np.ndarray:
        return x[self.groups[name]]


class ConicBuilder:
    """Incremental construction of a ConicProgram.

    Constraints carry a family label ("radar", "uplink-0", "downlink-1",
    "power", ...). Families listed in `disabled_families` are skipped,
    which the optimizers use to locate the cause of infeasibility.
    """

    def __init__(self, name: str = "", disabled_families: Optional[Set[str]] = None):
        self.name = name
        self.disabled = set(disabled_families or ())
        self._n = 0
        self._free: List[int] = []
        self._nonneg: List[int] = []
        self._socs: List[List[int]] = []
        self._psds: List[Tuple[int, List[int]]] = []
        self._rows: List[AffineExpr] = []
        self._groups: Dict[str, List[int]] = {}
        self._hermitian: Dict[str, HermitianVar] = {}
        self._constraints: List[Tuple[str, str]] = []
        self._objective = AffineExpr()
        self._maximize = False

    def _new(self, n: int) -> List[int]:
        ids = list(range(self._n, self._n + n))
        self._n += n
        return ids

    def _register(self, name: Optional[str], ids: List[int]) -> np.ndarray:
        if name is not None:
            if name in self._groups:
                raise ValueError(f"duplicate variable group {name!r}")
            self._groups[name] = ids
        return np.array(ids, dtype=int)

    # variables

    def free(self, n: int, name: Optional[str] = None) -> np.ndarray:
        ids = self._new(n)
        self._free.extend(ids)
        return self._register(name, ids)

    def nonneg(self, n: int, name: Optional[str] = None) -> np.ndarray:
        ids = self._new(n)
        self._nonneg.extend(ids)
        return self._register(name, ids)

    def group_ids(self, prefix: str) -> np.ndarray:
        """Ids of every named group whose name starts with `prefix`, in creation order."""
        ids = [i for name, group in self._groups.items() if name.startswith(prefix) for i in group]
        return np.array(ids, dtype=int)

    def hermitian_psd(self, n: int, name: str) -> HermitianVar:
        ids = self._new(svec_dim(2 * n))
        self._psds.append((2 * n, ids))
        var = HermitianVar(n, self._register(name, ids))
        self._hermitian[name] = var
        return var

    # constraints

    def enabled(self, family: str) -> bool:
        return not any(family == d or family.startswith(d + "-") for d in self.disabled)

    def add_eq(self, expr: AffineExpr, family: str = "structural") -> None:
        """expr == 0."""
        if self.enabled(family):
            self._rows.append(expr)
            self._constraints.append(("eq", family))

    def add_ge(self, expr: AffineExpr, family: str = "structural") -> None:
        """expr >= 0, through a nonnegative slack."""
        if not self.enabled(family):
            return
        (s,) = self.nonneg(1)
        self._rows.append(expr - AffineExpr.var(s))
        self._constraints.append(("ge", family))

    def add_le(self, expr: AffineExpr, family: str = "structural") -> None:
        self.add_ge(-expr, family)

    def add_soc(self, exprs: Sequence[Union[AffineExpr, float]], family: str = "structural",
                kind: str = "soc") -> None:
        """exprs[0] >= ||exprs[1:]||."""
        if not self.enabled(family):
            return
        if len(exprs) < 2:
            raise ValueError("second-order cone needs at least two entries")
        ids = self._new(len(exprs))
        self._socs.append(ids)
        for i, e in zip(ids, exprs):
            e = e if isinstance(e, AffineExpr) else AffineExpr.const(e)
            self._rows.append(AffineExpr.var(i) - e)
        self._constraints.append((kind, family))

    def add_rotated_soc(self, a: AffineExpr, b: AffineExpr,
                        zs: Sequence[Union[AffineExpr, float]], family: str = "structural") -> None:
        """2ab >= ||z||^2 with a, b >= 0, as ||(a - b, sqrt2 z)|| <= a + b."""
        a_plus_b = a + b
        entries = [a_plus_b, a - b] + [
            (z if isinstance(z, AffineExpr) else AffineExpr.const(z)) * SQRT2 for z in zs
        ]
        self.add_soc(entries, family, kind="rsoc")

    def minimize(self, expr: AffineExpr) -> None:
        self._objective, self._maximize = expr, False

    def maximize(self, expr: AffineExpr) -> None:
        self._objective, self._maximize = -expr, True

    # assembly

    def build(self) -> ConicProgram:
        order = list(self._free) + list(self._nonneg)
        blocks: List[Tuple[ConeKind, int, int]] = []
        if self._nonneg:
            blocks.append((ConeKind.NONNEGATIVE, len(self._nonneg), len(self._nonneg)))
        for ids in self._socs:
            order.extend(ids)
            blocks.append((ConeKind.SECOND_ORDER, len(ids), len(ids)))
        for m, ids in self._psds:
            order.extend(ids)
            blocks.append((ConeKind.PSD_REAL, m, len(ids)))

        position = np.empty(self._n, dtype=int)
        position[np.array(order, dtype=int)] = np.arange(self._n)

        cone_blocks = []
        start = len(self._free)
        for kind, dim, length in blocks:
            cone_blocks.append(ConeBlock(kind, dim, start, start + length))
            start += length

        data, row_ids, col_ids = [], [], []
        b = np.zeros(len(self._rows))
        for r, expr in enumerate(self._rows):
            for i, a in expr.terms.items():
                row_ids.append(r)
                col_ids.append(position[i])
                data.append(a)
            b[r] = -expr.constant
        A = sparse.csr_matrix((data, (row_ids, col_ids)), shape=(len(self._rows), self._n))

        c = np.zeros(self._n)
        for i, a in self._objective.terms.items():
            c[position[i]] += a

        def remap(ids) -> np.ndarray:
            return position[np.asarray(ids, dtype=int)]

        program = ConicProgram(
            n_vars=self._n,
            objective=c,
            A=A,
            b=b,
            cone_blocks=cone_blocks,
            n_free=len(self._free),
            objective_offset=self._objective.constant,
            maximize=self._maximize,
            groups={name: remap(ids) for name, ids in self._groups.items()},
            hermitian={name: HermitianVar(v.n, remap(v.indices)) for name, v in self._hermitian.items()},
            constraints=list(self._constraints),
            name=self.name,
        )
        logger.debug(
            f"Built program {self.name!r}: {program.n_vars} vars, {A.shape[0]} rows, "
            f"{len(cone_blocks)} cone blocks"
        )
        return program


def dump_program(program: ConicProgram) -> str:
    """Plain-text dump: header, objective, sparse A as (row col value), b, cone list."""
    out = io.StringIO()
    out.write(f"# conic program {program.name}\n")
    out.write(f"n_vars {program.n_vars}\nn_free {program.n_free}\n")
    out.write(f"sense {'max' if program.maximize else 'min'}\n")
    out.write(f"offset {program.objective_offset:.17g}\n")
    out.write("objective\n")
    for i in np.flatnonzero(program.objective):
        out.write(f"{i} {program.objective[i]:.17g}\n")
    coo = program.A.tocoo()
    out.write(f"A {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for r, c, v in zip(coo.row, coo.col, coo.data):
        out.write(f"{r} {c} {v:.17g}\n")
    out.write("b\n")
    for r, v in enumerate(program.b):
        out.write(f"{r} {v:.17g}\n")
    out.write("cones\n")
    for block in program.cone_blocks:
        out.write(f"{block.kind.value} {block.dim} {block.start} {block.stop}\n")
    return out.getvalue()
