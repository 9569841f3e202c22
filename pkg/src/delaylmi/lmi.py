"""Affine symmetric-matrix inequalities over named decision variables.

A decision variable is expanded into scalar parameters (the upper triangle
for symmetric matrices).  An :class:`Affine` expression keeps a constant
part and, for every variable it touches, one coefficient matrix per scalar
parameter, so all algebra below is exact linear algebra on arrays.

:func:`compile` lowers an :class:`LmiProblem` to a :class:`StandardForm`::

    minimize  c @ x   subject to   G0_k + sum_i x_i G_ki  <= 0   (each block k)
                                   a0_j + a_j @ x         <= 0   (each row j)

where strict constraints are remembered so the solver can enforce and
report a strictness margin.
"""

from dataclasses import dataclass, field

import numpy as np

from .matrix_core import MatrixError, as_mat

SYMMETRIC = "symmetric"
RECTANGULAR = "rectangular"
SCALAR = "scalar"

FREE = "free"
POSITIVE_DEFINITE = "positive_definite"
POSITIVE_SCALAR = "positive_scalar"

NEGATIVE_DEFINITE = "negative_definite"
POSITIVE_DEFINITE_SENSE = "positive_definite"
NEGATIVE_SEMIDEFINITE = "negative_semidefinite"
POSITIVE_SEMIDEFINITE = "positive_semidefinite"

_STRICT = {NEGATIVE_DEFINITE: True, POSITIVE_DEFINITE_SENSE: True,
           NEGATIVE_SEMIDEFINITE: False, POSITIVE_SEMIDEFINITE: False}


class LmiError(ValueError):
    pass


@dataclass(eq=False)
class Variable:
    """A matrix or scalar decision variable.

    ``kind`` is one of ``"symmetric"``, ``"rectangular"``, ``"scalar"``;
    ``sign`` is ``"free"``, ``"positive_definite"`` or ``"positive_scalar"``.
    ``bound`` optionally boxes every scalar parameter to ``[-bound, bound]``.
    """

    name: str
    kind: str
    shape: tuple
    sign: str = FREE
    bound: float = None

    __array_ufunc__ = None  # let ndarray @ Variable reach __rmatmul__

    def __post_init__(self):
        if self.kind == SYMMETRIC:
            d = self.shape[0] if isinstance(self.shape, tuple) else int(self.shape)
            self.shape = (d, d)
        elif self.kind == SCALAR:
            self.shape = (1, 1)
        elif self.kind == RECTANGULAR:
            self.shape = tuple(int(s) for s in self.shape)
        else:
            raise LmiError(f"unknown variable kind {self.kind!r}")
        if self.sign == POSITIVE_DEFINITE and self.kind != SYMMETRIC:
            raise LmiError(f"{self.name}: positive_definite needs a symmetric variable")
        if self.sign == POSITIVE_SCALAR and self.kind != SCALAR:
            raise LmiError(f"{self.name}: positive_scalar needs a scalar variable")
        self._basis = None

    @property
    def size(self):
        r, c = self.shape
        if self.kind == SYMMETRIC:
            return r * (r + 1) // 2
        return r * c

    def basis(self):
        """Array of shape ``(size, rows, cols)``; parameter i contributes basis[i]."""
        if self._basis is None:
            r, c = self.shape
            if self.kind == SYMMETRIC:
                iu, ju = np.triu_indices(r)
                B = np.zeros((len(iu), r, r))
                k = np.arange(len(iu))
                B[k, iu, ju] = 1.0
                B[k, ju, iu] = 1.0
            else:
                B = np.eye(r * c).reshape(r * c, r, c)
            self._basis = B
        return self._basis

    def pack(self, value):
        """Matrix value -> parameter vector."""
        value = np.atleast_2d(np.asarray(value, dtype=float))
        if value.shape != self.shape:
            raise LmiError(f"{self.name}: expected shape {self.shape}, got {value.shape}")
        if self.kind == SYMMETRIC:
            return value[np.triu_indices(self.shape[0])].copy()
        return value.reshape(-1).copy()

    def unpack(self, params):
        """Parameter vector -> matrix value (a float for scalars)."""
        M = np.tensordot(np.asarray(params, dtype=float), self.basis(), axes=1)
        if self.kind == SCALAR:
            return float(M[0, 0])
        return M

    def expr(self):
        return Affine(np.zeros(self.shape), {self: self.basis()})

    # Variables behave like expressions in arithmetic.
    def __add__(self, other):
        return self.expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return other - self.expr()

    def __neg__(self):
        return -self.expr()

    def __mul__(self, k):
        return self.expr() * k

    __rmul__ = __mul__

    def __matmul__(self, M):
        return self.expr() @ M

    def __rmatmul__(self, M):
        return M @ self.expr()

    @property
    def T(self):
        return self.expr().T

    def __repr__(self):
        return f"Variable({self.name!r}, {self.kind}, {self.shape}, {self.sign})"


def _const(x):
    arr = np.asarray(x, dtype=float)
    return arr.reshape(1, 1) if arr.ndim == 0 else arr


class Affine:
    """Affine matrix expression ``const + sum_v sum_i params_v[i] * coef_v[i]``."""

    __array_priority__ = 1000  # make ndarray @ Affine dispatch to __rmatmul__

    def __init__(self, const, terms=None):
        self.const = _const(const)
        self.terms = dict(terms or {})

    @staticmethod
    def lift(x):
        if isinstance(x, Affine):
            return x
        if isinstance(x, Variable):
            return x.expr()
        return Affine(_const(x))

    @property
    def shape(self):
        return self.const.shape

    @property
    def variables(self):
        return list(self.terms)

    def _combine(self, other, sign):
        other = Affine.lift(other)
        if other.shape != self.shape:
            if other.shape == (1, 1) and not other.terms and other.const[0, 0] == 0.0:
                return Affine(self.const, self.terms)
            raise MatrixError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for v, C in other.terms.items():
            terms[v] = terms[v] + sign * C if v in terms else sign * C
        return Affine(self.const + sign * other.const, terms)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return Affine(-self.const, {v: -C for v, C in self.terms.items()})

    def __mul__(self, k):
        if isinstance(k, (Affine, Variable)):
            raise LmiError("product of two affine expressions is not affine")
        k = np.asarray(k, dtype=float)
        if k.size == 1:
            k = float(k.reshape(()))
            return Affine(k * self.const, {v: k * C for v, C in self.terms.items()})
        if self.shape != (1, 1):
            raise MatrixError(f"only a scalar expression can scale a matrix, got {self.shape}")
        K = _const(k)
        return Affine(self.const[0, 0] * K, {v: C[:, 0, 0, None, None] * K for v, C in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        if isinstance(M, (Affine, Variable)):
            raise LmiError("product of two affine expressions is not affine")
        M = _const(M)
        if self.shape[1] != M.shape[0]:
            raise MatrixError(f"cannot multiply {self.shape} by {M.shape}")
        return Affine(self.const @ M, {v: C @ M for v, C in self.terms.items()})

    def __rmatmul__(self, M):
        M = _const(M)
        if M.shape[1] != self.shape[0]:
            raise MatrixError(f"cannot multiply {M.shape} by {self.shape}")
        return Affine(M @ self.const, {v: M @ C for v, C in self.terms.items()})

    @property
    def T(self):
        return Affine(self.const.T, {v: np.swapaxes(C, 1, 2) for v, C in self.terms.items()})

    def evaluate(self, values):
        """Numeric value for ``values`` mapping variable name -> matrix/scalar."""
        out = self.const.copy()
        for v, C in self.terms.items():
            out += np.tensordot(v.pack(values[v.name]), C, axes=1)
        return out

    def __repr__(self):
        names = ", ".join(v.name for v in self.terms)
        return f"Affine(shape={self.shape}, vars=[{names}])"


def he(e):
    """``e + e.T`` for a square expression."""
    e = Affine.lift(e)
    if e.shape[0] != e.shape[1]:
        raise MatrixError(f"He() needs a square expression, got {e.shape}")
    return e + e.T


def congruence(e, T):
    """``T.T @ e @ T``."""
    T = as_mat(T, "T")
    return T.T @ Affine.lift(e) @ T


def bmat(rows):
    """Block expression from a grid whose entries are Affine, Variable, arrays or None.

    ``None`` entries are zero blocks sized from their row and column.
    """
    heights = []
    for row in rows:
        hs = {Affine.lift(b).shape[0] for b in row if b is not None}
        if len(hs) != 1:
            raise MatrixError(f"cannot infer a unique block height in row: {hs}")
        heights.append(hs.pop())
    ncols = len(rows[0])
    widths = []
    for j in range(ncols):
        ws = {Affine.lift(row[j]).shape[1] for row in rows if row[j] is not None}
        if len(ws) != 1:
            raise MatrixError(f"cannot infer a unique block width in column {j}: {ws}")
        widths.append(ws.pop())
    r0 = np.concatenate([[0], np.cumsum(heights)])
    c0 = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((r0[-1], c0[-1]))
    terms = {}
    for i, row in enumerate(rows):
        if len(row) != ncols:
            raise MatrixError("ragged block grid")
        for j, b in enumerate(row):
            if b is None:
                continue
            b = Affine.lift(b)
            const[r0[i]:r0[i + 1], c0[j]:c0[j + 1]] = b.const
            for v, C in b.terms.items():
                if v not in terms:
                    terms[v] = np.zeros((C.shape[0], r0[-1], c0[-1]))
                terms[v][:, r0[i]:r0[i + 1], c0[j]:c0[j + 1]] += C
    return Affine(const, terms)


def blockdiag(*items):
    n = len(items)
    return bmat([[items[i] if i == j else None for j in range(n)] for i in range(n)])


@dataclass
class LmiConstraint:
    """``expr`` compared with zero in the sense given (strict or not)."""

    expr: Affine
    sense: str = NEGATIVE_DEFINITE
    name: str = ""

    def __post_init__(self):
        self.expr = Affine.lift(self.expr)
        if self.sense not in _STRICT:
            raise LmiError(f"unknown sense {self.sense!r}")
        r, c = self.expr.shape
        if r != c:
            raise MatrixError(f"constraint {self.name!r} is not square: {self.expr.shape}")
        asym = np.max(np.abs(self.expr.const - self.expr.const.T), initial=0.0)
        scale = np.max(np.abs(self.expr.const), initial=0.0)
        for C in self.expr.terms.values():
            asym = max(asym, np.max(np.abs(C - np.swapaxes(C, 1, 2)), initial=0.0))
            scale = max(scale, np.max(np.abs(C), initial=0.0))
        if asym > 1e-9 * (1.0 + scale):
            raise LmiError(f"constraint {self.name!r} is not symmetric (asymmetry {asym:.2e})")

    @property
    def strict(self):
        return _STRICT[self.sense]

    @property
    def negated(self):
        return self.sense in (POSITIVE_DEFINITE_SENSE, POSITIVE_SEMIDEFINITE)

    def value(self, values):
        """Numeric value as a symmetric matrix (sign as written, not normalized)."""
        M = self.expr.evaluate(values)
        return 0.5 * (M + M.T)


@dataclass
class LmiProblem:
    """Variables, constraints and an optional linear objective (maximized)."""

    variables: list
    constraints: list
    objective: Affine = None

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise LmiError(f"duplicate variable names in {names}")
        declared = set(map(id, self.variables))
        exprs = [c.expr for c in self.constraints]
        if self.objective is not None:
            self.objective = Affine.lift(self.objective)
            if self.objective.shape != (1, 1):
                raise LmiError("objective must be scalar")
            exprs.append(self.objective)
        for e in exprs:
            for v in e.terms:
                if id(v) not in declared:
                    raise LmiError(f"undeclared variable {v.name!r}")

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def n_scalars(self):
        return sum(v.size for v in self.variables)


@dataclass
class Block:
    name: str
    G0: np.ndarray          # (d, d)
    G: np.ndarray           # (nx, d, d)
    strict: bool
    scale: float            # normalization already applied to G0, G


@dataclass
class StandardForm:
    """Compiled problem: minimize ``c @ x`` s.t. every block/row is <= 0."""

    c: np.ndarray
    blocks: list
    lp_a0: np.ndarray       # (k,)
    lp_A: np.ndarray        # (k, nx)
    lp_strict: np.ndarray   # (k,) bool
    lp_names: list
    offsets: dict           # variable name -> (start, stop)
    variables: list
    has_objective: bool
    margin: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def nx(self):
        return len(self.c)

    def assignment(self, x):
        """Parameter vector -> {name: matrix or float}."""
        return {v.name: v.unpack(x[slice(*self.offsets[v.name])]) for v in self.variables}

    def vector(self, values):
        x = np.zeros(self.nx)
        for v in self.variables:
            a, b = self.offsets[v.name]
            x[a:b] = v.pack(values[v.name])
        return x

    def block_values(self, x):
        """Normalized block values ``G0 + sum x_i G_i`` and LP row values."""
        mats = [B.G0 + np.tensordot(x, B.G, axes=1) for B in self.blocks]
        rows = self.lp_a0 + self.lp_A @ x
        return mats, rows

    def max_eigs(self, x):
        mats, rows = self.block_values(x)
        eigs = {B.name: float(np.linalg.eigvalsh(M)[-1]) for B, M in zip(self.blocks, mats)}
        for name, r in zip(self.lp_names, rows):
            eigs[name] = max(eigs.get(name, -np.inf), float(r))
        return eigs


def compile(problem, margin=0.0):
    """Lower `problem` to a :class:`StandardForm`.

    Every block is normalized to the "<= 0" sense and divided by
    ``1 + max|constant|``.  With ``margin > 0`` every strict block is
    tightened to ``G <= -margin * I`` (after normalization).  Sign
    constraints of variables become extra strict blocks, boxes become LP rows.
    """
    offsets = {}
    k = 0
    for v in problem.variables:
        offsets[v.name] = (k, k + v.size)
        k += v.size
    nx = k

    cons = list(problem.constraints)
    for v in problem.variables:
        if v.sign == POSITIVE_DEFINITE:
            cons.append(LmiConstraint(v.expr(), POSITIVE_DEFINITE_SENSE, f"{v.name}>0"))
        elif v.sign == POSITIVE_SCALAR:
            cons.append(LmiConstraint(v.expr(), POSITIVE_DEFINITE_SENSE, f"{v.name}>0"))

    blocks = []
    lp_a0, lp_rows, lp_strict, lp_names = [], [], [], []
    for idx, con in enumerate(cons):
        name = con.name or f"c{idx}"
        e = -con.expr if con.negated else con.expr
        d = e.shape[0]
        G0 = 0.5 * (e.const + e.const.T)
        G = np.zeros((nx, d, d))
        for v, C in e.terms.items():
            a, b = offsets[v.name]
            G[a:b] = 0.5 * (C + np.swapaxes(C, 1, 2))
        scale = 1.0 + np.max(np.abs(G0), initial=0.0)
        G0 = G0 / scale
        G = G / scale
        if con.strict and margin > 0.0:
            G0 = G0 + margin * np.eye(d)
        if d == 1:
            lp_a0.append(G0[0, 0])
            lp_rows.append(G[:, 0, 0])
            lp_strict.append(con.strict)
            lp_names.append(name)
        else:
            blocks.append(Block(name, G0, G, con.strict, scale))

    for v in problem.variables:
        if v.bound is None:
            continue
        a, b = offsets[v.name]
        for i in range(a, b):
            for sgn in (1.0, -1.0):
                row = np.zeros(nx)
                row[i] = sgn
                lp_a0.append(-float(v.bound))
                lp_rows.append(row)
                lp_strict.append(False)
                lp_names.append(f"|{v.name}|<=bound")

    c = np.zeros(nx)
    if problem.objective is not None:
        for v, C in problem.objective.terms.items():
            a, b = offsets[v.name]
            c[a:b] -= C[:, 0, 0]   # maximize objective == minimize -objective

    return StandardForm(
        c=c,
        blocks=blocks,
        lp_a0=np.asarray(lp_a0, dtype=float),
        lp_A=np.asarray(lp_rows, dtype=float).reshape(len(lp_rows), nx),
        lp_strict=np.asarray(lp_strict, dtype=bool),
        lp_names=lp_names,
        offsets=offsets,
        variables=list(problem.variables),
        has_objective=problem.objective is not None,
        margin=margin,
    )


def evaluate_constraints(problem, values):
    """Direct evaluation of every constraint as written: list of (name, sense, matrix)."""
    out = []
    for idx, con in enumerate(problem.constraints):
        out.append((con.name or f"c{idx}", con.sense, con.value(values)))
    return out
