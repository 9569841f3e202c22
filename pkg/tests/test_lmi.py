import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaylmi import lmi
from delaylmi.lmi import (
    Affine,
    LmiConstraint,
    LmiError,
    LmiProblem,
    Variable,
    bmat,
    blockdiag,
    congruence,
    he,
)
from delaylmi.matrix_core import MatrixError


def _random_values(variables, rng):
    out = {}
    for v in variables:
        M = rng.normal(size=v.shape)
        if v.kind == lmi.SYMMETRIC:
            M = M + M.T
        out[v.name] = float(M[0, 0]) if v.kind == lmi.SCALAR else M
    return out


def test_variable_sizes_and_pack_roundtrip():
    P = Variable("P", lmi.SYMMETRIC, 3)
    Y = Variable("Y", lmi.RECTANGULAR, (2, 4))
    b = Variable("b", lmi.SCALAR, 1)
    assert (P.size, Y.size, b.size) == (6, 8, 1)
    M = np.array([[1.0, 2, 3], [2, 4, 5], [3, 5, 6]])
    assert np.array_equal(P.unpack(P.pack(M)), M)
    assert b.unpack([2.5]) == 2.5


def test_variable_sign_validation():
    with pytest.raises(LmiError):
        Variable("Y", lmi.RECTANGULAR, (2, 2), lmi.POSITIVE_DEFINITE)
    with pytest.raises(LmiError):
        Variable("Y", "banana", (2, 2))


def test_affine_shape_errors():
    P = Variable("P", lmi.SYMMETRIC, 2)
    with pytest.raises(MatrixError):
        P + np.eye(3)
    with pytest.raises(LmiError):
        P.expr() @ P


def test_nonsymmetric_constraint_rejected():
    Y = Variable("Y", lmi.RECTANGULAR, (2, 2))
    with pytest.raises(LmiError):
        LmiConstraint(Y.expr())


def test_undeclared_variable_rejected():
    P = Variable("P", lmi.SYMMETRIC, 2)
    Q = Variable("Q", lmi.SYMMETRIC, 2)
    with pytest.raises(LmiError):
        LmiProblem([P], [LmiConstraint(P + Q)])


def test_bmat_zero_blocks():
    P = Variable("P", lmi.SYMMETRIC, 2)
    e = bmat([[P, None], [None, -np.eye(3)]])
    assert e.shape == (5, 5)
    val = e.evaluate({"P": np.eye(2)})
    assert np.array_equal(val, np.diag([1.0, 1, -1, -1, -1]))
    assert blockdiag(P, 1.0).shape == (3, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_compile_roundtrip(n, seed):
    rng = np.random.default_rng(seed)
    P = Variable("P", lmi.SYMMETRIC, n)
    Y = Variable("Y", lmi.RECTANGULAR, (n, n))
    b = Variable("b", lmi.SCALAR, 1)
    A = rng.normal(size=(n, n))
    expr = he(A.T @ P) + he(Y) - b * np.eye(n)
    prob = LmiProblem([P, Y, b], [LmiConstraint(expr, name="main")])
    form = lmi.compile(prob)
    vals = _random_values(prob.variables, rng)
    mats, _ = form.block_values(form.vector(vals))
    direct = expr.evaluate(vals)
    scale = form.blocks[0].scale
    assert np.allclose(mats[0] * scale, direct, atol=1e-12 * (1 + np.abs(direct).max()))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_he_exactly_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    Y = Variable("Y", lmi.RECTANGULAR, (n, n))
    e = he(rng.normal(size=(n, n)) @ Y + rng.normal(size=(n, n)))
    val = e.evaluate(_random_values([Y], rng))
    assert np.array_equal(val, val.T)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_congruence_matches_numeric(n, m, seed):
    rng = np.random.default_rng(seed)
    P = Variable("P", lmi.SYMMETRIC, n)
    T = rng.normal(size=(n, m))
    vals = _random_values([P], rng)
    got = congruence(P, T).evaluate(vals)
    want = T.T @ vals["P"] @ T
    assert np.allclose(got, want, rtol=1e-10, atol=1e-10 * np.abs(want).max())


def test_positive_definite_variable_compiles_to_block():
    P = Variable("P", lmi.SYMMETRIC, 2, lmi.POSITIVE_DEFINITE)
    form = lmi.compile(LmiProblem([P], []))
    assert [B.name for B in form.blocks] == ["P>0"]
    mats, _ = form.block_values(form.vector({"P": np.eye(2)}))
    assert np.allclose(mats[0], -np.eye(2))


def test_margin_tightens_strict_blocks_only():
    P = Variable("P", lmi.SYMMETRIC, 2)
    prob = LmiProblem([P], [LmiConstraint(P, lmi.NEGATIVE_DEFINITE, "s"),
                            LmiConstraint(P, lmi.NEGATIVE_SEMIDEFINITE, "w")])
    form = lmi.compile(prob, margin=0.1)
    mats, _ = form.block_values(np.zeros(form.nx))
    assert np.allclose(mats[0], 0.1 * np.eye(2)) and np.allclose(mats[1], 0.0)


def test_evaluate_constraints_direct():
    P = Variable("P", lmi.SYMMETRIC, 2)
    prob = LmiProblem([P], [LmiConstraint(P - np.eye(2), name="c")])
    [(name, sense, M)] = lmi.evaluate_constraints(prob, {"P": 3 * np.eye(2)})
    assert name == "c" and sense == lmi.NEGATIVE_DEFINITE and np.allclose(M, 2 * np.eye(2))


def test_scalar_constraints_become_rows():
    b = Variable("b", lmi.SCALAR, 1)
    form = lmi.compile(LmiProblem([b], [LmiConstraint(b - 2.0, name="b<2")]))
    assert form.blocks == [] and form.lp_names == ["b<2"]
    _, rows = form.block_values(np.array([1.0]))
    assert rows[0] == pytest.approx((1.0 - 2.0) / 3.0)


def test_affine_lift():
    assert isinstance(Affine.lift(np.eye(2)), Affine)
    P = Variable("P", lmi.SYMMETRIC, 2)
    assert Affine.lift(P).variables == [P]
