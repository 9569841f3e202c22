"""Linear systems with a discrete and a distributed delay.

    x'(t) = A x(t) + Ad x(t - h) + AD * integral_{t-h}^{t} x(s) ds

plus the controlled form ``x' = A x + B u`` with the averaged output
``y = C (1/h) integral_{t-h}^{t} x(s) ds``.
"""

from dataclasses import dataclass

import numpy as np

from .matrix_core import MatrixError, as_mat


@dataclass(frozen=True)
class DelaySystem:
    A: np.ndarray
    Ad: np.ndarray
    AD: np.ndarray
    h: float

    def __post_init__(self):
        A = as_mat(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise MatrixError(f"A must be square, got {A.shape}")
        Ad = as_mat(self.Ad, "Ad") if self.Ad is not None else np.zeros((n, n))
        AD = as_mat(self.AD, "AD") if self.AD is not None else np.zeros((n, n))
        for name, M in (("Ad", Ad), ("AD", AD)):
            if M.shape != (n, n):
                raise MatrixError(f"{name} must be {n}x{n}, got {M.shape}")
        h = float(self.h)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"delay h must be positive, got {self.h}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Ad", Ad)
        object.__setattr__(self, "AD", AD)
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return self.A.shape[0]

    def with_delay(self, h):
        return DelaySystem(self.A, self.Ad, self.AD, h)

    def rhs(self, x, x_delayed, integral):
        return self.A @ x + self.Ad @ x_delayed + self.AD @ integral


@dataclass(frozen=True)
class ControlledSystem:
    """``x' = A x + B u``, ``y = C (1/h) int_{t-h}^t x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    h: float

    def __post_init__(self):
        A = as_mat(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise MatrixError(f"A must be square, got {A.shape}")
        B = as_mat(self.B, "B")
        C = as_mat(self.C, "C")
        if B.shape[0] != n:
            raise MatrixError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise MatrixError(f"C must have {n} columns, got {C.shape}")
        h = float(self.h)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"delay h must be positive, got {self.h}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return self.A.shape[0]

    def with_delay(self, h):
        return ControlledSystem(self.A, self.B, self.C, h)

    def closed_loop(self, K):
        """State feedback through the averaged output: AD = B K C / h, Ad = 0."""
        K = as_mat(K, "K")
        return DelaySystem(self.A, None, self.B @ K @ self.C / self.h, self.h)


@dataclass(frozen=True)
class EpsilonProfile:
    """Scalars of the structured slack ``Y = Z [e1 I, e2 I, e3 I, e4 I]``."""

    e1: float = 1.0
    e2: float = 0.0
    e3: float = 1.0
    e4: float = 1.0

    @property
    def values(self):
        return (self.e1, self.e2, self.e3, self.e4)

    def matrix(self, n):
        return np.hstack([e * np.eye(n) for e in self.values])

    def check(self):
        if self.e3 == 0.0:
            raise ValueError("the x'(t) weight e3 must be nonzero")
        return self


EPS_ONE = EpsilonProfile(1.0, 1.0, 1.0, 1.0)
EPS_NEQ_ONE = EpsilonProfile(1.0, 0.0, 1.0, 1.0)

PROFILES = {"eps1": EPS_ONE, "epsneq1": EPS_NEQ_ONE}


def example_system1(h=1.0):
    """Distributed-delay example: unstable at h=0, stable for h in (0.2, 2.04)."""
    A = np.array([[0.2, 0.0], [0.2, 0.1]])
    AD = np.array([[-1.0, 0.0], [-1.0, -1.0]])
    return DelaySystem(A, np.zeros((2, 2)), AD, h)


def example_system2(h=1.0):
    """Discrete-delay example."""
    A = np.array([[-3.0, -2.0], [1.0, 0.0]])
    Ad = np.array([[-0.5, 0.1], [0.3, 0.0]])
    return DelaySystem(A, Ad, np.zeros((2, 2)), h)


def example_controlled(h=1.0):
    """Controlled example sharing A with system 1, output = averaged full state."""
    A = np.array([[0.2, 0.0], [0.2, 0.1]])
    B = np.array([[-1.0, 0.0], [-1.0, -1.0]])
    return ControlledSystem(A, B, np.eye(2), h)
