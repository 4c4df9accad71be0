"""Differentiable scalar objectives used by the attack engine.

Every objective is *maximized* by the engine. Objectives expose ``value``,
``grad`` and ``value_and_grad``; the classifier objective additionally
reports logits and the CW target class of a point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def cw_loss(logits, c: int) -> float:
    """Carlini-Wagner margin ``-g_c + max_{i != c} g_i``; an attack succeeds when it is >= 0."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    if z.shape[0] < 2:
        raise ValueError("CW loss needs at least two classes")
    if not 0 <= c < z.shape[0]:
        raise ValueError(f"class index {c} out of range for {z.shape[0]} logits")
    return float(-z[c] + z[cw_target_class(z, c)])


def cw_target_class(logits, c: int) -> int:
    """Strongest competing class ``argmax_{i != c}``; ties go to the lowest index."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    if z.shape[0] < 2:
        raise ValueError("CW target class needs at least two classes")
    masked = z.copy()
    masked[c] = -np.inf
    # np.argmax returns the first maximal index
    return int(np.argmax(masked))


def cw_loss_and_logit_grad(logits, c: int) -> tuple[float, np.ndarray]:
    """CW value and its gradient with respect to the logits (``e_ctc - e_c``)."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    t = cw_target_class(z, c)
    g = np.zeros_like(z)
    g[t] += 1.0
    g[c] -= 1.0
    return float(-z[c] + z[t]), g


class Objective:
    """Scalar function of a point with an analytic gradient."""

    name = "objective"

    def __init__(self, dim: int):
        self.dim = dim

    def value(self, x) -> float:
        return self.value_and_grad(x)[0]

    def grad(self, x) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected shape ({self.dim},), got {x.shape}")
        return x


class FunctionObjective(Objective):
    """Wraps a ``(value, grad)`` pair of callables."""

    def __init__(self, dim: int, value_fn: Callable, grad_fn: Callable, name: str = "function"):
        super().__init__(dim)
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self.name = name

    def value_and_grad(self, x):
        x = self._check(x)
        return float(self._value_fn(x)), np.asarray(self._grad_fn(x), dtype=np.float64)


@dataclass(frozen=True)
class Quadratic:
    """``f(x) = x^T A x + b^T x`` with ``A`` symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b must have length {A.shape[0]}, got {b.shape}")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        try:
            chol = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise ValueError("A must be positive definite") from exc
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_chol", chol)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def minimizer(self) -> np.ndarray:
        """Solution of ``2 A x = -b`` via the Cholesky factor."""
        y = np.linalg.solve(self._chol, -self.b / 2.0)
        return np.linalg.solve(self._chol.T, y)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, cond: float | None = None) -> "Quadratic":
        """Random strictly convex quadratic.

        Default ``A = B B^T / n + I`` with Gaussian ``B``. With ``cond`` set,
        ``A = Q diag(e) Q^T`` with eigenvalues log-uniform on ``[1, cond]``.
        """
        if cond is None:
            B = rng.standard_normal((n, n))
            A = B @ B.T / n + np.eye(n)
        else:
            if cond < 1:
                raise ValueError("cond must be >= 1")
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            eig = np.exp(rng.uniform(0.0, np.log(cond), size=n))
            A = (q * eig) @ q.T
        A = (A + A.T) / 2.0
        return cls(A, rng.standard_normal(n))


class QuadraticObjective(Objective):
    name = "quadratic"

    def __init__(self, q: Quadratic):
        super().__init__(q.n)
        self.q = q

    def value_and_grad(self, x):
        x = self._check(x)
        Ax = self.q.A @ x
        return float(x @ Ax + self.q.b @ x), 2.0 * Ax + self.q.b


def quadratic_objective(q: Quadratic) -> QuadraticObjective:
    return QuadraticObjective(q)


class MultimodalObjective(Objective):
    """Two-dimensional test function with several local optima.

    ``f(x, y) = -10 exp(-0.2 sqrt((x^4 + y^2)/2)) + exp((cos 2 pi x + cos 2 pi y)/2)``.
    The square root has a cusp at the origin; the gradient there is taken as 0.
    """

    name = "multimodal"

    def __init__(self):
        super().__init__(2)

    def value_and_grad(self, p):
        x, y = self._check(p)
        r = np.sqrt(0.5 * (x**4 + y**2))
        e1 = np.exp(-0.2 * r)
        e2 = np.exp(0.5 * (np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y)))
        val = -10.0 * e1 + e2
        gx = -np.pi * np.sin(2 * np.pi * x) * e2
        gy = -np.pi * np.sin(2 * np.pi * y) * e2
        if r > 0.0:
            gx += 2.0 * e1 * x**3 / r
            gy += e1 * y / r
        else:
            gx = gy = 0.0
        return float(val), np.array([gx, gy])


def multimodal_objective() -> MultimodalObjective:
    return MultimodalObjective()


class BoxScaledObjective(Objective):
    """Pulls an objective on ``[lo, hi]^m`` back to the unit box, optionally negated.

    Lets the l-inf engine (which lives in ``[0, 1]^m``) search a physical domain,
    and minimize by maximizing ``-f``.
    """

    def __init__(self, base: Objective, lo: float, hi: float, negate: bool = False):
        super().__init__(base.dim)
        self.base = base
        self.lo = float(lo)
        self.hi = float(hi)
        self.sign = -1.0 if negate else 1.0
        self.name = f"{'neg-' if negate else ''}{base.name}[{lo:g},{hi:g}]"

    def to_physical(self, x) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * np.asarray(x, dtype=np.float64)

    def value_and_grad(self, x):
        x = self._check(x)
        v, g = self.base.value_and_grad(self.to_physical(x))
        return self.sign * v, self.sign * (self.hi - self.lo) * g


class ConstantObjective(Objective):
    name = "constant"

    def __init__(self, dim: int, value: float = 0.0):
        super().__init__(dim)
        self._value = float(value)

    def value_and_grad(self, x):
        self._check(x)
        return self._value, np.zeros(self.dim)


class ClassifierObjective(Objective):
    """CW loss of a classifier at the true class ``label``.

    ``model`` must provide ``forward(x) -> logits`` and
    ``input_gradient(x, logit_grad_fn, c)``.
    """

    name = "cw"

    def __init__(self, model, label: int):
        super().__init__(model.input_dim)
        self.model = model
        self.label = int(label)
        if not 0 <= self.label < model.num_classes:
            raise ValueError(f"label {label} out of range for {model.num_classes} classes")

    def logits(self, x) -> np.ndarray:
        return self.model.forward(self._check(x))

    def value(self, x) -> float:
        return cw_loss(self.logits(x), self.label)

    def value_and_grad(self, x):
        x = self._check(x)
        return self.model.value_and_input_gradient(x, cw_loss_and_logit_grad, self.label)

    def ctc(self, x) -> int:
        return cw_target_class(self.logits(x), self.label)
