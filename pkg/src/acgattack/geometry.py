"""Feasible region of an l-inf budget attack: the eps-ball around x_orig cut by the unit box."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used everywhere in the package (numpy PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class FeasibleRegion:
    """Box ``[l, u]`` with ``u = min(x_orig + eps, 1)`` and ``l = max(x_orig - eps, 0)``.

    ``eps`` is in pixel units (e.g. 8/255). ``diameter`` is ``||u - l||_2``.
    """

    x_orig: np.ndarray
    eps: float
    upper: np.ndarray = field(init=False, repr=False)
    lower: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.x_orig, dtype=np.float64).ravel()
        if not np.all(np.isfinite(x)):
            raise ValueError("x_orig must be finite")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("x_orig must lie in [0, 1]^m")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        x.setflags(write=False)
        upper = np.minimum(x + self.eps, 1.0)
        lower = np.maximum(x - self.eps, 0.0)
        upper.setflags(write=False)
        lower.setflags(write=False)
        object.__setattr__(self, "x_orig", x)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)

    @property
    def dim(self) -> int:
        return self.x_orig.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x)
        return x.shape == (self.dim,) and bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def project(region: FeasibleRegion, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (region.dim,):
        raise ValueError(f"expected a point of shape ({region.dim},), got {x.shape}")
    return np.minimum(np.maximum(x, region.lower), region.upper)


def center_init(region: FeasibleRegion) -> np.ndarray:
    return (region.upper + region.lower) / 2.0


def random_init(region: FeasibleRegion, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    u = rng.random(region.dim)
    # clamp guards against l + (u-l)*t rounding a hair past u
    return project(region, region.lower + (region.upper - region.lower) * u)
