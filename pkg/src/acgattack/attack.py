"""ACG and APGD on an l-inf feasible region, plus plain CG on quadratics.

The engine maximizes. ACG moves along the sign of a conjugate direction
``s_k = grad_k + beta_k * s_{k-1}``; APGD moves along the sign of the gradient
with a momentum term. Both share the checkpoint step-size schedule: at each
checkpoint the step is halved (and the search restarts from the best point)
when too few iterations improved, or when neither the step nor the best value
changed since the previous checkpoint.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .geometry import FeasibleRegion, center_init, project, random_init
from .objectives import ClassifierObjective, Objective, Quadratic

BETA_VARIANTS = ("fr", "pr", "hs", "dy", "hz", "dl", "ls", "zero")
METHODS = ("acg", "apgd", "hybrid-gd2cg", "hybrid-cg2gd")


@dataclass(frozen=True)
class BetaFormula:
    """How the previous conjugate direction is mixed into the new one.

    ``zero`` is not a CG formula: it forces beta = 0 (projected sign ascent)
    and exists for degeneracy checks. ``t`` is only used by ``dl``.
    """

    variant: str = "hs"
    nonneg: bool = False
    t: float = 0.1

    def __post_init__(self):
        v = self.variant.lower()
        if v not in BETA_VARIANTS:
            raise ValueError(f"unknown beta variant {self.variant!r}; choose from {BETA_VARIANTS}")
        if v == "dl" and self.t < 0:
            raise ValueError("DL parameter t must be >= 0")
        object.__setattr__(self, "variant", v)


def _ratio(num: float, den: float) -> float:
    return 0.0 if den == 0.0 else num / den


def compute_beta(formula: BetaFormula, grad_k, grad_km1, s_km1) -> float:
    """Conjugate coefficient in the ascent convention.

    With ``y = grad_{k-1} - grad_k`` every variant is the textbook formula
    applied to the descent gradient ``-grad``. A zero denominator, or ``y = 0``
    (the case where the quotient degenerates), gives beta = 0.
    """
    g = np.asarray(grad_k, dtype=np.float64)
    g_old = np.asarray(grad_km1, dtype=np.float64)
    s = np.asarray(s_km1, dtype=np.float64)
    if g.shape != g_old.shape or g.shape != s.shape:
        raise ValueError("grad_k, grad_km1 and s_km1 must share a shape")
    v = formula.variant
    if v == "zero":
        return 0.0
    y = g_old - g
    if not np.any(y):
        return 0.0
    sy = float(s @ y)
    if v == "fr":
        beta = _ratio(float(g @ g), float(g_old @ g_old))
    elif v == "pr":
        beta = _ratio(float(-g @ y), float(g_old @ g_old))
    elif v == "hs":
        beta = _ratio(float(-g @ y), sy)
    elif v == "dy":
        beta = _ratio(float(g @ g), sy)
    elif v == "hz":
        if sy == 0.0:
            return 0.0
        beta = float((y - 2.0 * s * float(y @ y) / sy) @ -g) / sy
    elif v == "dl":
        beta = _ratio(float(-g @ (y - formula.t * s)), sy)
    else:  # ls
        beta = _ratio(float(-g @ y), float(s @ g_old))
    if formula.nonneg:
        beta = max(beta, 0.0)
    return float(beta)


def default_checkpoints(n_iter: int) -> list[int]:
    """APGD checkpoint schedule.

    ``p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06)``,
    ``w_j = ceil(p_j * n_iter)``; only checkpoints below ``n_iter`` are kept.
    Fractions keep ``ceil`` exact (0.22 * 100 is not 22 in binary floating point).
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    ps = [Fraction(0), Fraction(22, 100)]
    while ps[-1] <= 1:
        ps.append(ps[-1] + max(ps[-1] - ps[-2] - Fraction(3, 100), Fraction(6, 100)))
    out: list[int] = []
    for p in ps:
        w = math.ceil(p * n_iter)
        if w < n_iter and (not out or w > out[-1]):
            out.append(w)
    return out


@dataclass(frozen=True)
class AttackConfig:
    n_iter: int = 100
    rho: float = 0.75
    eta0: float | None = None  # None -> 2 * eps of the region
    restarts: int = 1
    beta: BetaFormula = field(default_factory=BetaFormula)
    alpha: float = 0.75
    checkpoints: tuple[int, ...] | None = None  # None -> default_checkpoints(n_iter)
    method: str = "acg"
    switch_eta: float | None = None
    seed: int = 0
    early_stop: bool = False

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ValueError("eta0 must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method.startswith("hybrid") and self.switch_eta is None:
            raise ValueError("hybrid methods need switch_eta")
        if self.checkpoints is not None:
            w = tuple(int(v) for v in self.checkpoints)
            if not w or w[0] != 0 or any(b <= a for a, b in zip(w, w[1:])) or w[-1] > self.n_iter:
                raise ValueError("checkpoints must start at 0, increase strictly and stay <= n_iter")
            object.__setattr__(self, "checkpoints", w)

    def checkpoint_list(self) -> list[int]:
        return list(self.checkpoints) if self.checkpoints is not None else default_checkpoints(self.n_iter)

    def step_size0(self, region: FeasibleRegion) -> float:
        return self.eta0 if self.eta0 is not None else 2.0 * region.eps

    def direction_mode(self, eta: float) -> str:
        """``"cg"`` or ``"gd"`` for the current step size."""
        if self.method == "acg":
            return "cg"
        if self.method == "apgd":
            return "gd"
        above = eta > self.switch_eta
        if self.method == "hybrid-gd2cg":
            return "gd" if above else "cg"
        return "cg" if above else "gd"


@dataclass
class SearchState:
    """Everything one iteration needs. ``*_pre`` are the restore targets preceding the best point."""

    k: int
    x: np.ndarray
    g: np.ndarray
    f: float
    x_prev: np.ndarray
    g_prev: np.ndarray
    s_prev: np.ndarray | None  # direction used at k-1; None when no CG history
    eta: float
    f_max: float
    x_adv: np.ndarray
    g_adv: np.ndarray
    x_pre: np.ndarray
    g_pre: np.ndarray
    s_pre: np.ndarray | None
    n_inc: int = 0
    eta_at_prev_checkpoint: float = 0.0
    fmax_at_prev_checkpoint: float = -math.inf


def init_state(objective: Objective, x0, eta0: float) -> SearchState:
    x0 = np.asarray(x0, dtype=np.float64)
    f0, g0 = objective.value_and_grad(x0)
    return SearchState(
        k=0, x=x0, g=g0, f=f0, x_prev=x0, g_prev=g0, s_prev=None, eta=eta0,
        f_max=f0, x_adv=x0, g_adv=g0, x_pre=x0, g_pre=g0, s_pre=g0,
        eta_at_prev_checkpoint=eta0, fmax_at_prev_checkpoint=f0,
    )


@dataclass(frozen=True)
class StepInfo:
    s: np.ndarray  # direction whose sign was taken
    beta: float  # nan for gradient steps
    z_raw: np.ndarray  # point before projection
    x_new: np.ndarray
    f_new: float
    improved: bool  # f(x_{k+1}) > f(x_k), for the checkpoint counter


def _advance(state: SearchState, s, x_new, objective) -> tuple[SearchState, float, bool]:
    f_new, g_new = objective.value_and_grad(x_new)
    new = replace(
        state, k=state.k + 1, x=x_new, g=g_new, f=f_new,
        x_prev=state.x, g_prev=state.g, s_prev=s,
    )
    if f_new > state.f_max:
        new.f_max = f_new
        new.x_adv, new.g_adv = x_new, g_new
        new.x_pre, new.g_pre, new.s_pre = state.x, state.g, s
    return new, f_new, f_new > state.f


def acg_step(state: SearchState, region: FeasibleRegion, objective: Objective,
             beta: BetaFormula = BetaFormula(), sigma: Callable = np.sign) -> tuple[SearchState, StepInfo]:
    """One conjugate-gradient ascent step. Without CG history the direction is the gradient."""
    if state.s_prev is None:
        b, s = 0.0, state.g
    else:
        b = compute_beta(beta, state.g, state.g_prev, state.s_prev)
        s = state.g + b * state.s_prev
    z_raw = state.x + state.eta * sigma(s)
    x_new = project(region, z_raw)
    new, f_new, improved = _advance(state, s, x_new, objective)
    return new, StepInfo(s, b, z_raw, x_new, f_new, improved)


def apgd_step(state: SearchState, region: FeasibleRegion, objective: Objective,
              alpha: float = 0.75, sigma: Callable = np.sign) -> tuple[SearchState, StepInfo]:
    """One APGD step: projected sign-gradient step blended with the previous move."""
    s = state.g
    z_raw = state.x + state.eta * sigma(s)
    z = project(region, z_raw)
    # x + a(z - x) + (1-a)(x - x_prev) regrouped so that a = 1 returns z bit-for-bit
    x_new = project(region, alpha * z + (1.0 - alpha) * (2.0 * state.x - state.x_prev))
    new, f_new, improved = _advance(state, s, x_new, objective)
    return new, StepInfo(s, math.nan, z_raw, z, f_new, improved)


def checkpoint_update(state: SearchState, w_prev: int, w_cur: int, rho: float) -> tuple[SearchState, bool]:
    """Step-size decision at checkpoint ``w_cur``.

    Halves when (I) ``n_inc < rho * (w_cur - w_prev)`` or (II) neither the step
    size nor the best value changed since the previous checkpoint. On halving
    the search restarts from the best point and its predecessor. The counter and
    the condition-II memory are reset either way.
    """
    cond1 = state.n_inc < rho * (w_cur - w_prev)
    cond2 = state.eta == state.eta_at_prev_checkpoint and state.f_max == state.fmax_at_prev_checkpoint
    halve = bool(cond1 or cond2)
    new = replace(state, n_inc=0, eta_at_prev_checkpoint=state.eta, fmax_at_prev_checkpoint=state.f_max)
    if halve:
        new.eta = state.eta / 2.0
        new.x, new.g, new.f = state.x_adv, state.g_adv, state.f_max
        new.x_prev, new.g_prev, new.s_prev = state.x_pre, state.g_pre, state.s_pre
    return new, halve


@dataclass
class SearchTrace:
    """Per-iteration record of one restart.

    Index ``k`` of the length ``n_iter + 1`` arrays describes iterate ``x_k``:
    ``eta[k]``/``beta[k]`` are used to leave it, ``halved[k]`` marks that it was
    put in place by a restore. ``move_dist``/``proj_dist`` have one entry per step.
    """

    iterates: np.ndarray
    loss: np.ndarray
    f_max: np.ndarray
    eta: np.ndarray
    beta: np.ndarray
    halved: np.ndarray
    move_dist: np.ndarray
    proj_dist: np.ndarray
    modes: list[str]
    ctc: np.ndarray | None = None
    restart: int = 0
    x_adv: np.ndarray | None = None
    best: float = -math.inf
    success: bool | None = None
    diameter: float = 0.0  # of the region searched; the DI normalizer

    @property
    def n_iter(self) -> int:
        return len(self.move_dist)


def run_attack(config: AttackConfig, region: FeasibleRegion, objective: Objective, x0,
               restart: int = 0) -> SearchTrace:
    x0 = np.asarray(x0, dtype=np.float64)
    if not region.contains(x0):
        raise ValueError("initial point is not feasible")
    n = config.n_iter
    checkpoints = config.checkpoint_list()
    w_index = {w: j for j, w in enumerate(checkpoints)}
    has_ctc = hasattr(objective, "ctc")

    state = init_state(objective, x0, config.step_size0(region))
    iterates = np.empty((n + 1, region.dim))
    loss = np.empty(n + 1)
    fmax = np.empty(n + 1)
    eta = np.empty(n + 1)
    betas = np.full(n + 1, math.nan)
    halved = np.zeros(n + 1, dtype=bool)
    move = np.empty(n)
    proj = np.empty(n)
    ctc = np.empty(n + 1, dtype=np.int64) if has_ctc else None
    modes: list[str] = []
    iterates[0], loss[0], fmax[0] = state.x, state.f, state.f_max
    if has_ctc:
        ctc[0] = objective.ctc(state.x)
    prev_mode = None

    for k in range(n):
        mode = config.direction_mode(state.eta)
        if mode == "cg":
            if prev_mode != "cg":
                state.s_prev = None  # fresh CG restart on entry
            state, info = acg_step(state, region, objective, config.beta)
            betas[k] = info.beta
        else:
            state, info = apgd_step(state, region, objective, config.alpha)
        modes.append(mode)
        prev_mode = mode
        eta[k] = state.eta
        proj[k] = np.linalg.norm(info.x_new - info.z_raw)

        j = w_index.get(k)
        if j is not None:
            if j > 0:
                state, did_halve = checkpoint_update(state, checkpoints[j - 1], k, config.rho)
                if did_halve:
                    halved[k + 1] = True
            else:
                state = replace(state, n_inc=0, eta_at_prev_checkpoint=state.eta,
                                fmax_at_prev_checkpoint=state.f_max)
        if info.improved:
            state.n_inc += 1

        iterates[k + 1] = state.x
        loss[k + 1] = state.f
        fmax[k + 1] = state.f_max
        move[k] = np.linalg.norm(iterates[k + 1] - iterates[k])
        if has_ctc:
            ctc[k + 1] = objective.ctc(state.x)
    eta[n] = state.eta

    success = None
    if isinstance(objective, ClassifierObjective):
        success = bool(state.f_max >= 0.0)
    return SearchTrace(
        iterates=iterates, loss=loss, f_max=fmax, eta=eta, beta=betas, halved=halved,
        move_dist=move, proj_dist=proj, modes=modes, ctc=ctc, restart=restart,
        x_adv=state.x_adv, best=state.f_max, success=success, diameter=region.diameter,
    )


@dataclass
class RestartResult:
    traces: list[SearchTrace]
    x_adv: np.ndarray
    best: float
    success: bool | None

    @property
    def restarts_used(self) -> int:
        return len(self.traces)


def run_restarts(config: AttackConfig, region: FeasibleRegion, objective: Objective) -> RestartResult:
    """Restart 0 starts at the region center, restart r >= 1 at ``random_init(seed + r)``."""
    traces: list[SearchTrace] = []
    best, x_adv, success = -math.inf, None, None
    for r in range(config.restarts):
        x0 = center_init(region) if r == 0 else random_init(region, config.seed + r)
        tr = run_attack(config, region, objective, x0, restart=r)
        traces.append(tr)
        if tr.best > best:
            best, x_adv = tr.best, tr.x_adv
        if tr.success is not None:
            success = bool(success) or tr.success
        if config.early_stop and success:
            break
    return RestartResult(traces, x_adv, best, success)


def parallel_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """Ordered map; results do not depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def cg_quadratic_minimize(q: Quadratic, x0, tol: float = 1e-10, max_iter: int | None = None) -> tuple[np.ndarray, int]:
    """Linear CG with exact line search on ``x^T A x + b^T x``.

    Returns the minimizer and the number of steps taken (at most ``n`` by default).
    """
    A, b = q.A, q.b
    x = np.array(x0, dtype=np.float64)
    limit = q.n if max_iter is None else max_iter
    g = 2.0 * A @ x + b
    s = -g
    it = 0
    while it < limit and np.linalg.norm(g) > tol:
        As = A @ s
        sAs = float(s @ As)
        if sAs <= 0.0:
            break
        step = -float(g @ s) / (2.0 * sAs)
        x = x + step * s
        it += 1
        g = 2.0 * A @ x + b
        # conjugacy w.r.t. A: s_new^T A s = 0
        s = -g + (float(g @ As) / sAs) * s
    return x, it
