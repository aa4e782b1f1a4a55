"""Proximal alternating linearized minimization with a per-iteration ledger.

Psi(x, y) = f(x) + g(y) + F(x, y). Each iteration takes a proximal
gradient step in x with modulus c_k = gamma1*L1(y_k), then one in y with
d_k = gamma2*L2(x_{k+1}). The trace records everything needed to check
sufficient decrease, the subgradient residual bound and the finite-length
bound A + C*phi(Psi(z_{l+1}) - Psi(z*)).

Prox convention: ``prox(v, t)`` returns argmin_u  f(u) + (t/2)*|u - v|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (BandNotEnteredError, ConfigurationError, DescentViolationError,
                     NotSettledError, ProxFailureError)

Vec = np.ndarray


@dataclass
class PalmProblem:
    name: str
    f_val: Callable[[Vec], float]
    g_val: Callable[[Vec], float]
    f_prox: Callable[[Vec, float], Vec]
    g_prox: Callable[[Vec, float], Vec]
    F_val: Callable[[Vec, Vec], float]
    F_grad_x: Callable[[Vec, Vec], Vec]
    F_grad_y: Callable[[Vec, Vec], Vec]
    L1: Callable[[Vec], float]
    L2: Callable[[Vec], float]
    lam1: tuple[float, float]
    lam2: tuple[float, float]
    dims: tuple[int, int] = (1, 1)
    M: float | None = None
    psi_dist: Callable[[np.ndarray], np.ndarray] | None = None
    psi_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def psi(self, x: Vec, y: Vec) -> float:
        return float(self.f_val(x) + self.g_val(y) + self.F_val(x, y))

    def split(self, z) -> tuple[Vec, Vec]:
        z = np.asarray(z, dtype=float).ravel()
        n, _ = self.dims
        return z[:n].copy(), z[n:].copy()

    def grad(self, z: Vec) -> Vec:
        x, y = self.split(z)
        return np.concatenate([self.F_grad_x(x, y), self.F_grad_y(x, y)])


@dataclass
class PalmConfig:
    gamma1: float = 2.0
    gamma2: float = 2.0
    z0: Sequence[float] = (1.0, 1.0)
    max_iters: int = 200
    stop_tol: float = 0.0
    seed: int = 0
    descent_tol: float = 1e-9

    def __post_init__(self):
        if not (self.gamma1 > 1 and self.gamma2 > 1):
            raise ConfigurationError("gamma1 and gamma2 must be strictly greater than 1")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be nonnegative")


def rho_constants(problem: PalmProblem, config: PalmConfig) -> tuple[float, float]:
    (l1m, l1p), (l2m, l2p) = problem.lam1, problem.lam2
    rho1 = min((config.gamma1 - 1) * l1m, (config.gamma2 - 1) * l2m)
    rho2 = max(config.gamma1 * l1p, config.gamma2 * l2p)
    return rho1, rho2


def _prox(oracle, v, t, which):
    out = oracle(v, t)
    if out is None:
        raise ProxFailureError(f"{which}-prox returned no point")
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ProxFailureError(f"{which}-prox returned a non-finite point")
    return out


def palm_step(problem: PalmProblem, config: PalmConfig, z) -> tuple[Vec, float, float]:
    """One iteration; returns (z_next, c_k, d_k)."""
    x, y = problem.split(z)
    c = config.gamma1 * problem.L1(y)
    if not c > 0:
        raise ConfigurationError("L1(y_k) must be positive")
    x1 = _prox(problem.f_prox, x - problem.F_grad_x(x, y) / c, c, "x")
    d = config.gamma2 * problem.L2(x1)
    if not d > 0:
        raise ConfigurationError("L2(x_{k+1}) must be positive")
    y1 = _prox(problem.g_prox, y - problem.F_grad_y(x1, y) / d, d, "y")
    return np.concatenate([x1, y1]), c, d


@dataclass
class PalmTrace:
    problem: str
    z: np.ndarray            # (K+1, n+m) iterates
    psi: np.ndarray          # (K+1,)
    c: np.ndarray            # (K,)
    d: np.ndarray            # (K,)
    step_norm: np.ndarray    # (K,) |z_{k+1} - z_k|
    decrease_slack: np.ndarray  # (K,)
    residual_norm: np.ndarray = field(default_factory=lambda: np.zeros(0))  # (K,) at k = 1..K
    residual_bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fixed_point: bool = False   # the step after the last iterate was exactly zero
    rho1: float = float("nan")
    rho2: float = float("nan")
    M: float = float("nan")

    def __len__(self):
        return len(self.psi)

    @property
    def limit_estimate(self) -> np.ndarray:
        return self.z[-1]

    def rows(self):
        """CSV rows: k, x..., y..., psi, step_norm, residual_norm, decrease_slack."""
        out = []
        for k in range(len(self.psi)):
            step = self.step_norm[k] if k < len(self.step_norm) else ""
            slack = self.decrease_slack[k] if k < len(self.decrease_slack) else ""
            res = self.residual_norm[k - 1] if 1 <= k <= len(self.residual_norm) else ""
            out.append([k, *self.z[k].tolist(), self.psi[k], step, res, slack])
        return out


def run(problem: PalmProblem, config: PalmConfig) -> PalmTrace:
    """Iterate until the step norm drops to stop_tol or max_iters is reached.

    A step at or below ``stop_tol`` is not appended, so starting at a fixed
    point yields a trace with the single iterate z0.
    """
    rho1, rho2 = rho_constants(problem, config)
    z = np.asarray(config.z0, dtype=float).ravel()
    if z.size != sum(problem.dims):
        raise ConfigurationError(f"z0 must have {sum(problem.dims)} entries")
    zs = [z]
    psis = [problem.psi(*problem.split(z))]
    cs, ds, steps, slacks = [], [], [], []
    fixed = False
    for k in range(config.max_iters):
        z1, c, d = palm_step(problem, config, z)
        step = float(np.linalg.norm(z1 - z))
        if step <= config.stop_tol:
            fixed = step == 0.0
            break
        p1 = problem.psi(*problem.split(z1))
        slack = psis[-1] - p1 - 0.5 * rho1 * step * step
        if slack < -config.descent_tol * (1 + abs(psis[-1])):
            raise DescentViolationError(
                f"sufficient decrease fails at k={k}: slack {slack:.3e} (check L1/L2)", k=k, slack=slack)
        zs.append(z1)
        psis.append(p1)
        cs.append(c)
        ds.append(d)
        steps.append(step)
        slacks.append(slack)
        z = z1
    trace = PalmTrace(problem.name, np.array(zs), np.array(psis), np.array(cs), np.array(ds),
                      np.array(steps), np.array(slacks), fixed_point=fixed, rho1=rho1, rho2=rho2)
    M = problem.M if problem.M is not None else estimate_M(problem, trace, config.seed)
    trace.M = M
    res, bnd = [], []
    for k in range(1, len(trace)):
        r = residual(problem, trace, k)
        res.append(r.norm)
        bnd.append(r.bound)
    trace.residual_norm = np.array(res)
    trace.residual_bound = np.array(bnd)
    return trace


def estimate_M(problem: PalmProblem, trace: PalmTrace, seed: int = 0, samples: int = 2000) -> float:
    """Lipschitz constant of grad F on the trace's bounding box (inflated 10%), doubled."""
    lo, hi = trace.z.min(axis=0), trace.z.max(axis=0)
    pad = 0.1 * np.maximum(hi - lo, 1e-3)
    lo, hi = lo - pad, hi + pad
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, size=(samples, lo.size))
    b = rng.uniform(lo, hi, size=(samples, lo.size))
    best = 0.0
    for p, q in zip(a, b):
        gap = np.linalg.norm(p - q)
        if gap > 0:
            best = max(best, np.linalg.norm(problem.grad(p) - problem.grad(q)) / gap)
    return 2.0 * best


@dataclass
class Residual:
    ax: np.ndarray
    ay: np.ndarray
    norm: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.norm <= self.bound + 1e-9


def residual(problem: PalmProblem, trace: PalmTrace, k: int) -> Residual:
    """Subgradient witness (A_x^k, A_y^k) in dPsi(z_k), k >= 1."""
    if k < 1 or k >= len(trace):
        raise ConfigurationError(f"residual index {k} outside 1..{len(trace) - 1}")
    x0, y0 = problem.split(trace.z[k - 1])
    x1, y1 = problem.split(trace.z[k])
    ax = trace.c[k - 1] * (x0 - x1) + problem.F_grad_x(x1, y1) - problem.F_grad_x(x0, y0)
    ay = trace.d[k - 1] * (y0 - y1) + problem.F_grad_y(x1, y1) - problem.F_grad_y(x1, y0)
    norm = float(np.linalg.norm(ax) + np.linalg.norm(ay))
    bound = (2 * trace.M + 3 * trace.rho2) * float(np.linalg.norm(trace.z[k] - trace.z[k - 1]))
    return Residual(ax, ay, norm, bound)


@dataclass
class CheckReport:
    passed: bool
    values: np.ndarray
    minimum: float
    detail: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "minimum": self.minimum, **self.detail}


def sufficient_decrease_check(trace: PalmTrace, rho1: float, tol: float = 1e-9) -> CheckReport:
    """(rho1/2)|dz|^2 <= Psi(z_k) - Psi(z_{k+1}), plus the summability consequence."""
    steps = trace.step_norm
    drops = trace.psi[:-1] - trace.psi[1:]
    slack = drops - 0.5 * rho1 * steps ** 2
    minimum = float(slack.min()) if slack.size else 0.0
    sq = float(np.sum(steps ** 2))
    cap = 2.0 / rho1 * float(trace.psi[0] - trace.psi[-1]) if len(trace) > 1 else 0.0
    ok = minimum >= -tol and sq <= cap + tol
    return CheckReport(ok, slack, minimum, {"sum_sq_steps": sq, "sum_sq_cap": cap})


def residual_check(trace: PalmTrace, tol: float = 1e-9) -> CheckReport:
    slack = trace.residual_bound - trace.residual_norm
    minimum = float(slack.min()) if slack.size else 0.0
    return CheckReport(minimum >= -tol, slack, minimum)


def limit_set_estimate(trace: PalmTrace, tail: int = 10, tol: float = 1e-6):
    """Cluster the last ``tail`` iterates; returns (representatives, mu)."""
    if len(trace) <= tail:
        tail = len(trace)
    pts = trace.z[-tail:]
    vals = trace.psi[-tail:]
    if float(vals.max() - vals.min()) > tol:
        raise NotSettledError(f"value spread {vals.max() - vals.min():.3e} exceeds {tol}")
    reps: list[np.ndarray] = []
    for p in pts[::-1]:
        if not any(np.linalg.norm(p - r) <= 10 * tol for r in reps):
            reps.append(p)
    return reps, float(trace.psi[-1])


@dataclass
class BoundLedger:
    rho1: float
    rho2: float
    M: float
    C: float
    A: float
    l: int
    l1: int
    l2: int
    case: int
    l_case1: int | None
    psi_star: float
    t_eval: float | None
    empirical_length: float
    bound_value: float
    bounds: dict
    kl_bounds: dict
    partial_sum_min_slack: float | None
    eps: float
    eta: float
    z_star: list

    @property
    def certified(self) -> bool:
        return self.empirical_length <= self.bound_value + 1e-6

    def to_json(self):
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        out = {k: enc(v) for k, v in self.__dict__.items()}
        out["certified"] = self.certified
        return out


def _A(steps: np.ndarray, l: int) -> float:
    """|z_{l+1} - z_l| + sum_{k=1}^{l} |z_{k+1} - z_k|."""
    s = lambda k: float(steps[k]) if 0 <= k < len(steps) else 0.0  # noqa: E731
    return s(l) + sum(s(k) for k in range(1, l + 1))


def length_bound(trace: PalmTrace, moduli: Mapping[str, object], eps: float, eta: float,
                 primary: str | None = None, problem: PalmProblem | None = None) -> BoundLedger:
    """Evaluate the finite-length certificate for each desingularizer in ``moduli``.

    z* is the final iterate. Case 1 (some iterate already at the limit value,
    after which the sequence is constant) short-circuits the bound to A; the
    KL-based bounds are still evaluated from the band index for comparison.
    """
    if not moduli:
        raise ConfigurationError("at least one desingularizer is required")
    primary = primary or next(iter(moduli))
    rho1, rho2, M = trace.rho1, trace.rho2, trace.M
    C = 2 * (2 * M + 3 * rho2) / rho1
    steps = trace.step_norm
    psi_star = float(problem.psi(*problem.split(trace.z[-1]))) if problem else float(trace.psi[-1])
    K = len(trace) - 1
    levels = trace.psi - psi_star
    at_limit = [k for k in range(K) if levels[k] <= 0]
    l_case1 = at_limit[0] if at_limit else (K if trace.fixed_point else None)
    case = 1 if l_case1 is not None else 2
    end = l_case1 if case == 1 else K   # iterates strictly before ``end`` are candidates
    zstar = trace.z[-1]
    in_value = [0 < levels[k] < eta for k in range(end)]
    in_ball = [float(np.linalg.norm(trace.z[k] - zstar)) < eps for k in range(end)]

    def first_from(flags):
        l = max(end - 1, 1)
        for cand in range(end - 2, 0, -1):
            if all(flags[cand + 1:end]):
                l = cand
            else:
                break
        return max(l, 1)

    l1, l2 = first_from(in_value), first_from(in_ball)
    l = max(l1, l2)
    empirical = float(np.sum(steps[1:]))
    kl_bounds: dict = {}
    t_eval = None
    partial_min = None
    entered = l + 1 < end and in_value[l + 1] and in_ball[l + 1]
    if entered:
        t_eval = float(levels[l + 1])
        A_l = _A(steps, l)
        for name, phi in moduli.items():
            kl_bounds[name] = A_l + C * float(phi(t_eval))
        phi = moduli[primary]
        slacks = []
        for p in range(l + 1, end):
            lhs = float(np.sum(steps[p:]))
            rhs = C * float(phi(levels[p])) + float(steps[p - 1])
            slacks.append(rhs - lhs)
        partial_min = min(slacks) if slacks else None
    elif case == 2:
        raise BandNotEnteredError("no iterate entered the KL band (eps, eta) before the limit")
    if case == 1:
        A_val = _A(steps, l_case1)
        bounds = {name: A_val for name in moduli}
    else:
        A_val = _A(steps, l)
        bounds = dict(kl_bounds)
    return BoundLedger(rho1=rho1, rho2=rho2, M=M, C=C, A=A_val, l=l, l1=l1, l2=l2, case=case,
                       l_case1=l_case1, psi_star=psi_star, t_eval=t_eval,
                       empirical_length=empirical, bound_value=bounds[primary], bounds=bounds,
                       kl_bounds=kl_bounds, partial_sum_min_slack=partial_min, eps=eps, eta=eta,
                       z_star=zstar.tolist())
