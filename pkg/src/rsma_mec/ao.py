"""Alternating optimisation of powers and split factor, plus reference searches.

The offloading factors come from the closed form once. Powers and the split
factor are then improved in turn by convex restrictions of the Chernoff
bound until the bound stops moving by more than ``tau``. Reported SCP values
always use the exact error products.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, logit

from . import barrier
from .fbl import margin
from .sca import InfeasiblePoint, beta_subproblem, power_subproblem, slack_seed
from .streams import ChannelRealization, PowerAllocation, SplitFactors, sinr_chain, sinrs
from .system import (
    InfeasibleBlocklength,
    OffloadFactors,
    ScpResult,
    SystemConfig,
    all_local,
    chernoff_objective,
    loads_for,
    optimal_lambda,
    scp,
    scp_grid,
    timing,
)

log = logging.getLogger(__name__)

TAU = 1e-3
MAX_ITER = 100
# Split factors handed to the split step are kept this far from 0 and 1.
BETA_EDGE = 1e-6
# Restoration points whose worst margin is already this large skip the
# Nelder-Mead polish; the AO steps take over from there.
POLISH_BELOW = 1.0


@dataclass(frozen=True)
class Allocation:
    pw: PowerAllocation
    lam: OffloadFactors
    beta: SplitFactors

    @property
    def m(self) -> np.ndarray:
        return self.pw.as_array()


@dataclass
class AoTrace:
    objectives: list[float] = field(default_factory=list)
    allocations: list[Allocation] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    restored: bool = False
    picked: str = "ao"

    @property
    def iterations(self) -> int:
        return max(0, len(self.objectives) - 1)


class SolverFailure(RuntimeError):
    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        super().__init__(f"AO iteration {iteration}: {cause}")


def _no_offload(cfg: SystemConfig) -> tuple[Allocation, ScpResult]:
    lam = OffloadFactors(0.0, 0.0)
    alloc = Allocation(PowerAllocation(0.0, 0.0, 0.0), lam, SplitFactors.from_beta(0.5))
    _, t2, t3 = timing(cfg, lam)
    return alloc, ScpResult(1.0, True, 0.0, 0.0, t2, t3, 1.0)


def _infeasible(cfg: SystemConfig, lam: OffloadFactors | None) -> tuple[Allocation, ScpResult]:
    lam = lam or OffloadFactors(1.0, 1.0)
    alloc = Allocation(PowerAllocation(0.0, 0.0, 0.0), lam, SplitFactors.from_beta(0.5))
    return alloc, ScpResult(0.0, False, 1.0, 1.0, cfg.N * cfg.Ts, float("nan"), 0.0)


def _prepare(cfg: SystemConfig):
    """Shared front end: short-circuits plus the closed-form offloading factors.

    Returns ``(lam, None)`` when optimisation is needed, otherwise
    ``(lam, (Allocation, ScpResult))``.
    """
    if all_local(cfg):
        return None, _no_offload(cfg)
    try:
        lam = optimal_lambda(cfg)
    except InfeasibleBlocklength as exc:
        log.info("infeasible instance: %s", exc)
        return None, _infeasible(cfg, None)
    feasible, _, _ = timing(cfg, lam)
    if not feasible:
        log.info("MEC server cannot finish the offloaded bits in time; SCP is 0")
        return lam, _infeasible(cfg, lam)
    return lam, None


def _edge_refined_shares(n_lin: int = 17, n_log: int = 14, smallest: float = 1e-4) -> np.ndarray:
    """Shares in (0, 1): a uniform grid plus log-spaced points hugging 0 and 1."""
    tail = np.geomspace(smallest, 0.5, n_log)
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, n_lin)[1:-1], tail, 1.0 - tail]))


def _worst_margin(cfg, ch, lam, s, q, b):
    """Smallest rate margin over busy streams for user-1 share ``s`` on s12,
    user-2 power share ``q`` and split factor ``b`` (broadcasting)."""
    pt = cfg.Pt * (1 - 1e-8)
    ga, gb, gc = sinr_chain(ch.g1, ch.g2, ch.noise, pt - s * pt, s * pt, q * pt)
    worst = np.full(np.broadcast_shapes(np.shape(s), np.shape(q), np.shape(b)), np.inf)
    for g, m in zip((ga, gb, gc), loads_for(cfg, lam, b)):
        m = np.asarray(m)
        if np.any(m > 0):
            worst = np.minimum(worst, np.where(m > 0, margin(g, m, cfg.N), np.inf))
    return worst


def restoration_point(cfg: SystemConfig, ch: ChannelRealization, lam: OffloadFactors):
    """Interior allocation maximising the worst rate margin over busy streams.

    User 1 always spends its whole budget here; its split between s11 and s12,
    user 2's power and the split factor are searched on edge-refined grids,
    since decodable regions at long blocklengths are thin slivers near the
    NOMA corners. The best grid point is then polished by Nelder-Mead in
    logit coordinates when its margin is thin. Returns ``(PowerAllocation, beta, worst_margin)``.
    """
    shares = _edge_refined_shares()
    s, q, b = np.meshgrid(shares, np.append(shares, 1.0 - 1e-9), shares, indexing="ij", sparse=True)
    worst = _worst_margin(cfg, ch, lam, s, q, b)
    i, j, l = np.unravel_index(np.argmax(worst), worst.shape)
    z0 = logit(np.array([s[i, 0, 0], q[0, j, 0], b[0, 0, l]]))

    pt = cfg.Pt * (1 - 1e-8)
    u1, u2 = lam.lambda1 * cfg.M1, lam.lambda2 * cfg.M2
    sqn, noise = math.sqrt(cfg.N), ch.noise

    def f(gamma, bits):
        if bits <= 0:
            return math.inf
        v = -math.expm1(-2 * math.log1p(gamma)) if gamma > 0 else 0.0
        if v <= 0:
            return -math.inf
        return (math.log2(1 + gamma) - bits / cfg.N) * sqn / math.sqrt(v)

    def loss(z):
        # scalar twin of _worst_margin; Nelder-Mead calls it hundreds of times
        share, qq, bb = (1 / (1 + math.exp(-min(max(v, -700), 700))) for v in z)
        rx12, rx2 = share * pt * ch.g1, qq * pt * ch.g2
        val = min(
            f((pt - share * pt) * ch.g1 / (rx12 + rx2 + noise), bb * u1),
            f(rx2 / (rx12 + noise), u2),
            f(rx12 / noise, (1 - bb) * u1),
        )
        return -val if math.isfinite(val) else 1e300

    z = z0
    if worst[i, j, l] < POLISH_BELOW:
        ref = minimize(loss, z0, method="Nelder-Mead", options={"xatol": 1e-7, "fatol": 1e-6, "maxfev": 600})
        if ref.fun < loss(z0):
            z = ref.x
    # expit saturates to exactly 0 or 1 in floating point; stay interior
    share, q2, beta = np.clip(expit(z), 1e-12, 1 - 1e-12)
    pw = PowerAllocation(float(pt - share * pt), float(share * pt), float(q2 * pt))
    return pw, float(beta), float(_worst_margin(cfg, ch, lam, share, q2, beta))


def _seed_ok(cfg, ch, pw, lam, beta) -> bool:
    loads = np.array(loads_for(cfg, lam, beta), dtype=float)
    f = margin(np.array(sinrs(ch, pw)), loads, cfg.N)
    return bool(np.all((loads == 0) | (f > 0)))


def _power_step(cfg, ch, pw, lam, beta, tol):
    loads = loads_for(cfg, lam, beta)
    split = SplitFactors.from_beta(beta)
    for shrink in (0.999, 1 - 1e-6):
        try:
            lp = slack_seed(ch, pw, loads, cfg.N, pt=cfg.Pt, beta=split, rho_shrink=shrink)
            step = power_subproblem(ch, cfg.N, cfg.Pt, loads, lp)
            break
        except InfeasiblePoint:
            continue
    else:
        return None
    rep = barrier.solve(step.program, step.x0, tol)
    if rep.status == barrier.INFEASIBLE_START:
        return None
    return step.unpack(rep.x_star)[0]


def _split_step(cfg, ch, pw, lam, beta, tol):
    u1, u2 = lam.lambda1 * cfg.M1, lam.lambda2 * cfg.M2
    b0 = min(max(beta, BETA_EDGE), 1 - BETA_EDGE)
    try:
        step = beta_subproblem(sinrs(ch, pw), cfg.N, u1, u2, b0)
    except InfeasiblePoint:
        return None
    rep = barrier.solve(step.program, step.x0, tol)
    if rep.status == barrier.INFEASIBLE_START:
        return None
    return step.unpack(rep.x_star)[0].beta_a


def alternate(
    cfg: SystemConfig,
    ch: ChannelRealization,
    lam: OffloadFactors,
    pw: PowerAllocation,
    beta: float,
    *,
    tau: float = TAU,
    max_iter: int = MAX_ITER,
    tol: float = 1e-8,
) -> tuple[PowerAllocation, float, AoTrace]:
    """Power / split alternation from a point where every busy stream is decodable.

    A step is kept only if the true bound does not increase, so the recorded
    objective sequence is non-increasing.
    """

    def bound(p, b):
        return chernoff_objective(cfg, ch, p, lam, b)

    trace = AoTrace()
    eps = bound(pw, beta)
    trace.objectives.append(eps)
    trace.allocations.append(Allocation(pw, lam, SplitFactors.from_beta(beta)))
    split_free = lam.lambda1 > 0
    for n in range(1, max_iter + 1):
        try:
            new_pw = _power_step(cfg, ch, pw, lam, beta, tol)
            if new_pw is not None and (val := bound(new_pw, beta)) <= eps:
                pw, cur = new_pw, val
            else:
                cur = eps
            if split_free:
                new_beta = _split_step(cfg, ch, pw, lam, beta, tol)
                if new_beta is not None and (val := bound(pw, new_beta)) <= cur:
                    beta, cur = new_beta, val
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SolverFailure(n, exc) from exc
        trace.objectives.append(cur)
        trace.allocations.append(Allocation(pw, lam, SplitFactors.from_beta(beta)))
        done = abs(cur - eps) <= tau
        eps = cur
        if done:
            trace.converged = True
            break
    return pw, beta, trace


def optimize(
    cfg: SystemConfig,
    ch: ChannelRealization,
    *,
    tau: float = TAU,
    max_iter: int = MAX_ITER,
    include_noma: bool = True,
) -> tuple[Allocation, ScpResult, AoTrace]:
    """Maximise the SCP of one channel realisation with RSMA.

    Starts from ``m = (Pt/2, Pt/2, Pt)`` and ``beta = 0.5``; if some busy
    stream is above capacity there, the start is replaced by the grid point
    with the largest worst-case rate margin. With ``include_noma`` the NOMA
    optimum (a special RSMA allocation) is kept when it scores better, which
    makes RSMA never worse than NOMA.
    """
    start = time.perf_counter()
    lam, early = _prepare(cfg)
    if early is not None:
        alloc, res = early
        return alloc, res, AoTrace(converged=True, picked="closed-form")

    pw = PowerAllocation(cfg.Pt / 2, cfg.Pt / 2, cfg.Pt)
    beta = 0.5
    trace = AoTrace()
    restored = False
    if not _seed_ok(cfg, ch, pw, lam, beta):
        pw, beta, worst = restoration_point(cfg, ch, lam)
        restored = True
        if worst <= 0:
            trace.converged = True
            trace.objectives.append(chernoff_objective(cfg, ch, pw, lam, beta))
            trace.allocations.append(Allocation(pw, lam, SplitFactors.from_beta(beta)))
    if not trace.objectives:
        pw, beta, trace = alternate(cfg, ch, lam, pw, beta, tau=tau, max_iter=max_iter)
    trace.restored = restored

    alloc = Allocation(pw, lam, SplitFactors.from_beta(beta))
    res = scp(cfg, ch, pw, lam, beta)
    if include_noma:
        n_alloc, n_res = optimize_noma(cfg, ch)
        if n_res.scp > res.scp:
            alloc, res = n_alloc, n_res
            trace.picked = "noma"
    res.trace = list(trace.objectives)
    trace.wall_time = time.perf_counter() - start
    return alloc, res, trace


def optimize_noma(cfg: SystemConfig, ch: ChannelRealization, n_grid: int = 257) -> tuple[Allocation, ScpResult]:
    """NOMA with user 1 decoded first.

    User 1's power only helps its own stream under this order, so it is held
    at ``Pt`` and only user 2's power is searched: a uniform grid followed by
    bounded refinement around the best grid point.
    """
    lam, early = _prepare(cfg)
    if early is not None:
        return early
    pt = cfg.Pt

    def success(p2):
        return scp_grid(cfg, ch, lam, pt, 0.0, p2, 1.0)

    grid = np.linspace(0.0, pt, n_grid)
    vals = success(grid)
    k = int(np.argmax(vals))
    best_p2, best = float(grid[k]), float(vals[k])
    if 0.0 < best < 1.0:
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
        ref = minimize_scalar(lambda p: -float(success(p)), bounds=(lo, hi), method="bounded", options={"xatol": pt * 1e-9})
        if -ref.fun > best:
            best_p2 = float(ref.x)
    pw = PowerAllocation(pt, 0.0, best_p2)
    alloc = Allocation(pw, lam, SplitFactors.from_beta(1.0))
    return alloc, scp(cfg, ch, pw, lam, 1.0)


def brute_force_oracle(cfg: SystemConfig, ch: ChannelRealization, grid_density: int = 33) -> tuple[Allocation, ScpResult]:
    """Exhaustive grid over (p11, p12, p2, beta) at the closed-form offloading factors."""
    if grid_density < 17:
        raise ValueError("grid_density must be at least 17")
    lam, early = _prepare(cfg)
    if early is not None:
        return early
    pt = cfg.Pt
    levels = np.linspace(0.0, pt, grid_density)
    p11, p12 = np.meshgrid(levels, levels, indexing="ij")
    keep = p11 + p12 <= pt * (1 + 1e-12)
    p11, p12 = p11[keep], p12[keep]
    p2_levels = np.linspace(pt / grid_density, pt, grid_density)
    betas = np.linspace(0.0, 1.0, grid_density)
    best = (-1.0, None)
    for p2 in p2_levels:
        vals = scp_grid(cfg, ch, lam, p11[:, None], p12[:, None], p2, betas[None, :])
        k = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[k] > best[0]:
            best = (float(vals[k]), (float(p11[k[0]]), float(p12[k[0]]), float(p2), float(betas[k[1]])))
    a, b, c, beta = best[1]
    pw = PowerAllocation(a, b, c)
    alloc = Allocation(pw, lam, SplitFactors.from_beta(beta))
    return alloc, scp(cfg, ch, pw, lam, beta)
