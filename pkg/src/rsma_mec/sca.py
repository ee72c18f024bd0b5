"""Convex restrictions used by the successive convex approximation steps.

Power step variables: the three stream powers plus, for every stream that
carries bits, an SINR slack ``rho``, an exponent slack ``t`` (``t <= f^2/2``)
and an auxiliary ``t1 <= t (1 + rho)^-2``. The split step keeps powers and
SINRs fixed and optimises the split of user 1's bits over s11 and s12.

Every nonconvex piece is replaced by a first-order bound that is exact at the
linearisation point and conservative elsewhere, so any point feasible for a
subproblem is feasible for the original constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import ConstraintBlock, ConvexProgram
from .fbl import margin
from .streams import ChannelRealization, PowerAllocation, SplitFactors, sinrs

LN2 = np.log(2.0)
STREAMS = ("a", "b", "c")
WEIGHTS = np.array([2.0, 2.0, 1.0])
# Exponent slack recorded for streams that carry no bits; exp(-50) ~ 2e-22.
IDLE_T = 50.0


class InfeasiblePoint(ValueError):
    """A linearisation point that is not strictly feasible for its subproblem."""

    def __init__(self, violated):
        self.violated = list(violated)
        super().__init__("linearisation point violates: " + ", ".join(self.violated))


# ---------------------------------------------------------------------------
# First-order bounds (exact at the anchor)
# ---------------------------------------------------------------------------


def rate_gap_sq(rho, bits, n):
    """0.5 * (log2(1 + rho) - M/N)^2."""
    return 0.5 * (np.log2(1.0 + rho) - bits / n) ** 2


def rate_gap_coeffs(rho0, bits, n):
    """(a, b) of the tangent a*log2(1+rho) + b to :func:`rate_gap_sq` at rho0."""
    c0 = np.log2(1.0 + rho0)
    a = c0 - bits / n
    return a, 0.5 * a * a - a * c0


def rate_gap_tangent(rho, rho0, bits, n):
    """Lower bound on :func:`rate_gap_sq`; the square is convex in log2(1+rho)."""
    a, b = rate_gap_coeffs(rho0, bits, n)
    return a * np.log2(1.0 + rho) + b


def log_tangent(t1, t10):
    """Upper bound ln(t10) + (t1 - t10)/t10 on ln(t1)."""
    return np.log(t10) + (t1 - t10) / t10


def log1p_sq_tangent(rho, rho0):
    """Upper bound on 2 ln(1 + rho) by its tangent at rho0."""
    return 2.0 * np.log1p(rho0) + 2.0 * (rho - rho0) / (1.0 + rho0)


def ratio_tangent(x, rho, x0, rho0):
    """Plain first-order expansion of x / rho around (x0, rho0).

    Not a bound: x / rho is neither convex nor concave jointly, so this can
    overestimate the ratio and loosen an SINR constraint.
    """
    return x / rho0 - (rho - rho0) * x0 / rho0**2


def ratio_minorant(x, rho, x0, rho0):
    """Concave lower bound on x / rho, exact with matching gradient at the anchor.

    From s^2 rho + x / rho >= 2 s sqrt(x) with s = sqrt(x0) / rho0; equals
    :func:`ratio_tangent` minus (sqrt(x) - sqrt(x0))^2 / rho0.
    """
    return 2.0 * np.sqrt(x * x0) / rho0 - x0 * rho / rho0**2


def split_sq_tangent(beta, beta0, e):
    """Lower bound (e beta0)^2 + 2 (beta - beta0) e^2 beta0 on (e beta)^2."""
    return (e * beta0) ** 2 + 2.0 * (beta - beta0) * e * e * beta0


def split_coeffs(rho, lam_bits, n):
    """(c, d, e) with f^2/2 = N c (d + e beta)^2 for a stream carrying beta*lam_bits."""
    c = 1.0 / (2.0 * (1.0 - (1.0 + rho) ** -2))
    d = np.log2(1.0 + rho)
    e = -lam_bits / n
    return c, d, e


# ---------------------------------------------------------------------------
# Linearisation point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearizationPoint:
    pw: PowerAllocation
    rho: np.ndarray
    t: np.ndarray
    t1: np.ndarray
    beta: SplitFactors
    active: tuple[bool, bool, bool]


def slack_seed(
    ch: ChannelRealization,
    pw: PowerAllocation,
    loads,
    n: int,
    *,
    pt: float | None = None,
    beta: SplitFactors | None = None,
    rho_shrink: float = 0.999,
    t1_shrink: float = 1e-6,
) -> LinearizationPoint:
    """Strictly feasible power-step anchor built from an allocation.

    SINR slacks sit just below the true SINRs, each exponent slack just
    below f^2/2 evaluated at its slack, and ``t1`` just below
    ``t (1 + rho)^-2``.
    """
    loads = np.asarray(loads, dtype=float)
    active = tuple(bool(m > 0) for m in loads)
    p = pw.as_array()
    if pt is not None:
        if p[0] + p[1] >= pt * (1 - 1e-8):
            p[:2] *= pt * (1 - 1e-8) / (p[0] + p[1])
        p[2] = min(p[2], pt * (1 - 1e-8))
        # Powers sit on open bounds inside the solver.
        p = np.maximum(p, pt * 1e-9)
    pw = PowerAllocation(*p)
    gam = np.array(sinrs(ch, pw))
    rho = rho_shrink * gam
    f = margin(rho, loads, n)
    bad = [s for s, on, fi in zip(STREAMS, active, f) if on and not fi > 0]
    if bad:
        raise InfeasiblePoint([f"rate margin of stream {s} > 0" for s in bad])
    u = (1.0 + rho) ** -2
    t = np.where(active, 0.5 * f**2, IDLE_T)
    # Keep (t - t1) strictly below the rate bound at the anchor.
    t = np.where(active, t * (1 - u) / (1 - u + t1_shrink * u) * (1 - 1e-7), t)
    t1 = (1.0 - t1_shrink) * t * u
    if beta is None:
        total = loads[0] + loads[2]
        beta = SplitFactors.from_beta(loads[0] / total if total > 0 else 0.5)
    return LinearizationPoint(pw, rho, t, t1, beta, active)


# ---------------------------------------------------------------------------
# Power step
# ---------------------------------------------------------------------------


@dataclass
class PowerStep:
    program: ConvexProgram
    x0: np.ndarray
    active: tuple[bool, bool, bool]
    idle_t: np.ndarray

    def unpack(self, x):
        """(PowerAllocation, rho, t, t1) with NaN slacks for idle streams."""
        rho = np.full(3, np.nan)
        t = self.idle_t.copy()
        t1 = np.full(3, np.nan)
        k = 3
        for i, on in enumerate(self.active):
            if on:
                rho[i], t[i], t1[i] = x[k : k + 3]
                k += 3
        return PowerAllocation(*np.maximum(x[:3], 0.0)), rho, t, t1


def power_subproblem(
    ch: ChannelRealization,
    n: int,
    pt: float,
    loads,
    lp: LinearizationPoint,
) -> PowerStep:
    """Convex restriction of the power / slack problem around ``lp``."""
    loads = np.asarray(loads, dtype=float)
    active = lp.active
    idx = [i for i in range(3) if active[i]]
    k = len(idx)
    nv = 3 + 3 * k
    # columns of (rho, t, t1) for active stream j
    col = {i: (3 + 3 * j, 4 + 3 * j, 5 + 3 * j) for j, i in enumerate(idx)}
    g1, g2, s2 = ch.g1, ch.g2, ch.noise
    p0 = lp.pw.as_array()
    rho0 = lp.rho
    t10 = lp.t1
    a_coef, b_coef = rate_gap_coeffs(rho0, loads, n)

    w = WEIGHTS[idx]
    t_cols = np.array([col[i][1] for i in idx], dtype=int)

    def objective(x):
        e = w * np.exp(-x[t_cols])
        grad = np.zeros(nv)
        grad[t_cols] = -e
        hess = np.zeros((nv, nv))
        hess[t_cols, t_cols] = e
        return float(e.sum()), grad, hess

    blocks = []

    r_cols = np.array([col[i][0] for i in idx], dtype=int)
    t1_cols = np.array([col[i][2] for i in idx], dtype=int)
    rows_k = np.arange(k)
    a_act, b_act = a_coef[idx], b_coef[idx]
    rho0_act, t10_act = rho0[idx], t10[idx]

    # t - t1 <= N (a log2(1+rho) + b)
    def rate_block(x):
        rho = x[r_cols]
        vals = x[t_cols] - x[t1_cols] - n * (a_act * np.log2(1 + rho) + b_act)
        jac = np.zeros((k, nv))
        jac[rows_k, r_cols] = -n * a_act / ((1 + rho) * LN2)
        jac[rows_k, t_cols] = 1.0
        jac[rows_k, t1_cols] = -1.0
        hess = np.zeros((k, nv, nv))
        hess[rows_k, r_cols, r_cols] = n * a_act / ((1 + rho) ** 2 * LN2)
        return vals, jac, hess

    # ln t1 + 2 ln(1+rho), both replaced by tangents, <= ln t
    def aux_block(x):
        t = x[t_cols]
        vals = log_tangent(x[t1_cols], t10_act) + log1p_sq_tangent(x[r_cols], rho0_act) - np.log(t)
        jac = np.zeros((k, nv))
        jac[rows_k, t1_cols] = 1.0 / t10_act
        jac[rows_k, r_cols] = 2.0 / (1.0 + rho0_act)
        jac[rows_k, t_cols] = -1.0 / t
        hess = np.zeros((k, nv, nv))
        hess[rows_k, t_cols, t_cols] = 1.0 / t**2
        return vals, jac, hess

    blocks.append(ConstraintBlock(rate_block, [f"rate[{STREAMS[i]}]" for i in idx]))
    blocks.append(ConstraintBlock(aux_block, [f"aux[{STREAMS[i]}]" for i in idx]))

    # interference + noise - minorant(signal / rho) <= 0 for s11 and s2
    sinr_rows = []
    if active[0]:
        sinr_rows.append((0, 0, g1, np.array([0.0, g1, g2])))
    if active[1]:
        sinr_rows.append((1, 2, g2, np.array([0.0, g1, 0.0])))
    if sinr_rows:
        ms = len(sinr_rows)
        rows_s = np.arange(ms)
        s_rho = np.array([col[i][0] for i, *_ in sinr_rows], dtype=int)
        s_pc = np.array([pc for _, pc, _, _ in sinr_rows], dtype=int)
        s_gain = np.array([gain for _, _, gain, _ in sinr_rows])
        s_interf = np.array([interf for *_, interf in sinr_rows])
        s_rho0 = rho0[[i for i, *_ in sinr_rows]]
        s_sig0 = s_gain * p0[s_pc]

        def sinr_block(x):
            sig = s_gain * x[s_pc]
            root = np.sqrt(s_sig0 / sig)
            vals = s_interf @ x[:3] + s2 - ratio_minorant(sig, x[s_rho], s_sig0, s_rho0)
            jac = np.zeros((ms, nv))
            jac[:, :3] = s_interf
            jac[rows_s, s_pc] -= s_gain * root / s_rho0
            jac[rows_s, s_rho] = s_sig0 / s_rho0**2
            hess = np.zeros((ms, nv, nv))
            hess[rows_s, s_pc, s_pc] = s_gain**2 * root / (2.0 * sig * s_rho0)
            return vals, jac, hess

        blocks.append(ConstraintBlock(sinr_block, [f"sinr[{STREAMS[i]}]" for i, *_ in sinr_rows]))

    lin_rows, lin_names = [], []
    if active[2]:
        row = np.zeros(nv)
        row[col[2][0]] = s2
        row[1] = -g1
        lin_rows.append((row, 0.0))
        lin_names.append("sinr[c]")
    row = np.zeros(nv)
    row[0] = row[1] = 1.0
    lin_rows.append((row, pt))
    lin_names.append("power[user1]")
    lin_a = np.array([r for r, _ in lin_rows])
    lin_b = np.array([b for _, b in lin_rows])

    def linear_block(x):
        return lin_a @ x - lin_b, lin_a, None

    blocks.append(ConstraintBlock(linear_block, lin_names))

    lower = np.zeros(nv)
    upper = np.full(nv, np.inf)
    upper[2] = pt
    names = ["p11", "p12", "p2"]
    for i in idx:
        s = STREAMS[i]
        names += [f"rho[{s}]", f"t[{s}]", f"t1[{s}]"]

    prog = ConvexProgram(nv, objective, blocks, lower, upper, var_names=names)
    x0 = np.empty(nv)
    x0[:3] = p0
    for i in idx:
        r, t, t1 = col[i]
        x0[[r, t, t1]] = lp.rho[i], lp.t[i], lp.t1[i]
    violated = prog.violations(x0)
    if violated:
        raise InfeasiblePoint(violated)
    idle_t = np.where(active, np.nan, IDLE_T)
    return PowerStep(prog, x0, active, idle_t)


# ---------------------------------------------------------------------------
# Split step
# ---------------------------------------------------------------------------


@dataclass
class SplitStep:
    program: ConvexProgram
    x0: np.ndarray
    t_b: float
    coeffs: dict

    def unpack(self, x) -> tuple[SplitFactors, np.ndarray]:
        beta_a = float(np.clip(x[0], 0.0, 1.0))
        return SplitFactors.from_beta(beta_a), np.array([x[2], self.t_b, x[3]])


def beta_subproblem(
    gammas,
    n: int,
    user1_bits: float,
    user2_bits: float,
    beta0: float,
) -> SplitStep:
    """Convex restriction of the split problem for fixed powers.

    ``gammas`` are the SINRs of (s11, s2, s12) at the current powers;
    ``user1_bits`` and ``user2_bits`` are the offloaded loads. Variables are
    (beta_a, beta_c, t_a, t_c) with beta_a + beta_c = 1; the user-2 stream
    always carries all of user 2's bits, so its slack stays fixed.
    """
    if not 0.0 < beta0 < 1.0:
        raise InfeasiblePoint([f"0 < beta0 < 1 (got {beta0})"])
    gammas = np.asarray(gammas, dtype=float)
    c, d, e = split_coeffs(gammas, user1_bits, n)
    f_b = margin(gammas[1], user2_bits, n)
    t_b = 0.5 * f_b**2 if user2_bits > 0 and f_b > 0 else (IDLE_T if user2_bits == 0 else 0.0)
    const_b = 2.0 * np.exp(-t_b) if user2_bits > 0 else 0.0
    b0 = np.array([beta0, 1.0 - beta0])
    ca, cc = c[0], c[2]
    da, dc = d[0], d[2]
    e1 = e

    def objective(x):
        ea, ec = 2.0 * np.exp(-x[2]), np.exp(-x[3])
        grad = np.array([0.0, 0.0, -ea, -ec])
        hess = np.diag([0.0, 0.0, ea, ec])
        return float(ea + ec + const_b), grad, hess

    # t_i <= N c_i (d_i^2 + 2 d_i e beta_i + Phi(beta_i)), linear in (beta, t)
    rows = np.zeros((2, 4))
    rhs = np.zeros(2)
    for j, (ci, di, bi0, tcol) in enumerate(((ca, da, b0[0], 2), (cc, dc, b0[1], 3))):
        # Phi = e^2 bi0^2 + 2 (beta - bi0) e^2 bi0 = 2 e^2 bi0 beta - e^2 bi0^2
        slope = n * ci * (2 * di * e1 + 2 * e1 * e1 * bi0)
        const = n * ci * (di * di - e1 * e1 * bi0 * bi0)
        rows[j, j] = -slope
        rows[j, tcol] = 1.0
        rhs[j] = const

    def block(x):
        return rows @ x - rhs, rows, None

    t0 = np.array([n * ca * (da + e1 * b0[0]) ** 2, n * cc * (dc + e1 * b0[1]) ** 2])
    if not np.all((d[[0, 2]] + e1 * b0) > 0):
        raise InfeasiblePoint(["rate margin of streams a and c > 0"])
    x0 = np.array([b0[0], b0[1], *(t0 * (1 - 1e-7))])
    prog = ConvexProgram(
        4,
        objective,
        [ConstraintBlock(block, ["split[a]", "split[c]"])],
        lower=np.zeros(4),
        upper=np.array([1.0, 1.0, np.inf, np.inf]),
        A_eq=np.array([[1.0, 1.0, 0.0, 0.0]]),
        b_eq=np.array([1.0]),
        var_names=["beta_a", "beta_c", "t[a]", "t[c]"],
    )
    violated = prog.violations(x0)
    if violated:
        raise InfeasiblePoint(violated)
    return SplitStep(prog, x0, float(t_b), {"c": c, "d": d, "e": e})
