"""MEC timing model, closed-form offloading factors and the SCP."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fbl import chernoff_term, stream_error
from .streams import (
    ChannelRealization,
    PowerAllocation,
    SplitFactors,
    combine_errors,
    offload_errors,
    sinr_chain,
    stream_loads,
    user_and_joint_errors,
)

log = logging.getLogger(__name__)

# Relative slack on timing comparisons; the closed-form offloading factor
# meets the local-time constraint with equality.
TIME_RTOL = 1e-12


class InfeasibleBlocklength(ValueError):
    """The offloading phase alone uses up the whole delay budget."""


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters. Defaults follow the simulation set-up."""

    T: float = 10e-3
    Ts: float = 2.5e-6
    N: int = 1000
    M1: float = 7000.0
    M2: float = 7000.0
    Ccpu: float = 1000.0
    f_user: float = 0.5e9
    L: float = 5.0
    Pt: float = 10 ** 1.5
    noise: float = 1.0

    def __post_init__(self):
        for name in ("T", "Ts", "N", "M1", "M2", "Ccpu", "f_user", "Pt", "noise"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L <= 1:
            raise ValueError(f"L must exceed 1, got {self.L}")
        if int(self.N) != self.N:
            raise ValueError(f"N must be an integer, got {self.N}")

    @property
    def f_mec(self) -> float:
        return self.L * self.f_user

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Copy with the power budget set from a transmit SNR Pt / noise."""
        return replace(self, Pt=self.noise * 10.0 ** (snr_db / 10.0))

    def local_time(self, k: int) -> float:
        m = self.M1 if k == 1 else self.M2
        return m * self.Ccpu / self.f_user


@dataclass(frozen=True)
class OffloadFactors:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        for value in (self.lambda1, self.lambda2):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"offloading factor {value} outside [0, 1]")

    @property
    def offloads(self) -> bool:
        return self.lambda1 > 0 or self.lambda2 > 0


@dataclass
class ScpResult:
    scp: float
    feasible: bool
    eps1: float
    eps2: float
    t2: float
    t3: float
    scp_approx: float = float("nan")
    trace: list[float] = field(default_factory=list)


def offload_time(cfg: SystemConfig) -> float:
    return cfg.N * cfg.Ts


def local_times(cfg: SystemConfig, lam: OffloadFactors) -> tuple[float, float]:
    c = cfg.Ccpu / cfg.f_user
    return (1 - lam.lambda1) * cfg.M1 * c, (1 - lam.lambda2) * cfg.M2 * c


def mec_time(cfg: SystemConfig, lam: OffloadFactors) -> float:
    bits = lam.lambda1 * cfg.M1 + lam.lambda2 * cfg.M2
    return bits * cfg.Ccpu / cfg.f_mec


def compute_time(cfg: SystemConfig, lam: OffloadFactors) -> float:
    return max(*local_times(cfg, lam), mec_time(cfg, lam))


def residual_budget(cfg: SystemConfig) -> float:
    return cfg.T - offload_time(cfg)


def optimal_lambda(cfg: SystemConfig) -> OffloadFactors:
    """Smallest offloading factors that let local execution fit the budget.

    The bound objective grows with each offloading factor, so the optimum
    sits on the local-time constraint, or at zero when the user already
    finishes locally.
    """
    budget = residual_budget(cfg)
    if budget <= 0:
        raise InfeasibleBlocklength(
            f"N*Ts = {offload_time(cfg):.6g} s leaves no time within T = {cfg.T:.6g} s"
        )
    cycles = budget * cfg.f_user / cfg.Ccpu
    lam1 = max(0.0, 1.0 - cycles / cfg.M1)
    lam2 = max(0.0, 1.0 - cycles / cfg.M2)
    return OffloadFactors(lam1, lam2)


def mec_capacity_check(cfg: SystemConfig, lam: OffloadFactors) -> bool:
    return mec_time(cfg, lam) <= residual_budget(cfg) * (1 + TIME_RTOL)


def all_local(cfg: SystemConfig) -> bool:
    """Both users finish their whole task locally within T."""
    return max(cfg.local_time(1), cfg.local_time(2)) <= cfg.T * (1 + TIME_RTOL)


def timing(cfg: SystemConfig, lam: OffloadFactors) -> tuple[bool, float, float]:
    """Execution indicator together with (t2, t3).

    Nothing is transmitted when neither user offloads, so t2 is zero then.
    """
    t2 = offload_time(cfg) if lam.offloads else 0.0
    t3 = compute_time(cfg, lam)
    return t3 <= (cfg.T - t2) * (1 + TIME_RTOL), t2, t3


def loads_for(cfg: SystemConfig, lam: OffloadFactors, beta: float):
    return stream_loads(cfg.M1, cfg.M2, lam.lambda1, lam.lambda2, beta)


def scp(
    cfg: SystemConfig,
    ch: ChannelRealization,
    pw: PowerAllocation,
    lam: OffloadFactors,
    beta: SplitFactors | float,
) -> ScpResult:
    """Successful computation probability of one allocation."""
    b = beta.beta_a if isinstance(beta, SplitFactors) else float(beta)
    feasible, t2, t3 = timing(cfg, lam)
    triple = offload_errors(ch, pw, loads_for(cfg, lam, b), cfg.N)
    errs = user_and_joint_errors(triple)
    if not feasible:
        if lam.offloads and not mec_capacity_check(cfg, lam):
            log.debug("MEC server overloaded: %.3g s > %.3g s", mec_time(cfg, lam), residual_budget(cfg))
        return ScpResult(0.0, False, errs.eps1_exact, errs.eps2_exact, t2, t3, 0.0)
    value = (1.0 - errs.eps1_exact) * (1.0 - errs.eps2_exact)
    return ScpResult(
        scp=float(value),
        feasible=True,
        eps1=errs.eps1_exact,
        eps2=errs.eps2_exact,
        t2=t2,
        t3=t3,
        scp_approx=max(0.0, 1.0 - errs.joint),
    )


def scp_grid(cfg: SystemConfig, ch: ChannelRealization, lam: OffloadFactors, p11, p12, p2, beta):
    """Vectorised exact offloading success (1-eps1)(1-eps2), ignoring timing."""
    ga, gb, gc = sinr_chain(ch.g1, ch.g2, ch.noise, p11, p12, p2)
    ma, mb, mc = loads_for(cfg, lam, beta)
    eps_a = stream_error(ga, ma, cfg.N)
    eps_b = stream_error(gb, mb, cfg.N)
    eps_c = stream_error(gc, mc, cfg.N)
    eps1, eps2 = combine_errors(eps_a, eps_b, eps_c)
    return (1.0 - eps1) * (1.0 - eps2)


# Weights of (s11, s2, s12) in the first-order joint error 2ea + 2eb + ec.
STREAM_WEIGHTS = np.array([2.0, 2.0, 1.0])


def chernoff_objective(cfg: SystemConfig, ch: ChannelRealization, pw: PowerAllocation, lam: OffloadFactors, beta: float) -> float:
    """Bound 2*exp(-fa^2/2) + 2*exp(-fb^2/2) + exp(-fc^2/2) on the joint error."""
    gammas = np.array(sinr_chain(ch.g1, ch.g2, ch.noise, pw.p11, pw.p12, pw.p2), dtype=float)
    loads = np.array(loads_for(cfg, lam, beta), dtype=float)
    return float(STREAM_WEIGHTS @ chernoff_term(gammas, loads, cfg.N))
