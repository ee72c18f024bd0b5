"""Two-user uplink RSMA streams decoded in the order s11 -> s2 -> s12.

User 1 splits its offloaded bits over streams ``a`` (s11, decoded first)
and ``c`` (s12, decoded last, interference free); user 2 sends a single
stream ``b`` (s2) decoded in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbl import stream_error


@dataclass(frozen=True)
class ChannelRealization:
    g1: float
    g2: float
    noise: float = 1.0

    def __post_init__(self):
        if self.g1 < 0 or self.g2 < 0:
            raise ValueError("channel gains must be non-negative")
        if self.noise <= 0:
            raise ValueError("noise power must be positive")


@dataclass(frozen=True)
class PowerAllocation:
    p11: float
    p12: float
    p2: float

    def __post_init__(self):
        if min(self.p11, self.p12, self.p2) < 0:
            raise ValueError("stream powers must be non-negative")

    def within_budget(self, pt: float, rtol: float = 1e-12) -> bool:
        slack = pt * (1.0 + rtol)
        return self.p11 + self.p12 <= slack and self.p2 <= slack

    def as_array(self) -> np.ndarray:
        return np.array([self.p11, self.p12, self.p2], dtype=float)


@dataclass(frozen=True)
class SplitFactors:
    """Share of user 1's offloaded bits on s11 (``beta_a``) and s12 (``beta_c``)."""

    beta_a: float
    beta_c: float
    beta_b: float = 1.0

    def __post_init__(self):
        for name in ("beta_a", "beta_b", "beta_c"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if abs(self.beta_a + self.beta_c - 1.0) > 1e-9:
            raise ValueError("beta_a + beta_c must equal 1")
        if self.beta_b != 1.0:
            raise ValueError("user 2 is never split: beta_b must be 1")

    @classmethod
    def from_beta(cls, beta: float) -> "SplitFactors":
        return cls(beta_a=beta, beta_c=1.0 - beta)


@dataclass(frozen=True)
class StreamErrorTriple:
    gamma_a: float
    gamma_b: float
    gamma_c: float
    m_a: float
    m_b: float
    m_c: float
    eps_a: float
    eps_b: float
    eps_c: float


@dataclass(frozen=True)
class UserErrors:
    """Per-user and joint error probabilities, exact and first-order."""

    eps1: float
    eps2: float
    joint: float
    eps1_exact: float
    eps2_exact: float
    joint_exact: float


def sinr_chain(g1, g2, noise, p11, p12, p2):
    """Vectorised SINRs of (s11, s2, s12) under SIC."""
    rx11 = p11 * g1
    rx12 = p12 * g1
    rx2 = p2 * g2
    gamma_a = rx11 / (rx12 + rx2 + noise)
    gamma_b = rx2 / (rx12 + noise)
    gamma_c = rx12 / noise
    return gamma_a, gamma_b, gamma_c


def sinrs(ch: ChannelRealization, pw: PowerAllocation) -> tuple[float, float, float]:
    ga, gb, gc = sinr_chain(ch.g1, ch.g2, ch.noise, pw.p11, pw.p12, pw.p2)
    return float(ga), float(gb), float(gc)


def stream_loads(m1, m2, lambda1, lambda2, beta):
    """Bits carried by (s11, s2, s12) for split factor ``beta`` = beta_a."""
    user1 = lambda1 * m1
    return beta * user1, lambda2 * m2, (1.0 - beta) * user1


def offload_errors(
    ch: ChannelRealization,
    pw: PowerAllocation,
    loads: tuple[float, float, float],
    blocklength: int,
) -> StreamErrorTriple:
    gammas = sinrs(ch, pw)
    eps = stream_error(np.array(gammas), np.array(loads, dtype=float), blocklength)
    return StreamErrorTriple(*gammas, *map(float, loads), *map(float, eps))


def combine_errors(eps_a, eps_b, eps_c):
    """Vectorised exact user-1 / user-2 errors.

    User 2 fails when s11 or s2 fails; user 1 additionally needs s12.
    """
    ok_ab = (1.0 - eps_a) * (1.0 - eps_b)
    eps2 = 1.0 - ok_ab
    eps1 = 1.0 - ok_ab * (1.0 - eps_c)
    return eps1, eps2


def user_and_joint_errors(t: StreamErrorTriple) -> UserErrors:
    a, b, c = t.eps_a, t.eps_b, t.eps_c
    eps1_exact, eps2_exact = combine_errors(a, b, c)
    return UserErrors(
        eps1=min(1.0, a + b + c),
        eps2=min(1.0, a + b),
        joint=min(1.0, 2 * a + 2 * b + c),
        eps1_exact=float(eps1_exact),
        eps2_exact=float(eps2_exact),
        joint_exact=float(1.0 - (1.0 - eps1_exact) * (1.0 - eps2_exact)),
    )


def noma_allocation(p1: float, p2: float, user1_first: bool = True):
    """RSMA allocation that reproduces two-stream NOMA.

    Returns ``(PowerAllocation, beta)``: all of user 1 on s11 when user 1 is
    decoded first, all of it on s12 otherwise.
    """
    if user1_first:
        return PowerAllocation(p1, 0.0, p2), 1.0
    return PowerAllocation(0.0, p1, p2), 0.0


def noma_case(
    ch: ChannelRealization,
    p1: float,
    p2: float,
    user1_first: bool,
    loads_user: tuple[float, float],
    blocklength: int,
) -> StreamErrorTriple:
    """NOMA errors for user loads ``(lambda1*M1, lambda2*M2)``."""
    pw, beta = noma_allocation(p1, p2, user1_first)
    u1, u2 = loads_user
    return offload_errors(ch, pw, (beta * u1, u2, (1.0 - beta) * u1), blocklength)
