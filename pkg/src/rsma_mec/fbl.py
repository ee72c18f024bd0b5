"""Finite-blocklength primitives under the normal approximation.

Rates are in bits per channel use (log base 2) and the dispersion is the
unscaled ``1 - (1 + gamma)**-2``. Every function accepts scalars or numpy
arrays and broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

_SQRT2 = np.sqrt(2.0)
# Q(x) is 0 or 1 to double precision beyond this point.
_Q_CLAMP = 40.0


@dataclass(frozen=True)
class FblPoint:
    """SINR, payload and blocklength of one coded stream."""

    gamma: float
    bits: float
    blocklength: int

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.bits < 0:
            raise ValueError(f"bits must be >= 0, got {self.bits}")
        if self.blocklength < 1:
            raise ValueError(f"blocklength must be >= 1, got {self.blocklength}")


def q_function(x):
    """Gaussian tail probability Q(x) = erfc(x / sqrt(2)) / 2."""
    x = np.clip(np.asarray(x, dtype=float), -_Q_CLAMP, _Q_CLAMP)
    out = 0.5 * erfc(x / _SQRT2)
    return out if out.ndim else float(out)


def q_inverse(p):
    """Inverse of :func:`q_function` on the open interval (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("q_inverse needs probabilities strictly inside (0, 1)")
    out = -ndtri(p)
    return out if out.ndim else float(out)


def dispersion(gamma):
    """Channel dispersion 1 - (1 + gamma)^-2."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("dispersion is undefined for negative SINR")
    # -expm1(-2 log1p(g)) == 1 - (1 + g)^-2 without cancellation at small g
    out = -np.expm1(-2.0 * np.log1p(gamma))
    return out if out.ndim else float(out)


def capacity(gamma):
    gamma = np.asarray(gamma, dtype=float)
    out = np.log1p(gamma) / np.log(2.0)
    return out if out.ndim else float(out)


def fbl_rate(p: FblPoint, epsilon: float) -> float:
    """Largest rate (bits/symbol) decodable at error probability ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if p.gamma <= 0:
        raise ValueError("fbl_rate needs a positive SINR")
    penalty = np.sqrt(dispersion(p.gamma) / p.blocklength) * q_inverse(epsilon)
    return capacity(p.gamma) - float(penalty)


def margin(gamma, bits, blocklength):
    """Vectorised normalised rate margin (C - M/N) / sqrt(V/N).

    Entries with ``gamma == 0`` come back as ``-inf`` when ``bits > 0`` and
    ``+inf`` when ``bits == 0``, matching the conventions used by
    :func:`error_probability`.
    """
    gamma, bits, n = np.broadcast_arrays(
        np.asarray(gamma, dtype=float),
        np.asarray(bits, dtype=float),
        np.asarray(blocklength, dtype=float),
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -np.expm1(-2.0 * np.log1p(gamma))
        f = (np.log1p(gamma) / np.log(2.0) - bits / n) / np.sqrt(v / n)
    # a dispersion that underflows to zero behaves like zero SINR
    f = np.where(v > 0, f, np.where(bits > 0, -np.inf, np.inf))
    return f if f.ndim else float(f)


def f_margin(p: FblPoint) -> float:
    """Rate margin f(gamma, M) of a single stream; positive below capacity."""
    if p.gamma <= 0:
        raise ZeroDivisionError("f_margin is singular at zero SINR (zero dispersion)")
    return float(margin(p.gamma, p.bits, p.blocklength))


def stream_error(gamma, bits, blocklength):
    """Vectorised decoding error probability.

    Zero SINR gives 1 and an empty stream (``bits == 0``) gives 0: there is
    nothing to decode, so nothing can fail.
    """
    f = margin(gamma, bits, blocklength)
    eps = q_function(f)
    eps = np.where(np.asarray(bits) > 0, eps, 0.0)
    return eps if eps.ndim else float(eps)


def error_probability(p: FblPoint) -> float:
    """Q(f(gamma, M)); returns 1 at zero SINR."""
    if p.gamma == 0:
        return 1.0
    return float(q_function(margin(p.gamma, p.bits, p.blocklength)))


def chernoff_term(gamma, bits, blocklength):
    """Vectorised exp(-f^2/2) with f clipped at zero.

    For f >= 0 this is the Chernoff-type bound on Q(f). Above capacity (f < 0) it is
    pinned at 1, which keeps it an upper bound on Q everywhere instead of
    rewarding rates far above capacity. Empty streams contribute 0.
    """
    f = margin(gamma, bits, blocklength)
    with np.errstate(invalid="ignore"):
        term = np.exp(-0.5 * np.maximum(f, 0.0) ** 2)
    term = np.where(np.asarray(bits) > 0, term, 0.0)
    return term if term.ndim else float(term)


def chernoff_bound(p: FblPoint) -> float:
    """exp(-f^2/2) for one stream; 1 at zero SINR."""
    if p.gamma == 0:
        return 1.0
    f = margin(p.gamma, p.bits, p.blocklength)
    return float(np.exp(-0.5 * f * f))
