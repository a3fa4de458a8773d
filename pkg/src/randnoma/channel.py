"""SNR-domain channel abstraction for random uplink NOMA.

Every user sees unit-variance Rayleigh fading and the same transmit power, so
the received SNR of a packet copy is exponential with mean ``B`` (the average
received SNR).  Transmit power is normalised to one; ``B`` is the only
physical parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SCHEMES = ("cross-slot", "intra-only")


class ParameterError(ValueError):
    """A parameter lies outside its admissible domain."""


class AnalyticalDomainError(ParameterError):
    """The closed-form two-user analysis is only valid for rates R >= 1."""


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def rho_threshold(R: float) -> float:
    """SINR threshold ``2**R - 1`` needed to decode at rate ``R``."""
    if R <= 0:
        raise ParameterError(f"encoding rate must be > 0, got {R}")
    return math.expm1(R * math.log(2.0))


@dataclass(frozen=True)
class SystemConfig:
    K: int = 2
    snr_db: float = 25.0
    p: float = 0.59
    R: float = 6.129
    n_slots: int = 200
    n_experiments: int = 1000
    seed: int = 0
    scheme: str = "cross-slot"

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ParameterError(f"K must be an integer >= 1, got {self.K}")
        if not (0.0 < self.p <= 1.0):
            raise ParameterError(f"transmission probability must lie in (0, 1], got {self.p}")
        if not (self.R > 0.0):
            raise ParameterError(f"encoding rate must be > 0, got {self.R}")
        if not math.isfinite(self.snr_db):
            raise ParameterError(f"snr_db must be finite, got {self.snr_db}")
        if self.n_slots < 1:
            raise ParameterError(f"n_slots must be >= 1, got {self.n_slots}")
        if self.n_experiments < 1:
            raise ParameterError(f"n_experiments must be >= 1, got {self.n_experiments}")
        if not (0 <= self.seed < 2**64):
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @property
    def B(self) -> float:
        """Average received SNR (linear)."""
        return db_to_linear(self.snr_db)

    @property
    def rho_th(self) -> float:
        return rho_threshold(self.R)


def snr_from_uniform(u, B: float):
    """Inverse exponential CDF, ``-B ln(u)`` for ``u`` in (0, 1]."""
    if B <= 0:
        raise ParameterError(f"average SNR must be > 0, got {B}")
    return -B * np.log(u)


def sample_snr(rng: np.random.Generator, B: float) -> float:
    """Draw one received SNR, exponential with mean ``B``.

    ``rng.random()`` is on [0, 1); flipping it gives U on (0, 1] so the
    logarithm never diverges.
    """
    if B <= 0:
        raise ParameterError(f"average SNR must be > 0, got {B}")
    u = 1.0 - rng.random()
    return -B * math.log(u)


def sample_snrs(rng: np.random.Generator, B: float, size) -> np.ndarray:
    return snr_from_uniform(1.0 - rng.random(size), B)


def sic_prefix_length(snrs: Iterable[float], rho_th: float) -> int:
    """Number of packets recoverable by SIC from one received signal.

    Sorts the SNRs in descending order and returns the largest ``m`` such
    that each of the first ``m`` packets meets
    ``b_k >= rho_th * (1 + sum of weaker SNRs)``.  The scan stops at the
    first failure.
    """
    ordered = sorted(snrs, reverse=True)
    if ordered and ordered[-1] < 0:
        raise ParameterError("received SNRs must be nonnegative")
    return _prefix_of_sorted(ordered, rho_th)


def _prefix_of_sorted(ordered: Sequence[float], rho_th: float) -> int:
    n = len(ordered)
    # suffix[k] = interference seen by the k-th strongest packet
    suffix = [0.0] * n
    acc = 0.0
    for k in range(n - 1, -1, -1):
        suffix[k] = acc
        acc += ordered[k]
    m = 0
    for k in range(n):
        if ordered[k] < rho_th * (1.0 + suffix[k]):
            break
        m += 1
    return m


def is_potential(b: float, rho_th: float) -> bool:
    """True when a lone copy would decode once all interference is cancelled."""
    return b > rho_th
