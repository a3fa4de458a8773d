"""Slot-by-slot Monte Carlo simulation of K-user random NOMA.

Users have an infinite backlog.  In every slot each user transmits its
current packet with probability ``p``; a user keeps retransmitting the same
packet until it is recovered, after which it starts a new packet from the
next slot.  Every transmission sees an independent fading draw.

Randomness is consumed in a fixed pattern (2K uniforms per slot, whether or
not a user transmits), so runs that differ only in ``p`` or in the receiver
scheme share their random numbers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel
from .channel import SystemConfig, ParameterError
from .markov import BufferState
from .sic import (
    BufferedSlot,
    CollisionBuffer,
    PacketCopy,
    PacketId,
    evict_dead_slots,
    intra_slot_detect,
    recovery_cascade,
)


@dataclass
class UserState:
    user: int
    current_packet: PacketId
    backlogged: bool = False


@dataclass
class SimState:
    users: list[UserState]
    buffer: CollisionBuffer = field(default_factory=CollisionBuffer)
    slot: int = 0

    @classmethod
    def fresh(cls, K: int) -> "SimState":
        return cls([UserState(k, PacketId(k, 0)) for k in range(K)])


@dataclass(frozen=True)
class RecoveryReport:
    slot_index: int
    transmitted: tuple[PacketId, ...]
    recovered_in_slot: tuple[PacketId, ...]
    recovered: frozenset[PacketId]
    new_packets: int

    @property
    def n_recovered(self) -> int:
        return len(self.recovered)


@dataclass
class SimMetrics:
    n_slots: int
    R: float
    recovered_packets: int
    transmitted_packets: int
    throughput_T: float
    sum_rate_Rs: float
    mean_buffer_occupancy: float
    state_histogram: tuple[float, float, float] | None = None
    state_trace: np.ndarray | None = field(default=None, compare=False, repr=False)


def draw_slots(rng: np.random.Generator, config: SystemConfig, n_slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Activity flags and received SNRs, each of shape (n_slots, K).

    Consumes 2K uniforms per slot: K for activity, then K for fading.
    """
    u = rng.random((n_slots, 2, config.K))
    active = u[:, 0, :] < config.p
    snrs = -config.B * np.log(1.0 - u[:, 1, :])
    return active, snrs


def draw_slot(rng: np.random.Generator, config: SystemConfig) -> tuple[list[bool], list[float]]:
    active, snrs = draw_slots(rng, config, 1)
    return active[0].tolist(), snrs[0].tolist()


def run_slot(
    state: SimState,
    config: SystemConfig,
    rng: np.random.Generator | None = None,
    *,
    active: Sequence[bool] | None = None,
    snrs: Sequence[float] | None = None,
) -> tuple[RecoveryReport, SimState]:
    """Advance ``state`` by one slot (in place) and report what was recovered.

    ``active`` and ``snrs`` override the random draw; both must then be given.
    """
    if active is None or snrs is None:
        if rng is None:
            raise ValueError("need an rng or explicit active/snrs draws")
        active, snrs = draw_slot(rng, config)
    rho = config.rho_th
    t = state.slot

    copies = []
    new_packets = 0
    for u in state.users:
        if active[u.user]:
            if not u.backlogged:
                new_packets += 1
            copies.append(PacketCopy(u.current_packet, float(snrs[u.user])))

    in_slot, residual = intra_slot_detect(copies, rho)
    if config.scheme == "cross-slot":
        buffer = state.buffer
        if residual:
            buffer.append(BufferedSlot(t, residual))
        if in_slot or residual:
            recovered, buffer = recovery_cascade(buffer, in_slot, rho)
            buffer = evict_dead_slots(buffer, rho)
        else:
            recovered = set()
        state.buffer = buffer
    else:
        recovered = set(in_slot)

    for u in state.users:
        if u.current_packet in recovered:
            u.current_packet = PacketId(u.user, u.current_packet.sequence + 1)
            u.backlogged = False
        elif active[u.user]:
            u.backlogged = True
    state.slot = t + 1

    report = RecoveryReport(
        slot_index=t,
        transmitted=tuple(c.id for c in copies),
        recovered_in_slot=tuple(in_slot),
        recovered=frozenset(recovered),
        new_packets=new_packets,
    )
    return report, state


def classify_buffer_state(buffer: CollisionBuffer, rho_th: float, K: int = 2) -> BufferState:
    """Two-user chain state: how many users own a potential buffered copy."""
    if K != 2:
        raise ParameterError(f"buffer-state classification is defined for K = 2 only, got K = {K}")
    owners = {c.id.user for s in buffer.slots for c in s.copies if c.b > rho_th}
    return (BufferState.S0, BufferState.S21, BufferState.S22)[len(owners)]


def run_experiment(
    config: SystemConfig,
    seed: int | None = None,
    record_states: bool = False,
    engine: str = "compiled",
) -> SimMetrics:
    """Simulate ``config.n_slots`` slots from an empty buffer.

    ``engine="reference"`` steps through :func:`run_slot`; the default
    compiled loop gives identical results much faster.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    active, snrs = draw_slots(rng, config, config.n_slots)
    if engine == "compiled":
        recovered, transmitted, occupancy, counts, trace = _kernel.simulate(
            active, snrs, config.rho_th, config.scheme == "cross-slot", record_states
        )
        counts = counts.tolist()
        if not record_states or config.K != 2:
            trace = None
    elif engine == "reference":
        recovered, transmitted, occupancy, counts, trace = _reference_loop(
            config, active, snrs, record_states
        )
    else:
        raise ValueError(f"unknown engine {engine!r}")

    n = config.n_slots
    T = recovered / n
    return SimMetrics(
        n_slots=n,
        R=config.R,
        recovered_packets=int(recovered),
        transmitted_packets=int(transmitted),
        throughput_T=T,
        sum_rate_Rs=config.R * T,
        mean_buffer_occupancy=occupancy / n,
        state_histogram=tuple(c / n for c in counts) if config.K == 2 else None,
        state_trace=trace,
    )


def _reference_loop(config, active, snrs, record_states):
    state = SimState.fresh(config.K)
    track = config.K == 2
    counts = [0, 0, 0]
    trace = np.empty(config.n_slots, dtype=np.int8) if (track and record_states) else None
    rho = config.rho_th
    recovered = transmitted = occupancy = 0
    for t in range(config.n_slots):
        report, state = run_slot(state, config, active=active[t].tolist(), snrs=snrs[t].tolist())
        recovered += report.n_recovered
        transmitted += report.new_packets
        occupancy += len(state.buffer)
        if track:
            s = classify_buffer_state(state.buffer, rho)
            counts[s] += 1
            if trace is not None:
                trace[t] = s
    return recovered, transmitted, occupancy, counts, trace


def experiment_seed(base_seed: int, index: int) -> int:
    """Per-experiment seed: numpy SeedSequence hash of (base_seed, index)."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


SUMMARY_FIELDS = ("throughput_T", "sum_rate_Rs", "mean_buffer_occupancy")


@dataclass
class MonteCarloResult:
    config: SystemConfig
    experiments: list[SimMetrics]
    mean: dict[str, float]
    stderr: dict[str, float | None]

    @property
    def n(self) -> int:
        return len(self.experiments)


def _run_indexed(args):
    config, i, engine = args
    return run_experiment(config, experiment_seed(config.seed, i), engine=engine)


def _summarise(values: list[float]) -> tuple[float, float | None]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def run_monte_carlo(config: SystemConfig, workers: int = 1, engine: str = "compiled") -> MonteCarloResult:
    """Run ``config.n_experiments`` independent experiments and aggregate.

    Results are reduced in experiment-index order, so ``workers`` only
    changes wall-clock time.  Standard errors are ``None`` for one run.
    """
    jobs = [(config, i, engine) for i in range(config.n_experiments)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        runs = [_run_indexed(j) for j in jobs]

    mean: dict[str, float] = {}
    stderr: dict[str, float | None] = {}
    for name in SUMMARY_FIELDS:
        mean[name], stderr[name] = _summarise([getattr(r, name) for r in runs])
    if config.K == 2:
        for j, label in enumerate(BufferState.labels()):
            mean[f"state_{label}"], stderr[f"state_{label}"] = _summarise(
                [r.state_histogram[j] for r in runs]
            )
    return MonteCarloResult(config, runs, mean, stderr)
