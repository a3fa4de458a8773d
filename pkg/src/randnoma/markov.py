"""Closed-form throughput of two-user random NOMA with cross-slot SIC.

The collision buffer is summarised by how many users own a *potential*
buffered copy (one whose SNR alone exceeds the decoding threshold).  Slot
events drive a three-state Markov chain; each transition is labelled by a
polynomial in ``x`` whose exponent counts the packets recovered on that
transition.  Evaluating at ``x = 1`` gives the transition matrix; the
derivative at ``x = 1`` gives the expected recoveries per transition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import IntEnum

import numpy as np

from .channel import AnalyticalDomainError, ParameterError, rho_threshold


class BufferState(IntEnum):
    S0 = 0  # no potential packet buffered
    S22 = 1  # both users own a potential buffered packet
    S21 = 2  # exactly one user does

    @staticmethod
    def labels() -> tuple[str, str, str]:
        return ("S0", "S22", "S21")


@dataclass(frozen=True)
class EventProbabilities:
    """Per-slot event probabilities for K = 2.

    ``Enm`` is "n active users, m recovered".  ``col_j`` splits the
    two-active no-recovery event by the number ``j`` of potential copies.
    ``rec_nop``/``rec_pot`` and ``col_new``/``col_old`` are taken relative to
    a buffer holding one potential packet.
    """

    E00: float
    E11: float
    E10: float
    E22: float
    E21: float
    E20: float
    col0: float
    col1: float
    col2: float
    rec_nop: float
    rec_pot: float
    col_new: float
    col_old: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self, tol: float = 1e-9) -> None:
        for name, v in self.as_dict().items():
            if not (-tol <= v <= 1 + tol):
                raise ParameterError(f"event probability {name} = {v} outside [0, 1]")
        checks = {
            "activity partition": self.E00 + self.E11 + self.E10 + self.E22 + self.E21 + self.E20 - 1.0,
            "collision partition": self.col0 + self.col1 + self.col2 - self.E20,
            "rec_pot": self.rec_pot - (self.E11 + self.E21) / 2,
            "rec_nop": self.rec_nop - ((self.E11 + self.E21) / 2 + self.E22),
            "col_new": self.col_new - (self.col1 / 2 + self.col2),
            "col_old": self.col_old - (self.col1 / 2 + self.col0),
        }
        for name, err in checks.items():
            if abs(err) > tol:
                raise ParameterError(f"event probabilities violate the {name} identity (off by {err:.3e})")


def _with_subevents(E00, E11, E10, E22, E21, E20, col0, col1, col2) -> EventProbabilities:
    half = (E11 + E21) / 2
    return EventProbabilities(
        E00=E00, E11=E11, E10=E10, E22=E22, E21=E21, E20=E20,
        col0=col0, col1=col1, col2=col2,
        rec_nop=half + E22,
        rec_pot=half,
        col_new=col1 / 2 + col2,
        col_old=col1 / 2 + col0,
    )


def event_probabilities(p: float, R: float, B: float) -> EventProbabilities:
    """Closed-form event probabilities (valid for R >= 1)."""
    if not (0.0 < p <= 1.0):
        raise ParameterError(f"transmission probability must lie in (0, 1], got {p}")
    if B <= 0:
        raise ParameterError(f"average SNR must be > 0, got {B}")
    if R < 1.0:
        raise AnalyticalDomainError(
            f"the closed-form analysis assumes R >= 1 (threshold 2^R - 1 >= 1), got R = {R}"
        )
    rho = rho_threshold(R)
    e1 = math.exp(-(rho / B))
    e2 = math.exp(-(2.0 * rho / B))
    e3 = math.exp(-(rho * (2.0 + rho) / B))
    q = 1.0 - p
    pp = p * p
    g = 2.0 * pp / (1.0 + rho)

    E00 = q * q
    E11 = 2.0 * p * q * e1
    E10 = 2.0 * p * q * (1.0 - e1)
    E22 = g * e3
    E21 = g * (e1 - e3)
    E20 = pp - g * e1
    col2 = pp * e2 - g * e3
    col1 = g * rho * e1 - 2.0 * pp * e2 + g * e3
    col0 = pp * (1.0 - e1) ** 2
    return _with_subevents(E00, E11, E10, E22, E21, E20, col0, col1, col2)


def event_probabilities_mc(
    p: float,
    R: float,
    B: float,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 1_000_000,
) -> EventProbabilities:
    """Monte Carlo estimate of the event probabilities.

    Each sample is one independent two-user slot.  For the buffer-relative
    events a fair coin names which user owns the buffered potential packet.
    Works for any R > 0.
    """
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    rho = rho_threshold(R)
    names = [f.name for f in fields(EventProbabilities)]
    counts = dict.fromkeys(names, 0)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        act = rng.random((n, 2)) < p
        b = -B * np.log(1.0 - rng.random((n, 2)))
        owner = rng.random(n) < 0.5  # True: user 1 owns the buffered potential packet
        b = np.where(act, b, 0.0)
        n_act = act.sum(axis=1)

        hi = b.max(axis=1)
        lo = b.min(axis=1)
        strong = b[:, 1] > b[:, 0]  # index of the stronger user (ties -> user 0)
        # one active user: decodes iff b >= rho; two active: SIC prefix
        first = hi >= rho * (1.0 + lo)
        second = first & (lo >= rho)
        m = np.where(n_act == 2, first.astype(int) + second, (hi >= rho).astype(int))
        m = np.where(n_act == 0, 0, m)
        single_user = act[:, 1]  # when n_act == 1, which user is active
        recovered_user = np.where(n_act == 1, single_user, strong)
        n_pot = (b > rho).sum(axis=1)
        pot_user = b[:, 1] > rho  # meaningful when exactly one copy is potential

        ev = {
            "E00": n_act == 0,
            "E11": (n_act == 1) & (m == 1),
            "E10": (n_act == 1) & (m == 0),
            "E22": (n_act == 2) & (m == 2),
            "E21": (n_act == 2) & (m == 1),
            "E20": (n_act == 2) & (m == 0),
        }
        ev["col0"] = ev["E20"] & (n_pot == 0)
        ev["col1"] = ev["E20"] & (n_pot == 1)
        ev["col2"] = ev["E20"] & (n_pot == 2)
        one_rec = ev["E11"] | ev["E21"]
        hit_owner = recovered_user == owner
        ev["rec_pot"] = one_rec & hit_owner
        ev["rec_nop"] = (one_rec & ~hit_owner) | ev["E22"]
        pot_is_owner = pot_user == owner
        ev["col_new"] = (ev["col1"] & ~pot_is_owner) | ev["col2"]
        ev["col_old"] = (ev["col1"] & pot_is_owner) | ev["col0"]
        for k in names:
            counts[k] += int(np.count_nonzero(ev[k]))
        done += n
    return EventProbabilities(**{k: counts[k] / n_samples for k in names})


class TransitionPolynomial:
    """Polynomial in the packet-counting variable ``x``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict[int, float] | None = None):
        self.coeffs = {k: float(v) for k, v in (coeffs or {}).items() if v != 0}
        for power, mass in self.coeffs.items():
            if power < 0 or mass < 0:
                raise ParameterError(f"invalid polynomial term {mass} x^{power}")

    def __call__(self, x: float) -> float:
        return math.fsum(c * x**k for k, c in self.coeffs.items())

    def derivative_at_one(self) -> float:
        return math.fsum(k * c for k, c in self.coeffs.items())

    def __eq__(self, other):
        return isinstance(other, TransitionPolynomial) and self.coeffs == other.coeffs

    def __repr__(self):
        if not self.coeffs:
            return "0"
        return " + ".join(f"{c:.6g}" + (f"x^{k}" if k else "") for k, c in sorted(self.coeffs.items()))


def _poly(*terms: tuple[int, float]) -> TransitionPolynomial:
    acc: dict[int, float] = {}
    for power, mass in terms:
        acc[power] = acc.get(power, 0.0) + mass
    return TransitionPolynomial(acc)


@dataclass
class TransitionModel:
    """3x3 matrix of transition polynomials over (S0, S22, S21)."""

    entries: list[list[TransitionPolynomial]]

    def at(self, x: float) -> np.ndarray:
        return np.array([[poly(x) for poly in row] for row in self.entries])

    @property
    def stochastic(self) -> np.ndarray:
        return self.at(1.0)


def build_transition_model(ev: EventProbabilities, as_printed: bool = False) -> TransitionModel:
    """Assemble the transition-polynomial matrix.

    From S21 an idle slot leaves the buffer untouched, so the self-loop
    carries ``E00 + E10 + col_old`` and the jump to S22 carries ``col_new``.
    ``as_printed=True`` swaps those two entries; the simulator rejects that
    variant, and it is kept only as a comparison target.
    """
    ev.validate()
    s0_row = [
        _poly((0, ev.E00), (1, ev.E11), (0, ev.E10), (2, ev.E22), (1, ev.E21), (0, ev.col0)),
        _poly((0, ev.col2)),
        _poly((0, ev.col1)),
    ]
    s22_row = [
        _poly((2, ev.E11), (2, ev.E22), (2, ev.E21)),
        _poly((0, ev.E00), (0, ev.E10), (0, ev.E20)),
        _poly(),
    ]
    stay = _poly((0, ev.E00), (0, ev.E10), (0, ev.col_old))
    grow = _poly((0, ev.col_new))
    s21_row = [
        _poly((2, ev.rec_nop), (1, ev.rec_pot)),
        stay if as_printed else grow,
        grow if as_printed else stay,
    ]
    return TransitionModel([s0_row, s22_row, s21_row])


def throughput_matrix(model: TransitionModel) -> np.ndarray:
    """Expected packets recovered per transition: d/dx of each entry at x = 1."""
    return np.array([[poly.derivative_at_one() for poly in row] for row in model.entries])


class SteadyStateError(ArithmeticError):
    pass


def _reachable(P: np.ndarray, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(P[i] > 0):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def steady_state(model: TransitionModel | np.ndarray, start: int = BufferState.S0) -> np.ndarray:
    """Stationary distribution of the chain started in ``start``.

    Solves ``v P = v`` with one balance equation replaced by ``sum(v) = 1``.
    If the chain is reducible the solve is restricted to the closed
    communicating class reachable from ``start``.
    """
    P = model.stochastic if isinstance(model, TransitionModel) else np.asarray(model, dtype=float)
    n = P.shape[0]
    reach = {i: _reachable(P, i) for i in range(n)}
    from_start = reach[start]
    # a state is recurrent iff every state it reaches can reach it back
    closed = [i for i in sorted(from_start) if all(i in reach[j] for j in reach[i])]
    classes = {frozenset(reach[i]) for i in closed}
    if len(classes) != 1:
        raise SteadyStateError(
            f"{len(classes)} closed classes reachable from state {start}; "
            f"limiting distribution depends on absorption:\n{P}"
        )
    cls = sorted(next(iter(classes)))
    sub = P[np.ix_(cls, cls)]
    A = sub.T - np.eye(len(cls))
    A[-1, :] = 1.0
    rhs = np.zeros(len(cls))
    rhs[-1] = 1.0
    try:
        v_sub = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError(f"singular balance system for class {cls}:\n{sub}") from exc
    v = np.zeros(n)
    v[cls] = v_sub
    return v


def power_iteration(P: np.ndarray, start: int = BufferState.S0, n_iter: int = 1000) -> np.ndarray:
    v = np.zeros(P.shape[0])
    v[start] = 1.0
    for _ in range(n_iter):
        v = v @ P
    return v


def analytical_throughput(p: float, R: float, B: float, as_printed: bool = False) -> float:
    model = build_transition_model(event_probabilities(p, R, B), as_printed=as_printed)
    v = steady_state(model)
    return float(v @ throughput_matrix(model) @ np.ones(3))


def analytical_sum_rate(p: float, R: float, B: float, as_printed: bool = False) -> tuple[float, float]:
    """Long-run throughput ``T`` (packets/slot) and sum rate ``Rs = R T``."""
    T = analytical_throughput(p, R, B, as_printed=as_printed)
    return T, R * T
