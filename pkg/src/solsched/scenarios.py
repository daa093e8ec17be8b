"""Sampling and exact enumeration of duration/delay realizations.

Every stochastic element of a mission (activity durations with a
non-deterministic model, stochastic inter-activity delays) is assigned a
fixed index in canonical order: activities sorted by id, then constraints
sorted by id.  Element ``k`` owns the counter-based random stream
``Philox(key=(master_seed, k))`` and the draw for scenario ``i`` sits at
counter block ``i`` of that stream, so any process that knows
``(master_seed, i, k)`` reproduces the identical value.  This is what makes
common-random-number comparison across optimization agents possible.

Modified-PERT sampling uses the Beta reparameterization
``alpha = 1 + lam*(mode-min)/(max-min)``, ``beta = 1 + lam*(max-mode)/(max-min)``
and inverse-CDF transform of a single uniform, then rounds to whole minutes
(rounding bias is at most half a minute; the unrounded draw is available via
``round_to_minutes=False``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .model import DurationModel, MissionModel

__all__ = [
    "Scenario",
    "StochasticElement",
    "EnumerationCapExceeded",
    "ContinuousSupportError",
    "stochastic_elements",
    "element_stream",
    "sample_duration",
    "realize_from_uniform",
    "sample_scenario",
    "sample_scenarios",
    "nominal_scenario",
    "enumerate_scenarios",
    "pert_params",
    "discrete_support",
    "pert_cdf",
    "pert_mean",
    "scenario_lines",
]

ENUMERATION_CAP = 10 ** 6

_MASK64 = (1 << 64) - 1


class EnumerationCapExceeded(ValueError):
    """The scenario support is too large to enumerate."""


class ContinuousSupportError(ValueError):
    """Exact enumeration requires every stochastic element to be discrete."""


@dataclass(frozen=True)
class Scenario:
    """One joint realization of all stochastic durations and delays."""

    realized: dict[str, int]
    realized_delays: dict[str, int]
    seed_tag: str = ""

    def duration_of(self, activity_id: str, model: DurationModel) -> int:
        if activity_id in self.realized:
            return self.realized[activity_id]
        return model.nominal()

    def delay_of(self, constraint_id: str, model: DurationModel) -> int:
        if constraint_id in self.realized_delays:
            return self.realized_delays[constraint_id]
        return model.nominal()


@dataclass(frozen=True)
class StochasticElement:
    id: str
    kind: str  # "activity" | "delay"
    duration: DurationModel
    index: int


def stochastic_elements(model: MissionModel) -> list[StochasticElement]:
    """All non-deterministic elements in canonical order."""
    out: list[StochasticElement] = []
    for a in sorted(model.activities, key=lambda a: a.id):
        if a.duration.kind != "deterministic":
            out.append(StochasticElement(a.id, "activity", a.duration, len(out)))
    for c in sorted(model.constraints, key=lambda c: c.id):
        if c.min_delay.kind != "deterministic":
            out.append(StochasticElement(c.id, "delay", c.min_delay, len(out)))
    return out


def element_stream(master_seed: int, element_index: int) -> np.random.Philox:
    return np.random.Philox(key=[master_seed & _MASK64, element_index & _MASK64])


def pert_params(d: DurationModel) -> tuple[float, float]:
    span = d.max - d.min
    alpha = 1.0 + d.lam * (d.mode - d.min) / span
    beta = 1.0 + d.lam * (d.max - d.mode) / span
    return alpha, beta


def pert_cdf(x, d: DurationModel):
    """Analytic CDF of the (unrounded) modified-PERT distribution."""
    alpha, beta = pert_params(d)
    z = np.clip((np.asarray(x, dtype=float) - d.min) / (d.max - d.min), 0.0, 1.0)
    return special.betainc(alpha, beta, z)


def pert_mean(d: DurationModel) -> float:
    return (d.min + d.lam * d.mode + d.max) / (d.lam + 2.0)


def realize_from_uniform(d: DurationModel, u, round_to_minutes: bool = True):
    """Map uniforms in [0, 1) to realizations of ``d`` by inverse CDF.

    Accepts a scalar or an ndarray of uniforms; exactly one uniform is
    consumed per realization, which keeps stream positions addressable.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if d.kind == "deterministic":
        vals = np.full(u.shape, float(d.value))
        if d.min_clip is not None:
            vals = np.maximum(vals, d.min_clip + 1)
    elif d.kind == "modified_pert":
        if d.max == d.min:
            vals = np.full(u.shape, float(d.min))
        else:
            alpha, beta = pert_params(d)
            if d.min_clip is not None and d.min_clip >= d.min:
                if d.min_clip >= d.max:
                    vals = np.full(u.shape, float(d.max))
                else:
                    lo = special.betainc(alpha, beta, (d.min_clip - d.min) / (d.max - d.min))
                    u = lo + u * (1.0 - lo)
                    vals = d.min + (d.max - d.min) * special.betaincinv(alpha, beta, u)
            else:
                vals = d.min + (d.max - d.min) * special.betaincinv(alpha, beta, u)
    elif d.kind == "discrete":
        support = d.values
        if d.min_clip is not None:
            support = tuple((v, p) for v, p in support if v > d.min_clip) or ((d.min_clip + 1, 1.0),)
        probs = np.array([p for _, p in support], dtype=float)
        probs = probs / probs.sum()
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        vals = np.array([v for v, _ in support], dtype=float)[np.minimum(idx, len(support) - 1)]
    else:
        raise ValueError(f"unknown duration kind {d.kind!r}")
    if round_to_minutes:
        vals = np.rint(vals)
        if d.min_clip is not None:
            vals = np.maximum(vals, d.min_clip + 1)
        vals = vals.astype(np.int64)
    return (vals[0] if round_to_minutes else float(vals[0])) if scalar else vals


def sample_duration(d: DurationModel, rng: np.random.Generator,
                    round_to_minutes: bool = True):
    """Draw one realization from ``d`` consuming one uniform from ``rng``."""
    u = rng.random()
    v = realize_from_uniform(d, u, round_to_minutes=round_to_minutes)
    return int(v) if round_to_minutes else float(v)


def _seed_tag(master_seed: int, index: int) -> str:
    return f"{master_seed}:{index}"


def sample_scenario(model: MissionModel, master_seed: int, index: int) -> Scenario:
    """Scenario ``index`` of the stream family rooted at ``master_seed``."""
    realized: dict[str, int] = {}
    delays: dict[str, int] = {}
    for el in stochastic_elements(model):
        bg = element_stream(master_seed, el.index)
        bg.advance(index)
        u = np.random.Generator(bg).random()
        v = int(realize_from_uniform(el.duration, u))
        (realized if el.kind == "activity" else delays)[el.id] = v
    return Scenario(realized, delays, _seed_tag(master_seed, index))


def sample_scenarios(model: MissionModel, master_seed: int,
                     start: int, stop: int) -> list[Scenario]:
    """Scenarios [start, stop), identical to per-index :func:`sample_scenario`
    calls but drawn in one vectorized pass per element."""
    n = stop - start
    if n <= 0:
        return []
    elements = stochastic_elements(model)
    columns: list[np.ndarray] = []
    for el in elements:
        bg = element_stream(master_seed, el.index)
        bg.advance(start)
        # one counter block (4 native outputs) per scenario; the realized
        # value is the first double of each block
        us = np.random.Generator(bg).random(4 * n)[::4]
        columns.append(realize_from_uniform(el.duration, us))
    out = []
    for i in range(n):
        realized: dict[str, int] = {}
        delays: dict[str, int] = {}
        for el, col in zip(elements, columns):
            (realized if el.kind == "activity" else delays)[el.id] = int(col[i])
        out.append(Scenario(realized, delays, _seed_tag(master_seed, start + i)))
    return out


def nominal_scenario(model: MissionModel) -> Scenario:
    """Every element at its nominal value (mode / stated value /
    highest-probability discrete value)."""
    realized: dict[str, int] = {}
    delays: dict[str, int] = {}
    for el in stochastic_elements(model):
        (realized if el.kind == "activity" else delays)[el.id] = el.duration.nominal()
    return Scenario(realized, delays, "nominal")


def discrete_support(d: DurationModel) -> list[tuple[int, float]]:
    if d.kind == "deterministic":
        return [(int(d.value), 1.0)]
    if d.kind == "discrete":
        support = d.values
        if d.min_clip is not None:
            support = tuple((v, p) for v, p in support if v > d.min_clip) or ((d.min_clip + 1, 1.0),)
        total = sum(p for _, p in support)
        return [(int(v), p / total) for v, p in support]
    if d.min == d.max:
        return [(int(d.min), 1.0)]
    raise ContinuousSupportError("modified_pert element cannot be enumerated")


def enumerate_scenarios(model: MissionModel,
                        cap: int = ENUMERATION_CAP) -> list[tuple[Scenario, float]]:
    """Exhaustive scenario support with probabilities.

    Requires every stochastic element to be discrete (or degenerate) and the
    product of support sizes to stay within ``cap``.  Probabilities are
    multiplied in canonical element order so independent reimplementations
    can match the floating-point results exactly.
    """
    elements = stochastic_elements(model)
    supports = [discrete_support(el.duration) for el in elements]
    count = 1
    for s in supports:
        count *= len(s)
        if count > cap:
            raise EnumerationCapExceeded(
                f"scenario support exceeds cap ({count}+ > {cap})")
    out: list[tuple[Scenario, float]] = []
    indices = [0] * len(supports)
    for k in range(count):
        realized: dict[str, int] = {}
        delays: dict[str, int] = {}
        prob = 1.0
        for el, sup, idx in zip(elements, supports, indices):
            v, p = sup[idx]
            prob *= p
            (realized if el.kind == "activity" else delays)[el.id] = v
        out.append((Scenario(realized, delays, f"enum:{k}"), prob))
        for j in range(len(indices) - 1, -1, -1):
            indices[j] += 1
            if indices[j] < len(supports[j]):
                break
            indices[j] = 0
    total = math.fsum(p for _, p in out)
    assert abs(total - 1.0) < 1e-9, f"support probabilities sum to {total}"
    return out


def scenario_lines(model: MissionModel,
                   scenarios: Iterable[Scenario]) -> str:
    """Line-oriented export: a header naming elements in canonical order,
    then one whitespace-separated line per scenario."""
    elements = stochastic_elements(model)
    lines = ["# " + " ".join(el.id for el in elements)]
    for sc in scenarios:
        vals = []
        for el in elements:
            source = sc.realized if el.kind == "activity" else sc.realized_delays
            vals.append(str(source[el.id]))
        lines.append(sc.seed_tag + "\t" + " ".join(vals))
    return "\n".join(lines) + "\n"


def scenario_complete(model: MissionModel, sc: Scenario) -> bool:
    for el in stochastic_elements(model):
        source = sc.realized if el.kind == "activity" else sc.realized_delays
        if el.id not in source:
            return False
    return True
