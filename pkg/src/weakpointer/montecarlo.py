"""Finite-statistics experiment: detection events, estimators, resolution budgets.

Events are drawn from the exact joint distribution of (terminal, pointer
positions).  Positions at a terminal follow the interference density
``|sum_g alpha_g prod_m G_{s_gm}(x_m)|^2``; this is sampled by rejection
against the envelope ``H sum_g |alpha_g|^2 prod_m |G_{s_gm}(x_m)|^2``, a
mixture of ``H`` Gaussians that bounds the target by Cauchy-Schwarz.
Branches with equal shifts are merged first, so when only one distinct shift
pattern survives the sampler is exact with no rejections at all.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import Circuit
from .errors import SamplingError
from .pointer import (
    MeterDevice,
    _Ensemble,
    first_order_prediction,
    flux_with_devices,
    pointer_report,
    postselection_probabilities,
    resolve_devices,
)

MAX_PROPOSALS = 10**6
SEED_ENV = "WEAKPOINTER_SEED"


def seed_from_env(seed: int | None = None) -> int | None:
    if seed is not None:
        return int(seed)
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else None


@dataclass(frozen=True)
class Event:
    terminal: str
    positions: dict[str, float]


@dataclass
class EventBatch:
    """Columnar store of many events (``positions`` is ``(n, n_meters)``)."""

    meter_ids: list[str]
    terminals: np.ndarray
    positions: np.ndarray
    seed: int | None = None

    def __len__(self):
        return len(self.terminals)

    def events(self):
        for t, row in zip(self.terminals, self.positions):
            yield Event(str(t), dict(zip(self.meter_ids, map(float, row))))

    def at(self, terminal: str, meter_id: str) -> np.ndarray:
        return self.positions[self.terminals == terminal, self.meter_ids.index(meter_id)]

    def counts(self) -> dict[str, int]:
        names, n = np.unique(self.terminals, return_counts=True)
        return {str(a): int(b) for a, b in zip(names, n)}


@dataclass(frozen=True)
class WeakValueEstimate:
    estimate: float
    standard_error: float
    n: int


@dataclass(frozen=True)
class ResolutionBudget:
    k: float
    delta: float
    sigma: float
    first_order_estimate: float
    postselection_probability: float
    leak_flux: float
    N_postselected: int
    M_emitted: float
    expected_leaked: float


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


class _TerminalSampler:
    """Rejection sampler for pointer positions conditioned on one terminal."""

    def __init__(self, c, source, terminal, devices):
        ens = _Ensemble.collect(c, source, devices, c.final_stage, lambda t: t[-1] == terminal)
        g = ens.grouped()
        weight = np.abs(g.amps) ** 2
        keep = weight > 1e-28 * max(weight.max(initial=0.0), 1e-300)
        self.amps, self.shifts = g.amps[keep], g.shifts[keep]
        self.sigmas = g.sigmas
        self.p = weight[keep] / weight[keep].sum()

    def _gauss(self, x):
        # (batch, H) real amplitudes prod_m G_{s_hm}(x_m)
        z = (x[:, None, :] - self.shifts[None, :, :]) / self.sigmas
        norm = np.prod((2 * np.pi * self.sigmas**2) ** -0.25)
        return norm * np.exp(-0.25 * np.sum(z**2, axis=-1))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        n_meters = len(self.sigmas)
        out = np.empty((n, n_meters))
        if n == 0:
            return out
        H = len(self.amps)
        if n_meters == 0:
            return out
        if H == 1:
            # single shift pattern: the density is one displaced Gaussian
            return self.shifts[0] + rng.standard_normal((n, n_meters)) * self.sigmas
        filled, proposals = 0, 0
        while filled < n:
            batch = max(1024, int(1.2 * H * (n - filled)))
            idx = rng.choice(H, size=batch, p=self.p)
            x = self.shifts[idx] + rng.standard_normal((batch, n_meters)) * self.sigmas
            gx = self._gauss(x)
            target = np.abs(gx @ self.amps) ** 2
            envelope = H * (gx**2 @ (np.abs(self.amps) ** 2))
            accept = rng.random(batch) * envelope < target
            take = x[accept][: n - filled]
            out[filled : filled + len(take)] = take
            filled += len(take)
            proposals += batch
            if proposals > MAX_PROPOSALS * max(1, n) or (filled == 0 and proposals > MAX_PROPOSALS):
                raise SamplingError(
                    f"rejection sampler accepted {filled} of {proposals} proposals; envelope is wrong"
                )
        return out


def sample_events(
    c: Circuit,
    source: str | None,
    devices: Sequence[MeterDevice],
    n: int,
    seed=None,
) -> EventBatch:
    """Draw ``n`` detection events from the exact joint distribution."""
    if len(devices) > 3:
        raise ValueError("sampling supports at most 3 devices")
    resolve_devices(c, devices)
    rng = _rng(seed)
    probs = postselection_probabilities(c, source, devices)
    names = list(probs)
    p = np.array([probs[t] for t in names])
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    counts = rng.multinomial(n, p)
    terminals = np.repeat(np.array(names, dtype=object), counts)
    positions = np.empty((n, len(devices)))
    start = 0
    for t, k in zip(names, counts):
        if k:
            positions[start : start + k] = _TerminalSampler(c, source, t, devices).draw(k, rng)
        start += k
    order = rng.permutation(n)
    return EventBatch(
        [d.id for d in devices],
        terminals[order],
        positions[order],
        seed if isinstance(seed, (int, np.integer)) else None,
    )


def sample_event(c: Circuit, source: str | None, devices: Sequence[MeterDevice], rng) -> Event:
    return next(sample_events(c, source, devices, 1, _rng(rng)).events())


def sample_conditional(
    c: Circuit, source: str | None, terminal: str, devices: Sequence[MeterDevice], n: int, seed=None
) -> np.ndarray:
    """``n`` pointer-position vectors conditioned on detection at ``terminal``."""
    return _TerminalSampler(c, source, terminal, devices).draw(n, _rng(seed))


def sample_events_sharded(c, source, devices, n: int, seed: int, shards: int) -> list[EventBatch]:
    """Independent sub-streams spawned from one master seed (merge order does not matter)."""
    children = np.random.SeedSequence(seed).spawn(shards)
    sizes = [n // shards + (i < n % shards) for i in range(shards)]
    return [
        sample_events(c, source, devices, m, np.random.default_rng(s))
        for m, s in zip(sizes, children)
    ]


def estimate_weak_value(events, meter_id: str, delta: float, terminal: str | None = None) -> WeakValueEstimate:
    """Sample mean of the pointer divided by ``delta``, with its standard error.

    ``events`` is an :class:`EventBatch`, a sequence of :class:`Event`, or a
    plain array of positions already restricted to one terminal.
    """
    if isinstance(events, EventBatch):
        if terminal is None:
            raise ValueError("terminal required when estimating from an EventBatch")
        x = events.at(terminal, meter_id)
    elif isinstance(events, np.ndarray):
        x = events
    else:
        x = np.array([e.positions[meter_id] for e in events if terminal is None or e.terminal == terminal])
    if delta == 0:
        raise ValueError("delta must be nonzero")
    if len(x) < 2:
        raise ValueError(f"need at least 2 events at terminal {terminal!r}, got {len(x)}")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1))
    return WeakValueEstimate(mean / delta, std / (abs(delta) * math.sqrt(len(x))), len(x))


def resolution_budget(
    c: Circuit,
    source: str | None,
    terminal: str,
    devices: Sequence[MeterDevice],
    meter_id: str,
    k: float,
    leak_path: str,
    leak_stage,
) -> ResolutionBudget:
    """Photons needed to resolve a meter's shift to ``k`` standard errors.

    The conditional pointer spread is taken as the meter width ``sigma``.
    ``expected_leaked`` counts photons on ``leak_path`` over all emitted
    photons, post-selected or not.
    """
    dev = next(d for d in devices if d.id == meter_id)
    shift = first_order_prediction(c, source, terminal, devices, meter_id)
    if shift == 0 or abs(shift) < 1e-300:
        raise ValueError(f"meter {meter_id!r} has zero first-order shift; resolution undefined")
    w = shift / dev.delta
    ratio = (k * dev.sigma / abs(shift)) ** 2
    # guard against ceil() of values like 25000000.000000004
    n_post = math.ceil(ratio * (1 - 1e-12))
    prob = pointer_report(c, source, terminal, devices).postselection_probability
    flux = flux_with_devices(c, source, leak_path, leak_stage, devices)
    m = n_post / prob
    return ResolutionBudget(k, dev.delta, dev.sigma, w, prob, flux, n_post, m, m * flux)
