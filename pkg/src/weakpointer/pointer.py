"""Exact Gaussian-pointer weak measurements on a circuit.

Each meter device is an independent transverse coordinate, initially in the
unit-norm Gaussian::

    G_s(x) = (2 pi sigma^2)^(-1/4) exp(-(x - s)^2 / (4 sigma^2))

with ``s = 0``.  A photon trajectory that occupies the device's path at the
device's stage cut displaces that meter by ``delta``.  The joint final state at
a terminal is ``sum_h alpha_h prod_m G_{s_hm}``, summed over trajectories
``h``; every statistic below follows from the two closed-form integrals
:func:`gaussian_overlap` and :func:`gaussian_x_moment`, to all orders in
``delta / sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .circuit import Circuit, StageRef
from .errors import CircuitError, PostselectionError, WeakPointerError
from .tsvf import Observable, weak_value

PROBABILITY_TOL = 1e-14
MAX_HISTORIES = 10**6


@dataclass(frozen=True)
class MeterDevice:
    id: str
    path: str
    stage: StageRef
    delta: float
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"device {self.id!r}: sigma must be positive and finite, got {self.sigma}")
        if not math.isfinite(self.delta):
            raise ValueError(f"device {self.id!r}: delta must be finite, got {self.delta}")

    @classmethod
    def from_dict(cls, d: dict) -> "MeterDevice":
        return cls(
            id=str(d.get("id", d["path"])),
            path=str(d["path"]),
            stage=d["stage"],
            delta=float(d["delta"]),
            sigma=float(d.get("sigma", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"id": self.id, "path": self.path, "stage": self.stage,
                "delta": self.delta, "sigma": self.sigma}


@dataclass(frozen=True)
class History:
    terminal: str
    amplitude: complex
    shifts: dict[str, float]
    trajectory: tuple[str, ...]


@dataclass(frozen=True)
class PointerReport:
    terminal: str
    postselection_probability: float
    means: dict[str, float]
    # None for a device with delta == 0: nothing to normalise by
    weak_estimates: dict[str, float | None]


@dataclass(frozen=True)
class BranchDecomposition:
    through: float
    not_through: float
    cross: float

    @property
    def total(self) -> float:
        return self.through + self.not_through + self.cross


def gaussian_overlap(a, b, sigma):
    """``<G_a|G_b> = exp(-(a - b)^2 / (8 sigma^2))``."""
    return np.exp(-((np.asarray(a) - b) ** 2) / (8.0 * sigma**2))


def gaussian_x_moment(a, b, sigma):
    """``<G_a|x|G_b> = ((a + b) / 2) <G_a|G_b>``."""
    return 0.5 * (np.asarray(a) + b) * gaussian_overlap(a, b, sigma)


def resolve_devices(c: Circuit, devices: Sequence[MeterDevice]) -> list[tuple[MeterDevice, int]]:
    seen = set()
    out = []
    for d in devices:
        if d.id in seen:
            raise CircuitError(f"duplicate meter id {d.id!r}")
        seen.add(d.id)
        out.append((d, c.check_path(d.path, d.stage)))
    return out


def _trajectories(c: Circuit, source: str | None, stop: int) -> Iterator[tuple[tuple[str, ...], complex]]:
    """Every path sequence from the source to cut ``stop`` with nonzero amplitude."""
    source = c.source if source is None else source
    if source not in c.paths_at(0):
        raise CircuitError(f"source {source!r} is not a path at stage 0")
    count = 0
    stack = [((source,), 1.0 + 0j)]
    while stack:
        traj, amp = stack.pop()
        k = len(traj) - 1
        if k == stop:
            count += 1
            if count > MAX_HISTORIES:
                raise WeakPointerError(f"more than {MAX_HISTORIES} histories; circuit too branched")
            yield traj, amp
            continue
        for nxt, m in reversed(c.successors(k, traj[-1])):
            stack.append((traj + (nxt,), amp * m))


def enumerate_histories(c: Circuit, source: str | None, devices: Sequence[MeterDevice] = ()) -> list[History]:
    resolved = resolve_devices(c, devices)
    out = []
    for traj, amp in _trajectories(c, source, c.final_stage):
        shifts = {d.id: (d.delta if traj[k] == d.path else 0.0) for d, k in resolved}
        out.append(History(traj[-1], amp, shifts, traj))
    return out


class _Ensemble:
    """Trajectory amplitudes and meter shifts in array form."""

    def __init__(self, amps, shifts, resolved):
        self.amps = np.asarray(amps, dtype=complex)
        self.shifts = np.asarray(shifts, dtype=float).reshape(len(self.amps), len(resolved))
        self.ids = [d.id for d, _ in resolved]
        self.sigmas = np.array([d.sigma for d, _ in resolved], dtype=float)

    @classmethod
    def collect(cls, c, source, devices, stop, keep):
        resolved = resolve_devices(c, devices)
        amps, shifts, trajs = [], [], []
        for traj, amp in _trajectories(c, source, stop):
            if not keep(traj):
                continue
            amps.append(amp)
            shifts.append([d.delta if k <= stop and traj[k] == d.path else 0.0 for d, k in resolved])
            trajs.append(traj)
        ens = cls(amps, shifts, resolved)
        ens.trajectories = trajs
        return ens

    def grouped(self) -> "_Ensemble":
        """Merge trajectories with identical meter shifts (their amplitudes add)."""
        acc: dict[tuple, complex] = {}
        for a, s in zip(self.amps, self.shifts):
            key = tuple(s)
            acc[key] = acc.get(key, 0j) + a
        g = _Ensemble.__new__(_Ensemble)
        g.ids, g.sigmas = self.ids, self.sigmas
        g.amps = np.array(list(acc.values()), dtype=complex)
        g.shifts = np.array(list(acc.keys()), dtype=float).reshape(len(acc), len(self.ids))
        return g

    def block(self, rows, cols):
        """Complex Gram sums restricted to ``rows x cols``: (norm, numerators)."""
        a, b = self.amps[rows], self.amps[cols]
        sa, sb = self.shifts[rows], self.shifts[cols]
        w = np.conj(a)[:, None] * b[None, :]
        q = np.sum((sa[:, None, :] - sb[None, :, :]) ** 2 / (8.0 * self.sigmas**2), axis=-1)
        em1 = np.expm1(-q)
        # split e^{-q} = 1 + expm1(-q) so near-cancelling sums stay accurate
        norm = np.conj(a.sum()) * b.sum() + np.sum(w * em1)
        nums = []
        for m in range(len(self.ids)):
            first = 0.5 * (np.conj(a @ sa[:, m]) * b.sum() + np.conj(a.sum()) * (b @ sb[:, m]))
            cm = 0.5 * (sa[:, m][:, None] + sb[:, m][None, :])
            nums.append(first + np.sum(w * cm * em1))
        return complex(norm), [complex(x) for x in nums]

    def moments(self):
        full = np.arange(len(self.amps))
        norm, nums = self.block(full, full)
        return norm.real, [x.real for x in nums]


def _terminal_keep(c: Circuit, terminal: str):
    if terminal not in c.terminals:
        raise CircuitError(f"unknown terminal port {terminal!r}; terminals are {list(c.terminals)}")
    return lambda traj: traj[-1] == terminal


def postselection_probabilities(c: Circuit, source: str | None, devices: Sequence[MeterDevice] = ()) -> dict[str, float]:
    ens = _Ensemble.collect(c, source, devices, c.final_stage, lambda t: True)
    out = {}
    for t in c.terminals:
        idx = [i for i, tr in enumerate(ens.trajectories) if tr[-1] == t]
        sub = _Ensemble(ens.amps[idx], ens.shifts[idx], resolve_devices(c, devices)).grouped()
        out[t] = float(sub.moments()[0]) if idx else 0.0
    return out


def pointer_report(c: Circuit, source: str | None, terminal: str, devices: Sequence[MeterDevice] = ()) -> PointerReport:
    """Post-selection probability and conditional pointer means at ``terminal``."""
    ens = _Ensemble.collect(c, source, devices, c.final_stage, _terminal_keep(c, terminal))
    if len(ens.amps) == 0:
        raise PostselectionError(f"no trajectory reaches terminal {terminal!r}")
    prob, nums = ens.grouped().moments()
    if prob < PROBABILITY_TOL:
        raise PostselectionError(
            f"post-selection probability at {terminal!r} is {prob:.3g}; conditional means undefined"
        )
    means, estimates = {}, {}
    for d, num in zip(devices, nums):
        means[d.id] = num / prob
        estimates[d.id] = means[d.id] / d.delta if d.delta != 0 else None
    return PointerReport(terminal, float(prob), means, estimates)


def flux_with_devices(
    c: Circuit, source: str | None, path: str, stage: StageRef, devices: Sequence[MeterDevice] = ()
) -> float:
    """Squared norm of the joint photon-meter component on ``path`` at cut ``stage``."""
    k = c.check_path(path, stage)
    ens = _Ensemble.collect(c, source, devices, k, lambda t: t[-1] == path)
    if len(ens.amps) == 0:
        return 0.0
    return max(float(ens.grouped().moments()[0]), 0.0)


def branch_decomposition(
    c: Circuit,
    source: str | None,
    terminal: str,
    devices: Sequence[MeterDevice],
    meter_id: str,
    cut_path: str,
) -> BranchDecomposition:
    """Split meter ``meter_id``'s unnormalised mean numerator by passage through ``cut_path``.

    ``through`` pairs two trajectories that both visit ``cut_path``,
    ``not_through`` pairs two that both avoid it and ``cross`` collects the
    interference between the two groups.
    """
    ids = [d.id for d in devices]
    if meter_id not in ids:
        raise CircuitError(f"unknown meter {meter_id!r}")
    m = ids.index(meter_id)
    ens = _Ensemble.collect(c, source, devices, c.final_stage, _terminal_keep(c, terminal))
    passes = np.array([cut_path in t for t in ens.trajectories], dtype=bool)
    th, nt = np.flatnonzero(passes), np.flatnonzero(~passes)
    through = ens.block(th, th)[1][m].real if th.size else 0.0
    not_through = ens.block(nt, nt)[1][m].real if nt.size else 0.0
    cross = 2.0 * ens.block(th, nt)[1][m].real if th.size and nt.size else 0.0
    return BranchDecomposition(through, not_through, cross)


def first_order_prediction(
    c: Circuit, source: str | None, terminal: str, devices: Sequence[MeterDevice], meter_id: str
) -> float:
    """``delta * Re(weak value of the device's path projector)``."""
    dev = next((d for d in devices if d.id == meter_id), None)
    if dev is None:
        raise CircuitError(f"unknown meter {meter_id!r}")
    w = weak_value(c, source, terminal, Observable.projector(dev.path, dev.stage))
    return dev.delta * w.real
