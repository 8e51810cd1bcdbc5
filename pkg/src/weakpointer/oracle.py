"""Brute-force grid oracle for the pointer engine.

Every meter wavefunction lives on its own uniform 1-D grid.  The joint
photon-meter state is stored as one tensor per path (one grid axis per
device) and pushed through the circuit cut by cut: a device displaces its axis
by an integer number of grid points, couplers mix the per-path tensors.  All
observables are then plain quadratures on the grid.  Nothing here uses the
closed-form Gaussian algebra of :mod:`weakpointer.pointer`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, Coupler
from .errors import GridResolutionError
from .pointer import MeterDevice, resolve_devices

MAX_DEVICES = 3
MAX_ELEMENTS = 2**24  # per path tensor; ~270 MB complex128


@dataclass(frozen=True)
class GridSpec:
    """Grid spanning ``[-half_width, +half_width]`` (units of sigma) with ``points`` nodes."""

    half_width: float = 8.0
    points: int = 4096

    def __post_init__(self):
        if self.points < 512:
            raise ValueError(f"grid needs at least 512 points, got {self.points}")
        if self.half_width < 8:
            raise ValueError(f"grid half_width must be >= 8 sigma, got {self.half_width}")

    def spacing(self, sigma: float) -> float:
        return 2.0 * self.half_width * sigma / self.points


REFERENCE_GRID = GridSpec()


@dataclass(frozen=True)
class MeterAxis:
    device_id: str
    sigma: float
    spacing: float
    shift_index: int
    snapped_delta: float
    snap_error: float
    x: np.ndarray


@dataclass(frozen=True)
class TerminalStats:
    probability: float
    means: dict[str, float]
    variances: dict[str, float]


@dataclass(frozen=True)
class GridResult:
    terminals: dict[str, TerminalStats]
    fluxes: dict[tuple[str, int], float]
    axes: dict[str, MeterAxis]
    max_norm_error: float

    def weak_estimate(self, terminal: str, meter_id: str) -> float:
        return self.terminals[terminal].means[meter_id] / self.axes[meter_id].snapped_delta

    def snapped(self, devices: Sequence[MeterDevice]) -> list[MeterDevice]:
        """The devices as actually realised on the grid."""
        return [replace(d, delta=self.axes[d.id].snapped_delta) for d in devices]


def _make_axis(device: MeterDevice, grid: GridSpec) -> MeterAxis:
    h = grid.spacing(device.sigma)
    if 0 < abs(device.delta) < h:
        need = math.ceil(2 * grid.half_width * device.sigma / abs(device.delta))
        raise GridResolutionError(
            f"device {device.id!r}: delta {device.delta:g} is below the grid spacing {h:.3g}; "
            f"use at least {need} points"
        )
    n = int(round(device.delta / h))
    half = int(math.ceil(grid.half_width * device.sigma / h - 1e-9))
    # pad by |n| on both sides so the displaced copy keeps its own tails
    j = np.arange(-half - abs(n), half + abs(n) + 1)
    return MeterAxis(device.id, device.sigma, h, n, n * h, n * h - device.delta, j * h)


def _shift(a: np.ndarray, axis: int, n: int) -> np.ndarray:
    if n == 0:
        return a
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if n > 0:
        src[axis], dst[axis] = slice(0, -n), slice(n, None)
    else:
        src[axis], dst[axis] = slice(-n, None), slice(0, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def grid_simulate(
    c: Circuit,
    source: str | None,
    devices: Sequence[MeterDevice] = (),
    grid: GridSpec | Mapping[str, GridSpec] = REFERENCE_GRID,
    max_elements: int = MAX_ELEMENTS,
) -> GridResult:
    """Propagate the discretised joint state and measure it by quadrature.

    ``grid`` is either one spec for every meter axis or a mapping from device
    id to spec.  Shifts are snapped to the nearest grid multiple; the snapped
    value and its error are reported per axis.  Each axis is widened by the
    shift on both sides of ``[-half_width, half_width]``.
    """
    if len(devices) > MAX_DEVICES:
        raise ValueError(f"grid oracle supports at most {MAX_DEVICES} devices, got {len(devices)}")
    resolved = resolve_devices(c, devices)
    axes = [
        _make_axis(d, grid[d.id] if isinstance(grid, Mapping) else grid) for d, _ in resolved
    ]
    shape = tuple(len(ax.x) for ax in axes)
    if math.prod(shape) > max_elements:
        raise GridResolutionError(
            f"joint grid {shape} has {math.prod(shape)} elements, above the budget of {max_elements}"
        )
    dv = math.prod(ax.spacing for ax in axes)

    psi0 = np.ones((), dtype=complex)
    for ax in axes:
        g = np.exp(-(ax.x**2) / (4 * ax.sigma**2))
        g /= math.sqrt(np.sum(g**2) * ax.spacing)
        psi0 = np.multiply.outer(psi0, g)

    source = c.source if source is None else source
    state: dict[str, np.ndarray | None] = {p: None for p in c.paths_at(0)}
    state[source] = psi0
    fluxes: dict[tuple[str, int], float] = {}
    max_norm_error = 0.0
    for k in range(c.n_stages):
        for m, (d, dk) in enumerate(resolved):
            if dk == k and state.get(d.path) is not None:
                state[d.path] = _shift(state[d.path], m, axes[m].shift_index)
        total = 0.0
        for p in c.paths_at(k):
            a = state[p]
            fluxes[(p, k)] = 0.0 if a is None else float(np.sum(np.abs(a) ** 2) * dv)
            total += fluxes[(p, k)]
        max_norm_error = max(max_norm_error, abs(total - 1.0))
        if k == c.final_stage:
            break
        nxt: dict[str, np.ndarray | None] = {p: None for p in c.paths_at(k + 1)}
        for op in c.operations(k):
            if isinstance(op, Coupler):
                for r, out in enumerate(op.out_paths):
                    acc = None
                    for col, inp in enumerate(op.in_paths):
                        a, w = state[inp], op.matrix[r, col]
                        if a is None or w == 0:
                            continue
                        acc = w * a if acc is None else acc + w * a
                    nxt[out] = acc
            else:
                nxt[op.out_path] = state[op.in_path]
        state = nxt

    terminals = {}
    for t in c.terminals:
        a = state[t]
        if a is None:
            terminals[t] = TerminalStats(0.0, {}, {})
            continue
        dens = np.abs(a) ** 2
        prob = float(np.sum(dens) * dv)
        means, variances = {}, {}
        if prob > 0:
            for m, ax in enumerate(axes):
                others = tuple(i for i in range(len(axes)) if i != m)
                marg = dens.sum(axis=others) * (dv / ax.spacing)
                w = marg * ax.spacing / prob
                mu = float(np.sum(ax.x * w))
                means[ax.device_id] = mu
                variances[ax.device_id] = float(np.sum((ax.x - mu) ** 2 * w))
        terminals[t] = TerminalStats(prob, means, variances)
    return GridResult(terminals, fluxes, {ax.device_id: ax for ax in axes}, max_norm_error)


def reference_grids(
    devices: Sequence[MeterDevice],
    base: GridSpec = REFERENCE_GRID,
    max_elements: int = MAX_ELEMENTS,
) -> dict[str, GridSpec]:
    """Per-device grids on which every shift is an exact grid multiple.

    Each axis starts near the spacing of ``base`` (finer when a shift is
    smaller than that) and the largest axes are coarsened, never below 512
    points, until the joint tensor fits in ``max_elements``.
    """
    base_w = base.half_width
    plans = []
    for d in devices:
        h_base = base.spacing(d.sigma)
        mag = abs(d.delta)
        if mag == 0:
            plans.append({"delta": 0.0, "sigma": d.sigma, "n": 0, "points": base.points})
            continue
        n_min = max(1, math.ceil(mag * 512 / (2 * base_w * d.sigma) - 1e-9))
        n = max(n_min, int(round(mag / h_base)))
        plans.append({"delta": mag, "sigma": d.sigma, "n": n, "n_min": n_min})

    def realise(plan):
        if plan["delta"] == 0:
            return GridSpec(base_w, plan["points"])
        h = plan["delta"] / plan["n"]
        points = 2 * math.ceil(base_w * plan["sigma"] / h - 1e-9)
        return GridSpec(points * h / (2 * plan["sigma"]), points)

    def size(plan):
        spec = realise(plan)
        return spec.points + 1 + 2 * plan.get("n", 0)

    while math.prod(size(p) for p in plans) > max_elements:
        order = sorted(range(len(plans)), key=lambda i: -size(plans[i]))
        for i in order:
            p = plans[i]
            if p["delta"] == 0 and p["points"] > 512:
                p["points"] = max(512, p["points"] // 2)
                break
            if p["delta"] != 0 and p["n"] > p["n_min"]:
                p["n"] = max(p["n_min"], p["n"] // 2)
                break
        else:
            raise GridResolutionError(
                f"cannot fit {len(plans)} meter axes into {max_elements} grid elements"
            )
    return {d.id: realise(p) for d, p in zip(devices, plans)}


def oracle_simulate(c: Circuit, source: str | None, devices: Sequence[MeterDevice] = (), **kw) -> GridResult:
    """:func:`grid_simulate` on :func:`reference_grids` (exactly representable shifts)."""
    budget = kw.pop("max_elements", MAX_ELEMENTS)
    return grid_simulate(c, source, devices, reference_grids(devices, max_elements=budget), budget, **kw)
