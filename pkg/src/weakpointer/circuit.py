"""Staged lossless interferometer networks over discrete path modes.

A circuit is a sequence of stage cuts ``0..S-1``.  Each path lives on a
contiguous range of cuts.  Between cut ``k`` and ``k+1`` every path present at
``k`` is consumed exactly once, either by a two-mode coupler or by an identity
passthrough.  Paths that simply continue are passed through implicitly; a
passthrough that renames a path must be listed explicitly.

Coupler matrices act on column vectors of amplitudes::

    amp(out_paths[r]) = sum_c matrix[r, c] * amp(in_paths[c])
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CircuitError,
    DanglingPathError,
    DuplicatePathError,
    NonUnitaryCouplerError,
    PathNotAtStageError,
    UnknownPortError,
)

UNITARY_TOL = 1e-12

StageRef = int | str


@dataclass(frozen=True, eq=False)
class Coupler:
    stage: int
    in_paths: tuple[str, str]
    out_paths: tuple[str, str]
    matrix: np.ndarray

    def deviation(self) -> float:
        """Largest entry of ``|M^dagger M - I|``."""
        return unitary_deviation(self.matrix)


@dataclass(frozen=True)
class Passthrough:
    stage: int
    in_path: str
    out_path: str


def unitary_deviation(matrix) -> float:
    m = np.asarray(matrix, dtype=complex)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))))


@dataclass(frozen=True)
class UnitarityReport:
    per_stage: tuple[float, ...]
    per_coupler: tuple[tuple[int, tuple[str, str], float], ...]

    @property
    def max_deviation(self) -> float:
        return max(self.per_stage, default=0.0)

    def ok(self, tol: float = UNITARY_TOL) -> bool:
        return self.max_deviation <= tol


class Circuit:
    """Validated staged network.  Build with :func:`build_circuit`."""

    def __init__(
        self,
        stages: Sequence[str],
        paths: Mapping[str, tuple[int, int]],
        couplers: Sequence[Coupler],
        passthroughs: Sequence[Passthrough],
        source: str,
        terminals: Sequence[str],
    ):
        self.stages = tuple(stages)
        self.paths = dict(paths)
        self.couplers = tuple(couplers)
        # explicit renames only; implicit continuations are derived
        self.passthroughs = tuple(passthroughs)
        self.source = source
        self.terminals = tuple(terminals)
        self._stage_paths = tuple(
            tuple(p for p, (lo, hi) in self.paths.items() if lo <= k <= hi)
            for k in range(len(self.stages))
        )
        self._index = tuple({p: i for i, p in enumerate(ps)} for ps in self._stage_paths)
        self._transfer = tuple(self._build_transfer(k) for k in range(self.n_stages - 1))

    # -- structure -----------------------------------------------------
    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def final_stage(self) -> int:
        return self.n_stages - 1

    def stage_index(self, stage: StageRef) -> int:
        if isinstance(stage, (int, np.integer)) and not isinstance(stage, bool):
            k = int(stage)
            if k < 0:
                k += self.n_stages
            if not 0 <= k < self.n_stages:
                raise CircuitError(f"stage index {stage} out of range 0..{self.final_stage}")
            return k
        if stage in self.stages:
            return self.stages.index(stage)
        if isinstance(stage, str) and stage.lstrip("-").isdigit():
            return self.stage_index(int(stage))
        raise CircuitError(f"unknown stage {stage!r}; stages are {list(self.stages)}")

    def paths_at(self, stage: StageRef) -> tuple[str, ...]:
        return self._stage_paths[self.stage_index(stage)]

    def check_path(self, path: str, stage: StageRef) -> int:
        k = self.stage_index(stage)
        if path not in self._index[k]:
            raise PathNotAtStageError(
                f"path {path!r} does not exist at stage {self.stages[k]!r} "
                f"(present: {list(self._stage_paths[k])})"
            )
        return k

    def path_slot(self, path: str, stage: StageRef) -> int:
        k = self.check_path(path, stage)
        return self._index[k][path]

    def transfer_matrix(self, stage: StageRef) -> np.ndarray:
        """Matrix taking amplitudes at cut ``stage`` to cut ``stage + 1``."""
        return self._transfer[self.stage_index(stage)]

    def operations(self, stage: int):
        """All couplers and passthroughs (explicit and implicit) between ``stage`` and ``stage+1``."""
        ops: list[Coupler | Passthrough] = [c for c in self.couplers if c.stage == stage]
        ops += [p for p in self.passthroughs if p.stage == stage]
        for p, (lo, hi) in self.paths.items():
            if lo <= stage < hi:
                ops.append(Passthrough(stage, p, p))
        return ops

    def successors(self, stage: int, path: str) -> list[tuple[str, complex]]:
        """Outgoing (path, matrix element) pairs of ``path`` at cut ``stage``."""
        col = self._index[stage][path]
        row_paths = self._stage_paths[stage + 1]
        t = self._transfer[stage][:, col]
        return [(row_paths[r], complex(t[r])) for r in np.flatnonzero(t)]

    def _build_transfer(self, k: int) -> np.ndarray:
        src, dst = self._index[k], self._index[k + 1]
        t = np.zeros((len(dst), len(src)), dtype=complex)
        for op in self.operations(k):
            if isinstance(op, Coupler):
                for r, out in enumerate(op.out_paths):
                    for c, inp in enumerate(op.in_paths):
                        t[dst[out], src[inp]] = op.matrix[r, c]
            else:
                t[dst[op.out_path], src[op.in_path]] = 1.0
        t.setflags(write=False)
        return t

    def to_description(self) -> dict:
        """Inverse of :func:`build_circuit` (JSON-ready)."""
        desc = {
            "stages": list(self.stages),
            "paths": [
                {"name": p, "first_stage": lo, "last_stage": hi}
                for p, (lo, hi) in self.paths.items()
            ],
            "couplers": [
                {
                    "stage": c.stage,
                    "in": list(c.in_paths),
                    "out": list(c.out_paths),
                    "matrix": encode_matrix(c.matrix),
                }
                for c in self.couplers
            ],
            "source": self.source,
            "terminals": list(self.terminals),
        }
        if self.passthroughs:
            desc["passthroughs"] = [
                {"stage": p.stage, "in": p.in_path, "out": p.out_path} for p in self.passthroughs
            ]
        return desc

    def __repr__(self):
        return (
            f"Circuit(stages={list(self.stages)}, n_paths={len(self.paths)}, "
            f"n_couplers={len(self.couplers)}, source={self.source!r})"
        )


def encode_matrix(matrix) -> list[list[float]]:
    m = np.asarray(matrix, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in m]


def _decode_matrix(raw, where: str) -> np.ndarray:
    try:
        entries = [complex(float(re), float(im)) for re, im in raw]
    except (TypeError, ValueError) as exc:
        raise CircuitError(f"{where}: expected four [re, im] pairs ({exc})") from None
    if len(entries) != 4:
        raise CircuitError(f"{where}: expected four [re, im] pairs, got {len(entries)}")
    return np.array(entries, dtype=complex).reshape(2, 2)


def _field(obj, key, where):
    if not isinstance(obj, Mapping):
        raise CircuitError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise CircuitError(f"{where}: missing field {key!r}")
    return obj[key]


def build_circuit(desc: Mapping, check_unitary: bool = True) -> Circuit:
    """Validate a circuit description and return a :class:`Circuit`.

    Parameters
    ----------
    desc : mapping
        ``{stages, paths, couplers, source, terminals}`` with optional
        ``passthroughs`` for renaming identity continuations.
    check_unitary : bool
        Reject couplers deviating from unitarity by more than 1e-12.  Turning
        this off is only useful for diagnostics with :func:`unitary_check`.
    """
    stages = [str(s) for s in _field(desc, "stages", "circuit")]
    if not stages:
        raise CircuitError("circuit.stages: at least one stage required")
    if len(set(stages)) != len(stages):
        raise CircuitError(f"circuit.stages: duplicate stage names in {stages}")
    last = len(stages) - 1

    paths: dict[str, tuple[int, int]] = {}
    for i, p in enumerate(_field(desc, "paths", "circuit")):
        where = f"paths[{i}]"
        name = str(_field(p, "name", where))
        lo, hi = int(_field(p, "first_stage", where)), int(_field(p, "last_stage", where))
        if name in paths:
            raise DuplicatePathError(f"{where}: duplicate path name {name!r}")
        if not 0 <= lo <= hi <= last:
            raise CircuitError(f"{where}: stage range [{lo}, {hi}] outside 0..{last}")
        paths[name] = (lo, hi)

    couplers = []
    for i, c in enumerate(desc.get("couplers", [])):
        where = f"couplers[{i}]"
        stage = int(_field(c, "stage", where))
        inp = tuple(str(x) for x in _field(c, "in", where))
        out = tuple(str(x) for x in _field(c, "out", where))
        if len(inp) != 2 or len(out) != 2:
            raise CircuitError(f"{where}: couplers take exactly two in and two out paths")
        if inp[0] == inp[1] or out[0] == out[1]:
            raise CircuitError(f"{where}: paths within a pair must be distinct")
        m = _decode_matrix(_field(c, "matrix", where), f"{where}.matrix")
        m.setflags(write=False)
        if check_unitary:
            dev = unitary_deviation(m)
            if dev > UNITARY_TOL:
                raise NonUnitaryCouplerError(
                    f"{where}: non-unitary coupler, max |M^dagger M - I| = {dev:.3g}; "
                    f"matrix = {m.tolist()}"
                )
        couplers.append(Coupler(stage, inp, out, m))

    passthroughs = []
    for i, p in enumerate(desc.get("passthroughs", [])):
        where = f"passthroughs[{i}]"
        passthroughs.append(
            Passthrough(
                int(_field(p, "stage", where)),
                str(_field(p, "in", where)),
                str(_field(p, "out", where)),
            )
        )

    # every path ending before the last cut is consumed exactly once; every
    # path starting after cut 0 is produced exactly once
    consumed: dict[str, str] = {}
    produced: dict[str, str] = {}
    ops = [(f"couplers[{i}]", c.stage, c.in_paths, c.out_paths) for i, c in enumerate(couplers)]
    ops += [
        (f"passthroughs[{i}]", p.stage, (p.in_path,), (p.out_path,))
        for i, p in enumerate(passthroughs)
    ]
    for where, stage, ins, outs in ops:
        if not 0 <= stage < last:
            raise CircuitError(f"{where}: stage {stage} must be in 0..{last - 1}")
        for p in ins:
            if p not in paths:
                raise UnknownPortError(f"{where}: unknown path {p!r}")
            if paths[p][1] != stage:
                raise CircuitError(
                    f"{where}: input path {p!r} must end at stage {stage}, ends at {paths[p][1]}"
                )
            if p in consumed:
                raise CircuitError(f"{where}: path {p!r} already consumed by {consumed[p]}")
            consumed[p] = where
        for p in outs:
            if p not in paths:
                raise UnknownPortError(f"{where}: unknown path {p!r}")
            if paths[p][0] != stage + 1:
                raise CircuitError(
                    f"{where}: output path {p!r} must start at stage {stage + 1}, "
                    f"starts at {paths[p][0]}"
                )
            if p in produced:
                raise CircuitError(f"{where}: path {p!r} already produced by {produced[p]}")
            produced[p] = where
    for p, (lo, hi) in paths.items():
        if hi < last and p not in consumed:
            raise DanglingPathError(f"path {p!r} ends at stage {hi} but is not consumed")
        if lo > 0 and p not in produced:
            raise DanglingPathError(f"path {p!r} starts at stage {lo} but nothing feeds it")

    final_paths = [p for p, (_, hi) in paths.items() if hi == last]
    terminals = [str(t) for t in desc.get("terminals", final_paths)]
    for t in terminals:
        if t not in final_paths:
            raise UnknownPortError(f"terminal {t!r} is not a path at the final stage")
    missing = [p for p in final_paths if p not in terminals]
    if missing:
        raise DanglingPathError(f"final-stage paths {missing} are not declared terminals")
    source = str(_field(desc, "source", "circuit"))
    if source not in paths or paths[source][0] != 0:
        raise UnknownPortError(f"source {source!r} is not a path at stage 0")
    return Circuit(stages, paths, couplers, passthroughs, source, terminals)


def load_circuit(path_or_text: str | Path) -> Circuit:
    """Read a circuit description from a JSON file path or a JSON string."""
    p = Path(path_or_text)
    text = p.read_text() if p.exists() else str(path_or_text)
    doc = json.loads(text)
    return build_circuit(doc["circuit"] if "circuit" in doc else doc)


def unitary_check(c: Circuit) -> UnitarityReport:
    per_coupler = tuple((cp.stage, cp.in_paths, cp.deviation()) for cp in c.couplers)
    per_stage = []
    for k in range(c.n_stages - 1):
        t = c.transfer_matrix(k)
        per_stage.append(unitary_deviation(t))
    return UnitarityReport(tuple(per_stage), per_coupler)


@dataclass(frozen=True)
class StageAmplitudes:
    """Amplitude vector per stage cut, indexed like ``Circuit.paths_at``."""

    circuit: Circuit = field(repr=False)
    vectors: tuple[np.ndarray, ...]

    def vector(self, stage: StageRef) -> np.ndarray:
        return self.vectors[self.circuit.stage_index(stage)]

    def __getitem__(self, stage: StageRef) -> dict[str, complex]:
        k = self.circuit.stage_index(stage)
        return {p: complex(a) for p, a in zip(self.circuit.paths_at(k), self.vectors[k])}

    def amplitude(self, stage: StageRef, path: str) -> complex:
        return complex(self.vectors[self.circuit.stage_index(stage)][self.circuit.path_slot(path, stage)])

    def norms(self) -> np.ndarray:
        return np.array([np.vdot(v, v).real for v in self.vectors])


def _source_vector(c: Circuit, source: str | None) -> np.ndarray:
    source = c.source if source is None else source
    if source not in c._index[0]:
        raise UnknownPortError(f"source {source!r} is not a path at stage 0")
    v = np.zeros(len(c.paths_at(0)), dtype=complex)
    v[c._index[0][source]] = 1.0
    return v


def propagate(c: Circuit, vec: np.ndarray, start: int, stop: int | None = None) -> list[np.ndarray]:
    """Forward-propagate ``vec`` (at cut ``start``) up to cut ``stop`` inclusive."""
    stop = c.final_stage if stop is None else stop
    out = [np.asarray(vec, dtype=complex)]
    for k in range(start, stop):
        out.append(c.transfer_matrix(k) @ out[-1])
    return out


def forward_amplitudes(c: Circuit, source: str | None = None) -> StageAmplitudes:
    return StageAmplitudes(c, tuple(propagate(c, _source_vector(c, source), 0)))


def backward_amplitudes(c: Circuit, terminal: str) -> StageAmplitudes:
    """Components of ``<terminal| U(k -> end)`` at every cut ``k``."""
    if terminal not in c.terminals:
        raise UnknownPortError(f"unknown terminal port {terminal!r}; terminals are {list(c.terminals)}")
    last = c.final_stage
    b = np.zeros(len(c.paths_at(last)), dtype=complex)
    b[c._index[last][terminal]] = 1.0
    vecs = [b]
    for k in range(last - 1, -1, -1):
        vecs.append(vecs[-1] @ c.transfer_matrix(k))
    return StageAmplitudes(c, tuple(reversed(vecs)))


def port_probabilities(c: Circuit, source: str | None = None) -> dict[str, float]:
    final = forward_amplitudes(c, source).vector(-1)
    probs = dict(zip(c.paths_at(-1), np.abs(final) ** 2))
    return {t: float(probs[t]) for t in c.terminals}


def internal_flux(c: Circuit, source: str | None, path: str, stage: StageRef) -> float:
    """Probability of finding the photon on ``path`` at cut ``stage`` (no meters)."""
    k = c.check_path(path, stage)
    return float(abs(forward_amplitudes(c, source).amplitude(k, path)) ** 2)


def _unique_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    name, i = base, 1
    while name in taken:
        i += 1
        name = f"{base}{i}"
    return name


def terminate_at(c: Circuit, path: str, stage: StageRef) -> Circuit:
    """Place a detector on ``path`` at cut ``stage``.

    The path is absorbed there and carried unchanged to the final cut as a new
    terminal port.  Wherever the original path fed a later coupler, a fresh
    vacuum mode takes its slot, so the downstream couplers keep their matrices.
    """
    c.check_path(path, stage)
    desc = c.to_description()
    lo, hi = c.paths[path]
    last = c.final_stage
    path_entries = {p["name"]: p for p in desc["paths"]}
    if hi < last:
        vac = _unique_name(f"{path}~vac", c.paths)
        path_entries[vac] = {"name": vac, "first_stage": 0, "last_stage": hi}
        for cp in desc["couplers"]:
            if cp["stage"] == hi:
                cp["in"] = [vac if p == path else p for p in cp["in"]]
        for pt in desc.get("passthroughs", []):
            if pt["stage"] == hi and pt["in"] == path:
                pt["in"] = vac
    path_entries[path] = {"name": path, "first_stage": lo, "last_stage": last}
    desc["paths"] = list(path_entries.values())
    if path not in desc["terminals"]:
        desc["terminals"].append(path)
    return build_circuit(desc)


def decohere_path(c: Circuit, path: str, stage: StageRef, source: str | None = None) -> dict[str, float]:
    """Terminal probabilities after fully dephasing ``{path, rest}`` at cut ``stage``.

    Equivalent to a strong which-path measurement: the on-path and off-path
    components propagate as an incoherent mixture.
    """
    k = c.check_path(path, stage)
    fwd = forward_amplitudes(c, source).vector(k)
    on = np.zeros_like(fwd)
    slot = c.path_slot(path, k)
    on[slot] = fwd[slot]
    off = fwd - on
    total = np.zeros(len(c.paths_at(-1)))
    for branch in (on, off):
        total += np.abs(propagate(c, branch, k)[-1]) ** 2
    probs = dict(zip(c.paths_at(-1), total))
    return {t: float(probs[t]) for t in c.terminals}
