"""First-order weak values of path projectors.

For pre-selected state ``|psi1>`` (forward from the source) and post-selected
``<psi2|`` (backward from a terminal), at any stage cut::

    A_w = <psi2| A |psi1> / <psi2|psi1>

The weak values of a complete set of path projectors at one cut form a
quasi-probability distribution: they sum to one but may be negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .circuit import Circuit, StageRef, backward_amplitudes, forward_amplitudes
from .errors import PostselectionError

OVERLAP_TOL = 1e-14


@dataclass(frozen=True)
class Observable:
    """Weighted sum of path projectors ``sum_i w_i |i><i|`` at one cut."""

    stage: StageRef
    terms: Mapping[str, complex]

    @classmethod
    def projector(cls, path: str, stage: StageRef) -> "Observable":
        return cls(stage, {path: 1.0})


@dataclass(frozen=True)
class WeakValueTable:
    stage: int
    values: dict[str, complex]
    sum: complex


def _two_state(c: Circuit, source, terminal, stage):
    k = c.stage_index(stage)
    fwd = forward_amplitudes(c, source).vector(k)
    back = backward_amplitudes(c, terminal).vector(k)
    overlap = complex(back @ fwd)
    if abs(overlap) < OVERLAP_TOL:
        raise PostselectionError(
            f"pre- and post-selected states are orthogonal (|<psi2|psi1>| = {abs(overlap):.3g}); "
            f"weak values from {source!r} to {terminal!r} are undefined"
        )
    return k, fwd, back, overlap


def postselection_overlap(c: Circuit, source: str | None, terminal: str) -> complex:
    """``<psi2|psi1>``; identical at every cut."""
    fwd = forward_amplitudes(c, source).vector(0)
    return complex(backward_amplitudes(c, terminal).vector(0) @ fwd)


def weak_value(c: Circuit, source: str | None, terminal: str, obs: Observable) -> complex:
    k, fwd, back, overlap = _two_state(c, source, terminal, obs.stage)
    total = 0j
    for path, w in obs.terms.items():
        i = c.path_slot(path, k)
        total += w * back[i] * fwd[i]
    return complex(total / overlap)


def weak_probability_table(
    c: Circuit, source: str | None, terminal: str, stage: StageRef
) -> WeakValueTable:
    """Weak value of every path projector at ``stage``."""
    k, fwd, back, overlap = _two_state(c, source, terminal, stage)
    vals = back * fwd / overlap
    values = {p: complex(v) for p, v in zip(c.paths_at(k), vals)}
    return WeakValueTable(k, values, complex(np.sum(vals)))
