"""The canonical nested interferometer.

Layout of stage cuts::

    in --BS_O1--> {A, E} --BS_I1--> {A, B, C} --BS_I2--> {A, F, G} --BS_O2--> {D, D', G_dump}

The outer splitter sends amplitude 1/sqrt(3) to A and sqrt(2/3) into the inner
interferometer (E).  The inner splitters are 50/50 with E -> (B - C)/sqrt(2)
and F = (B + C)/sqrt(2), so F is dark.  The outer recombiner maps
(A, F) -> D with amplitudes (1/sqrt(3), sqrt(2/3)).  Two vacuum modes feed the
unused input ports of BS_O1 and BS_I1.
"""

import numpy as np

from .circuit import Circuit, build_circuit, encode_matrix

SOURCE = "in"
POSTSELECTED = "D"
STAGE_NAMES = ("in", "AE", "ABC", "AFG", "out")
STAGE_IN, STAGE_AE, STAGE_ABC, STAGE_AFG, STAGE_OUT = range(5)

_a = 1 / np.sqrt(3)
_b = np.sqrt(2 / 3)
_h = 1 / np.sqrt(2)

OUTER_SPLIT = np.array([[_a, -_b], [_b, _a]])
INNER_SPLIT = np.array([[_h, _h], [-_h, _h]])
INNER_RECOMBINE = np.array([[_h, _h], [_h, -_h]])
OUTER_RECOMBINE = np.array([[_a, _b], [_b, -_a]])


def canonical_description() -> dict:
    paths = [
        ("in", 0, 0), ("vac_o", 0, 0),
        ("A", 1, 3), ("E", 1, 1), ("vac_i", 0, 1),
        ("B", 2, 2), ("C", 2, 2),
        ("F", 3, 3), ("G", 3, 3),
        ("D", 4, 4), ("D'", 4, 4), ("G_dump", 4, 4),
    ]
    couplers = [
        (0, ("in", "vac_o"), ("A", "E"), OUTER_SPLIT),
        (1, ("E", "vac_i"), ("B", "C"), INNER_SPLIT),
        (2, ("B", "C"), ("F", "G"), INNER_RECOMBINE),
        (3, ("A", "F"), ("D", "D'"), OUTER_RECOMBINE),
    ]
    return {
        "stages": list(STAGE_NAMES),
        "paths": [{"name": n, "first_stage": lo, "last_stage": hi} for n, lo, hi in paths],
        "couplers": [
            {"stage": s, "in": list(i), "out": list(o), "matrix": encode_matrix(m)}
            for s, i, o, m in couplers
        ],
        "passthroughs": [{"stage": 3, "in": "G", "out": "G_dump"}],
        "source": SOURCE,
        "terminals": ["D", "D'", "G_dump"],
    }


def canonical_network() -> Circuit:
    return build_circuit(canonical_description())
