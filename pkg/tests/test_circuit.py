import json
import math

import numpy as np
import pytest
from hypothesis import given, settings

from weakpointer.circuit import (
    backward_amplitudes,
    build_circuit,
    decohere_path,
    encode_matrix,
    forward_amplitudes,
    internal_flux,
    load_circuit,
    port_probabilities,
    terminate_at,
    unitary_check,
)
from weakpointer.errors import (
    DanglingPathError,
    DuplicatePathError,
    NonUnitaryCouplerError,
    PathNotAtStageError,
    UnknownPortError,
)
from weakpointer.network import canonical_description

from conftest import random_circuits, trivial_description

R3, R23, R2 = 1 / math.sqrt(3), math.sqrt(2 / 3), 1 / math.sqrt(2)

# Dense oracle for the canonical network, written out by hand.
# Basis per cut (3 modes):
#   0: (in, vac_o, vac_i)   1: (A, E, vac_i)   2: (A, B, C)   3: (A, F, G)   4: (D, D', G_dump)
U0 = np.array([[R3, -R23, 0], [R23, R3, 0], [0, 0, 1]])
U1 = np.array([[1, 0, 0], [0, R2, R2], [0, -R2, R2]])
U2 = np.array([[1, 0, 0], [0, R2, R2], [0, R2, -R2]])
U3 = np.array([[R3, R23, 0], [R23, -R3, 0], [0, 0, 1]])
DENSE = [U0, U1, U2, U3]


def dense_forward():
    v = [np.array([1.0, 0, 0])]
    for u in DENSE:
        v.append(u @ v[-1])
    return v


def hadamard_desc(scale=1.0):
    h = scale * np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    return {
        "stages": ["s0", "s1"],
        "paths": [
            {"name": "a", "first_stage": 0, "last_stage": 0},
            {"name": "b", "first_stage": 0, "last_stage": 0},
            {"name": "c", "first_stage": 1, "last_stage": 1},
            {"name": "d", "first_stage": 1, "last_stage": 1},
        ],
        "couplers": [{"stage": 0, "in": ["a", "b"], "out": ["c", "d"], "matrix": encode_matrix(h)}],
        "source": "a",
        "terminals": ["c", "d"],
    }


class TestBuild:
    def test_canonical_is_valid_five_stage(self, canonical):
        assert canonical.n_stages == 5
        assert unitary_check(canonical).max_deviation <= 1e-12

    def test_trivial_passthrough(self, trivial):
        assert trivial.paths_at(1) == ("p",)
        assert unitary_check(trivial).max_deviation == 0.0

    def test_rank_deficient_coupler_rejected(self):
        desc = hadamard_desc()
        desc["couplers"][0]["matrix"] = [[1, 0], [0, 0], [1, 0], [0, 0]]
        with pytest.raises(NonUnitaryCouplerError, match="non-unitary coupler"):
            build_circuit(desc)

    def test_dangling_path(self):
        desc = hadamard_desc()
        desc["paths"].append({"name": "z", "first_stage": 0, "last_stage": 0})
        with pytest.raises(DanglingPathError):
            build_circuit(desc)

    def test_duplicate_path(self):
        desc = hadamard_desc()
        desc["paths"].append({"name": "a", "first_stage": 0, "last_stage": 0})
        with pytest.raises(DuplicatePathError):
            build_circuit(desc)

    def test_unconsumed_final_path_must_be_terminal(self):
        desc = hadamard_desc()
        desc["terminals"] = ["c"]
        with pytest.raises(DanglingPathError):
            build_circuit(desc)

    def test_description_round_trip(self, canonical):
        again = build_circuit(json.loads(json.dumps(canonical.to_description())))
        for k in range(canonical.n_stages - 1):
            np.testing.assert_array_equal(again.transfer_matrix(k), canonical.transfer_matrix(k))

    def test_load_from_file(self, tmp_path, canonical):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"circuit": canonical_description(), "devices": []}))
        assert load_circuit(f).stages == canonical.stages


class TestUnitaryCheck:
    def test_hadamard_deviation_zero(self):
        assert unitary_check(build_circuit(hadamard_desc())).max_deviation < 1e-15

    def test_scaled_coupler_deviation_reported(self):
        rep = unitary_check(build_circuit(hadamard_desc(0.9), check_unitary=False))
        assert rep.max_deviation == pytest.approx(0.19, abs=1e-12)
        assert not rep.ok()


class TestPropagation:
    def test_forward_matches_dense_oracle(self, canonical):
        fwd = forward_amplitudes(canonical)
        for k, v in enumerate(dense_forward()):
            np.testing.assert_allclose(fwd.vector(k), _reorder(canonical, k, v), atol=1e-15)

    def test_forward_abc(self, canonical):
        amps = forward_amplitudes(canonical)["ABC"]
        assert amps["A"] == pytest.approx(R3, abs=1e-15)
        assert amps["B"] == pytest.approx(R3, abs=1e-15)
        assert amps["C"] == pytest.approx(-R3, abs=1e-15)

    def test_f_is_dark(self, canonical):
        assert abs(forward_amplitudes(canonical).amplitude("AFG", "F")) < 1e-15

    def test_trivial_amplitude_one(self, trivial):
        assert all(v["p"] == 1 for v in (forward_amplitudes(trivial)[k] for k in range(3)))
        assert all(v["p"] == 1 for v in (backward_amplitudes(trivial, "p")[k] for k in range(3)))

    def test_backward_matches_dense_oracle(self, canonical):
        # <D| U(k -> end): row 0 of the product of later cut maps
        row = np.array([1.0, 0, 0])
        vecs = [row]
        for u in reversed(DENSE):
            vecs.append(vecs[-1] @ u)
        vecs.reverse()
        back = backward_amplitudes(canonical, "D")
        for k, v in enumerate(vecs):
            np.testing.assert_allclose(back.vector(k), _reorder(canonical, k, v), atol=1e-15)
        abc = back["ABC"]
        for p in "ABC":
            assert abc[p] == pytest.approx(R3, abs=1e-15)
        assert abs(back["AE"]["E"]) < 1e-15

    def test_unknown_terminal(self, canonical):
        with pytest.raises(UnknownPortError):
            backward_amplitudes(canonical, "nowhere")

    def test_port_probabilities(self, canonical):
        dense = np.abs(dense_forward()[-1]) ** 2
        probs = port_probabilities(canonical)
        assert probs["D"] == pytest.approx(1 / 9, abs=1e-15)
        assert probs["D'"] == pytest.approx(2 / 9, abs=1e-15)
        assert probs["G_dump"] == pytest.approx(2 / 3, abs=1e-15)
        np.testing.assert_allclose([probs["D"], probs["D'"], probs["G_dump"]], dense, atol=1e-15)
        assert port_probabilities(build_circuit(trivial_description())) == {"p": 1.0}

    def test_constructive_variant_against_dense_oracle(self):
        desc = canonical_description()
        flipped = np.array([[R2, -R2], [R2, R2]])  # F now bright, G dark
        desc["couplers"][2]["matrix"] = encode_matrix(flipped)
        c = build_circuit(desc)
        u2 = np.array([[1, 0, 0], [0, R2, -R2], [0, R2, R2]])
        v = U3 @ u2 @ U1 @ U0 @ np.array([1.0, 0, 0])
        assert port_probabilities(c)["D"] == pytest.approx(abs(v[0]) ** 2, abs=1e-15)
        assert port_probabilities(c)["D"] == pytest.approx((1 / 3 + 2 / 3) ** 2, abs=1e-12)


def _reorder(c, k, dense_vec):
    """Dense basis order per cut -> the circuit's path order."""
    order = [("in", "vac_o", "vac_i"), ("A", "E", "vac_i"), ("A", "B", "C"),
             ("A", "F", "G"), ("D", "D'", "G_dump")][k]
    m = dict(zip(order, dense_vec))
    return np.array([m[p] for p in c.paths_at(k)])


class TestFluxAndDetectors:
    def test_internal_flux(self, canonical, trivial):
        assert internal_flux(canonical, None, "F", "AFG") < 1e-30
        assert internal_flux(canonical, None, "A", "AE") == pytest.approx(1 / 3, abs=1e-15)
        assert internal_flux(canonical, None, "in", 0) == 1.0
        assert internal_flux(trivial, None, "p", 0) == 1.0

    def test_path_absent(self, canonical):
        with pytest.raises(PathNotAtStageError):
            internal_flux(canonical, None, "F", "ABC")

    def test_terminate_at_f(self, canonical):
        t = terminate_at(canonical, "F", "AFG")
        probs = port_probabilities(t)
        assert probs["F"] < 1e-30
        assert sum(probs.values()) == pytest.approx(1, abs=1e-12)
        # the detector leaves the A route into the recombiner untouched
        assert probs["D"] == pytest.approx(1 / 9, abs=1e-12)

    def test_terminate_at_a_starves_d(self, canonical):
        t = terminate_at(canonical, "A", "AE")
        probs = port_probabilities(t)
        assert probs["D"] < 1e-30
        assert probs["A"] == pytest.approx(1 / 3, abs=1e-15)

    def test_terminate_trivial(self, trivial):
        t = terminate_at(trivial, "p", 1)
        assert t.terminals == ("p",)
        assert port_probabilities(t) == {"p": 1.0}

    def test_decohere_b_lights_f(self, canonical):
        t = terminate_at(canonical, "F", "AFG")
        assert decohere_path(t, "B", "ABC")["F"] == pytest.approx(1 / 3, abs=1e-15)

    def test_decohere_against_density_matrix(self, canonical):
        v2 = dense_forward()[2]
        rho = np.outer(v2, v2.conj())
        p = np.diag([0.0, 1.0, 0.0])
        q = np.eye(3) - p
        rho = p @ rho @ p + q @ rho @ q
        u = U3 @ U2
        out = np.real(np.diag(u @ rho @ u.conj().T))
        got = decohere_path(canonical, "B", "ABC")
        np.testing.assert_allclose([got["D"], got["D'"], got["G_dump"]], out, atol=1e-15)
        # B branch alone reaches D with amplitude 1/3; the A + C branch cancels at D
        assert got["D"] == pytest.approx(1 / 9, abs=1e-15)

    def test_decohere_dark_path_is_identity(self, canonical):
        assert decohere_path(canonical, "F", "AFG") == pytest.approx(port_probabilities(canonical), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(random_circuits())
def test_norm_conservation(c):
    np.testing.assert_allclose(forward_amplitudes(c).norms(), 1.0, atol=1e-12)
    assert sum(port_probabilities(c).values()) == pytest.approx(1, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(random_circuits())
def test_reciprocity(c):
    fwd = forward_amplitudes(c)
    for t in c.terminals:
        back = backward_amplitudes(c, t)
        ov = [back.vector(k) @ fwd.vector(k) for k in range(c.n_stages)]
        np.testing.assert_allclose(ov, ov[0], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(random_circuits())
def test_terminate_matches_cut_flux(c):
    fwd = forward_amplitudes(c)
    for k in range(c.n_stages):
        for p in c.paths_at(k):
            t = terminate_at(c, p, k)
            assert port_probabilities(t)[p] == pytest.approx(abs(fwd.amplitude(k, p)) ** 2, abs=1e-12)
            assert sum(port_probabilities(t).values()) == pytest.approx(1, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(random_circuits())
def test_decohere_zero_amplitude_path(c):
    fwd = forward_amplitudes(c)
    base = port_probabilities(c)
    for k in range(c.n_stages):
        for p in c.paths_at(k):
            if abs(fwd.amplitude(k, p)) == 0:
                assert decohere_path(c, p, k) == pytest.approx(base, abs=1e-12)
