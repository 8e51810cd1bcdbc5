import numpy as np
import pytest
from hypothesis import strategies as st

from weakpointer.circuit import build_circuit, encode_matrix
from weakpointer.network import canonical_network

ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def canonical():
    return canonical_network()


def trivial_description(n_stages=3, name="p"):
    return {
        "stages": [f"s{k}" for k in range(n_stages)],
        "paths": [{"name": name, "first_stage": 0, "last_stage": n_stages - 1}],
        "couplers": [],
        "source": name,
        "terminals": [name],
    }


@pytest.fixture
def trivial():
    return build_circuit(trivial_description())


def su2(theta, a, b, g):
    return np.exp(1j * a) * np.array(
        [
            [np.exp(1j * b) * np.cos(theta), np.exp(1j * g) * np.sin(theta)],
            [-np.exp(-1j * g) * np.sin(theta), np.exp(-1j * b) * np.cos(theta)],
        ]
    )


angles = st.floats(0, 2 * np.pi, allow_nan=False)


@st.composite
def random_descriptions(draw, max_modes=4, max_stages=4):
    """Random staged networks: at each cut some disjoint mode pairs meet a random SU(2)."""
    n_modes = draw(st.integers(2, max_modes))
    n_stages = draw(st.integers(2, max_stages))
    current = [f"m{i}s0" for i in range(n_modes)]
    first = {p: 0 for p in current}
    last = {}
    couplers = []
    for k in range(n_stages - 1):
        perm = draw(st.permutations(range(n_modes)))
        n_pairs = draw(st.integers(0 if k else 1, n_modes // 2))
        for j in range(n_pairs):
            i0, i1 = perm[2 * j], perm[2 * j + 1]
            ins = [current[i0], current[i1]]
            outs = [f"m{i0}s{k + 1}", f"m{i1}s{k + 1}"]
            m = su2(draw(angles), draw(angles), draw(angles), draw(angles))
            couplers.append({"stage": k, "in": ins, "out": outs, "matrix": encode_matrix(m)})
            for p in ins:
                last[p] = k
            for i, p in zip((i0, i1), outs):
                first[p] = k + 1
                current[i] = p
    for p in current:
        last[p] = n_stages - 1
    return {
        "stages": [f"s{k}" for k in range(n_stages)],
        "paths": [{"name": p, "first_stage": first[p], "last_stage": last[p]} for p in first],
        "couplers": couplers,
        "source": "m0s0",
        "terminals": list(current),
    }


@st.composite
def random_circuits(draw, **kw):
    return build_circuit(draw(random_descriptions(**kw)))
