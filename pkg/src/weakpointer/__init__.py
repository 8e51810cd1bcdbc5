"""Weak measurements in pre- and post-selected single-photon interferometers."""

from .circuit import (
    Circuit,
    Coupler,
    StageAmplitudes,
    backward_amplitudes,
    build_circuit,
    decohere_path,
    forward_amplitudes,
    internal_flux,
    load_circuit,
    port_probabilities,
    terminate_at,
    unitary_check,
)
from .errors import (
    CircuitError,
    GridResolutionError,
    OracleDisagreementError,
    PostselectionError,
    SamplingError,
    ScenarioAssertionError,
    WeakPointerError,
)
from .montecarlo import (
    Event,
    EventBatch,
    ResolutionBudget,
    estimate_weak_value,
    resolution_budget,
    sample_event,
    sample_events,
)
from .network import canonical_network
from .oracle import GridSpec, grid_simulate, oracle_simulate, reference_grids
from .pointer import (
    History,
    MeterDevice,
    PointerReport,
    branch_decomposition,
    enumerate_histories,
    first_order_prediction,
    flux_with_devices,
    gaussian_overlap,
    gaussian_x_moment,
    pointer_report,
    postselection_probabilities,
)
from .scenarios import SCENARIOS, ScanRow, run_scenario
from .tsvf import Observable, WeakValueTable, weak_probability_table, weak_value

__version__ = "0.1.0"
