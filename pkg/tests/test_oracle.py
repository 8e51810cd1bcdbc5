import math

import pytest

from weakpointer.errors import GridResolutionError
from weakpointer.oracle import (
    MAX_DEVICES,
    REFERENCE_GRID,
    GridSpec,
    grid_simulate,
    oracle_simulate,
    reference_grids,
)
from weakpointer.pointer import MeterDevice, flux_with_devices, pointer_report


def dev_b(delta, sigma=1.0):
    return MeterDevice("B", "B", "ABC", delta, sigma)


class TestGridSpec:
    def test_minimums(self):
        with pytest.raises(ValueError):
            GridSpec(points=256)
        with pytest.raises(ValueError):
            GridSpec(half_width=4)

    def test_spacing(self):
        assert REFERENCE_GRID.spacing(1.0) == pytest.approx(16 / 4096)
        assert REFERENCE_GRID.spacing(2.0) == pytest.approx(32 / 4096)


class TestGridSimulate:
    def test_no_devices_matches_port_probabilities(self, canonical):
        res = grid_simulate(canonical, None, [])
        assert res.terminals["D"].probability == pytest.approx(1 / 9, abs=1e-12)
        assert res.terminals["G_dump"].probability == pytest.approx(2 / 3, abs=1e-12)
        assert res.fluxes[("F", 3)] < 1e-30

    def test_norm_preserved(self, canonical):
        res = grid_simulate(canonical, None, [dev_b(0.5)])
        assert res.max_norm_error <= 1e-9

    def test_b_mean_and_flux(self, canonical):
        delta = 0.125  # exact multiple of the reference spacing
        res = grid_simulate(canonical, None, [dev_b(delta)])
        assert res.axes["B"].snap_error == 0
        assert res.terminals["D"].means["B"] == pytest.approx(delta, abs=1e-10)
        assert res.fluxes[("F", 3)] == pytest.approx(
            flux_with_devices(canonical, None, "F", "AFG", [dev_b(delta)]), abs=1e-12
        )

    def test_variance_of_free_meter(self, canonical):
        res = grid_simulate(canonical, None, [MeterDevice("m", "A", "AE", 0.0, 0.7)])
        assert res.terminals["D"].variances["m"] == pytest.approx(0.49, rel=1e-9)

    def test_converges_when_points_double(self, canonical):
        delta = 0.125
        coarse = grid_simulate(canonical, None, [dev_b(delta)], GridSpec(8.0, 2048))
        fine = grid_simulate(canonical, None, [dev_b(delta)], GridSpec(8.0, 4096))
        assert abs(coarse.fluxes[("F", 3)] - fine.fluxes[("F", 3)]) < 1e-8
        assert abs(coarse.terminals["D"].means["B"] - fine.terminals["D"].means["B"]) < 1e-8

    def test_snapping_reported(self, canonical):
        res = grid_simulate(canonical, None, [dev_b(0.1)])
        ax = res.axes["B"]
        assert ax.snapped_delta == pytest.approx(ax.shift_index * ax.spacing)
        assert abs(ax.snap_error) <= ax.spacing / 2
        assert res.snapped([dev_b(0.1)])[0].delta == ax.snapped_delta

    def test_shift_below_spacing(self, canonical):
        with pytest.raises(GridResolutionError, match="points"):
            grid_simulate(canonical, None, [dev_b(1e-4)])

    def test_device_limit(self, canonical):
        devs = [MeterDevice(f"m{i}", "A", "ABC", 0.5) for i in range(MAX_DEVICES + 1)]
        with pytest.raises(ValueError, match="at most"):
            grid_simulate(canonical, None, devs)

    def test_budget(self, canonical):
        devs = [dev_b(0.5), MeterDevice("F", "F", "AFG", 0.5)]
        with pytest.raises(GridResolutionError, match="budget"):
            grid_simulate(canonical, None, devs, max_elements=10**6)

    def test_large_shift_keeps_tails(self, canonical):
        res = grid_simulate(canonical, None, [dev_b(10.0)])
        assert res.max_norm_error < 1e-12
        assert res.fluxes[("F", 3)] == pytest.approx(
            flux_with_devices(canonical, None, "F", "AFG", [dev_b(10.0)]), abs=1e-12
        )


class TestReferenceGrids:
    @pytest.mark.parametrize("delta", [1e-3, 0.01, 0.1, 0.3, 10.0])
    def test_shift_is_exact(self, delta):
        spec = reference_grids([dev_b(delta)])["B"]
        n = delta / spec.spacing(1.0)
        assert n == pytest.approx(round(n), abs=1e-9)
        assert spec.points >= 512 and spec.half_width >= 8

    def test_two_devices_fit_budget(self):
        devs = [dev_b(0.05), MeterDevice("F", "F", "AFG", 0.001)]
        grids = reference_grids(devs)
        size = 1
        for d in devs:
            g = grids[d.id]
            size *= g.points + 1 + 2 * round(d.delta / g.spacing(d.sigma))
        assert size <= 2**24

    def test_two_tiny_shifts_do_not_fit(self):
        # 16000 points per axis are needed to land 0.001 sigma on the grid
        with pytest.raises(GridResolutionError):
            reference_grids([dev_b(0.001), MeterDevice("F", "F", "AFG", 0.001)])

    def test_unfittable(self):
        devs = [MeterDevice(f"m{i}", "A", "ABC", 1e-3) for i in range(3)]
        with pytest.raises(GridResolutionError):
            reference_grids(devs, max_elements=10**6)

    def test_oracle_simulate_small_delta(self, canonical):
        res = oracle_simulate(canonical, None, [dev_b(1e-3)])
        assert res.axes["B"].snap_error == pytest.approx(0, abs=1e-15)
        assert res.weak_estimate("D", "B") == pytest.approx(1, abs=1e-6)
        assert res.fluxes[("F", 3)] == pytest.approx(-math.expm1(-1e-6 / 8) / 3, abs=1e-9)

    def test_two_device_agreement(self, canonical):
        devs = [dev_b(1.0), MeterDevice("F", "F", "AFG", 1e-3)]
        res = oracle_simulate(canonical, None, devs)
        rep = pointer_report(canonical, None, "D", res.snapped(devs))
        assert res.weak_estimate("D", "F") == pytest.approx(rep.weak_estimates["F"], abs=1e-6)
        assert res.weak_estimate("D", "B") == pytest.approx(rep.weak_estimates["B"], abs=1e-6)
