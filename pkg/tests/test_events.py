"""Tests for event streams, timestamp normalization, voxelization and windowing.

Covers the voxel-grid laws (unit mass, polarity antisymmetry, permutation
invariance), degenerate windows, bounds checking and the sub-window
partition including boundary assignment.
"""

import numpy as np
import pytest

from src.core.errors import EmptyWindow, InputError, InvalidConfig, OutOfBounds, ShapeError
from src.events import (
    Event,
    EventStream,
    normalize_timestamps,
    split_recording,
    split_stream,
    split_windows,
    voxelize,
)
from src.events.voxel import reference_bounds, sub_window_bounds, temporal_weights


def make_stream(events, width=8, height=8, t_start=None, t_end=None) -> EventStream:
    return EventStream.from_events([Event(*e) for e in events], width, height, t_start, t_end)


def random_stream(rng, count=200, width=16, height=12, t_end=1000) -> EventStream:
    return EventStream(
        xs=rng.integers(0, width, count),
        ys=rng.integers(0, height, count),
        ts=np.sort(rng.integers(0, t_end + 1, count)),
        ps=rng.choice([-1, 1], count),
        width=width,
        height=height,
        t_start=0,
        t_end=t_end,
    )


class TestEventStream:
    def test_columns_are_read_only_copies(self):
        xs = np.array([1, 2])
        stream = EventStream(xs, [0, 0], [0, 5], [1, -1], 4, 4, 0, 5)
        xs[0] = 3

        assert stream.xs[0] == 1
        with pytest.raises(ValueError):
            stream.xs[0] = 0

    def test_rejects_bad_polarity(self):
        with pytest.raises(InputError):
            make_stream([(0, 0, 0, 0)])

    @pytest.mark.parametrize("polarity", [255, 257, -255, 2])
    def test_rejects_polarity_that_wraps_in_int8(self, polarity):
        with pytest.raises(InputError):
            EventStream(
                xs=np.array([0, 1]),
                ys=np.array([0, 0]),
                ts=np.array([0, 1]),
                ps=np.array([1, polarity]),
                width=4,
                height=4,
                t_start=0,
                t_end=1,
            )

    def test_polarity_stored_as_int8(self):
        stream = make_stream([(0, 0, 0, 1), (1, 0, 1, -1)])

        assert stream.ps.dtype == np.int8
        assert stream.ps.tolist() == [1, -1]

    def test_rejects_reversed_window(self):
        with pytest.raises(InputError):
            EventStream.empty(4, 4, t_start=10, t_end=5)

    def test_check_bounds(self):
        with pytest.raises(OutOfBounds):
            make_stream([(8, 0, 0, 1)]).check_bounds()
        with pytest.raises(OutOfBounds):
            make_stream([(0, 0, 50, 1)], t_start=0, t_end=10).check_bounds()

    def test_flips_mirror_coordinates(self):
        stream = make_stream([(1, 2, 0, 1)], width=8, height=6)

        assert (stream.hflip().xs[0], stream.hflip().ys[0]) == (6, 2)
        assert (stream.vflip().xs[0], stream.vflip().ys[0]) == (1, 3)

    def test_iteration_yields_events(self):
        events = [(0, 1, 2, 1), (3, 2, 5, -1)]
        stream = make_stream(events)

        assert [tuple(e.__dict__.values()) for e in stream] == events


class TestNormalizeTimestamps:
    def test_bounds_map_to_first_and_last_bin(self):
        stream = make_stream([(0, 0, 0, 1), (0, 0, 50, 1), (0, 0, 100, 1)])

        t_star = normalize_timestamps(stream, 3)

        assert t_star.tolist() == [0.0, 1.0, 2.0]

    def test_degenerate_window_is_zero(self):
        stream = make_stream([(0, 0, 7, 1), (1, 0, 7, -1)])

        assert normalize_timestamps(stream, 3).tolist() == [0.0, 0.0]

    def test_empty_stream_raises(self):
        with pytest.raises(EmptyWindow):
            normalize_timestamps(EventStream.empty(4, 4), 3)

    def test_values_within_bin_range(self, rng):
        t_star = normalize_timestamps(random_stream(rng), 5)

        assert t_star.min() == 0.0
        assert t_star.max() == 4.0


class TestVoxelize:
    def test_degenerate_single_event_in_bin_zero(self):
        grid = voxelize(make_stream([(2, 3, 10, 1)]), 3)

        assert grid.values[:, 3, 2].tolist() == [1.0, 0.0, 0.0]
        assert grid.values.sum() == 1.0

    def test_fractional_event_splits_between_bins(self):
        # t* = 1.5 for the middle event of a 0..100 window with B=3
        stream = make_stream([(0, 0, 0, 1), (5, 5, 75, 1), (1, 1, 100, 1)])

        grid = voxelize(stream, 3)

        assert grid.values[:, 5, 5].tolist() == [0.0, 0.5, 0.5]

    def test_opposite_polarities_cancel(self):
        grid = voxelize(make_stream([(4, 4, 3, 1), (4, 4, 3, -1)]), 3)

        assert not grid.values.any()

    def test_empty_stream_gives_zero_grid(self):
        grid = voxelize(EventStream.empty(6, 4), 2)

        assert grid.values.shape == (2, 4, 6)
        assert not grid.values.any()

    def test_unit_mass_per_event(self, rng):
        t_star = rng.uniform(0, 4, size=1000)
        t_star[:3] = [0.0, 4.0, 2.0]

        weights = temporal_weights(t_star, 5)

        np.testing.assert_allclose(weights.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_total_mass_equals_event_count_for_unique_pixels(self, rng):
        count = 40
        pixels = rng.choice(16 * 12, size=count, replace=False)
        stream = EventStream(
            xs=pixels % 16,
            ys=pixels // 16,
            ts=rng.integers(0, 1000, count),
            ps=np.ones(count),
            width=16,
            height=12,
            t_start=0,
            t_end=1000,
        )

        grid = voxelize(stream, 3)

        assert np.abs(grid.values).sum() == pytest.approx(count, abs=1e-9)

    def test_polarity_antisymmetry(self, rng):
        stream = random_stream(rng)

        positive = voxelize(stream, 4).values
        negative = voxelize(stream.flipped_polarity(), 4).values

        np.testing.assert_array_equal(negative, -positive)

    def test_permutation_invariance(self, rng):
        stream = random_stream(rng)

        ordered = voxelize(stream, 3).values
        shuffled = voxelize(stream.permuted(rng), 3).values

        np.testing.assert_allclose(shuffled, ordered, rtol=0, atol=1e-12)

    def test_out_of_bounds_event(self):
        stream = EventStream([9], [0], [0], [1], 8, 8, 0, 0)

        with pytest.raises(OutOfBounds):
            voxelize(stream, 3)

    def test_invalid_bins(self):
        with pytest.raises(InvalidConfig):
            voxelize(make_stream([(0, 0, 0, 1)]), 0)

    def test_hflip_commutes_with_voxelization(self, rng):
        stream = random_stream(rng)

        mirrored = voxelize(stream.hflip(), 3).values

        np.testing.assert_allclose(mirrored, voxelize(stream, 3).values[..., ::-1], atol=1e-12)


class TestSplitWindows:
    def test_equal_partition_bounds(self):
        assert sub_window_bounds(0, 100, 5) == [(0, 20), (20, 40), (40, 60), (60, 80), (80, 100)]

    def test_reference_window_is_one_sub_window_long(self):
        assert reference_bounds(100, 200, 5) == (80, 100)

    def test_boundary_event_goes_to_later_window(self):
        current = make_stream([(0, 0, 20, 1), (0, 0, 100, 1), (0, 0, 19, 1)], 4, 4, 0, 100)

        windows = split_stream(current, 5)

        assert [len(w) for w in windows] == [1, 1, 0, 0, 1]
        assert windows[1].ts.tolist() == [20]
        assert windows[4].ts.tolist() == [100]

    def test_partition_preserves_events(self, rng):
        current = random_stream(rng, t_end=997)

        windows = split_stream(current, 7)
        joined = EventStream.concatenate(windows)

        assert sorted(zip(joined.ts, joined.xs, joined.ys, joined.ps)) == sorted(
            zip(current.ts, current.xs, current.ys, current.ps)
        )

    def test_g1_gives_reference_and_whole_stream(self, rng):
        reference = EventStream.empty(16, 12, -1000, 0)
        current = random_stream(rng)

        window_set = split_windows(reference, current, 1, 3)

        assert len(window_set.grids) == 2
        np.testing.assert_array_equal(window_set.grids[1].values, voxelize(current, 3).values)

    def test_default_setup_shape(self, rng):
        reference = EventStream.empty(16, 12, -200, 0)

        window_set = split_windows(reference, random_stream(rng), 5, 3)

        assert window_set.to_array().shape == (6, 3, 12, 16)
        assert window_set.dt_us == 200

    def test_g0_rejected(self, rng):
        with pytest.raises(InvalidConfig):
            split_windows(EventStream.empty(16, 12), random_stream(rng), 0, 3)

    def test_sensor_mismatch(self, rng):
        with pytest.raises(ShapeError):
            split_windows(EventStream.empty(8, 8), random_stream(rng), 5, 3)

    def test_zero_duration_current_window(self):
        current = make_stream([(0, 0, 5, 1)], t_start=5, t_end=5)

        with pytest.raises(InvalidConfig):
            split_windows(EventStream.empty(8, 8), current, 2, 3)


class TestSplitRecording:
    def test_explicit_bounds(self):
        recording = make_stream([(0, 0, 10, 1), (1, 1, 25, 1), (2, 2, 120, -1)], 4, 4, 0, 120)

        window_set = split_recording(recording, 5, 2, t_start=20, t_end=120)

        grids = window_set.to_array()
        assert grids.shape == (6, 2, 4, 4)
        assert grids[0, :, 0, 0].sum() == 1.0
        assert grids[1, :, 1, 1].sum() == 1.0
        assert grids[5, :, 2, 2].sum() == -1.0

    def test_default_bounds_span_reference_and_current(self):
        recording = make_stream([(0, 0, 0, 1), (1, 1, 120, 1)], 4, 4)

        window_set = split_recording(recording, 5, 2)

        assert window_set.dt_us == 20
        assert window_set.to_array()[0, :, 0, 0].sum() == 1.0
