import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwasense.rng import substream
from fwasense.scenario import (
    PairId,
    ScenarioError,
    flat_pair_index,
    load_scenario,
    sample_uav_position,
    save_scenario,
    scenario_from_dict,
)

from conftest import DESK_CONFIG, PAPER_CONFIG


class TestLoadScenario:
    def test_paper_profile_is_valid(self):
        s = load_scenario(PAPER_CONFIG)
        assert s.n_bs == 2 and s.n_cpe == 16
        assert s.n_rx == 64 and s.n_tx == 4
        assert s.n_subcarriers == 512 and s.delay_keep == 64
        assert s.carrier_hz == 2.8e9 and s.bandwidth_hz == 20e6
        assert s.subcarrier_spacing_hz == 30e3
        assert all(p[2] == 100.0 for p in s.bs_positions)
        assert all(p[2] == 18.0 for p in s.cpe_positions)
        assert s.uav_altitude == 60.0

    def test_desk_profile_is_valid(self):
        s = load_scenario(DESK_CONFIG)
        assert s.n_bs == 2 and s.n_cpe == 4
        assert (s.n_rx, s.n_tx, s.n_subcarriers, s.delay_keep) == (8, 2, 64, 16)

    def test_delay_keep_over_subcarriers_rejected(self, tiny_scenario, tmp_path):
        raw = json.loads(open(DESK_CONFIG).read())
        raw["delay_keep"] = raw["n_subcarriers"] + 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        with pytest.raises(ScenarioError, match="delay_keep"):
            load_scenario(str(bad))

    def test_unknown_key_rejected(self, tmp_path):
        raw = json.loads(open(DESK_CONFIG).read())
        raw["surprise"] = 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        with pytest.raises(ScenarioError, match="unknown keys"):
            load_scenario(str(bad))

    def test_parse_error_reports_line(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text('{\n  "v": 1,\n  oops\n}')
        with pytest.raises(ScenarioError, match="line 3"):
            load_scenario(str(bad))

    def test_bandwidth_overflow_rejected(self):
        raw = json.loads(open(DESK_CONFIG).read())
        raw["n_subcarriers"] = 128  # 128 * 312.5 kHz = 40 MHz > 20 MHz
        with pytest.raises(ScenarioError, match="bandwidth"):
            scenario_from_dict(raw)

    def test_round_trip_save_load(self, tiny_scenario, tmp_path):
        path = tmp_path / "s.json"
        save_scenario(tiny_scenario, str(path))
        again = load_scenario(str(path))
        assert again == tiny_scenario
        assert again.hash() == tiny_scenario.hash()


class TestFlatPairIndex:
    def test_first_pair(self):
        assert flat_pair_index(1, 1, 16) == 1

    def test_paper_scale_last_pair(self):
        assert flat_pair_index(2, 16, 16) == 32

    def test_grid_bijectivity_3x5(self):
        values = [flat_pair_index(m, n, 5) for m in range(1, 4) for n in range(1, 6)]
        assert sorted(values) == list(range(1, 16))

    @given(m=st.integers(1, 32), n_cpe=st.integers(1, 32))
    @settings(max_examples=60, deadline=None)
    def test_bijection_roundtrip(self, m, n_cpe):
        for n in range(1, n_cpe + 1):
            flat = flat_pair_index(m, n, n_cpe)
            pid = PairId.from_flat(flat, n_cpe)
            assert (pid.m, pid.n) == (m, n)

    def test_exhaustive_bijection_all_small_grids(self):
        for m_max in range(1, 9):
            for n_max in range(1, 9):
                seen = {
                    flat_pair_index(m, n, n_max)
                    for m in range(1, m_max + 1)
                    for n in range(1, n_max + 1)
                }
                assert seen == set(range(1, m_max * n_max + 1))

    def test_out_of_range_rejected(self):
        with pytest.raises(ScenarioError):
            flat_pair_index(0, 1, 4)
        with pytest.raises(ScenarioError):
            flat_pair_index(1, 5, 4)
        with pytest.raises(ScenarioError):
            flat_pair_index(1, 0, 4)


class TestSampleUavPosition:
    def test_box_constraint_and_altitude(self, desk_scenario):
        rng = substream(99, "uav")
        for _ in range(500):
            p = sample_uav_position(desk_scenario, rng)
            assert abs(p[0]) <= desk_scenario.uav_xy_range
            assert abs(p[1]) <= desk_scenario.uav_xy_range
            assert p[2] == desk_scenario.uav_altitude

    def test_degenerate_range_pins_origin(self, tiny_scenario):
        import dataclasses

        s = dataclasses.replace(tiny_scenario, uav_xy_range=0.0)
        p = sample_uav_position(s, np.random.default_rng(0))
        assert p[0] == 0.0 and p[1] == 0.0 and p[2] == s.uav_altitude

    def test_uniform_mean_within_clt_bound(self, desk_scenario):
        # mean of 1e5 draws of U[-75,75]-style range: 3 sigma of the mean
        rng = np.random.default_rng(7)
        xs = np.array([sample_uav_position(desk_scenario, rng)[0] for _ in range(100_000)])
        r = desk_scenario.uav_xy_range
        bound = 3.0 * (r / np.sqrt(3.0)) / np.sqrt(len(xs))
        assert abs(xs.mean()) < bound

    def test_seeded_reproducibility(self, desk_scenario):
        a = [sample_uav_position(desk_scenario, substream(5, "x")) for _ in range(3)]
        b = [sample_uav_position(desk_scenario, substream(5, "x")) for _ in range(3)]
        for p, q in zip(a, b):
            assert np.array_equal(p, q)
