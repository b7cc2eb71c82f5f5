import dataclasses
import itertools

import numpy as np
import pytest

from fwasense.channel import (
    DatasetError,
    DatasetReader,
    PathKind,
    augment_phase,
    build_sample,
    generate_dataset,
    pair_label,
    scene_label,
    synthesize_cfr,
    trace_paths,
)
from fwasense.channel import Path, PathSet, SPEED_OF_LIGHT
from fwasense.rng import substream
from fwasense.scenario import PairId


def first_pair(s):
    return s.pairs()[0]


class TestTracePaths:
    def test_no_uav_no_scatterers_gives_only_los(self, tiny_scenario):
        s = dataclasses.replace(tiny_scenario, scatterer_positions=())
        ps = trace_paths(s, first_pair(s), None)
        assert [p.kind for p in ps.paths] == [PathKind.LOS]

    def test_uav_bounce_delay_matches_hand_geometry(self, tiny_scenario):
        uav = np.array([4.0, -7.0, 15.0])
        ps = trace_paths(tiny_scenario, first_pair(tiny_scenario), uav)
        bounce = [p for p in ps.paths if p.kind is PathKind.UAV_BOUNCE]
        assert len(bounce) == 1
        bs = np.array(tiny_scenario.bs_positions[0])
        cpe = np.array(tiny_scenario.cpe_positions[0])
        expected = (np.linalg.norm(cpe - uav) + np.linalg.norm(uav - bs)) / SPEED_OF_LIGHT
        assert bounce[0].delay_s == pytest.approx(expected, rel=1e-12)

    def test_two_scatterers_no_uav_gives_three_paths(self, tiny_scenario):
        s = dataclasses.replace(
            tiny_scenario, scatterer_positions=((5.0, 5.0, 6.0), (-4.0, 8.0, 5.0))
        )
        ps = trace_paths(s, first_pair(s), None)
        assert len(ps.paths) == 3
        kinds = [p.kind for p in ps.paths]
        assert kinds.count(PathKind.LOS) == 1
        assert kinds.count(PathKind.STATIC_BOUNCE) == 2

    def test_uav_bounce_never_earlier_than_los(self, tiny_scenario):
        rng = np.random.default_rng(3)
        for _ in range(100):
            uav = np.array([rng.uniform(-25, 25), rng.uniform(-25, 25), 15.0])
            for pair in tiny_scenario.pairs():
                ps = trace_paths(tiny_scenario, pair, uav)
                los = next(p for p in ps.paths if p.kind is PathKind.LOS)
                ub = next(p for p in ps.paths if p.kind is PathKind.UAV_BOUNCE)
                assert ub.delay_s >= los.delay_s


class TestSynthesizeCfr:
    def test_empty_pathset_is_zero(self, tiny_scenario):
        ps = PathSet(pair=first_pair(tiny_scenario), paths=[])
        h = synthesize_cfr(tiny_scenario, ps)
        assert h.data.shape == (4, 2, 16)
        assert np.all(h.data == 0)

    def test_single_broadside_zero_delay_path_is_constant(self, tiny_scenario):
        gain = 0.5 - 0.25j
        ps = PathSet(
            pair=first_pair(tiny_scenario),
            paths=[Path(PathKind.LOS, delay_s=1e-30, gain=gain, aoa=(0.0, 0.0), aod=(0.0, 0.0))],
        )
        h = synthesize_cfr(tiny_scenario, ps).data
        assert np.allclose(h, gain, rtol=0, atol=1e-12)

    def test_linearity_over_disjoint_split(self, tiny_scenario, rng):
        uav = np.array([3.0, 2.0, 15.0])
        ps = trace_paths(tiny_scenario, first_pair(tiny_scenario), uav)
        assert len(ps.paths) >= 3
        half_a = PathSet(ps.pair, ps.paths[:2])
        half_b = PathSet(ps.pair, ps.paths[2:])
        total = synthesize_cfr(tiny_scenario, ps).data
        parts = synthesize_cfr(tiny_scenario, half_a).data + synthesize_cfr(tiny_scenario, half_b).data
        assert np.allclose(total, parts, rtol=1e-12, atol=np.abs(total).max() * 1e-12)

    def test_noise_added_when_configured(self, tiny_scenario):
        noisy = dataclasses.replace(tiny_scenario, noise_snr_db=10.0)
        ps = trace_paths(noisy, first_pair(noisy), None)
        clean = synthesize_cfr(tiny_scenario, trace_paths(tiny_scenario, first_pair(tiny_scenario), None))
        a = synthesize_cfr(noisy, ps, rng=np.random.default_rng(0))
        assert not np.allclose(a.data, clean.data)


class TestAugmentPhase:
    def test_amplitudes_delays_kinds_preserved(self, tiny_scenario, rng):
        ps = trace_paths(tiny_scenario, first_pair(tiny_scenario), np.array([1.0, 2.0, 15.0]))
        out = augment_phase(ps, rng)
        for before, after in zip(ps.paths, out.paths):
            assert abs(after.gain) == pytest.approx(abs(before.gain), rel=1e-12)
            assert after.delay_s == before.delay_s
            assert after.kind == before.kind
            assert after.aoa == before.aoa and after.aod == before.aod

    def test_label_invariant_under_augmentation(self, tiny_scenario, rng):
        ps = trace_paths(tiny_scenario, first_pair(tiny_scenario), np.array([1.0, 2.0, 15.0]))
        for _ in range(20):
            assert pair_label(augment_phase(ps, rng), 40.0) == pair_label(ps, 40.0)

    def test_circular_mean_of_phases_is_small(self, tiny_scenario):
        ps = PathSet(
            pair=first_pair(tiny_scenario),
            paths=[Path(PathKind.LOS, 1e-9, 1.0 + 0j, (0.0, 0.0), (0.0, 0.0))],
        )
        rng = np.random.default_rng(42)
        phases = np.array([augment_phase(ps, rng).paths[0].gain for _ in range(10_000)])
        assert abs(phases.mean()) < 0.05


class TestPairLabel:
    def test_no_uav_bounce_gives_zero(self, tiny_scenario):
        ps = trace_paths(tiny_scenario, first_pair(tiny_scenario), None)
        assert pair_label(ps, 40.0) == 0

    def make_two_path_set(self, pair, uav_rel_db):
        los_gain = 1.0
        uav_gain = 10.0 ** (-uav_rel_db / 20.0)
        return PathSet(
            pair,
            [
                Path(PathKind.LOS, 1e-9, los_gain, (0.0, 0.0), (0.0, 0.0)),
                Path(PathKind.UAV_BOUNCE, 2e-9, uav_gain, (0.1, 0.1), (0.1, 0.1)),
            ],
        )

    def test_bounce_20db_down_with_40db_floor_is_one(self, tiny_scenario):
        ps = self.make_two_path_set(first_pair(tiny_scenario), 20.0)
        assert pair_label(ps, 40.0) == 1

    def test_bounce_60db_down_with_40db_floor_is_zero(self, tiny_scenario):
        ps = self.make_two_path_set(first_pair(tiny_scenario), 60.0)
        assert pair_label(ps, 40.0) == 0

    def test_threshold_boundary_inclusive(self, tiny_scenario):
        ps = self.make_two_path_set(first_pair(tiny_scenario), 40.0)
        assert pair_label(ps, 40.0) == 1


class TestSceneLabel:
    def test_all_zero(self):
        assert scene_label(np.zeros(8, dtype=np.uint8)) == 0

    def test_single_one_anywhere(self):
        for i in range(8):
            bits = np.zeros(8, dtype=np.uint8)
            bits[i] = 1
            assert scene_label(bits) == 1

    def test_exhaustive_or_truth_table_up_to_length_12(self):
        for length in (1, 2, 8, 12):
            for combo in itertools.product((0, 1), repeat=length):
                bits = np.array(combo, dtype=np.uint8)
                assert scene_label(bits) == (1 if any(combo) else 0)


class TestDatasetIO:
    def test_round_trip_preserves_records(self, tiny_scenario, tmp_path):
        path = str(tmp_path / "d.bin")
        generate_dataset(tiny_scenario, 3, 2, seed=5, out_path=path)
        reader = DatasetReader(path)
        assert len(reader) == 5
        hdr = reader.header
        assert (hdr.n_bs, hdr.n_cpe, hdr.n_rx, hdr.n_tx, hdr.n_subcarriers) == (1, 2, 4, 2, 16)
        with_uav = [r for r in reader if r.scene_label == 1]
        without = [r for r in reader if r.scene_label == 0]
        assert len(with_uav) == 3 and len(without) == 2
        for rec in with_uav:
            assert rec.uav_position is not None
            assert abs(rec.uav_position[0]) <= tiny_scenario.uav_xy_range
        for rec in without:
            assert rec.uav_position is None
            assert not rec.pair_labels.any()
        reader.close()

    def test_read_matches_build_sample_through_complex64(self, tiny_scenario, tmp_path):
        path = str(tmp_path / "d.bin")
        generate_dataset(tiny_scenario, 1, 0, seed=9, out_path=path)
        expected = build_sample(tiny_scenario, True, substream(9, "dataset", 0))
        reader = DatasetReader(path)
        rec = reader.read(0)
        reader.close()
        for got, want in zip(rec.cfrs, expected.cfrs):
            assert np.array_equal(got.data, want.data.astype(np.complex64).astype(np.complex128))
        assert np.array_equal(rec.pair_labels, expected.pair_labels)

    def test_same_seed_byte_identical(self, tiny_scenario, tmp_path):
        a, b = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        ma = generate_dataset(tiny_scenario, 4, 4, seed=77, out_path=a)
        mb = generate_dataset(tiny_scenario, 4, 4, seed=77, out_path=b)
        assert open(a, "rb").read() == open(b, "rb").read()
        assert ma["file_sha256"] == mb["file_sha256"]

    def test_different_seed_differs(self, tiny_scenario, tmp_path):
        a, b = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        generate_dataset(tiny_scenario, 2, 2, seed=1, out_path=a)
        generate_dataset(tiny_scenario, 2, 2, seed=2, out_path=b)
        assert open(a, "rb").read() != open(b, "rb").read()

    def test_manifest_counts_and_hash(self, tiny_scenario, tmp_path):
        path = str(tmp_path / "d.bin")
        manifest = generate_dataset(tiny_scenario, 2, 3, seed=4, out_path=path)
        assert manifest["counts"] == {"with_uav": 2, "without_uav": 3}
        assert manifest["seed"] == 4
        assert manifest["scenario_hash"] == tiny_scenario.hash()
        assert manifest["format_version"] == 1

    def test_single_with_uav_record(self, tiny_scenario, tmp_path):
        path = str(tmp_path / "one.bin")
        generate_dataset(tiny_scenario, 1, 0, seed=0, out_path=path)
        rec = DatasetReader(path).read(0)
        assert rec.scene_label == 1

    def test_empty_request_rejected(self, tiny_scenario, tmp_path):
        with pytest.raises(DatasetError):
            generate_dataset(tiny_scenario, 0, 0, seed=0, out_path=str(tmp_path / "x.bin"))

    def test_bad_magic_rejected(self, tiny_scenario, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DatasetError, match="magic"):
            DatasetReader(str(path))
