import json

import numpy as np
import pytest

from memtrace.data_model import (
    BandSet,
    ChannelLayout,
    EpochFormatError,
    EpochSet,
    default_bands,
    default_layout,
    load_epochs,
    save_epochs,
    sidecar_path,
    validate,
)
from memtrace.rngutil import derive_seed, splitmix64

from conftest import make_epochs


class TestSplitmix:
    def test_reference_sequence_from_seed_zero(self):
        # canonical SplitMix64 outputs for seed 0
        gold = 0x9E3779B97F4A7C15
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(gold) == 0x6E789E6AA1B965F4
        assert splitmix64((2 * gold) % 2**64) == 0x06C45D188009454F

    def test_derive_seed_decorrelates_neighbors(self):
        seeds = {derive_seed(7, k) for k in range(1000)}
        assert len(seeds) == 1000

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            derive_seed(1, -1)


class TestValidate:
    def test_well_formed_passes_all_checks(self, tiny_epochs):
        report = validate(tiny_epochs)
        assert report.ok
        assert not report.failures

    def test_labels_length_mismatch_named(self, tiny_epochs):
        broken = EpochSet(
            subject_id="x",
            fs=250.0,
            data=tiny_epochs.data,
            labels=[1, 0, 1],
            channel_names=tiny_epochs.channel_names,
        )
        report = validate(broken)
        assert not report.ok
        assert any("labels" in c.name for c in report.failures)

    def test_nan_sample_cited_with_index(self):
        e = make_epochs(n_trials=5, n_channels=6, n_samples=9)
        data = e.data.copy()
        data[3, 5, 7] = np.nan
        report = validate(e.with_data(data))
        (failure,) = [c for c in report.failures if c.name == "finite_data"]
        assert failure.index == (3, 5, 7)
        assert "trial=3" in failure.detail

    def test_bad_label_value_flagged(self, tiny_epochs):
        broken = EpochSet("x", 250.0, tiny_epochs.data, [1, 7], tiny_epochs.channel_names)
        report = validate(broken)
        assert any(c.name == "label_values" and c.index == (1,) for c in report.failures)

    def test_nonpositive_fs_flagged(self, tiny_epochs):
        broken = EpochSet("x", -5.0, tiny_epochs.data, [1, 0], tiny_epochs.channel_names)
        assert any(c.name == "fs" for c in validate(broken).failures)

    def test_too_few_samples_flagged(self):
        e = EpochSet("x", 250.0, np.zeros((1, 1, 1)), [0], ("a",))
        assert any(c.name == "dims" for c in validate(e).failures)

    def test_validate_is_pure(self, tiny_epochs):
        assert validate(tiny_epochs) == validate(tiny_epochs)


class TestEpo1RoundTrip:
    def test_small_set_round_trips_bit_exactly(self, tiny_epochs, tmp_path):
        path = tmp_path / "t.epo1"
        save_epochs(tiny_epochs, path)
        assert load_epochs(path) == tiny_epochs

    @pytest.mark.parametrize("seed", range(5))
    def test_random_sets_round_trip(self, seed, tmp_path):
        e = make_epochs(
            n_trials=3 + seed, n_channels=2 + seed, n_samples=8 + seed, seed=seed
        )
        path = tmp_path / "r.epo1"
        save_epochs(e, path)
        back = load_epochs(path)
        assert back == e
        assert back.data.tobytes() == e.data.tobytes()  # float bits preserved

    def test_special_float_bits_preserved(self, tmp_path):
        data = np.array(
            [[[-0.0, 1e-40, 3.4e38, np.float32(np.pi).item()]]], dtype=np.float32
        )
        e = EpochSet("bits", 250.0, data, [1], ("a",))
        save_epochs(e, tmp_path / "b.epo1")
        back = load_epochs(tmp_path / "b.epo1")
        assert back.data.tobytes() == e.data.tobytes()

    def test_fs_stored_at_f32_precision(self):
        e = make_epochs(fs=250.1)
        assert e.fs == float(np.float32(250.1))

    def test_saving_invalid_set_is_refused(self, tiny_epochs, tmp_path):
        broken = EpochSet("x", 250.0, tiny_epochs.data, [1, 9], tiny_epochs.channel_names)
        with pytest.raises(ValueError, match="label"):
            save_epochs(broken, tmp_path / "bad.epo1")


class TestEpo1Errors:
    def _saved(self, tmp_path, tiny_epochs):
        path = tmp_path / "f.epo1"
        save_epochs(tiny_epochs, path)
        return path

    def test_truncated_file(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(EpochFormatError, match="byte offset"):
            load_epochs(path)

    def test_bad_magic_named(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(EpochFormatError, match="magic") as err:
            load_epochs(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(EpochFormatError, match="version") as err:
            load_epochs(path)
        assert err.value.offset == 4

    def test_dimension_overflow_vs_payload(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        raw = bytearray(path.read_bytes())
        raw[8:12] = (2**31).to_bytes(4, "little")  # absurd n_trials
        path.write_bytes(bytes(raw))
        with pytest.raises(EpochFormatError, match="require"):
            load_epochs(path)

    def test_trailing_bytes(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(EpochFormatError, match="trailing"):
            load_epochs(path)

    def test_missing_sidecar(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        sidecar_path(path).unlink()
        with pytest.raises(EpochFormatError, match="sidecar"):
            load_epochs(path)

    def test_sidecar_channel_count_mismatch(self, tmp_path, tiny_epochs):
        path = self._saved(tmp_path, tiny_epochs)
        meta = json.loads(sidecar_path(path).read_text())
        meta["channel_names"] = ["only_one"]
        sidecar_path(path).write_text(json.dumps(meta))
        with pytest.raises(EpochFormatError, match="channel names"):
            load_epochs(path)


class TestImmutability:
    def test_arrays_are_frozen(self, tiny_epochs):
        with pytest.raises(ValueError):
            tiny_epochs.data[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            tiny_epochs.labels[0] = 0

    def test_construction_copies_caller_arrays(self):
        data = np.zeros((1, 2, 4), dtype=np.float32)
        EpochSet("s", 100.0, data, [0], ("a", "b"))
        data[0, 0, 0] = 5.0  # caller's array must stay writeable


class TestBandSet:
    def test_default_bands_exact(self):
        assert default_bands().bands == (
            ("delta", 0.5, 4.0),
            ("theta", 4.0, 7.0),
            ("alpha", 7.0, 12.0),
            ("spindle", 12.0, 15.0),
            ("beta", 15.0, 30.0),
            ("gamma", 30.0, 50.0),
        )

    def test_reversed_edges_rejected(self):
        with pytest.raises(ValueError, match="f_lo"):
            BandSet((("bad", 10.0, 5.0),))

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            BandSet((("a", 1.0, 5.0), ("b", 4.0, 8.0)))

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            BandSet((("a", 1.0, 2.0), ("a", 3.0, 4.0)))


class TestChannelLayout:
    def test_default_has_60_distinct_entries(self):
        layout = default_layout()
        assert len(layout) == 60
        assert len(set(layout.names)) == 60
        cells = [(r, c) for _, r, c in layout.entries]
        assert len(set(cells)) == 60

    def test_duplicate_cell_rejected(self):
        with pytest.raises(ValueError, match="cells"):
            ChannelLayout((("a", 0, 0), ("b", 0, 0)))

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            ChannelLayout((("a", 10, 0),))

    def test_over_90_entries_rejected(self):
        entries = tuple((f"c{i}", i // 9, i % 9) for i in range(91))
        with pytest.raises(ValueError, match="90"):
            ChannelLayout(entries)

    def test_json_round_trip(self, tmp_path):
        layout = default_layout()
        layout.to_json_file(tmp_path / "l.json")
        assert ChannelLayout.from_json_file(tmp_path / "l.json") == layout

    def test_missing_channel_named_in_error(self):
        with pytest.raises(KeyError, match="nope"):
            default_layout().position("nope")
