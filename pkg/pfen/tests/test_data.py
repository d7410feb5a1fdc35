import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pfen.data import (ClassBank, SetRecord, build_banks,
                       check_training_records, load_records, parse_record)


def _line(block_id=0, user=0, snr_db=30.0, gamma_bar=None, lp=8, ld=16,
          classes=("TC",), with_data=True):
    rng = np.random.default_rng(block_id * 64 + user)
    obj = {"block_id": block_id, "user": user, "snr_db": snr_db,
           "sets": {c: rng.normal(size=(lp, 2)).tolist() for c in classes}}
    if with_data:
        obj["data_sets"] = {c: rng.normal(size=(ld, 2)).tolist() for c in classes}
    if gamma_bar is not None:
        obj["gamma_bar"] = gamma_bar
    return json.dumps(obj)


class TestParsing:

    def test_good_line(self):
        rec = parse_record(_line(block_id=3, user=2, snr_db=25.0), "t:1")
        assert rec.block_id == 3 and rec.user == 2
        assert rec.sets["TC"].shape == (8, 2)
        assert rec.data_sets["TC"].shape == (16, 2)
        assert rec.gamma_bar is None

    def test_missing_field(self):
        bad = json.dumps({"user": 0, "snr_db": 30.0, "sets": {"TC": [[0.0, 0.0]]}})
        with pytest.raises(ValueError, match="block_id"):
            parse_record(bad, "t:1")

    def test_not_json(self):
        with pytest.raises(ValueError, match="JSON"):
            parse_record("{nope", "t:4")

    def test_unknown_class(self):
        bad = json.dumps({"block_id": 0, "user": 0, "snr_db": 30.0,
                          "sets": {"XX": [[0.0, 0.0]]}})
        with pytest.raises(ValueError, match="XX"):
            parse_record(bad, "t:1")

    def test_bad_shape(self):
        bad = json.dumps({"block_id": 0, "user": 0, "snr_db": 30.0,
                          "sets": {"TC": [0.0, 1.0]}})
        with pytest.raises(ValueError, match="L, 2"):
            parse_record(bad, "t:1")

    def test_data_class_mismatch(self):
        obj = json.loads(_line(classes=("TI", "TC")))
        del obj["data_sets"]["TI"]
        with pytest.raises(ValueError, match="match"):
            parse_record(json.dumps(obj), "t:1")

    def test_noise_sigma_plain(self):
        rec = parse_record(_line(snr_db=20.0), "t:1")
        assert_allclose(rec.noise_sigma, 0.1)
        assert rec.input_width == 2

    def test_noise_sigma_with_gain(self):
        rec = parse_record(_line(snr_db=20.0, gamma_bar=2.0), "t:1")
        assert_allclose(rec.noise_sigma, 0.05)
        assert rec.input_width == 3


class TestLoading:

    def test_file_and_directory(self, tmp_path):
        a = tmp_path / "a.jsonl"
        a.write_text(_line(0) + "\n" + _line(1) + "\n")
        b = tmp_path / "b.jsonl"
        b.write_text(_line(2) + "\n")
        assert len(load_records(a)) == 2
        assert len(load_records(tmp_path)) == 3

    def test_blank_lines_skipped(self, tmp_path):
        f = tmp_path / "a.jsonl"
        f.write_text(_line(0) + "\n\n" + _line(1) + "\n")
        assert len(load_records(f)) == 2

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ValueError, match="jsonl"):
            load_records(tmp_path)

    def test_error_carries_location(self, tmp_path):
        f = tmp_path / "a.jsonl"
        f.write_text(_line(0) + "\n{broken\n")
        with pytest.raises(ValueError, match=":2"):
            load_records(f)


class TestTrainingChecks:

    def test_width_and_classes(self, tmp_path):
        f = tmp_path / "a.jsonl"
        f.write_text("\n".join(_line(i, classes=("TI", "TC")) for i in range(3)))
        width, classes = check_training_records(load_records(f))
        assert width == 2 and classes == ["TC", "TI"]

    def test_mixed_gain_rejected(self, tmp_path):
        f = tmp_path / "a.jsonl"
        f.write_text(_line(0) + "\n" + _line(1, gamma_bar=1.5) + "\n")
        with pytest.raises(ValueError, match="gain"):
            check_training_records(load_records(f))

    def test_missing_data_segment(self, tmp_path):
        f = tmp_path / "a.jsonl"
        f.write_text(_line(0, with_data=False) + "\n")
        with pytest.raises(ValueError, match="include_data"):
            check_training_records(load_records(f))


class TestClassBank:

    def _records(self, n=6, **kw):
        return [parse_record(_line(i, **kw), f"t:{i}") for i in range(n)]

    def test_draw_shapes(self):
        bank = ClassBank(self._records(lp=8, ld=16), "TC",
                         np.random.default_rng(0), data_chunk=10)
        pilots, data = bank.draw(4)
        assert pilots.shape == (4, 8, 2) and pilots.dtype == np.float32
        assert data.shape == (4, 10, 2)

    def test_data_chunk_capped_at_segment(self):
        bank = ClassBank(self._records(ld=16), "TC",
                         np.random.default_rng(0), data_chunk=512)
        _, data = bank.draw(2)
        assert data.shape == (2, 16, 2)

    def test_length_mismatch_rejected(self):
        recs = self._records(2)
        recs[1].sets["TC"] = recs[1].sets["TC"][:-1]
        with pytest.raises(ValueError, match="length"):
            ClassBank(recs, "TC", np.random.default_rng(0))

    def test_noise_statistics(self):
        # one record drawn many times: mean reverts to the stored points and
        # the per-coordinate variance is sigma^2/2
        recs = self._records(1, snr_db=10.0, lp=4, ld=4)
        bank = ClassBank(recs, "TC", np.random.default_rng(5))
        draws = np.stack([bank.draw(1)[0][0] for _ in range(4000)])
        assert_allclose(draws.mean(axis=0), recs[0].sets["TC"], atol=0.01)
        assert_allclose(draws.var(axis=0), np.full((4, 2), 0.05), rtol=0.15)

    def test_gain_column(self):
        recs = self._records(3, gamma_bar=1.7)
        bank = ClassBank(recs, "TC", np.random.default_rng(1))
        pilots, _ = bank.draw(5)
        assert pilots.shape[2] == 3
        assert_allclose(pilots[:, :, 2], np.full((5, 8), 1.7), rtol=1e-6)

    def test_seeded_draws_reproduce(self):
        recs = self._records(4)
        a = ClassBank(recs, "TC", np.random.default_rng(9)).draw(3)
        b = ClassBank(recs, "TC", np.random.default_rng(9)).draw(3)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_build_banks(self):
        recs = self._records(4, classes=("TI", "TC", "TL"))
        banks = build_banks(recs, seed=3)
        assert sorted(banks) == ["TC", "TI", "TL"]
        for bank in banks.values():
            assert len(bank) == 4


class TestSetRecord:

    def test_direct_construction(self):
        rec = SetRecord(block_id=1, user=0, snr_db=30.0, gamma_bar=None,
                        sets={"TC": np.zeros((4, 2))}, data_sets={})
        assert rec.noise_sigma == pytest.approx(10.0 ** -1.5)
