"""Tests for alist parsing, systematic encoding, and sum-product decoding."""

import importlib.resources

import numpy as np
import pytest
from numpy.testing import assert_allclose

from slplink.codec import (
    bp_decode,
    encode,
    extract_message,
    load_alist,
    save_alist,
    syndrome,
)

HAMMING_ALIST = """\
7 3
3 4
2 2 2 3 1 1 1
4 4 4
1 2 0
1 3 0
2 3 0
1 2 3
1 0 0
2 0 0
3 0 0
1 2 4 5
1 3 4 6
2 3 4 7
"""


@pytest.fixture
def hamming(tmp_path):
    path = tmp_path / "hamming.alist"
    path.write_text(HAMMING_ALIST)
    return load_alist(path)


def _asset_path():
    ref = importlib.resources.files("slplink") / "assets" / "ldpc_n1024_r12.alist"
    return str(ref)


class TestAlistParsing:
    def test_hamming_dimensions(self, hamming):
        assert hamming.n == 7
        assert hamming.m == 3
        assert hamming.k == 4
        assert_allclose(hamming.rate, 4 / 7)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "bad.alist"
        path.write_text("\n".join(HAMMING_ALIST.splitlines()[:8]))
        with pytest.raises(ValueError, match="truncated"):
            load_alist(path)

    def test_degree_mismatch_rejected(self, tmp_path):
        lines = HAMMING_ALIST.splitlines()
        lines[2] = "2 2 2 3 1 1 2"  # claims v7 has degree 2
        path = tmp_path / "bad.alist"
        path.write_text("\n".join(lines))
        with pytest.raises(ValueError, match="degree"):
            load_alist(path)

    def test_adjacency_disagreement_rejected(self, tmp_path):
        lines = HAMMING_ALIST.splitlines()
        lines[-1] = "2 3 4 6"  # row 3 now claims v6 instead of v7
        path = tmp_path / "bad.alist"
        path.write_text("\n".join(lines))
        with pytest.raises(ValueError):
            load_alist(path)

    def test_roundtrip_through_save(self, hamming, tmp_path):
        out = tmp_path / "again.alist"
        save_alist(out, hamming)
        back = load_alist(out)
        assert back.n == hamming.n
        assert back.m == hamming.m
        assert np.array_equal(back.check_cols, hamming.check_cols)
        assert np.array_equal(back.check_ptr, hamming.check_ptr)
        assert np.array_equal(back.info_cols, hamming.info_cols)

    def test_rank_deficient_rows_dropped_with_warning(self, tmp_path):
        # third check is the sum of the first two
        text = "\n".join([
            "3 3", "2 2",
            "2 2 2", "2 2 2",
            "1 3", "1 2", "2 3",
            "1 2", "2 3", "1 3",
        ]) + "\n"
        path = tmp_path / "dep.alist"
        path.write_text(text)
        with pytest.warns(UserWarning, match="rank"):
            code = load_alist(path)
        assert code.m == 2
        assert code.k == 1

    def test_shipped_code_structure(self):
        code = load_alist(_asset_path())
        assert code.n == 1024
        assert code.m == 512
        assert code.k == 512
        assert np.all(code.check_degrees == 6)
        assert np.all(np.bincount(code.check_cols, minlength=code.n) == 3)


class TestEncoding:
    def test_systematic_recovery(self, hamming):
        rng = np.random.default_rng(0)
        msgs = rng.integers(0, 2, size=(20, 4)).astype(np.uint8)
        words = encode(hamming, msgs)
        assert words.shape == (20, 7)
        assert np.array_equal(extract_message(hamming, words), msgs)

    def test_codewords_satisfy_checks(self, hamming):
        rng = np.random.default_rng(1)
        msgs = rng.integers(0, 2, size=(50, 4))
        assert not syndrome(hamming, encode(hamming, msgs)).any()

    def test_linearity(self, hamming):
        rng = np.random.default_rng(2)
        u = rng.integers(0, 2, size=4)
        v = rng.integers(0, 2, size=4)
        lhs = encode(hamming, (u ^ v) % 2)
        rhs = encode(hamming, u) ^ encode(hamming, v)
        assert np.array_equal(lhs, rhs)

    def test_single_and_batch_agree(self, hamming):
        msg = np.array([1, 0, 1, 1], dtype=np.uint8)
        assert np.array_equal(encode(hamming, msg), encode(hamming, msg[None, :])[0])

    def test_wrong_length_rejected(self, hamming):
        with pytest.raises(ValueError, match="message bits"):
            encode(hamming, np.zeros(5, dtype=np.uint8))

    def test_shipped_code_encode(self):
        code = load_alist(_asset_path())
        rng = np.random.default_rng(3)
        msgs = rng.integers(0, 2, size=(8, code.k))
        words = encode(code, msgs)
        assert not syndrome(code, words).any()
        assert np.array_equal(extract_message(code, words), msgs)


class TestDecoding:
    def test_confident_llrs_pass_through(self, hamming):
        """Positive signs mean bit zero on the decoder side."""
        bits, ok, iters = bp_decode(hamming, np.full(7, 10.0))
        assert ok
        assert iters == 1
        assert not bits.any()

    def test_noiseless_word_recovered(self, hamming):
        rng = np.random.default_rng(4)
        msg = rng.integers(0, 2, size=4)
        word = encode(hamming, msg)
        llrs = 8.0 * (1.0 - 2.0 * word)
        bits, ok, _ = bp_decode(hamming, llrs)
        assert ok
        assert np.array_equal(bits, word)

    def test_single_flip_corrected(self):
        """One confidently wrong position is repaired by its parity checks."""
        code = load_alist(_asset_path())
        rng = np.random.default_rng(5)
        for _ in range(5):
            msg = rng.integers(0, 2, size=code.k)
            word = encode(code, msg)
            llrs = 4.0 * (1.0 - 2.0 * word.astype(float))
            pos = rng.integers(0, code.n)
            llrs[pos] = -llrs[pos]
            bits, ok, _ = bp_decode(code, llrs)
            assert ok
            assert np.array_equal(bits, word)

    def test_batch_matches_single(self, hamming):
        rng = np.random.default_rng(6)
        msgs = rng.integers(0, 2, size=(5, 4))
        words = encode(hamming, msgs)
        llrs = 3.0 * (1.0 - 2.0 * words.astype(float)) + rng.normal(scale=0.5, size=words.shape)
        b_bits, b_ok, b_it = bp_decode(hamming, llrs)
        for i in range(5):
            s_bits, s_ok, s_it = bp_decode(hamming, llrs[i])
            assert np.array_equal(b_bits[i], s_bits)
            assert b_ok[i] == s_ok
            assert b_it[i] == s_it

    def test_hopeless_llrs_report_cap(self):
        code = load_alist(_asset_path())
        rng = np.random.default_rng(7)
        llrs = rng.normal(scale=0.3, size=(2, code.n))
        _, ok, iters = bp_decode(code, llrs, max_iter=3)
        assert not ok.any()
        assert np.all(iters == 3)

    def test_wrong_width_rejected(self, hamming):
        with pytest.raises(ValueError, match="LLRs"):
            bp_decode(hamming, np.zeros(6))

    def test_waterfall_anchor(self):
        """Rate-1/2 code over a binary-input channel at moderate SNR.

        At Eb/N0 = 3 dB the shipped code runs essentially error free; the
        bound leaves two decades of slack against regression.
        """
        code = load_alist(_asset_path())
        rng = np.random.default_rng(8)
        ebn0 = 10 ** 0.3
        n0 = (1.0 / code.rate) / ebn0
        sigma = np.sqrt(n0 / 2.0)

        total_bits = 0
        total_err = 0
        for _ in range(4):
            msgs = rng.integers(0, 2, size=(500, code.k)).astype(np.uint8)
            words = encode(code, msgs)
            tx = 1.0 - 2.0 * words.astype(float)
            y = tx + sigma * rng.normal(size=tx.shape)
            llrs = 2.0 * y / sigma**2
            bits, _, _ = bp_decode(code, llrs, max_iter=50)
            got = extract_message(code, bits)
            total_err += int(np.sum(got != msgs))
            total_bits += msgs.size
        assert total_bits >= 1_000_000
        assert total_err / total_bits < 1e-4
