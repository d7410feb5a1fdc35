"""Link-quality metrics and the result record schema.

The mutual-information estimate is the standard soft-metric lower bound

    I = 1 - mean over bits of log2(1 + exp(-b * llr))

with b = +1 for a true bit 1 and b = -1 for a true bit 0, pooled over every
frame passed in.  With exact posterior ratios it equals the bit-interleaved
capacity; mismatched demodulators push it down.  Values below zero flag
miscalibrated soft outputs; the estimator clamps at -1 but does not hide the
sign.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .demod import LlrFrame

CSV_COLUMNS = ["snr_db", "precoder", "demod", "lp", "ld", "mi", "ser",
               "ber_uncoded", "ber_coded", "se", "blocks_ok", "blocks_total", "seed"]

_LN2 = np.log(2.0)


def mutual_information(frames) -> float:
    """Pooled per-bit mutual information over one or many LLR frames."""
    if isinstance(frames, LlrFrame):
        frames = [frames]
    total_bits = 0
    loss = 0.0
    for frame in frames:
        b = 2.0 * np.asarray(frame.bits, dtype=float) - 1.0
        loss += float(np.logaddexp(0.0, -b * frame.llrs).sum()) / _LN2
        total_bits += frame.llrs.size
    if total_bits == 0:
        raise ValueError("no LLR frames given")
    return float(np.clip(1.0 - loss / total_bits, -1.0, 1.0))


def symbol_error_rate(decisions: np.ndarray, truth: np.ndarray) -> float:
    decisions = np.asarray(decisions)
    truth = np.asarray(truth)
    if decisions.shape != truth.shape or decisions.size == 0:
        raise ValueError("decision and truth arrays must match and be non-empty")
    return float(np.mean(decisions != truth))


def bit_error_rate(bits: np.ndarray, truth: np.ndarray) -> float:
    bits = np.asarray(bits)
    truth = np.asarray(truth)
    if bits.shape != truth.shape or bits.size == 0:
        raise ValueError("bit arrays must match and be non-empty")
    return float(np.mean(bits != truth))


def spectrum_efficiency(rate: float, order: int, blocks_ok: int, blocks_total: int) -> float:
    """Throughput in information bits per symbol: rate * log2(Q) * success ratio."""
    if blocks_total <= 0:
        raise ValueError("blocks_total must be positive")
    return rate * np.log2(order) * blocks_ok / blocks_total


@dataclass
class MetricRecord:
    """One aggregated result row; coded-only fields stay None for uncoded runs."""

    snr_db: float
    precoder: str
    demod: str
    lp: int
    ld: int
    mi: float
    ser: float
    ber_uncoded: float
    ber_coded: float | None
    se: float | None
    blocks_ok: int
    blocks_total: int
    seed: int

    def as_row(self) -> list[str]:
        def fmt(value):
            if value is None:
                return ""
            if isinstance(value, float):
                return f"{value:.6g}"
            return str(value)

        return [fmt(getattr(self, col)) for col in CSV_COLUMNS]


def write_csv(records: list[MetricRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(record.as_row())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
