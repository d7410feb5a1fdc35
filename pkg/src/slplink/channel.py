"""Rayleigh block fading, receiver noise and the seed-splitting discipline.

The downlink model is y = H x + n with H of shape (K, N) whose k-th row is
the row vector multiplying the transmit signal for user k.  No conjugation is
applied on the channel rows anywhere in the package.

Seeding: every random draw comes from a child generator derived from the
master seed through ``numpy.random.SeedSequence(master, spawn_key=...)``.
The spawn key is a tuple (domain, snr_index, block_index) with domains
CHANNEL, SYMBOLS and NOISE.  Child streams are therefore independent of the
iteration order, so serial and per-block parallel execution produce identical
results.  The channel key does not involve pilot or data lengths, which lets
two runs with different frame layouts share the same channel realizations.
"""

from __future__ import annotations

import numpy as np

DOMAIN_CHANNEL = 0
DOMAIN_SYMBOLS = 1
DOMAIN_NOISE = 2


def child_rng(master_seed: int, domain: int, snr_index: int, block: int) -> np.random.Generator:
    """Deterministic per-(domain, snr, block) generator."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(domain, snr_index, block))
    return np.random.default_rng(seq)


def draw_rayleigh(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    """(K, N) channel with i.i.d. CN(0, 1) entries."""
    if k > n:
        raise ValueError(f"need K <= N, got K={k} N={n}")
    re = rng.standard_normal((k, n))
    im = rng.standard_normal((k, n))
    return (re + 1j * im) / np.sqrt(2.0)


def draw_noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    """Circularly symmetric complex noise with total variance sigma2 per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(sigma2 / 2.0) * (re + 1j * im)


def receive(h: np.ndarray, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """y = H x + n.  x may be (N,) or (N, L); noise must match the output."""
    return h @ x + noise


def snr_db_to_sigma2(snr_db: float) -> float:
    # transmit power is 1 per symbol slot, so SNR = 1 / sigma^2
    return 10.0 ** (-snr_db / 10.0)


def dump_channels(path, channels: np.ndarray) -> None:
    """Write channel realizations as raw little-endian complex64, row-major.

    channels: (blocks, K, N) complex array.  The file holds no header; the
    reader must know the shape.
    """
    arr = np.ascontiguousarray(channels, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(arr.astype("<c8").tobytes())


def load_channels(path, k: int, n: int) -> np.ndarray:
    """Read channels written by dump_channels, inferring the block count."""
    raw = np.fromfile(path, dtype="<c8")
    if raw.size % (k * n):
        raise ValueError(f"file holds {raw.size} entries, not a multiple of K*N={k * n}")
    return raw.reshape(-1, k, n).astype(np.complex128)
