"""Binary linear block codes: alist parity checks, systematic encoding and
flooding sum-product decoding.

Decoder LLR convention: positive means bit 0 is more likely.  This is the
opposite sign of the demodulator output in this package, so the simulation
harness negates LLRs at the boundary (and asserts so in its tests).

The alist layout is the classic sparse description: "n m" on the first line,
maximum column/row degrees on the second, the per-column and per-row degree
lists, then one adjacency line per column and per row using 1-based indices,
zero padded up to the maximum degree.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_BP_ITER = 50
_PHI_CLIP = 1e-12


@dataclass
class LinearCode:
    """Parity-check description plus the derived systematic encoder."""

    n: int
    m: int
    check_cols: np.ndarray  # (E,) variable index of each edge, check-major order
    check_ptr: np.ndarray  # (m+1,) edge offsets per check
    info_cols: np.ndarray  # (k,) positions carrying message bits
    pivot_cols: np.ndarray  # (m,) positions carrying parity bits
    p_matrix: np.ndarray  # (m, k) uint8, parity = p_matrix @ u mod 2

    @property
    def k(self) -> int:
        return self.info_cols.size

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def check_degrees(self) -> np.ndarray:
        return np.diff(self.check_ptr)


def _gf2_row_reduce(h: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Gauss-Jordan over GF(2).  Returns (reduced rows, pivot column list).

    Columns are scanned left to right; the chosen pivot columns are recorded
    instead of physically swapping, which fixes the parity positions of the
    systematic encoder.
    """
    work = h.copy().astype(np.uint8)
    m, n = work.shape
    pivots: list[int] = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        hot = np.flatnonzero(work[row:, col]) + row
        if hot.size == 0:
            continue
        if hot[0] != row:
            work[[row, hot[0]]] = work[[hot[0], row]]
        others = np.flatnonzero(work[:, col])
        others = others[others != row]
        work[others] ^= work[row]
        pivots.append(col)
        row += 1
    return work[:row], pivots


def _build_code(n: int, m: int, check_adj: list[np.ndarray]) -> LinearCode:
    dense = np.zeros((m, n), dtype=np.uint8)
    for c, cols in enumerate(check_adj):
        dense[c, cols] = 1
    reduced, pivots = _gf2_row_reduce(dense)
    rank = reduced.shape[0]
    if rank < m:
        warnings.warn(f"parity-check matrix has rank {rank} < {m}; "
                      f"dependent rows dropped, rate is {(n - rank) / n:.4f}")
        keep = []
        probe = np.zeros((0, n), dtype=np.uint8)
        for c in range(m):
            trial = np.vstack([probe, dense[c]])
            if _gf2_row_reduce(trial)[0].shape[0] > probe.shape[0]:
                keep.append(c)
                probe = _gf2_row_reduce(trial)[0]
        check_adj = [check_adj[c] for c in keep]
        m = len(check_adj)

    pivot_cols = np.asarray(pivots, dtype=np.int64)
    info_cols = np.setdiff1d(np.arange(n), pivot_cols)
    p_matrix = reduced[:, info_cols].astype(np.uint8)

    degrees = np.array([cols.size for cols in check_adj])
    check_ptr = np.concatenate([[0], np.cumsum(degrees)])
    check_cols = np.concatenate(check_adj) if check_adj else np.empty(0, dtype=np.int64)
    if np.any(degrees == 0):
        raise ValueError("empty parity checks are not supported")
    if np.any(np.bincount(check_cols, minlength=n) == 0):
        raise ValueError("variables outside every parity check are not supported")
    return LinearCode(n=n, m=m, check_cols=check_cols.astype(np.int64),
                      check_ptr=check_ptr.astype(np.int64),
                      info_cols=info_cols, pivot_cols=pivot_cols, p_matrix=p_matrix)


def load_alist(path) -> LinearCode:
    """Parse an alist file.  Both adjacency directions are cross-checked."""
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)

    def take() -> int:
        try:
            return int(next(it))
        except StopIteration:
            raise ValueError("truncated alist file") from None

    n, m = take(), take()
    max_col, max_row = take(), take()
    col_deg = [take() for _ in range(n)]
    row_deg = [take() for _ in range(m)]
    if max(col_deg, default=0) > max_col or max(row_deg, default=0) > max_row:
        raise ValueError("degree list exceeds declared maximum")

    col_adj = []
    for v in range(n):
        entries = [take() for _ in range(max_col)]
        live = [e - 1 for e in entries if e > 0]
        if len(live) != col_deg[v]:
            raise ValueError(f"column {v} lists {len(live)} checks, degree says {col_deg[v]}")
        col_adj.append(np.asarray(live, dtype=np.int64))
    row_adj = []
    for c in range(m):
        entries = [take() for _ in range(max_row)]
        live = [e - 1 for e in entries if e > 0]
        if len(live) != row_deg[c]:
            raise ValueError(f"row {c} lists {len(live)} variables, degree says {row_deg[c]}")
        row_adj.append(np.asarray(live, dtype=np.int64))

    from_cols = {(c, v) for v, checks in enumerate(col_adj) for c in checks}
    from_rows = {(c, v) for c, cols in enumerate(row_adj) for v in cols}
    if from_cols != from_rows:
        raise ValueError("column and row adjacency lists disagree")
    return _build_code(n, m, row_adj)


def save_alist(path, code: LinearCode) -> None:
    """Write the parity structure back out in alist form."""
    col_adj: list[list[int]] = [[] for _ in range(code.n)]
    row_adj: list[list[int]] = [[] for _ in range(code.m)]
    for c in range(code.m):
        for v in code.check_cols[code.check_ptr[c]:code.check_ptr[c + 1]]:
            col_adj[int(v)].append(c)
            row_adj[c].append(int(v))
    max_col = max(len(a) for a in col_adj)
    max_row = max(len(a) for a in row_adj)
    lines = [f"{code.n} {code.m}", f"{max_col} {max_row}",
             " ".join(str(len(a)) for a in col_adj),
             " ".join(str(len(a)) for a in row_adj)]
    for adj in col_adj:
        padded = [str(c + 1) for c in adj] + ["0"] * (max_col - len(adj))
        lines.append(" ".join(padded))
    for adj in row_adj:
        padded = [str(v + 1) for v in adj] + ["0"] * (max_row - len(adj))
        lines.append(" ".join(padded))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def encode(code: LinearCode, bits: np.ndarray) -> np.ndarray:
    """Systematic encoding: message bits land on info_cols, parity on pivot_cols.

    bits: (k,) or (B, k) arrays of {0,1}.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    single = bits.ndim == 1
    batch = bits.reshape(1, -1) if single else bits
    if batch.shape[1] != code.k:
        raise ValueError(f"expected {code.k} message bits per word, got {batch.shape[1]}")
    parity = (batch.astype(np.int64) @ code.p_matrix.T.astype(np.int64)) % 2
    words = np.zeros((batch.shape[0], code.n), dtype=np.uint8)
    words[:, code.info_cols] = batch
    words[:, code.pivot_cols] = parity
    return words[0] if single else words


def syndrome(code: LinearCode, words: np.ndarray) -> np.ndarray:
    """(B, m) parity sums, zero for valid codewords."""
    words = np.atleast_2d(np.asarray(words, dtype=np.uint8))
    edge_bits = words[:, code.check_cols].astype(np.int64)
    sums = np.add.reduceat(edge_bits, code.check_ptr[:-1], axis=1)
    return (sums % 2).astype(np.uint8)


def _phi(x: np.ndarray) -> np.ndarray:
    return -np.log(np.tanh(np.maximum(x, _PHI_CLIP) / 2.0))


def bp_decode(code: LinearCode, llrs: np.ndarray, max_iter: int = DEFAULT_BP_ITER):
    """Flooding sum-product decoding of one or many codewords.

    llrs: (n,) or (B, n), positive favouring bit 0.  Returns (bits, ok,
    iterations): hard decisions, per-word syndrome success and the iteration
    at which each word first satisfied all checks (max_iter if never).
    """
    llrs = np.asarray(llrs, dtype=float)
    single = llrs.ndim == 1
    post = np.atleast_2d(llrs)
    if post.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per word, got {post.shape[1]}")
    b = post.shape[0]
    deg = code.check_degrees
    var_order = np.argsort(code.check_cols, kind="stable")
    var_sorted = code.check_cols[var_order]
    var_ptr = np.searchsorted(var_sorted, np.arange(code.n + 1))

    chan = post
    mvc = chan[:, code.check_cols].copy()
    mcv = np.zeros_like(mvc)
    ok = np.zeros(b, dtype=bool)
    first_ok = np.full(b, max_iter, dtype=np.int64)

    hard = (chan < 0).astype(np.uint8)
    for it in range(1, max_iter + 1):
        neg = (mvc < 0).astype(np.int64)
        mag = _phi(np.abs(mvc))
        neg_tot = np.add.reduceat(neg, code.check_ptr[:-1], axis=1)
        mag_tot = np.add.reduceat(mag, code.check_ptr[:-1], axis=1)
        neg_ex = np.repeat(neg_tot, deg, axis=1) - neg
        mag_ex = np.repeat(mag_tot, deg, axis=1) - mag
        sign = 1.0 - 2.0 * (neg_ex % 2)
        mcv = sign * _phi(mag_ex)

        acc = np.add.reduceat(mcv[:, var_order], var_ptr[:-1], axis=1)
        post = chan + acc
        mvc = post[:, code.check_cols] - mcv

        hard = (post < 0).astype(np.uint8)
        syn = syndrome(code, hard)
        now_ok = ~syn.any(axis=1)
        newly = now_ok & ~ok
        first_ok[newly] = it
        ok |= newly
        if ok.all():
            break

    if single:
        return hard[0], bool(ok[0]), int(first_ok[0])
    return hard, ok, first_ok


def extract_message(code: LinearCode, words: np.ndarray) -> np.ndarray:
    """Message bits from (possibly batched) codewords."""
    words = np.asarray(words)
    return words[..., code.info_cols]
