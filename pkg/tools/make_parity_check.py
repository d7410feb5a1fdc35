#!/usr/bin/env python3
"""Generate the bundled rate-1/2 regular parity-check matrix.

Construction: column-by-column random edge placement with degree (3, 6),
rejecting any assignment that would close a length-4 cycle, retried until the
matrix reaches full GF(2) rank.  Deterministic for a given seed; rerun to
regenerate the asset byte for byte.
"""

import sys
from itertools import combinations
from pathlib import Path

import numpy as np

N, M, DV, DC = 1024, 512, 3, 6
SEED = 20240819
OUT = Path(__file__).resolve().parent.parent / "src" / "slplink" / "assets" / "ldpc_n1024_r12.alist"


def gf2_rank(rows_of_cols, n, m):
    h = np.zeros((m, n), dtype=np.uint8)
    for c, cols in enumerate(rows_of_cols):
        h[c, cols] = 1
    rank = 0
    for col in range(n):
        hot = np.flatnonzero(h[rank:, col]) + rank
        if hot.size == 0:
            continue
        if hot[0] != rank:
            h[[rank, hot[0]]] = h[[hot[0], rank]]
        others = np.flatnonzero(h[:, col])
        others = others[others != rank]
        h[others] ^= h[rank]
        rank += 1
        if rank == m:
            break
    return rank


def try_build(rng):
    capacity = np.full(M, DC)
    row_adj = [[] for _ in range(M)]
    used_pairs = set()
    for _v in range(N):
        placed = None
        for _retry in range(400):
            avail = np.flatnonzero(capacity > 0)
            if avail.size < DV:
                return None
            weights = capacity[avail] / capacity[avail].sum()
            picks = rng.choice(avail, size=DV, replace=False, p=weights)
            pairs = list(combinations(sorted(int(c) for c in picks), 2))
            if any(pair in used_pairs for pair in pairs):
                continue
            placed = picks
            break
        if placed is None:
            return None
        used_pairs.update(pairs)
        capacity[placed] -= 1
        for c in placed:
            row_adj[int(c)].append(_v)
    return [np.asarray(sorted(adj)) for adj in row_adj]


def main():
    rng = np.random.default_rng(SEED)
    for attempt in range(200):
        adj = try_build(rng)
        if adj is None:
            continue
        rank = gf2_rank(adj, N, M)
        if rank == M:
            break
        print(f"attempt {attempt}: rank {rank} < {M}, retrying")
    else:
        print("failed to build a full-rank matrix", file=sys.stderr)
        return 1

    col_adj = [[] for _ in range(N)]
    for c, cols in enumerate(adj):
        for v in cols:
            col_adj[int(v)].append(c)
    lines = [f"{N} {M}", f"{DV} {DC}",
             " ".join(str(len(a)) for a in col_adj),
             " ".join(str(len(a)) for a in adj)]
    for a in col_adj:
        lines.append(" ".join(str(c + 1) for c in a) + " 0" * (DV - len(a)))
    for a in adj:
        lines.append(" ".join(str(int(v) + 1) for v in a) + " 0" * (DC - len(a)))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")
    print(f"wrote {OUT} (attempt {attempt}, rank {rank})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
