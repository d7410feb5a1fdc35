"""Constellation geometry, bit labeling and constructive-interference regions.

Conventions used throughout the package:

* every constellation has unit average symbol energy
* PSK point q sits at angle (q + 1/2) * 2*pi/Q, so no point lies on a
  decision boundary axis
* square QAM is indexed quadrant-major: index q maps to the first-quadrant
  point ``q mod (Q/4)`` rotated by ``j ** (q // (Q/4))``
* bit labels are Gray codes: angular Gray for PSK, per-dimension Gray for QAM
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PSK_ORDERS = (2, 4, 8, 16, 32)
QAM_ORDERS = (16, 64)

INNER = "inner"
CORNER = "corner"
LATERAL = "lateral"


@dataclass(frozen=True)
class ConstellationSpec:
    """Immutable constellation description.

    Attributes:
        kind: "psk" or "qam".
        order: number of points Q.
        points: (Q,) complex array, unit average energy.
        bit_labels: (Q, log2(Q)) array of {0,1}, Gray labeled.
        d: half minimum distance for QAM, 0.0 for PSK.
        psk_half_angle: pi/Q for PSK, None for QAM.
        inner_idx / corner_idx / lateral_idx: class index tuples.  PSK puts
            every index in corner_idx and leaves the others empty.
    """

    kind: str
    order: int
    points: np.ndarray
    bit_labels: np.ndarray
    d: float
    psk_half_angle: float | None
    inner_idx: tuple[int, ...]
    corner_idx: tuple[int, ...]
    lateral_idx: tuple[int, ...]

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def class_of(self, q: int) -> str:
        if q in self.inner_idx:
            return INNER
        if q in self.corner_idx:
            return CORNER
        return LATERAL


@dataclass(frozen=True)
class CirRegion:
    """Constructive-interference region for one constellation point.

    Two shapes exist:

    * ``kind == "cone"`` (PSK): apex at the point, edges parallel to the two
      maximum-likelihood decision boundaries, half angle pi/Q.  For Q == 2 the
      cone degenerates into the half plane beyond the point.
    * ``kind == "rect"`` (QAM): per real dimension either pinned to the
      nominal coordinate (direction 0) or free to grow away from the origin
      (direction +1 / -1).  Inner points pin both, corner points free both,
      lateral points free exactly the coordinate on the constellation edge.
    """

    kind: str
    apex: complex
    half_angle: float = 0.0
    re_dir: int = 0
    im_dir: int = 0

    def contains(self, z: complex, tol: float = 1e-9) -> bool:
        if self.kind == "cone":
            w = (z - self.apex) * np.exp(-1j * np.angle(self.apex))
            s, c = np.sin(self.half_angle), np.cos(self.half_angle)
            return (s * w.real - c * abs(w.imag)) >= -tol
        dre = z.real - self.apex.real
        dim = z.imag - self.apex.imag
        ok_re = abs(dre) <= tol if self.re_dir == 0 else dre * self.re_dir >= -tol
        ok_im = abs(dim) <= tol if self.im_dir == 0 else dim * self.im_dir >= -tol
        return bool(ok_re and ok_im)


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _bits_of(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - b)) & 1 for b in range(width)], dtype=np.int8)


@lru_cache(maxsize=None)
def build_psk(order: int) -> ConstellationSpec:
    """Build a PSK constellation with angular Gray labeling.

    Raises ValueError for orders outside {2, 4, 8, 16, 32}.
    """
    if order not in PSK_ORDERS:
        raise ValueError(f"unsupported PSK order {order}, expected one of {PSK_ORDERS}")
    q = np.arange(order)
    points = np.exp(1j * (q + 0.5) * 2.0 * np.pi / order)
    m = int(np.log2(order))
    labels = np.stack([_bits_of(_gray(int(i)), m) for i in q])
    return ConstellationSpec(
        kind="psk",
        order=order,
        points=points,
        bit_labels=labels,
        d=0.0,
        psk_half_angle=np.pi / order,
        inner_idx=(),
        corner_idx=tuple(range(order)),
        lateral_idx=(),
    )


def _qam_quadrant_coords(order: int) -> np.ndarray:
    # First-quadrant odd-integer coordinates in units of d, one row per
    # within-quadrant index.  16QAM walks the 2x2 quadrant counterclockwise
    # starting at the inner-most point; 64QAM is row-major over the 4x4 grid.
    if order == 16:
        return np.array([[1, 1], [3, 1], [3, 3], [1, 3]])
    rows = np.arange(16) // 4
    cols = np.arange(16) % 4
    return np.stack([2 * cols + 1, 2 * rows + 1], axis=1)


@lru_cache(maxsize=None)
def build_qam(order: int) -> ConstellationSpec:
    """Build a square QAM constellation (16 or 64), quadrant-major indexing.

    Index q maps to first-quadrant point ``q mod (Q/4)`` times
    ``j ** (q // (Q/4))``.  Labels are per-dimension Gray codes over the
    coordinate grid, so any two nearest neighbours differ in exactly one bit.
    """
    if order not in QAM_ORDERS:
        raise ValueError(f"unsupported QAM order {order}, expected one of {QAM_ORDERS}")
    quarter = order // 4
    side = int(np.sqrt(order))
    coords = _qam_quadrant_coords(order)
    edge = side - 1  # largest odd coordinate in units of d
    # unit average energy: E|v|^2 = 2 * mean(odd^2) * d^2 over grid levels
    levels = np.arange(1, side, 2)
    d = 1.0 / np.sqrt(2.0 * np.mean(levels**2))

    first = (coords[:, 0] + 1j * coords[:, 1]) * d
    points = np.concatenate([first * 1j**k for k in range(4)])

    m = int(np.log2(order))
    half = m // 2
    labels = np.zeros((order, m), dtype=np.int8)
    re_units = np.round(points.real / d).astype(int)
    im_units = np.round(points.imag / d).astype(int)
    for idx in range(order):
        re_level = (re_units[idx] + edge) // 2
        im_level = (im_units[idx] + edge) // 2
        labels[idx, :half] = _bits_of(_gray(int(re_level)), half)
        labels[idx, half:] = _bits_of(_gray(int(im_level)), half)

    inner, corner, lateral = [], [], []
    for idx in range(order):
        on_edge = (abs(re_units[idx]) == edge, abs(im_units[idx]) == edge)
        if all(on_edge):
            corner.append(idx)
        elif any(on_edge):
            lateral.append(idx)
        else:
            inner.append(idx)

    return ConstellationSpec(
        kind="qam",
        order=order,
        points=points,
        bit_labels=labels,
        d=float(d),
        psk_half_angle=None,
        inner_idx=tuple(inner),
        corner_idx=tuple(corner),
        lateral_idx=tuple(lateral),
    )


def build(name: str) -> ConstellationSpec:
    """Build from a string id such as "psk8" or "qam16"."""
    name = name.strip().lower()
    if name.startswith("psk"):
        return build_psk(int(name[3:]))
    if name.startswith("qam"):
        return build_qam(int(name[3:]))
    raise ValueError(f"unknown constellation id {name!r}")


def bit_sets(spec: ConstellationSpec) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Index partitions per bit position.

    Returns (plus, minus) where plus[i] holds the point indices whose i-th
    label bit is 1 and minus[i] the complement.  Each partition covers all Q
    indices, and for these Gray labelings both halves have size Q/2.
    """
    plus, minus = [], []
    for i in range(spec.bits_per_symbol):
        mask = spec.bit_labels[:, i] == 1
        plus.append(np.flatnonzero(mask))
        minus.append(np.flatnonzero(~mask))
    return plus, minus


def cir_of(spec: ConstellationSpec, q: int) -> CirRegion:
    """Constructive-interference region of point q."""
    if not 0 <= q < spec.order:
        raise ValueError(f"index {q} out of range for order {spec.order}")
    point = complex(spec.points[q])
    if spec.kind == "psk":
        return CirRegion(kind="cone", apex=point, half_angle=float(spec.psk_half_angle))
    cls = spec.class_of(q)
    if cls == INNER:
        re_dir = im_dir = 0
    elif cls == CORNER:
        re_dir = 1 if point.real > 0 else -1
        im_dir = 1 if point.imag > 0 else -1
    else:
        edge = (int(np.sqrt(spec.order)) - 1) * spec.d
        if abs(abs(point.real) - edge) < spec.d / 2:
            re_dir = 1 if point.real > 0 else -1
            im_dir = 0
        else:
            re_dir = 0
            im_dir = 1 if point.imag > 0 else -1
    return CirRegion(kind="rect", apex=point, re_dir=re_dir, im_dir=im_dir)


def ml_decide(spec: ConstellationSpec, y) -> int:
    """Nearest-point decision, ties resolved to the smallest index."""
    z = as_complex(y)
    return int(np.argmin(np.abs(spec.points - z)))


def ml_decide_many(spec: ConstellationSpec, y: np.ndarray) -> np.ndarray:
    """Vectorized nearest-point decisions for a complex array."""
    dist = np.abs(y[..., None] - spec.points)
    return np.argmin(dist, axis=-1)


def as_complex(y) -> complex:
    """Accept a complex scalar or a length-2 (re, im) vector."""
    arr = np.asarray(y)
    if arr.shape == (2,):
        return complex(arr[0], arr[1])
    return complex(arr)


def labels_as_ints(spec: ConstellationSpec) -> np.ndarray:
    """Bit labels packed MSB-first into integers, one per point."""
    weights = 1 << np.arange(spec.bits_per_symbol - 1, -1, -1)
    return (spec.bit_labels * weights).sum(axis=1)


def bits_to_indices(spec: ConstellationSpec, bits: np.ndarray) -> np.ndarray:
    """Map a flat {0,1} array onto point indices, bits_per_symbol at a time."""
    m = spec.bits_per_symbol
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    groups = bits.reshape(-1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    packed = groups @ weights
    lookup = np.empty(spec.order, dtype=np.int64)
    lookup[labels_as_ints(spec)] = np.arange(spec.order)
    return lookup[packed]


def indices_to_bits(spec: ConstellationSpec, idx: np.ndarray) -> np.ndarray:
    """Truth bits (L, bits_per_symbol) for an index vector."""
    return spec.bit_labels[np.asarray(idx, dtype=np.int64)]
