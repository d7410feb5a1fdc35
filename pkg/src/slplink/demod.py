"""Soft demodulators and the symmetry transforms that pool pilot signals.

A receiver sees one signal cloud per constellation point.  The clouds are
congruent under the constellation symmetries, so pilots for all points can be
folded into a handful of canonical pools before a density is fitted:

* PSK: rotating the cloud of point q by -q * 2pi/Q maps it onto the cloud of
  point 0, giving one pool (key "TC").
* square QAM: a quadrant rotation plus, for points above the diagonal, the
  mirror that swaps the real and imaginary parts maps every cloud onto the
  canonical cloud of its class, giving pools "TI" (inner), "TC" (corner) and
  "TL" (lateral).  64QAM additionally translates inner nominals onto (d, d)
  and lateral nominals along the edge onto (7d, d).

Log-likelihood ratios use ln(sum over bit=1 points / sum over bit=0 points)
with log-sum-exp and a +-50 clamp, so a positive value favours bit 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm as gmm_mod
from .constellation import (
    CORNER,
    INNER,
    ConstellationSpec,
    _qam_quadrant_coords,
    bit_sets,
    indices_to_bits,
)

LLR_CLAMP = 50.0

SET_INNER = "TI"
SET_CORNER = "TC"
SET_LATERAL = "TL"

_CLASS_TO_SET = {INNER: SET_INNER, CORNER: SET_CORNER, "lateral": SET_LATERAL}


@dataclass
class LabeledSignals:
    """Received signals with their transmitted point indices."""

    y: np.ndarray  # (L,) complex
    q: np.ndarray  # (L,) int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex).ravel()
        self.q = np.asarray(self.q, dtype=np.int64).ravel()
        if self.y.shape != self.q.shape:
            raise ValueError(f"signal/index length mismatch: {self.y.shape} vs {self.q.shape}")

    def __len__(self) -> int:
        return self.y.size


@dataclass
class PilotSets:
    """Pooled, transformed pilot signals keyed by canonical set name."""

    sets: dict[str, np.ndarray]  # each (n, 2) float
    gamma_bar: float | None = None

    def counts(self) -> dict[str, int]:
        return {k: v.shape[0] for k, v in self.sets.items()}


@dataclass
class LlrFrame:
    """Per-symbol soft outputs plus the truth bits they refer to."""

    llrs: np.ndarray  # (L, bits_per_symbol)
    bits: np.ndarray  # (L, bits_per_symbol) in {0, 1}
    n_degenerate: int = 0
    extras: dict = field(default_factory=dict)


def rotate(y: np.ndarray, t: int, order: int) -> np.ndarray:
    """Rotate by -t * 2pi/order (clockwise by t constellation steps)."""
    return np.asarray(y) * np.exp(-1j * t * 2.0 * np.pi / order)


def mirror(y: np.ndarray) -> np.ndarray:
    """Swap real and imaginary parts (reflection about the diagonal)."""
    return 1j * np.conj(np.asarray(y))


def _canonical_quadrant(spec: ConstellationSpec, q: int):
    """(mirrored, canonical coords in units of d) for a QAM index."""
    quarter = spec.order // 4
    coords = _qam_quadrant_coords(spec.order)[q % quarter]
    re_u, im_u = int(coords[0]), int(coords[1])
    if im_u > re_u:
        return True, (im_u, re_u)
    return False, (re_u, im_u)


def translate64(y: np.ndarray, q: int, spec: ConstellationSpec) -> np.ndarray:
    """Shift a canonically oriented 64QAM signal onto its class nominal.

    The caller must already have applied the quadrant rotation and, where
    needed, the mirror.  Inner nominals land on (d, d), lateral nominals on
    (7d, d), corner signals pass through unchanged.
    """
    if spec.order != 64:
        raise ValueError("translation only applies to 64QAM")
    _, (re_u, im_u) = _canonical_quadrant(spec, q)
    edge = 7
    if re_u == edge and im_u == edge:
        shift = 0.0
    elif re_u == edge:
        shift = 1j * (im_u - 1) * spec.d
    else:
        shift = complex(re_u - 1, im_u - 1) * spec.d
    return np.asarray(y) - shift


def transform(y: np.ndarray, q: int, spec: ConstellationSpec) -> np.ndarray:
    """Map signals conditioned on point q onto the canonical pool of its class."""
    if not 0 <= q < spec.order:
        raise ValueError(f"index {q} out of range")
    if spec.kind == "psk":
        return rotate(y, q, spec.order)
    quarter = spec.order // 4
    z = rotate(y, quarter * (q // quarter), spec.order)
    mirrored, _ = _canonical_quadrant(spec, q)
    if mirrored:
        z = mirror(z)
    if spec.order == 64:
        z = translate64(z, q, spec)
    return z


def set_key_of(spec: ConstellationSpec, q: int) -> str:
    if spec.kind == "psk":
        return SET_CORNER
    return _CLASS_TO_SET[spec.class_of(q)]


def build_pilot_sets(pilots: LabeledSignals, spec: ConstellationSpec,
                     gamma_bar: float | None = None) -> PilotSets:
    """Fold labeled pilots into canonical pools.

    QAM needs every class populated; an empty class raises with a hint to
    enlarge or rebalance the pilot block.  PSK produces the single "TC" pool.
    """
    pools: dict[str, list[np.ndarray]] = {}
    for q in np.unique(pilots.q):
        mask = pilots.q == q
        z = transform(pilots.y[mask], int(q), spec)
        pools.setdefault(set_key_of(spec, int(q)), []).append(z)

    expected = [SET_CORNER] if spec.kind == "psk" else [SET_INNER, SET_CORNER, SET_LATERAL]
    sets = {}
    for key in expected:
        if key not in pools:
            raise ValueError(
                f"pilot class {key} is empty; use a longer or class-balanced pilot block")
        z = np.concatenate(pools[key])
        sets[key] = np.stack([z.real, z.imag], axis=1)
    return PilotSets(sets=sets, gamma_bar=gamma_bar)


def _logsumexp_cols(log_lik: np.ndarray, cols: np.ndarray) -> np.ndarray:
    sub = log_lik[:, cols]
    top = sub.max(axis=1)
    out = np.full(top.shape, -np.inf)
    ok = np.isfinite(top)
    if np.any(ok):
        out[ok] = top[ok] + np.log(np.exp(sub[ok] - top[ok, None]).sum(axis=1))
    return out


def llr_from_likelihoods(log_lik: np.ndarray, spec: ConstellationSpec,
                         clamp: float = LLR_CLAMP) -> tuple[np.ndarray, int]:
    """Bitwise ratios from per-point log likelihoods of shape (L, Q).

    Returns (llrs, n_degenerate).  Rows where both partitions underflow to
    zero likelihood produce 0 and are counted as degenerate.
    """
    log_lik = np.asarray(log_lik, dtype=float)
    if log_lik.ndim != 2 or log_lik.shape[1] != spec.order:
        raise ValueError(f"log likelihood matrix must be (L, {spec.order})")
    plus, minus = bit_sets(spec)
    m = spec.bits_per_symbol
    llrs = np.zeros((log_lik.shape[0], m))
    degenerate = np.zeros(log_lik.shape[0], dtype=bool)
    for i in range(m):
        top = _logsumexp_cols(log_lik, plus[i])
        bot = _logsumexp_cols(log_lik, minus[i])
        both_dead = ~np.isfinite(top) & ~np.isfinite(bot)
        degenerate |= both_dead
        with np.errstate(invalid="ignore"):
            val = top - bot
        val[both_dead] = 0.0
        val[np.isfinite(top) & ~np.isfinite(bot)] = clamp
        val[~np.isfinite(top) & np.isfinite(bot)] = -clamp
        llrs[:, i] = np.clip(val, -clamp, clamp)
    return llrs, int(degenerate.sum())


def _estimate_variance(pilots: LabeledSignals, spec: ConstellationSpec,
                       idx_filter=None) -> float:
    mask = np.ones(len(pilots), dtype=bool)
    if idx_filter is not None:
        mask = np.isin(pilots.q, idx_filter)
        if not np.any(mask):
            raise ValueError("no pilots left after class filtering")
    err = pilots.y[mask] - spec.points[pilots.q[mask]]
    var = float(np.mean(np.abs(err) ** 2))
    if var <= 0.0:
        raise ValueError("estimated variance is zero; pilots look noise free")
    return var


def _gaussian_log_lik(y: np.ndarray, spec: ConstellationSpec, sigma2: float) -> np.ndarray:
    d2 = np.abs(y[:, None] - spec.points[None, :]) ** 2
    return -d2 / sigma2 - np.log(np.pi * sigma2)


def gaussian_demod(pilots: LabeledSignals, data: LabeledSignals,
                   spec: ConstellationSpec) -> LlrFrame:
    """Matched-constellation Gaussian demodulator.

    The variance estimate averages the squared pilot error over all pilots,
    which also absorbs any deliberate symbol perturbation introduced by the
    precoder.  Complex Gaussian convention: f(y|v) = exp(-|y-v|^2 / s) / (pi s).
    """
    sigma2 = _estimate_variance(pilots, spec)
    log_lik = _gaussian_log_lik(data.y, spec, sigma2)
    llrs, ndeg = llr_from_likelihoods(log_lik, spec)
    return LlrFrame(llrs=llrs, bits=indices_to_bits(spec, data.q), n_degenerate=ndeg,
                    extras={"sigma2": sigma2})


def mgaus_demod(pilots: LabeledSignals, data: LabeledSignals,
                spec: ConstellationSpec) -> LlrFrame:
    """Gaussian demodulator with the variance taken from inner pilots only.

    Inner points are never perturbed by the balancing precoder, so their
    pilot error is pure scaled noise and the estimate stays tight at high
    SNR.  QAM only; PSK has no inner points and is rejected.
    """
    if spec.kind != "qam":
        raise ValueError("inner-pilot variance estimation needs a QAM constellation")
    sigma2 = _estimate_variance(pilots, spec, idx_filter=np.asarray(spec.inner_idx))
    log_lik = _gaussian_log_lik(data.y, spec, sigma2)
    llrs, ndeg = llr_from_likelihoods(log_lik, spec)
    return LlrFrame(llrs=llrs, bits=indices_to_bits(spec, data.q), n_degenerate=ndeg,
                    extras={"sigma2": sigma2})


def fit_pilot_models(sets: PilotSets, spec: ConstellationSpec,
                     n_components: int = gmm_mod.DEFAULT_COMPONENTS, seed: int = 0,
                     max_iter: int = gmm_mod.DEFAULT_MAX_ITER,
                     tol: float = gmm_mod.DEFAULT_TOL) -> dict[str, gmm_mod.GmmParams]:
    return {
        key: gmm_mod.em_fit(samples, n_components=n_components, seed=seed,
                            max_iter=max_iter, tol=tol)
        for key, samples in sets.sets.items()
    }


def mixture_llrs(data: LabeledSignals, spec: ConstellationSpec,
                 models: dict[str, gmm_mod.GmmParams]) -> LlrFrame:
    """Score data signals under per-class mixtures via the pooling transform."""
    expected = {set_key_of(spec, q) for q in range(spec.order)}
    missing = expected - models.keys()
    if missing:
        raise ValueError(f"missing mixture parameters for sets {sorted(missing)}")
    log_lik = np.empty((len(data), spec.order))
    for q in range(spec.order):
        z = transform(data.y, q, spec)
        pts = np.stack([z.real, z.imag], axis=1)
        log_lik[:, q] = gmm_mod.gmm_logpdf(pts, models[set_key_of(spec, q)])
    llrs, ndeg = llr_from_likelihoods(log_lik, spec)
    return LlrFrame(llrs=llrs, bits=indices_to_bits(spec, data.q), n_degenerate=ndeg)


def gmm_demod(pilots: LabeledSignals, data: LabeledSignals, spec: ConstellationSpec,
              gamma_bar: float | None = None,
              n_components: int = gmm_mod.DEFAULT_COMPONENTS, seed: int = 0,
              max_iter: int = gmm_mod.DEFAULT_MAX_ITER,
              tol: float = gmm_mod.DEFAULT_TOL) -> LlrFrame:
    """Mixture demodulator: pool pilots, fit per class, score the data block."""
    sets = build_pilot_sets(pilots, spec, gamma_bar=gamma_bar)
    models = fit_pilot_models(sets, spec, n_components=n_components, seed=seed,
                              max_iter=max_iter, tol=tol)
    return mixture_llrs(data, spec, models)


def external_gmm_demod(data: LabeledSignals, spec: ConstellationSpec,
                       models: dict[str, gmm_mod.GmmParams]) -> LlrFrame:
    """Score a data block under externally supplied mixture parameters."""
    for params in models.values():
        params.validate()
    return mixture_llrs(data, spec, models)
