"""Experiment loop: channels, precoding, demodulation, decoding, metrics.

Determinism contract: every random draw derives from the master seed through
the channel module's spawn keys, in a fixed order inside each block.  Two
invocations with the same configuration produce identical CSV rows, and the
pilot-set export plus the parameter-injection path reproduce the exact same
received signals as the run they were exported from.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import codec as codec_mod
from .channel import (
    DOMAIN_CHANNEL,
    DOMAIN_NOISE,
    DOMAIN_SYMBOLS,
    child_rng,
    draw_noise,
    draw_rayleigh,
    snr_db_to_sigma2,
)
from .config import ExperimentConfig
from .constellation import ConstellationSpec, bits_to_indices, build, ml_decide_many
from .demod import (
    LabeledSignals,
    build_pilot_sets,
    external_gmm_demod,
    gaussian_demod,
    gmm_demod,
    mgaus_demod,
)
from .gmm import GmmParams
from .metrics import MetricRecord, mutual_information, write_csv
from .precoder import CisbWorkspace, demod_signal, power_allocate, pseudo_inverse

_SET_FIELD = {"TI": "P_I", "TC": "P_C", "TL": "P_L"}
_FIELD_SET = {v: k for k, v in _SET_FIELD.items()}


@dataclass
class BlockSim:
    """Everything one simulated block exposes to demodulation and scoring."""

    block_id: int
    snr_db: float
    h: np.ndarray
    q: np.ndarray  # (K, L) transmitted point indices
    gammas: np.ndarray  # (L,) per-slot receive scales
    gamma_bar: float | None
    x: np.ndarray  # (N, L) transmit signals after any block rescaling
    y: np.ndarray  # (K, L) demodulator-domain received signals
    y_free: np.ndarray  # (K, L) same without noise
    lp: int
    ld: int
    info_bits: dict[int, np.ndarray]  # user -> (n_cw, k) message bits, coded runs only


def _pilot_indices(rng: np.random.Generator, order: int, lp: int) -> np.ndarray:
    # balanced counts over the points (the schedule every class-conditional
    # density estimate relies on), shuffled per user so the cross-user symbol
    # combinations stay random instead of cycling jointly
    reps = (lp + order - 1) // order
    base = np.tile(np.arange(order), reps)[:lp]
    return rng.permutation(base)


def simulate_block(cfg: ExperimentConfig, spec: ConstellationSpec, snr_idx: int,
                   block: int, code: codec_mod.LinearCode | None = None) -> BlockSim:
    lp, ld = cfg.lp, cfg.ld
    total = lp + ld
    rng_h = child_rng(cfg.seed, DOMAIN_CHANNEL, snr_idx, block)
    h = draw_rayleigh(rng_h, cfg.k, cfg.n)

    rng_s = child_rng(cfg.seed, DOMAIN_SYMBOLS, snr_idx, block)
    q = np.empty((cfg.k, total), dtype=np.int64)
    info_bits: dict[int, np.ndarray] = {}
    m = spec.bits_per_symbol
    for user in range(cfg.k):
        q[user, :lp] = _pilot_indices(rng_s, spec.order, lp)
        if code is None:
            q[user, lp:] = rng_s.integers(0, spec.order, ld)
        else:
            n_cw = (ld * m) // code.n
            if n_cw == 0:
                raise ValueError(f"data block of {ld * m} bits cannot hold a length-{code.n} codeword")
            u = rng_s.integers(0, 2, (n_cw, code.k), dtype=np.uint8)
            flat = codec_mod.encode(code, u).ravel()
            filler = rng_s.integers(0, 2, ld * m - flat.size, dtype=np.uint8)
            q[user, lp:] = bits_to_indices(spec, np.concatenate([flat, filler]))
            info_bits[user] = u

    if cfg.precoder == "zf":
        d = pseudo_inverse(h)
        w = d @ spec.points[q]
        gammas = 1.0 / np.sqrt((np.abs(w) ** 2).sum(axis=0))
        x = w * gammas
    else:
        ws = CisbWorkspace(h, spec)
        x = np.empty((cfg.n, total), dtype=complex)
        gammas = np.empty(total)
        for slot in range(total):
            sol = ws.solve(q[:, slot])
            x[:, slot] = sol.x
            gammas[slot] = sol.gamma

    if cfg.mode == "wr":
        gamma_bar, scale = power_allocate(gammas)
        x = x * scale
    else:
        gamma_bar = None

    sigma2 = snr_db_to_sigma2(cfg.snr_db[snr_idx])
    rng_n = child_rng(cfg.seed, DOMAIN_NOISE, snr_idx, block)
    noise = draw_noise(rng_n, (cfg.k, total), sigma2)
    y_free = h @ x
    y = y_free + noise

    return BlockSim(
        block_id=snr_idx * cfg.blocks + block,
        snr_db=cfg.snr_db[snr_idx],
        h=h,
        q=q,
        gammas=gammas,
        gamma_bar=gamma_bar,
        x=x,
        y=demod_signal(y, cfg.mode, gamma_bar),
        y_free=demod_signal(y_free, cfg.mode, gamma_bar),
        lp=lp,
        ld=ld,
        info_bits=info_bits,
    )


def _em_seed(cfg: ExperimentConfig, block_id: int, user: int) -> int:
    return int(np.random.SeedSequence(cfg.em_seed, spawn_key=(block_id, user)).generate_state(1)[0])


def user_signals(sim: BlockSim, user: int) -> tuple[LabeledSignals, LabeledSignals]:
    pilots = LabeledSignals(sim.y[user, :sim.lp], sim.q[user, :sim.lp])
    data = LabeledSignals(sim.y[user, sim.lp:], sim.q[user, sim.lp:])
    return pilots, data


def demodulate_user(cfg: ExperimentConfig, spec: ConstellationSpec, sim: BlockSim,
                    user: int, ext_params=None):
    pilots, data = user_signals(sim, user)
    if cfg.demod == "gaus":
        return gaussian_demod(pilots, data, spec)
    if cfg.demod == "mgaus":
        return mgaus_demod(pilots, data, spec)
    if cfg.demod == "gmm":
        return gmm_demod(pilots, data, spec, gamma_bar=sim.gamma_bar,
                         n_components=cfg.em_components,
                         seed=_em_seed(cfg, sim.block_id, user),
                         max_iter=cfg.em_max_iter, tol=cfg.em_tol)
    if cfg.demod == "pfen":
        key = (sim.block_id, user)
        if ext_params is None or key not in ext_params:
            raise ValueError(f"no imported mixture parameters for block {sim.block_id} user {user}")
        return external_gmm_demod(data, spec, ext_params[key])
    raise ValueError(f"unknown demod {cfg.demod!r}")


def _load_code(cfg: ExperimentConfig) -> codec_mod.LinearCode | None:
    return codec_mod.load_alist(cfg.code_path) if cfg.code_path else None


def run_experiment(cfg: ExperimentConfig, params_path=None) -> list[MetricRecord]:
    """Simulate every (snr, block) cell and aggregate one record per SNR."""
    cfg.validate()
    spec = build(cfg.constellation)
    code = _load_code(cfg)
    ext_params = None
    if cfg.demod == "pfen":
        source = params_path
        if source is None:
            if not cfg.pfen_dir:
                raise ValueError("demod 'pfen' needs pfen_dir or an explicit parameter file")
            source = f"{cfg.pfen_dir.rstrip('/')}/params.jsonl"
        ext_params = import_gmm_params(source)

    records = []
    for snr_idx, snr in enumerate(cfg.snr_db):
        frames = []
        sym_err = sym_tot = 0
        bit_err = bit_tot = 0
        coded_err = coded_tot = 0
        cw_ok = cw_tot = 0
        for block in range(cfg.blocks):
            sim = simulate_block(cfg, spec, snr_idx, block, code)
            for user in range(cfg.k):
                frame = demodulate_user(cfg, spec, sim, user, ext_params)
                frames.append(frame)
                _, data = user_signals(sim, user)
                decisions = ml_decide_many(spec, data.y)
                sym_err += int(np.sum(decisions != data.q))
                sym_tot += data.q.size
                hard = (frame.llrs > 0).astype(np.int8)
                bit_err += int(np.sum(hard != frame.bits))
                bit_tot += frame.bits.size
                if code is not None:
                    n_cw = (cfg.ld * spec.bits_per_symbol) // code.n
                    # decoder wants positive LLR to favour bit 0
                    dec_in = -frame.llrs.ravel()[:n_cw * code.n].reshape(n_cw, code.n)
                    hat, _, _ = codec_mod.bp_decode(code, dec_in, cfg.bp_max_iter)
                    msg = codec_mod.extract_message(code, hat)
                    truth = sim.info_bits[user]
                    word_good = np.all(msg == truth, axis=1)
                    cw_ok += int(word_good.sum())
                    cw_tot += n_cw
                    coded_err += int(np.sum(msg != truth))
                    coded_tot += truth.size

        mi = mutual_information(frames)
        if mi < 0.0:
            warnings.warn(f"negative mutual information {mi:.4f} at {snr} dB; "
                          "soft outputs look miscalibrated")
        if code is not None:
            ber_coded = coded_err / coded_tot
            se = code.rate * spec.bits_per_symbol * cw_ok / max(cw_tot, 1)
            blocks_ok, blocks_total = cw_ok, cw_tot
        else:
            ber_coded = None
            se = None
            blocks_ok, blocks_total = cfg.blocks, cfg.blocks
        records.append(MetricRecord(
            snr_db=snr, precoder=cfg.precoder, demod=cfg.demod, lp=cfg.lp, ld=cfg.ld,
            mi=max(mi, 0.0), ser=sym_err / sym_tot, ber_uncoded=bit_err / bit_tot,
            ber_coded=ber_coded, se=se, blocks_ok=blocks_ok, blocks_total=blocks_total,
            seed=cfg.seed))
    return records


def _sets_to_json(sets: dict[str, np.ndarray]) -> dict:
    return {key: np.round(val, 9).tolist() for key, val in sets.items()}


def export_pilot_sets(cfg: ExperimentConfig, path=None) -> str:
    """Write the pooled pilot sets of every (block, user) as JSON lines.

    Line schema: block_id, user, snr_db, optional gamma_bar (rescaled blocks
    only) and sets {TI, TC, TL} of [re, im] pairs; PSK lines carry only TC.
    With cfg.noise_free the sets hold noise-free signals, and with
    cfg.include_data a parallel data_sets field is added; both together form
    the training-dataset export consumed by the neural fitter.
    """
    cfg.validate()
    spec = build(cfg.constellation)
    code = _load_code(cfg)
    out = path or cfg.pilots_out
    with open(out, "w") as fh:
        for snr_idx in range(len(cfg.snr_db)):
            for block in range(cfg.blocks):
                sim = simulate_block(cfg, spec, snr_idx, block, code)
                signal = sim.y_free if cfg.noise_free else sim.y
                for user in range(cfg.k):
                    pilots = LabeledSignals(signal[user, :sim.lp], sim.q[user, :sim.lp])
                    sets = build_pilot_sets(pilots, spec, gamma_bar=sim.gamma_bar)
                    line = {
                        "block_id": sim.block_id,
                        "user": user,
                        "snr_db": sim.snr_db,
                        "sets": _sets_to_json(sets.sets),
                    }
                    if sim.gamma_bar is not None:
                        line["gamma_bar"] = sim.gamma_bar
                    if cfg.include_data:
                        data = LabeledSignals(signal[user, sim.lp:], sim.q[user, sim.lp:])
                        dsets = build_pilot_sets(data, spec, gamma_bar=sim.gamma_bar)
                        line["data_sets"] = _sets_to_json(dsets.sets)
                    fh.write(json.dumps(line) + "\n")
    return out


def import_gmm_params(path) -> dict[tuple[int, int], dict[str, GmmParams]]:
    """Read parameter lines {block_id, user, P_I?, P_C?, P_L?} into a lookup.

    Every present parameter block is validated; malformed lines raise with
    the line number.
    """
    table: dict[tuple[int, int], dict[str, GmmParams]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
                key = (int(payload["block_id"]), int(payload["user"]))
                models = {}
                for field, set_key in _FIELD_SET.items():
                    if field in payload:
                        models[set_key] = GmmParams.from_dict(payload[field])
                if not models:
                    raise ValueError("no parameter fields present")
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad parameter line: {exc}") from None
            table[key] = models
    return table


def run_to_csv(cfg: ExperimentConfig, params_path=None) -> str:
    records = run_experiment(cfg, params_path=params_path)
    write_csv(records, cfg.out)
    return cfg.out
