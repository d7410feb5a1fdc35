"""Flat key=value experiment configuration.

Files hold one ``key = value`` pair per line; ``#`` starts a comment, blank
lines are ignored.  Unknown keys and malformed values raise immediately so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

PSK_IDS = ("psk2", "psk4", "psk8", "psk16", "psk32")
QAM_IDS = ("qam16", "qam64")
PRECODERS = ("zf", "cisb")
MODES = ("wr", "wor")
DEMODS = ("gaus", "mgaus", "gmm", "pfen")


@dataclass
class ExperimentConfig:
    constellation: str = "psk8"
    precoder: str = "cisb"
    mode: str = "wr"
    demod: str = "gmm"
    n: int = 8
    k: int = 8
    snr_db: tuple = (10.0, 20.0, 30.0)
    lp: int = 1024
    ld: int = 2048
    blocks: int = 10
    seed: int = 1
    em_components: int = 5
    em_max_iter: int = 200
    em_tol: float = 1e-6
    em_seed: int = 0
    code_path: str = ""
    bp_max_iter: int = 50
    pfen_dir: str = ""
    out: str = "results.csv"
    pilots_out: str = "pilots.jsonl"
    noise_free: bool = False
    include_data: bool = False

    def validate(self) -> None:
        if self.constellation not in PSK_IDS + QAM_IDS:
            raise ValueError(f"unknown constellation {self.constellation!r}")
        if self.precoder not in PRECODERS:
            raise ValueError(f"unknown precoder {self.precoder!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.demod not in DEMODS:
            raise ValueError(f"unknown demod {self.demod!r}")
        if self.mode == "wor" and self.constellation not in PSK_IDS:
            raise ValueError("mode 'wor' needs a PSK constellation; "
                             "QAM demodulation requires the common amplitude reference")
        if self.demod == "mgaus" and self.constellation not in QAM_IDS:
            raise ValueError("demod 'mgaus' needs a QAM constellation")
        if self.k > self.n:
            raise ValueError(f"need k <= n, got k={self.k} n={self.n}")
        if min(self.n, self.k) < 1:
            raise ValueError("n and k must be positive")
        if self.lp < 1 or self.ld < 1:
            raise ValueError("lp and ld must be positive")
        if self.blocks < 1:
            raise ValueError("blocks must be positive")
        if not self.snr_db:
            raise ValueError("snr_db must list at least one value")
        if self.em_components < 1:
            raise ValueError("em_components must be positive")


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _convert(name: str, kind, raw: str):
    if kind is bool or name in ("noise_free", "include_data"):
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if name == "snr_db":
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(float(p) for p in parts)
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw.strip()


def parse_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    typed = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip().lower()
        if key not in kinds:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _convert(key, typed[key], raw.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg
