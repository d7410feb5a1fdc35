"""Training data handling for the pilot feature network.

The upstream simulator exports pooled pilot and data sets as JSON lines, one
line per channel block and user, with noise left out so one stored set
serves every noise draw.  Records keep the noise-free coordinates; the
batcher adds fresh circular Gaussian noise each time a batch is drawn.  The
pooling transform upstream is a rotation or reflection up to a translation,
which leaves that noise law unchanged, so adding noise after the transform
matches adding it before.

Per-line noise scale: sigma^2 = 10^(-snr_db/10) on the complex signal, and
lines carrying a common gain (rescaled blocks) divide sigma by that gain
because the receiver divides the whole signal by it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CLASS_NAMES = ("TI", "TC", "TL")


@dataclass
class SetRecord:
    """One exported line: pooled noise-free sets for a block and user."""

    block_id: int
    user: int
    snr_db: float
    gamma_bar: float | None
    sets: dict
    data_sets: dict

    @property
    def noise_sigma(self) -> float:
        sigma = 10.0 ** (-self.snr_db / 20.0)
        if self.gamma_bar is not None:
            sigma /= self.gamma_bar
        return sigma

    @property
    def input_width(self) -> int:
        return 2 if self.gamma_bar is None else 3


def _coords(obj, where: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValueError(f"{where}: expected an (L, 2) coordinate list, got shape {arr.shape}")
    return arr


def parse_record(line: str, where: str) -> SetRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{where}: not valid JSON ({exc})") from None
    for key in ("block_id", "user", "snr_db", "sets"):
        if key not in obj:
            raise ValueError(f"{where}: missing field {key!r}")
    sets = {}
    for cls, pts in obj["sets"].items():
        if cls not in CLASS_NAMES:
            raise ValueError(f"{where}: unknown set class {cls!r}")
        sets[cls] = _coords(pts, f"{where} sets[{cls}]")
    data_sets = {}
    for cls, pts in obj.get("data_sets", {}).items():
        if cls not in CLASS_NAMES:
            raise ValueError(f"{where}: unknown set class {cls!r}")
        data_sets[cls] = _coords(pts, f"{where} data_sets[{cls}]")
    if data_sets and sorted(data_sets) != sorted(sets):
        raise ValueError(f"{where}: data classes {sorted(data_sets)} do not match "
                         f"pilot classes {sorted(sets)}")
    gamma = obj.get("gamma_bar")
    return SetRecord(block_id=int(obj["block_id"]), user=int(obj["user"]),
                     snr_db=float(obj["snr_db"]),
                     gamma_bar=None if gamma is None else float(gamma),
                     sets=sets, data_sets=data_sets)


def load_records(path) -> list[SetRecord]:
    """Reads one JSONL export file, or every *.jsonl file in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
        if not files:
            raise ValueError(f"no *.jsonl files in {path}")
    else:
        files = [path]
    records = []
    for file in files:
        with open(file) as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    records.append(parse_record(line, f"{file}:{lineno}"))
    if not records:
        raise ValueError(f"{path} holds no records")
    return records


def check_training_records(records) -> tuple[int, list[str]]:
    """Validates a record list for training and returns (width, classes).

    Training needs the data segment on every line, and all lines must agree
    on whether a common gain is present and on the classes exported.
    """
    widths = {rec.input_width for rec in records}
    if len(widths) != 1:
        raise ValueError("records mix lines with and without a common gain")
    classes = sorted(records[0].sets)
    for rec in records:
        if not rec.data_sets:
            raise ValueError(f"block {rec.block_id} user {rec.user}: training needs "
                             "the data segment, export with include_data")
        if sorted(rec.sets) != classes:
            raise ValueError(f"block {rec.block_id} user {rec.user}: classes "
                             f"{sorted(rec.sets)} differ from {classes}")
    return widths.pop(), classes


class ClassBank:
    """Stacked per-class arrays for fast noisy batch drawing.

    Set lengths must agree across records within a class, which holds for
    balanced pilot schedules.  Noise is per-coordinate Gaussian with
    variance sigma^2/2, fresh on every draw; inputs get the gain column
    appended after the noise when the records carry one.
    """

    def __init__(self, records, cls: str, rng: np.random.Generator,
                 data_chunk: int = 512):
        lengths = {rec.sets[cls].shape[0] for rec in records}
        if len(lengths) != 1:
            raise ValueError(f"class {cls}: pilot set lengths differ across records "
                             f"({sorted(lengths)}), cannot stack")
        self.cls = cls
        self.rng = rng
        self.data_chunk = data_chunk
        self.pilots = np.stack([rec.sets[cls] for rec in records])
        data_lengths = {rec.data_sets[cls].shape[0] for rec in records}
        if len(data_lengths) != 1:
            raise ValueError(f"class {cls}: data set lengths differ across records")
        self.data = np.stack([rec.data_sets[cls] for rec in records])
        self.sigma = np.array([rec.noise_sigma for rec in records])
        gains = [rec.gamma_bar for rec in records]
        self.gains = None if gains[0] is None else np.array(gains)

    def __len__(self) -> int:
        return self.pilots.shape[0]

    def _noisy(self, stack: np.ndarray, idx: np.ndarray) -> np.ndarray:
        coord_std = self.sigma[idx, None, None] / np.sqrt(2.0)
        return stack[idx] + self.rng.standard_normal(stack[idx].shape) * coord_std

    def draw(self, batch: int):
        """Returns (inputs, data) float32 arrays for one training step.

        inputs is (batch, L, width) noisy pilots, data is a noisy random
        subset of each line's data segment, (batch, data_chunk, 2).
        """
        idx = self.rng.integers(0, len(self), size=batch)
        pilots = self._noisy(self.pilots, idx)
        if self.gains is not None:
            column = np.broadcast_to(self.gains[idx, None, None],
                                     (batch, pilots.shape[1], 1))
            pilots = np.concatenate([pilots, column], axis=2)
        take = min(self.data_chunk, self.data.shape[1])
        cols = self.rng.integers(0, self.data.shape[1], size=(batch, take))
        rows = np.arange(batch)[:, None]
        data = self.data[idx][rows, cols]
        coord_std = self.sigma[idx, None, None] / np.sqrt(2.0)
        data = data + self.rng.standard_normal(data.shape) * coord_std
        return pilots.astype(np.float32), data.astype(np.float32)


def build_banks(records, seed: int, data_chunk: int = 512) -> dict:
    """One ClassBank per exported class, with independent noise streams."""
    _, classes = check_training_records(records)
    banks = {}
    for i, cls in enumerate(classes):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        banks[cls] = ClassBank(records, cls, rng, data_chunk=data_chunk)
    return banks
