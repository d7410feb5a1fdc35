"""Inference: pooled pilot sets in, mixture parameter lines out.

Reads the simulator's pilot export (JSON lines), runs the matching feature
extractor per region class, and writes one parameter line per input line in
the format the simulator imports: P_I, P_C, P_L fields keyed by block_id
and user.  Lines are processed independently; any schema problem is
reported with its line number.
"""

from __future__ import annotations

import json

import numpy as np
import torch

from .data import parse_record
from .model import PilotNet

PARAM_FIELD = {"TI": "P_I", "TC": "P_C", "TL": "P_L"}


def _params_dict(net: PilotNet, cls: str, points: np.ndarray,
                 gamma_bar: float | None) -> dict:
    if gamma_bar is not None:
        column = np.full((points.shape[0], 1), gamma_bar)
        points = np.concatenate([points, column], axis=1)
    batch = torch.from_numpy(points.astype(np.float32)).unsqueeze(0)
    with torch.no_grad():
        weights, means, covs = net.params_for(cls, batch)
    return {
        "weights": weights[0].double().numpy().tolist(),
        "means": means[0].double().numpy().tolist(),
        "covs": covs[0].double().numpy().tolist(),
    }


def infer_line(net: PilotNet, line: str, where: str) -> str:
    record = parse_record(line, where)
    if record.input_width != net.input_width:
        have = "with" if record.input_width == 3 else "without"
        want = "with" if net.input_width == 3 else "without"
        raise ValueError(f"{where}: line comes {have} a common gain but the "
                         f"model was trained {want} one")
    out = {"block_id": record.block_id, "user": record.user}
    for cls, points in sorted(record.sets.items()):
        if cls not in net.extractors:
            raise ValueError(f"{where}: set class {cls!r} has no extractor in "
                             f"this model (knows {net.classes()})")
        out[PARAM_FIELD[cls]] = _params_dict(net, cls, points, record.gamma_bar)
    return json.dumps(out)


def run_inference(net: PilotNet, pilots_path, params_path) -> int:
    """Converts a whole pilot file, returns the number of lines written."""
    net.eval()
    written = 0
    with open(pilots_path) as src, open(params_path, "w") as dst:
        for lineno, line in enumerate(src, 1):
            if not line.strip():
                continue
            dst.write(infer_line(net, line, f"{pilots_path}:{lineno}") + "\n")
            written += 1
    if written == 0:
        raise ValueError(f"{pilots_path} holds no pilot lines")
    return written
