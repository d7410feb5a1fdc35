"""Training loop: fit the feature extractors to exported pilot/data sets.

The loss for a class is the mean negative log likelihood of that class's
noisy data points under the mixture predicted from the noisy pilot set of
the same line, so the network learns to read distribution shape off pilots
in a way that generalizes to the data segment.  One Adam step per iteration
covers every class; the learning rate decays exponentially from lr_start to
lr_final across the run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import build_banks, check_training_records
from .model import DEFAULT_COMPONENTS, PilotNet, build_net, mixture_nll, save_net


@dataclass
class TrainSettings:
    iterations: int = 90000
    batch: int = 32
    lr_start: float = 1e-4
    lr_final: float = 1e-6
    components: int = DEFAULT_COMPONENTS
    seed: int = 0
    data_chunk: int = 512
    log_every: int = 500

    def validate(self) -> None:
        if self.iterations < 1 or self.batch < 1 or self.components < 1:
            raise ValueError("iterations, batch and components must be positive")
        if not (0.0 < self.lr_final <= self.lr_start):
            raise ValueError("need 0 < lr_final <= lr_start")


def _lr_at(step: int, settings: TrainSettings) -> float:
    if settings.iterations == 1:
        return settings.lr_start
    frac = step / (settings.iterations - 1)
    return settings.lr_start * (settings.lr_final / settings.lr_start) ** frac


def train(records, settings: TrainSettings, checkpoint_path=None,
          progress=None) -> tuple[PilotNet, list[float]]:
    """Fits a net to the records, returns it with the per-log loss history.

    checkpoint_path, when given, receives the final model and also the last
    healthy state if the loss turns non-finite (training then aborts with
    an error so a bad run cannot be mistaken for a good one).
    """
    settings.validate()
    width, classes = check_training_records(records)
    banks = build_banks(records, settings.seed, data_chunk=settings.data_chunk)
    net = build_net(classes, width, settings.components, seed=settings.seed)
    for ext in net.extractors.values():
        ext.train()
    optim = torch.optim.Adam(net.parameters(), lr=settings.lr_start)
    history = []
    for step in range(settings.iterations):
        for group in optim.param_groups:
            group["lr"] = _lr_at(step, settings)
        optim.zero_grad()
        total = 0.0
        for cls in classes:
            pilots, data = banks[cls].draw(settings.batch)
            raw = net.extractors[cls](torch.from_numpy(pilots))
            loss = mixture_nll(raw, torch.from_numpy(data))
            loss.backward()
            total += float(loss.detach())
        if not np.isfinite(total):
            if checkpoint_path is not None:
                save_net(net, checkpoint_path)
            raise RuntimeError(f"loss became non-finite at iteration {step}, "
                               "aborting with the last checkpoint")
        optim.step()
        if step % settings.log_every == 0 or step == settings.iterations - 1:
            history.append(total / len(classes))
            if progress is not None:
                progress(step, history[-1])
    net.eval()
    if checkpoint_path is not None:
        save_net(net, checkpoint_path)
    return net, history
