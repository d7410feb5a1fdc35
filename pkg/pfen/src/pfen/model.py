"""Set-to-parameters network: attention encoder plus a mixture property head.

The encoder is an induced-set-attention stack.  A learned inducing matrix
E_1 (16 x 32) attends over the embedded input set, the set attends back over
the induced summary, and a second learned matrix E_2 (one row per mixture
component) queries the result, so the output always has one row per
component no matter how many points came in.  Every attention step reduces
over set rows with softmax weights, which makes the whole pipeline invariant
to input row order.

The property head turns each 6-wide output row into one mixture component:
softmax across rows for the weights, two raw entries for the mean, softplus
for the diagonal variances, and a tanh-bounded correlation for the
off-diagonal, so any finite input yields a valid positive-definite mixture.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import torch
from torch import nn

ATT_DIM = 32
ATT_HEADS = 4
INDUCING_ROWS = 16
DEFAULT_COMPONENTS = 5
PARAMS_PER_COMPONENT = 6

# guards so float rounding cannot produce a singular covariance: tanh
# saturates to exactly 1.0 for |x| > 19 in float64, and softplus underflows
# to 0.0 for very negative x
RHO_LIMIT = 1.0 - 1e-6
VAR_FLOOR = 1e-12

SCHEMA_VERSION = 1


class SetAttentionBlock(nn.Module):
    """Queries attend over a key/value set, with residuals and layer norm."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.att = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ff = nn.Linear(dim, dim)
        self.norm_att = nn.LayerNorm(dim)
        self.norm_ff = nn.LayerNorm(dim)

    def forward(self, queries: torch.Tensor, keyvalues: torch.Tensor) -> torch.Tensor:
        attended, _ = self.att(queries, keyvalues, keyvalues, need_weights=False)
        h = self.norm_att(queries + attended)
        return self.norm_ff(h + torch.relu(self.ff(h)))


class FeatureExtractor(nn.Module):
    """Maps a point set (batch, length, width) to (batch, components, 6).

    width is 2 for plain (re, im) rows and 3 when a common gain is appended
    to every row.  Output rows are one per mixture component and do not
    depend on input row order.
    """

    def __init__(self, input_width: int, components: int = DEFAULT_COMPONENTS,
                 dim: int = ATT_DIM, heads: int = ATT_HEADS,
                 inducing: int = INDUCING_ROWS):
        super().__init__()
        if input_width not in (2, 3):
            raise ValueError(f"input width must be 2 or 3, got {input_width}")
        self.input_width = input_width
        self.components = components
        self.embed = nn.Linear(input_width, dim)
        self.inducing = nn.Parameter(torch.empty(inducing, dim))
        self.seeds = nn.Parameter(torch.empty(components, dim))
        nn.init.xavier_uniform_(self.inducing)
        nn.init.xavier_uniform_(self.seeds)
        self.block_induce = SetAttentionBlock(dim, heads)
        self.block_return = SetAttentionBlock(dim, heads)
        self.block_pool = SetAttentionBlock(dim, heads)
        self.head = nn.Linear(dim, PARAMS_PER_COMPONENT)
        # start the variance channels near softplus^-1(0.01) so the first
        # steps are not spent escaping ln(2)-wide components
        with torch.no_grad():
            self.head.bias[3] = -4.6
            self.head.bias[5] = -4.6

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        if points.ndim != 3 or points.shape[-1] != self.input_width:
            raise ValueError(
                f"expected (batch, length, {self.input_width}), got {tuple(points.shape)}")
        if points.shape[1] < 1:
            raise ValueError("need at least one point per set")
        x = self.embed(points)
        batch = x.shape[0]
        induced = self.block_induce(self.inducing.expand(batch, -1, -1), x)
        spread = self.block_return(x, induced)
        pooled = self.block_pool(self.seeds.expand(batch, -1, -1), spread)
        return self.head(pooled)


def property_head(raw: torch.Tensor):
    """Turns (..., components, 6) raw rows into mixture parameters.

    Returns (weights, means, covs) with shapes (..., n), (..., n, 2) and
    (..., n, 2, 2).  Weights come from a softmax over the component axis, so
    they always sum to 1; variances go through softplus with a small floor
    and the off-diagonal is sqrt(v1 v2) times a bounded correlation, so the
    covariance determinant stays strictly positive for any finite input.
    An all-zero input row gives weight 1/n, zero mean and ln(2) variances.
    """
    if raw.shape[-1] != PARAMS_PER_COMPONENT:
        raise ValueError(f"expected trailing width {PARAMS_PER_COMPONENT}, got {raw.shape[-1]}")
    weights = torch.softmax(raw[..., 0], dim=-1)
    means = raw[..., 1:3]
    var_re = nn.functional.softplus(raw[..., 3]) + VAR_FLOOR
    var_im = nn.functional.softplus(raw[..., 5]) + VAR_FLOOR
    rho = torch.tanh(raw[..., 4]).clamp(-RHO_LIMIT, RHO_LIMIT)
    cross = torch.sqrt(var_re * var_im) * rho
    row_a = torch.stack([var_re, cross], dim=-1)
    row_b = torch.stack([cross, var_im], dim=-1)
    covs = torch.stack([row_a, row_b], dim=-2)
    return weights, means, covs


def mixture_log_density(weights, means, covs, points):
    """Log density of (batch, length, 2) points under per-batch mixtures.

    weights (batch, n), means (batch, n, 2), covs (batch, n, 2, 2).  The 2x2
    inverse is closed form; components combine through logsumexp.
    """
    diff = points.unsqueeze(-2) - means.unsqueeze(-3)
    v_re = covs[..., 0, 0].unsqueeze(-2)
    v_im = covs[..., 1, 1].unsqueeze(-2)
    v_x = covs[..., 0, 1].unsqueeze(-2)
    det = v_re * v_im - v_x * v_x
    dx, dy = diff[..., 0], diff[..., 1]
    quad = (v_im * dx * dx - 2.0 * v_x * dx * dy + v_re * dy * dy) / det
    log_norm = torch.log(torch.tensor(2.0 * torch.pi, dtype=points.dtype)) + 0.5 * torch.log(det)
    log_comp = torch.log(weights).unsqueeze(-2) - 0.5 * quad - log_norm
    return torch.logsumexp(log_comp, dim=-1)


def mixture_nll(raw: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Mean negative log likelihood of points under property_head(raw)."""
    weights, means, covs = property_head(raw)
    return -mixture_log_density(weights, means, covs, points).mean()


@dataclass
class PilotNet:
    """A feature extractor per region class plus the shared shape metadata."""

    extractors: dict
    input_width: int
    components: int

    def classes(self):
        return sorted(self.extractors)

    def eval(self):
        for ext in self.extractors.values():
            ext.eval()
        return self

    def parameters(self):
        for ext in self.extractors.values():
            yield from ext.parameters()

    def params_for(self, cls: str, points: torch.Tensor):
        """Mixture parameters for one batch of sets of the given class."""
        if cls not in self.extractors:
            raise KeyError(f"model has no extractor for class {cls!r}, "
                           f"knows {self.classes()}")
        return property_head(self.extractors[cls](points))


def build_net(classes, input_width: int, components: int = DEFAULT_COMPONENTS,
              seed: int | None = None) -> PilotNet:
    if seed is not None:
        torch.manual_seed(seed)
    extractors = {cls: FeatureExtractor(input_width, components) for cls in sorted(classes)}
    return PilotNet(extractors=extractors, input_width=input_width, components=components)


def save_net(net: PilotNet, path) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "input_width": net.input_width,
        "components": net.components,
        "state": {cls: ext.state_dict() for cls, ext in net.extractors.items()},
    }
    with open(path, "wb") as fh:
        torch.save(payload, fh)


def load_net(path) -> PilotNet:
    with open(path, "rb") as fh:
        payload = torch.load(io.BytesIO(fh.read()), map_location="cpu")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"model file {path} has schema version {version!r}, "
                         f"this build reads {SCHEMA_VERSION}")
    net = build_net(payload["state"].keys(), payload["input_width"], payload["components"])
    for cls, state in payload["state"].items():
        net.extractors[cls].load_state_dict(state)
    return net.eval()
