"""Pick-conditioned place policy network.

A small hourglass encoder-decoder over (depth, mask, pick-heatmap) grids.
The graph embedding is fused twice: a squeeze-excitation style sigmoid gate
on bottleneck channels, and per-decoder-level tiled concatenation mixed back
by 1x1 convolutions.  Output is an unnormalized per-pixel place probability
map.  Forward and backward are hand-written NumPy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .actions import encode_pick
from .errors import InvalidArgumentError, NumericalFailureError, TrainingFailedError

MAGIC = b"SSFP"
FORMAT_VERSION = 1

DEPTH_GAIN = 20.0  # meters -> input feature scale


@dataclass
class PolicyConfig:
    grid: int = 32
    sigma: float = 2.0
    channels: tuple[int, int, int] = (8, 16, 32)
    bottleneck: int = 128
    embed: int = 64
    se_hidden: int = 64
    lateral: int = 8


@dataclass
class PolicyInput:
    """One policy query: observation channels, pick encoding, embedding."""

    depth: np.ndarray  # (G, G) meters
    mask: np.ndarray  # (G, G) bool
    pick_heatmap: np.ndarray  # (G, G)
    embedding: np.ndarray  # (d_g,)

    def validate(self, cfg: PolicyConfig) -> None:
        g = cfg.grid
        for name in ("depth", "mask", "pick_heatmap"):
            if getattr(self, name).shape != (g, g):
                raise InvalidArgumentError(f"{name} must be {g}x{g}")
        hs = float(self.pick_heatmap.sum())
        if not (np.isfinite(hs) and hs > 0):
            raise InvalidArgumentError("pick heatmap must sum to a positive finite value")
        if self.embedding.shape != (cfg.embed,) or not np.isfinite(self.embedding).all():
            raise InvalidArgumentError("embedding has wrong width or non-finite values")


@dataclass
class PlaceMap:
    probabilities: np.ndarray  # (G, G) in (0, 1)
    pick_px: tuple[int, int]


@dataclass
class PolicyModel:
    config: PolicyConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, config: PolicyConfig | None = None, seed: int = 0, zero: bool = False,
               dtype=np.float64) -> "PolicyModel":
        cfg = config or PolicyConfig()
        rng = np.random.default_rng(seed)
        c1, c2, c3 = cfg.channels
        cb, dg, sh, lat = cfg.bottleneck, cfg.embed, cfg.se_hidden, cfg.lateral
        p: dict[str, np.ndarray] = {}

        def conv(name, cin, cout, k=3):
            fan = k * k * cin
            p[name + "_w"] = np.zeros((fan, cout)) if zero else nn.xavier(rng, fan, cout, (fan, cout))
            p[name + "_b"] = np.zeros(cout)

        def aff(name, cin, cout):
            p[name + "_w"] = np.zeros((cin, cout)) if zero else nn.xavier(rng, cin, cout, (cin, cout))
            p[name + "_b"] = np.zeros(cout)

        conv("enc1", 3, c1)
        conv("enc2", c1, c2)
        conv("enc3", c2, c3)
        conv("bott", c3, cb)
        aff("se_proj", dg, cb)
        aff("se_h", 2 * cb, sh)
        aff("se_gate", sh, cb)
        conv("dec3", cb + c3, c3)
        aff("lat3", dg, lat)
        conv("mix3", c3 + lat, c3, k=1)
        conv("dec2", c3 + c2, c2)
        aff("lat2", dg, lat)
        conv("mix2", c2 + lat, c2, k=1)
        conv("dec1", c2 + c1, c1)
        aff("lat1", dg, lat)
        conv("mix1", c1 + lat, c1, k=1)
        conv("head", c1, 1, k=1)
        if dtype is not np.float64:
            p = {k: v.astype(dtype) for k, v in p.items()}
        return cls(config=cfg, params=p)

    @property
    def dtype(self):
        return self.params["head_w"].dtype

    def param_names(self) -> list[str]:
        return sorted(self.params)


def _tile(vec: np.ndarray, h: int, w: int) -> np.ndarray:
    """(B, C) -> (B, h, w, C)."""
    return np.broadcast_to(vec[:, None, None, :], (vec.shape[0], h, w, vec.shape[1])).copy()


def policy_forward_batch(model: PolicyModel, x: np.ndarray, g: np.ndarray):
    """x (B, G, G, 3), g (B, d_g) -> (logits (B, G, G), cache)."""
    p = model.params
    cache: dict = {"x": x, "g": g}

    def conv3(name, inp):
        y, cols = nn.conv3x3_forward(inp, p[name + "_w"], p[name + "_b"])
        out = np.tanh(y)
        cache[name + "_cols"], cache[name + "_shape"] = cols, inp.shape
        cache[name + "_out"] = out
        return out

    def mix1(name, inp):
        # Eq.6-style lateral fusion: concat then linear 1x1 channel mixing
        out = nn.conv1x1_forward(inp, p[name + "_w"], p[name + "_b"])
        cache[name + "_in"] = inp
        return out

    e1 = conv3("enc1", x)
    p1 = nn.avgpool2_forward(e1)
    e2 = conv3("enc2", p1)
    p2 = nn.avgpool2_forward(e2)
    e3 = conv3("enc3", p2)
    p3 = nn.avgpool2_forward(e3)
    f0 = conv3("bott", p3)

    # bottleneck fusion: embedding-conditioned sigmoid channel gate
    gp = f0.mean(axis=(1, 2))
    gproj = nn.affine_forward(g, p["se_proj_w"], p["se_proj_b"])
    se_in = np.concatenate([gp, gproj], axis=1)
    s = np.tanh(nn.affine_forward(se_in, p["se_h_w"], p["se_h_b"]))
    gate = nn.sigmoid(nn.affine_forward(s, p["se_gate_w"], p["se_gate_b"]))
    f0g = f0 * gate[:, None, None, :]
    cache.update(f0=f0, gp=gp, gproj=gproj, se_in=se_in, s=s, gate=gate)

    def decoder(level, below, skip):
        up = nn.upsample2_forward(below)
        dc = np.concatenate([up, skip], axis=3)
        dh = conv3(f"dec{level}", dc)
        lat = nn.affine_forward(g, p[f"lat{level}_w"], p[f"lat{level}_b"])
        lt = _tile(lat, dh.shape[1], dh.shape[2])
        dm = mix1(f"mix{level}", np.concatenate([dh, lt], axis=3))
        cache[f"up{level}_shape"] = below.shape
        return dm

    d3 = decoder(3, f0g, e3)
    d2 = decoder(2, d3, e2)
    d1 = decoder(1, d2, e1)
    logits = nn.conv1x1_forward(d1, p["head_w"], p["head_b"])[..., 0]
    cache["head_in"] = d1
    if not np.isfinite(logits).all():
        raise NumericalFailureError("non-finite activations in policy forward")
    return logits, cache


def policy_backward(model: PolicyModel, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    p = model.params
    cfg = model.config
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    dd1, dw, db = nn.conv1x1_backward(cache["head_in"], p["head_w"], dlogits[..., None])
    grads["head_w"], grads["head_b"] = dw, db

    def mix1_back(name, dout):
        dx, dw, db = nn.conv1x1_backward(cache[name + "_in"], p[name + "_w"], dout)
        grads[name + "_w"] += dw
        grads[name + "_b"] += db
        return dx

    def conv3_back(name, dout):
        dpre = dout * (1.0 - cache[name + "_out"] ** 2)
        dx, dw, db = nn.conv3x3_backward(cache[name + "_cols"], cache[name + "_shape"],
                                         p[name + "_w"], dpre)
        grads[name + "_w"] += dw
        grads[name + "_b"] += db
        return dx

    def decoder_back(level, dout, skip_channels):
        dmix_in = mix1_back(f"mix{level}", dout)
        ddh = dmix_in[..., : dmix_in.shape[-1] - cfg.lateral]
        dlat_tiled = dmix_in[..., dmix_in.shape[-1] - cfg.lateral :]
        dlat = dlat_tiled.sum(axis=(1, 2))
        grads[f"lat{level}_w"] += cache["g"].T @ dlat
        grads[f"lat{level}_b"] += dlat.sum(axis=0)
        ddc = conv3_back(f"dec{level}", ddh)
        dup = ddc[..., : ddc.shape[-1] - skip_channels]
        dskip = ddc[..., ddc.shape[-1] - skip_channels :]
        dbelow = nn.upsample2_backward(dup)
        return dbelow, dskip

    c1, c2, c3 = cfg.channels
    dd2, dskip1 = decoder_back(1, dd1, c1)
    dd3, dskip2 = decoder_back(2, dd2, c2)
    df0g, dskip3 = decoder_back(3, dd3, c3)

    # SE gate: f0 appears in the product and in the pooled squeeze input
    f0, gate = cache["f0"], cache["gate"]
    df0 = df0g * gate[:, None, None, :]
    dgate = (df0g * f0).sum(axis=(1, 2))
    da_gate = dgate * gate * (1.0 - gate)
    grads["se_gate_w"] += cache["s"].T @ da_gate
    grads["se_gate_b"] += da_gate.sum(axis=0)
    ds = da_gate @ p["se_gate_w"].T
    da_h = ds * (1.0 - cache["s"] ** 2)
    grads["se_h_w"] += cache["se_in"].T @ da_h
    grads["se_h_b"] += da_h.sum(axis=0)
    dse_in = da_h @ p["se_h_w"].T
    dgp = dse_in[:, : cfg.bottleneck]
    dgproj = dse_in[:, cfg.bottleneck :]
    grads["se_proj_w"] += cache["g"].T @ dgproj
    grads["se_proj_b"] += dgproj.sum(axis=0)
    h, w = f0.shape[1], f0.shape[2]
    df0 += dgp[:, None, None, :] / (h * w)

    dp3 = conv3_back("bott", df0)
    de3 = nn.avgpool2_backward(dp3, cache["enc3_out"].shape) + dskip3
    dp2 = conv3_back("enc3", de3)
    de2 = nn.avgpool2_backward(dp2, cache["enc2_out"].shape) + dskip2
    dp1 = conv3_back("enc2", de2)
    de1 = nn.avgpool2_backward(dp1, cache["enc1_out"].shape) + dskip1
    conv3_back("enc1", de1)
    return grads


def build_input_channels(depth: np.ndarray, mask: np.ndarray, heatmap: np.ndarray) -> np.ndarray:
    return np.stack([depth * DEPTH_GAIN, mask.astype(np.float64), heatmap], axis=-1)


def _probabilities(logits: np.ndarray) -> np.ndarray:
    """Strictly-interior (0, 1) probabilities in float64."""
    return nn.sigmoid(np.clip(logits.astype(np.float64), -30.0, 30.0))


def forward_place(model: PolicyModel, inp: PolicyInput) -> PlaceMap:
    """Place probability map for one pick-conditioned query."""
    inp.validate(model.config)
    x = build_input_channels(inp.depth, inp.mask, inp.pick_heatmap)[None].astype(model.dtype)
    logits, _ = policy_forward_batch(model, x, inp.embedding[None].astype(model.dtype))
    flat = int(np.argmax(inp.pick_heatmap))
    pick = (flat % model.config.grid, flat // model.config.grid)
    return PlaceMap(probabilities=_probabilities(logits[0]), pick_px=pick)


def forward_place_batch(model: PolicyModel, depth: np.ndarray, mask: np.ndarray,
                        heatmaps: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    """Shared-observation batch: one map per pick heatmap, (B, G, G)."""
    b = heatmaps.shape[0]
    base = build_input_channels(depth, mask, np.zeros_like(depth))
    x = np.repeat(base[None], b, axis=0).astype(model.dtype)
    x[..., 2] = heatmaps
    g = np.repeat(embedding[None], b, axis=0).astype(model.dtype)
    logits, _ = policy_forward_batch(model, x, g)
    return _probabilities(logits)


@dataclass
class PolicySample:
    """One supervised step: observation channels at policy resolution, the
    demonstrated pick (conditioning) and place (target), plus the embedding."""

    depth: np.ndarray
    mask: np.ndarray
    pick_px: tuple[int, int]
    place_px: tuple[int, int]
    embedding: np.ndarray


@dataclass
class PolicyTrainConfig:
    lr: float = 1e-4  # adaptive-moment step size
    batch_size: int = 32
    iterations: int = 3000
    sigma: float = 2.0
    seed: int = 0
    gaussian_targets: bool = False  # one-hot targets by default
    target_sigma: float = 1.0
    log_every: int = 200
    float32: bool = True  # train in single precision (gradient checks run float64)


def _targets(samples: list[PolicySample], idxs, cfg: PolicyTrainConfig, grid: int,
             dtype=np.float64) -> np.ndarray:
    t = np.zeros((len(idxs), grid, grid), dtype=dtype)
    for row, k in enumerate(idxs):
        u, v = samples[k].place_px
        if cfg.gaussian_targets:
            t[row] = encode_pick((u, v), cfg.target_sigma, grid)
        else:
            t[row, v, u] = 1.0
    return t


def _batch_arrays(samples: list[PolicySample], idxs, cfg: PolicyTrainConfig, model: PolicyModel):
    grid = model.config.grid
    xs = np.empty((len(idxs), grid, grid, 3), dtype=model.dtype)
    gs = np.empty((len(idxs), model.config.embed), dtype=model.dtype)
    for row, k in enumerate(idxs):
        s = samples[k]
        heat = encode_pick(s.pick_px, cfg.sigma, grid)
        xs[row] = build_input_channels(s.depth, s.mask, heat)
        gs[row] = s.embedding
    return xs, gs


def policy_loss(model: PolicyModel, samples: list[PolicySample], idxs,
                cfg: PolicyTrainConfig) -> tuple[float, dict[str, np.ndarray]]:
    xs, gs = _batch_arrays(samples, idxs, cfg, model)
    targets = _targets(samples, idxs, cfg, model.config.grid, model.dtype)
    logits, cache = policy_forward_batch(model, xs, gs)
    loss, dlogits = nn.bce_with_logits(logits, targets)
    grads = policy_backward(model, cache, dlogits)
    return loss, grads


def train_policy(samples: list[PolicySample], cfg: PolicyTrainConfig | None = None,
                 model_cfg: PolicyConfig | None = None,
                 log_fn=None) -> tuple[PolicyModel, list[float]]:
    """Gradient descent with adaptive moment estimation on per-pixel BCE
    against one-hot place maps; returns model plus loss curve."""
    if not samples:
        raise InvalidArgumentError("empty demonstration dataset")
    cfg = cfg or PolicyTrainConfig()
    model = PolicyModel.create(model_cfg, seed=cfg.seed,
                               dtype=np.float32 if cfg.float32 else np.float64)
    opt = nn.Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    curve: list[float] = []
    for it in range(cfg.iterations):
        idxs = rng.integers(0, len(samples), size=min(cfg.batch_size, len(samples)))
        loss, grads = policy_loss(model, samples, idxs, cfg)
        if not np.isfinite(loss):
            raise TrainingFailedError("policy training diverged: non-finite loss")
        opt.step(grads)
        curve.append(loss)
        if log_fn and cfg.log_every and it % cfg.log_every == 0:
            log_fn(it, loss)
    return model, curve


def policy_gradient_check(model: PolicyModel, samples: list[PolicySample],
                          cfg: PolicyTrainConfig | None = None,
                          samples_per_block: int = 2, seed: int = 0) -> float:
    cfg = cfg or PolicyTrainConfig()
    idxs = list(range(min(2, len(samples))))
    return nn.gradient_check(lambda: policy_loss(model, samples, idxs, cfg),
                             model.params, samples_per_block=samples_per_block, seed=seed)


def save_policy_model(path, model: PolicyModel) -> None:
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIIIIIf", FORMAT_VERSION, cfg.grid, *cfg.channels,
                             cfg.bottleneck, cfg.embed, cfg.se_hidden, cfg.lateral, cfg.sigma))
        for name in model.param_names():
            arr = model.params[name].astype("<f4")
            fh.write(struct.pack("<I", arr.size))
            fh.write(arr.tobytes())


def load_policy_model(path) -> PolicyModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise InvalidArgumentError(f"not a policy model file (magic {magic!r})")
        vals = struct.unpack("<IIIIIIIIf", fh.read(36))
        if vals[0] != FORMAT_VERSION:
            raise InvalidArgumentError(f"unsupported policy model version {vals[0]}")
        cfg = PolicyConfig(grid=vals[1], channels=(vals[2], vals[3], vals[4]),
                           bottleneck=vals[5], embed=vals[6], se_hidden=vals[7],
                           lateral=vals[8], sigma=float(vals[9]))
        model = PolicyModel.create(cfg, zero=True)
        for name in model.param_names():
            (size,) = struct.unpack("<I", fh.read(4))
            expected = model.params[name]
            if size != expected.size:
                raise InvalidArgumentError(f"parameter block {name} has wrong size")
            flat = np.frombuffer(fh.read(4 * size), dtype="<f4").astype(np.float64)
            model.params[name] = flat.reshape(expected.shape)
    return model
