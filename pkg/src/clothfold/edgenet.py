"""Message-passing edge classifier over visibility graphs.

Infers which candidate (nearby) edges correspond to real mesh connectivity,
and produces a pooled graph embedding consumed by the place policy.  Forward
and backward passes are written out by hand; training fits oracle labels from
the simulator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError, TrainingFailedError
from .graphs import VoxelNodes
from .nn import Adam, bce_with_logits, gradient_check, sigmoid, xavier

MAGIC = b"SSFG"
FORMAT_VERSION = 1

NODE_FEATURES = 4  # relative position (3) + member count (1)
EDGE_FEATURES = 4  # relative offset (3) + distance (1)


@dataclass
class EdgeModelConfig:
    rounds: int = 3
    hidden: int = 32
    embed: int = 64
    feature_scale: float = 50.0  # ~1 / voxel edge length


@dataclass
class EdgeModel:
    config: EdgeModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, config: EdgeModelConfig | None = None, seed: int = 0,
               zero: bool = False) -> "EdgeModel":
        cfg = config or EdgeModelConfig()
        rng = np.random.default_rng(seed)
        h = cfg.hidden
        p: dict[str, np.ndarray] = {}

        def init(name, fan_in, fan_out, shape):
            p[name] = np.zeros(shape) if zero else xavier(rng, fan_in, fan_out, shape)

        init("enc_w", NODE_FEATURES, h, (NODE_FEATURES, h))
        p["enc_b"] = np.zeros(h)
        for k in range(cfg.rounds):
            init(f"msg_w{k}", 2 * h + EDGE_FEATURES, h, (2 * h + EDGE_FEATURES, h))
            p[f"msg_b{k}"] = np.zeros(h)
            init(f"upd_w{k}", 2 * h, h, (2 * h, h))
            p[f"upd_b{k}"] = np.zeros(h)
        init("rd1_w", h + 1, h, (h + 1, h))
        p["rd1_b"] = np.zeros(h)
        init("rd2_w", h, 1, (h, 1))
        p["rd2_b"] = np.zeros(1)
        init("emb_w", h, cfg.embed, (h, cfg.embed))
        p["emb_b"] = np.zeros(cfg.embed)
        return cls(config=cfg, params=p)

    def param_names(self) -> list[str]:
        return sorted(self.params)


def _graph_features(model: EdgeModel, centroids: np.ndarray, counts: np.ndarray,
                    edges: np.ndarray):
    scale = model.config.feature_scale
    rel = (centroids - centroids.mean(axis=0)) * scale
    count_mean = counts.mean()
    x = np.concatenate([rel, (counts / count_mean)[:, None]], axis=1)
    if edges.shape[0]:
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        diff = (centroids[src] - centroids[dst]) * scale
        dist = np.linalg.norm(diff, axis=1, keepdims=True)
        efeat = np.concatenate([diff, dist], axis=1)
        dist_u = dist[: edges.shape[0]]
    else:
        src = dst = np.empty(0, dtype=np.int64)
        efeat = np.empty((0, EDGE_FEATURES))
        dist_u = np.empty((0, 1))
    return x, src, dst, efeat, dist_u


def edge_forward_full(model: EdgeModel, nodes: VoxelNodes | None, edges: np.ndarray,
                      centroids: np.ndarray | None = None, counts: np.ndarray | None = None):
    """Forward pass returning (probabilities, embedding, cache for backward)."""
    if nodes is not None:
        centroids, counts = nodes.centroids, nodes.member_counts.astype(np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    p = model.params
    cfg = model.config
    x, src, dst, efeat, dist_u = _graph_features(model, centroids, counts.astype(np.float64), edges)
    n = x.shape[0]
    cache = {"x": x, "src": src, "dst": dst, "efeat": efeat, "dist_u": dist_u,
             "edges": edges, "n": n, "msgs": [], "upd_ins": [], "msg_ins": []}

    h = np.tanh(x @ p["enc_w"] + p["enc_b"])
    cache["h0"] = h
    cache["h_outs"] = []
    for k in range(cfg.rounds):
        msg_in = np.concatenate([h[src], h[dst], efeat], axis=1)
        m = np.tanh(msg_in @ p[f"msg_w{k}"] + p[f"msg_b{k}"])
        agg = np.zeros((n, cfg.hidden))
        np.add.at(agg, dst, m)
        upd_in = np.concatenate([h, agg], axis=1)
        h_new = np.tanh(upd_in @ p[f"upd_w{k}"] + p[f"upd_b{k}"])
        cache["msg_ins"].append(msg_in)
        cache["msgs"].append(m)
        cache["upd_ins"].append(upd_in)
        cache["h_outs"].append(h_new)
        h = h_new
    cache["h_final"] = h

    pair = h[edges[:, 0]] + h[edges[:, 1]]
    er_in = np.concatenate([pair, dist_u], axis=1)
    r = np.tanh(er_in @ p["rd1_w"] + p["rd1_b"])
    logits = (r @ p["rd2_w"] + p["rd2_b"]).reshape(-1)
    cache["er_in"] = er_in
    cache["r"] = r
    cache["logits"] = logits

    pooled = h.mean(axis=0)
    embedding = pooled @ p["emb_w"] + p["emb_b"]
    probs = sigmoid(logits)
    if not (np.isfinite(probs).all() and np.isfinite(embedding).all()):
        raise NumericalFailureError("non-finite activations in edge model forward")
    return probs, embedding, cache


def edge_forward(model: EdgeModel, nodes: VoxelNodes, edges: np.ndarray):
    """Per-edge mesh probability and pooled graph embedding g_t."""
    probs, embedding, _ = edge_forward_full(model, nodes, edges)
    return probs, embedding


def edge_backward(model: EdgeModel, cache, dlogits: np.ndarray,
                  dembedding: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients on logits/embedding."""
    p = model.params
    cfg = model.config
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    h = cache["h_final"]
    n = cache["n"]
    edges = cache["edges"]
    src, dst = cache["src"], cache["dst"]

    dh = np.zeros_like(h)
    if dembedding is not None:
        grads["emb_w"] += np.outer(h.mean(axis=0), dembedding)
        grads["emb_b"] += dembedding
        dh += (p["emb_w"] @ dembedding)[None, :] / n

    if edges.shape[0]:
        dlogits = dlogits.reshape(-1, 1)
        grads["rd2_w"] += cache["r"].T @ dlogits
        grads["rd2_b"] += dlogits.sum(axis=0)
        dr = dlogits @ p["rd2_w"].T
        dpre = dr * (1.0 - cache["r"] ** 2)
        grads["rd1_w"] += cache["er_in"].T @ dpre
        grads["rd1_b"] += dpre.sum(axis=0)
        der_in = dpre @ p["rd1_w"].T
        dpair = der_in[:, : cfg.hidden]
        np.add.at(dh, edges[:, 0], dpair)
        np.add.at(dh, edges[:, 1], dpair)

    for k in reversed(range(cfg.rounds)):
        dpre_upd = dh * (1.0 - cache["h_outs"][k] ** 2)
        grads[f"upd_w{k}"] += cache["upd_ins"][k].T @ dpre_upd
        grads[f"upd_b{k}"] += dpre_upd.sum(axis=0)
        dupd_in = dpre_upd @ p[f"upd_w{k}"].T
        dh_prev = dupd_in[:, : cfg.hidden].copy()
        dagg = dupd_in[:, cfg.hidden :]
        dm = dagg[dst]
        dpre_msg = dm * (1.0 - cache["msgs"][k] ** 2)
        grads[f"msg_w{k}"] += cache["msg_ins"][k].T @ dpre_msg
        grads[f"msg_b{k}"] += dpre_msg.sum(axis=0)
        dmsg_in = dpre_msg @ p[f"msg_w{k}"].T
        np.add.at(dh_prev, src, dmsg_in[:, : cfg.hidden])
        np.add.at(dh_prev, dst, dmsg_in[:, cfg.hidden : 2 * cfg.hidden])
        dh = dh_prev

    dpre_enc = dh * (1.0 - cache["h0"] ** 2)
    grads["enc_w"] += cache["x"].T @ dpre_enc
    grads["enc_b"] += dpre_enc.sum(axis=0)
    return grads


def infer_mesh_edges(model: EdgeModel, nodes: VoxelNodes, edges: np.ndarray,
                     threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Edges with probability strictly above ``threshold`` (E_M ⊆ E_C)."""
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError("threshold must lie in (0, 1)")
    probs, _ = edge_forward(model, nodes, edges)
    keep = probs > threshold
    return np.asarray(edges).reshape(-1, 2)[keep], probs[keep]


@dataclass
class EdgeTrainConfig:
    lr: float = 1e-3
    epochs: int = 60
    seed: int = 0
    log_every: int = 0


def edge_loss(model: EdgeModel, sample) -> tuple[float, dict[str, np.ndarray]]:
    """BCE loss and parameter gradients for one (graph, labels) sample."""
    centroids, counts, edges, labels = sample
    _, _, cache = edge_forward_full(model, None, edges, centroids, counts)
    loss, dlogits = bce_with_logits(cache["logits"], labels.astype(np.float64))
    grads = edge_backward(model, cache, dlogits)
    return loss, grads


def train_edge_model(
    dataset: list,
    cfg: EdgeTrainConfig | None = None,
    model_cfg: EdgeModelConfig | None = None,
) -> tuple[EdgeModel, list[float]]:
    """Fit the classifier to (centroids, counts, edges, labels) samples by
    Adam on per-edge BCE; returns the model and the per-epoch loss curve."""
    if not dataset:
        raise InvalidArgumentError("empty training dataset")
    cfg = cfg or EdgeTrainConfig()
    model = EdgeModel.create(model_cfg, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    curve: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for idx in order:
            loss, grads = edge_loss(model, dataset[idx])
            if not np.isfinite(loss):
                raise TrainingFailedError("edge training diverged: non-finite loss")
            opt.step(grads)
            total += loss
        curve.append(total / len(dataset))
    return model, curve


def edge_gradient_check(model: EdgeModel, sample, samples_per_block: int = 3,
                        seed: int = 0) -> float:
    return gradient_check(lambda: edge_loss(model, sample), model.params,
                          samples_per_block=samples_per_block, seed=seed)


def make_edge_dataset(states, cam, voxel_size: float | None = None,
                      radius: float | None = None) -> list:
    """Render each state, build its visibility graph and oracle labels.

    Returns (centroids, counts, edges, labels) tuples ready for training.
    """
    from .camera import render_topdown
    from .graphs import DEFAULT_RADIUS, DEFAULT_VOXEL_SIZE, build_graph, oracle_mesh_labels

    samples = []
    for state in states:
        obs = render_topdown(state, cam)
        graph, cloud = build_graph(obs, cam, voxel_size or DEFAULT_VOXEL_SIZE,
                                   radius or DEFAULT_RADIUS)
        labels = oracle_mesh_labels(graph.nodes, cloud, graph.nearby_edges, state)
        samples.append((graph.nodes.centroids, graph.nodes.member_counts.astype(np.float64),
                        graph.nearby_edges, labels))
    return samples


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def evaluate_edge_model(model: EdgeModel, samples: list, threshold: float = 0.5) -> float:
    """Pooled F1 of thresholded predictions against oracle labels."""
    preds, truths = [], []
    for centroids, counts, edges, labels in samples:
        probs, _, _ = edge_forward_full(model, None, edges, centroids, counts)
        preds.append(probs > threshold)
        truths.append(labels)
    return f1_score(np.concatenate(preds), np.concatenate(truths))


def save_edge_model(path, model: EdgeModel) -> None:
    """Versioned flat binary: magic, version, dims, then float32 blocks in
    sorted parameter-name order."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIf", FORMAT_VERSION, cfg.rounds, cfg.hidden,
                             cfg.embed, cfg.feature_scale))
        for name in model.param_names():
            arr = model.params[name].astype("<f4")
            fh.write(struct.pack("<I", arr.size))
            fh.write(arr.tobytes())


def load_edge_model(path) -> EdgeModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise InvalidArgumentError(f"not an edge model file (magic {magic!r})")
        version, rounds, hidden, embed, scale = struct.unpack("<IIIIf", fh.read(20))
        if version != FORMAT_VERSION:
            raise InvalidArgumentError(f"unsupported edge model version {version}")
        model = EdgeModel.create(EdgeModelConfig(rounds, hidden, embed, float(scale)), zero=True)
        for name in model.param_names():
            (size,) = struct.unpack("<I", fh.read(4))
            expected = model.params[name]
            if size != expected.size:
                raise InvalidArgumentError(f"parameter block {name} has wrong size")
            flat = np.frombuffer(fh.read(4 * size), dtype="<f4").astype(np.float64)
            model.params[name] = flat.reshape(expected.shape)
    return model
