"""Graph network over CFGs: input projection, message-passing rounds
(aggregate MLP over predecessor states + GRU update), attention-pooled
readout, dense classifier. Training is Adam with decoupled weight decay,
mini-batches built as disjoint-union graphs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .cfg import Cfg
from .embedding import PROPERTIES, RESERVED_SLOTS, Vocabulary, encode


@dataclass
class ModelConfig:
    hidden: int = 32
    steps: int = 5
    output_layers: int = 3
    learning_rate: float = 1e-3
    l2_weight: float = 1e-2
    batch_size: int = 256
    k: int = 1000
    mask: list[str] = field(default_factory=lambda: list(PROPERTIES))

    def __post_init__(self):
        if self.hidden < 1 or self.output_layers < 1:
            raise ValueError("hidden and output_layers must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        bad = set(self.mask) - set(PROPERTIES)
        if bad or not self.mask:
            raise ValueError(f"invalid feature mask {self.mask}")

    @property
    def feature_width(self) -> int:
        return len(PROPERTIES) * (self.k + RESERVED_SLOTS)

    def mask_dict(self) -> dict[str, bool]:
        return {p: p in self.mask for p in PROPERTIES}


@dataclass
class NodeStates:
    """Per-round hidden states and aggregate buffers, round 0 first."""

    h_steps: list[np.ndarray]
    a_steps: list[np.ndarray]


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Weights ~ uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def dense(name: str, fan_in: int, fan_out: int) -> None:
        s = math.sqrt(6.0 / (fan_in + fan_out))
        params[name + "_w"] = rng.uniform(-s, s, size=(fan_in, fan_out))
        params[name + "_b"] = np.zeros((1, fan_out))

    h = config.hidden
    dense("proj", config.feature_width, h)
    dense("agg", h, h)
    for gate in ("z", "r", "h"):
        dense(f"gru_w{gate}", h, h)
        s = math.sqrt(6.0 / (h + h))
        params[f"gru_u{gate}_w"] = rng.uniform(-s, s, size=(h, h))
    dense("att_gate", h, 1)
    dense("att_feat", h, h)
    for i in range(config.output_layers):
        out = 1 if i == config.output_layers - 1 else h
        dense(f"cls{i}", h, out)
    return params


def weight_names(params: dict[str, np.ndarray]) -> list[str]:
    return [n for n in params if n.endswith("_w")]


def _as_tensors(params: dict[str, np.ndarray], tape: T.Tape | None) -> dict[str, T.Tensor]:
    if tape is None:
        return {n: T.Tensor(v) for n, v in params.items()}
    return {n: tape.tensor(v) for n, v in params.items()}


@dataclass
class GraphBatch:
    """Disjoint union of CFGs: stacked features, offset edges, segment ids."""

    features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    seg: np.ndarray
    num_graphs: int


def batch_graphs(graphs: list[tuple[np.ndarray, Cfg]]) -> GraphBatch:
    feats, srcs, dsts, segs = [], [], [], []
    offset = 0
    for g, (features, cfg) in enumerate(graphs):
        n = len(cfg.nodes)
        if features.shape[0] != n:
            raise ValueError(f"feature rows {features.shape[0]} != nodes {n}")
        feats.append(features.astype(np.float64))
        for a, b in sorted(cfg.edges):
            srcs.append(a + offset)
            dsts.append(b + offset)
        segs.append(np.full(n, g, dtype=np.int64))
        offset += n
    return GraphBatch(
        features=np.concatenate(feats, axis=0),
        src=np.asarray(srcs, dtype=np.int64),
        dst=np.asarray(dsts, dtype=np.int64),
        seg=np.concatenate(segs),
        num_graphs=len(graphs),
    )


def forward_batch(
    pt: dict[str, T.Tensor],
    batch: GraphBatch,
    config: ModelConfig,
    states: NodeStates | None = None,
) -> T.Tensor:
    """Graph-level logits, shape (num_graphs, 1)."""
    tape = next(iter(pt.values())).tape
    x = T.Tensor(batch.features, tape=None) if tape is None else tape.tensor(batch.features)
    h = T.relu(T.add(T.matmul(x, pt["proj_w"]), pt["proj_b"]))
    if states is not None:
        states.h_steps.append(h.data.copy())
    for _ in range(config.steps):
        summed = T.edge_gather_sum(h, batch.src, batch.dst)
        a = T.relu(T.add(T.matmul(summed, pt["agg_w"]), pt["agg_b"]))
        z = T.sigmoid(_gru_pre(pt, "z", a, h))
        r = T.sigmoid(_gru_pre(pt, "r", a, h))
        cand = T.tanh(
            T.add(
                T.add(T.matmul(a, pt["gru_wh_w"]), T.matmul(T.hadamard(r, h), pt["gru_uh_w"])),
                pt["gru_wh_b"],
            )
        )
        keep = T.add_const(T.scale(z, -1.0), 1.0)
        h = T.add(T.hadamard(keep, h), T.hadamard(z, cand))
        if states is not None:
            states.a_steps.append(a.data.copy())
            states.h_steps.append(h.data.copy())
    gate = T.sigmoid(T.add(T.matmul(h, pt["att_gate_w"]), pt["att_gate_b"]))
    feat = T.tanh(T.add(T.matmul(h, pt["att_feat_w"]), pt["att_feat_b"]))
    pooled = T.segment_sum(T.scale_rows(feat, gate), batch.seg, batch.num_graphs)
    y = pooled
    for i in range(config.output_layers):
        y = T.add(T.matmul(y, pt[f"cls{i}_w"]), pt[f"cls{i}_b"])
        if i < config.output_layers - 1:
            y = T.relu(y)
    return y


def forward_probs(
    pt: dict[str, T.Tensor],
    batch: GraphBatch,
    config: ModelConfig,
    states: NodeStates | None = None,
) -> T.Tensor:
    return T.sigmoid(forward_batch(pt, batch, config, states=states))


def _gru_pre(pt: dict[str, T.Tensor], gate: str, a: T.Tensor, h: T.Tensor) -> T.Tensor:
    return T.add(
        T.add(T.matmul(a, pt[f"gru_w{gate}_w"]), T.matmul(h, pt[f"gru_u{gate}_w"])),
        pt[f"gru_w{gate}_b"],
    )


def forward(
    params: dict[str, np.ndarray],
    features: np.ndarray,
    cfg: Cfg,
    config: ModelConfig,
) -> tuple[float, NodeStates]:
    """Single-graph inference probability plus per-round node states."""
    if features.shape[1] != params["proj_w"].shape[0]:
        raise ValueError(
            f"feature width {features.shape[1]} != model input {params['proj_w'].shape[0]}"
        )
    states = NodeStates(h_steps=[], a_steps=[])
    batch = batch_graphs([(features, cfg)])
    prob = forward_probs(_as_tensors(params, None), batch, config, states=states)
    return prob.item(), states


def bce(prob: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Mean binary cross-entropy; labels is a (n, 1) array of 0/1."""
    tape = prob.tape
    y = T.Tensor(labels.reshape(prob.shape)) if tape is None else tape.tensor(
        labels.reshape(prob.shape)
    )
    one_minus_y = T.add_const(T.scale(y, -1.0), 1.0)
    ll = T.add(
        T.hadamard(y, T.log(prob)),
        T.hadamard(one_minus_y, T.log(T.add_const(T.scale(prob, -1.0), 1.0))),
    )
    return T.scale(T.sum_all(ll), -1.0 / prob.shape[0])


def bce_logits(logits: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Saturation-safe mean cross-entropy from logits:
    softplus(-x) + (1 - y) * x, averaged over the batch."""
    tape = logits.tape
    arr = labels.reshape(logits.shape)
    y = T.Tensor(arr) if tape is None else tape.tensor(arr)
    one_minus_y = T.add_const(T.scale(y, -1.0), 1.0)
    per = T.add(T.softplus(T.scale(logits, -1.0)), T.hadamard(one_minus_y, logits))
    return T.scale(T.sum_all(per), 1.0 / logits.shape[0])


def loss(
    prob: T.Tensor,
    labels: np.ndarray,
    pt: dict[str, T.Tensor],
    l2_weight: float,
) -> T.Tensor:
    """BCE plus l2_weight * sum of squared weight-matrix entries (biases excluded)."""
    total = bce(prob, labels)
    for name in pt:
        if name.endswith("_w"):
            total = T.add(total, T.scale(T.sum_all(T.hadamard(pt[name], pt[name])), l2_weight))
    return total


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.wd = lr, weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(v) for n, v in params.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for n, g in grads.items():
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g
            update = (self.m[n] / bc1) / (np.sqrt(self.v[n] / bc2) + self.eps)
            if n.endswith("_w"):  # decoupled decay, weights only
                update = update + self.wd * params[n]
            params[n] -= self.lr * update


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid_f1: float


def train_model(
    config: ModelConfig,
    train_set: list[tuple[Cfg, int]],
    valid_set: list[tuple[Cfg, int]],
    vocab: Vocabulary,
    seed: int,
    epochs: int,
    patience: int = 10,
) -> tuple[dict[str, np.ndarray], int, list[EpochStats]]:
    """Returns (best params, best epoch, per-epoch history)."""
    from .harness import compute_metrics  # local import avoids a module cycle

    if not train_set:
        raise ValueError("empty training split")
    mask = config.mask_dict()
    train_graphs = [(encode(cfg, vocab, mask), cfg) for cfg, _ in train_set]
    train_labels = np.array([lbl for _, lbl in train_set], dtype=np.float64)
    valid_graphs = [(encode(cfg, vocab, mask), cfg) for cfg, _ in valid_set]
    valid_labels = [lbl for _, lbl in valid_set]

    params = init_params(config, seed)
    opt = Adam(params, config.learning_rate, config.l2_weight)
    rng = np.random.default_rng(seed)
    order = np.arange(len(train_set))

    best_f1, best_epoch, best_params = -1.0, 0, {n: v.copy() for n, v in params.items()}
    history: list[EpochStats] = []
    since_best = 0
    for epoch in range(1, epochs + 1):
        rng.shuffle(order)
        epoch_loss = 0.0
        nbatch = 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch = batch_graphs([train_graphs[i] for i in idx])
            labels = train_labels[idx].reshape(-1, 1)
            tape = T.Tape()
            pt = _as_tensors(params, tape)
            logits = forward_batch(pt, batch, config)
            obj = bce_logits(logits, labels)
            grads, _ = T.gradients(obj, list(pt.values()))
            opt.step(params, dict(zip(pt.keys(), grads)))
            epoch_loss += obj.item()
            nbatch += 1

        probs = [
            forward_probs(_as_tensors(params, None), batch_graphs([g]), config).item()
            for g in valid_graphs
        ]
        f1 = compute_metrics(probs, valid_labels).f1 if valid_labels else 0.0
        history.append(EpochStats(epoch, epoch_loss / max(nbatch, 1), f1))
        if f1 > best_f1:
            best_f1, best_epoch = f1, epoch
            best_params = {n: v.copy() for n, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    return best_params, best_epoch, history


# -- checkpointing -----------------------------------------------------

def save_checkpoint(
    path: str,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    vocab_path: str,
    best_epoch: int,
) -> None:
    doc = {
        "version": 1,
        "config": asdict(config),
        "vocab_path": vocab_path,
        "params": {
            n: {"shape": list(v.shape), "data": v.ravel().tolist()} for n, v in params.items()
        },
        "best_epoch": best_epoch,
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: ModelConfig
    vocab: Vocabulary
    best_epoch: int


def load_checkpoint(path: str) -> Checkpoint:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    config = ModelConfig(**doc["config"])
    params = {
        n: np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        for n, rec in doc["params"].items()
    }
    vocab_path = doc["vocab_path"]
    if not os.path.isabs(vocab_path):
        vocab_path = os.path.join(os.path.dirname(os.path.abspath(path)), vocab_path)
    with open(vocab_path) as f:
        vocab = Vocabulary.from_json(f.read())
    return Checkpoint(params=params, config=config, vocab=vocab, best_epoch=doc["best_epoch"])


def predict(ckpt: Checkpoint, cfg: Cfg) -> float:
    features = encode(cfg, ckpt.vocab, ckpt.config.mask_dict())
    prob, _ = forward(ckpt.params, features, cfg, ckpt.config)
    return prob


def classify(prob: float, threshold: float = 0.5) -> int:
    return int(prob >= threshold)
