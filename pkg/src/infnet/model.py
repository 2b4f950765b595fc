"""InfNet: structural block, diffusion block and the purchase head.

Queries are evaluated in batches. A batch is the disjoint union of the
queries' sub-graphs, so every aggregation is a segment operation over one
large edge list. All queries in a batch must have the same number of steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Tensor
from .sampler import QuerySubgraph

ENCODERS = ("none", "mean", "gru", "self-attn")
FEATURE_MASKS = ("user", "item", "taocode")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    structural_layers: int = 2
    diffusion_layers: int = 2
    encoder: str = "self-attn"
    use_edge_attention: bool = True
    use_structural_block: bool = True
    masks: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError(f"hidden size must be >= 1, got {self.hidden}")
        if self.structural_layers < 1 or self.diffusion_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}; choose from {ENCODERS}")
        object.__setattr__(self, "masks", frozenset(self.masks))
        bad = self.masks - set(FEATURE_MASKS)
        if bad:
            raise ValueError(f"unknown feature masks {sorted(bad)}")


@dataclass
class GraphBatch:
    n_queries: int
    n_nodes: int
    n_steps: int
    node_feat: np.ndarray
    item_feat: np.ndarray
    targets: np.ndarray
    sender_nodes: np.ndarray
    sender_query: np.ndarray
    struct_src: np.ndarray
    struct_dst: np.ndarray
    step_src: list[np.ndarray]
    step_dst: list[np.ndarray]
    step_feat: list[np.ndarray]
    labels: np.ndarray
    n_bins: int


def collate(subgraphs: list[QuerySubgraph]) -> GraphBatch:
    """Merge sub-graphs into one disjoint-union batch."""
    if not subgraphs:
        raise ValueError("cannot collate an empty batch")
    n_steps = subgraphs[0].n_steps
    if any(sg.n_steps != n_steps for sg in subgraphs):
        raise ValueError("all sub-graphs in a batch must cover the same number of steps")
    dtype = nx.get_default_dtype()
    offs = np.cumsum([0] + [sg.n_nodes for sg in subgraphs])
    n_bins = subgraphs[0].item_feat.shape[0]
    sender_nodes, sender_query, ssrc, sdst = [], [], [], []
    step_src = [[] for _ in range(n_steps)]
    step_dst = [[] for _ in range(n_steps)]
    step_feat = [[] for _ in range(n_steps)]
    for qi, (sg, off) in enumerate(zip(subgraphs, offs)):
        sender_nodes.append(np.asarray(sg.senders, dtype=np.int64) + off)
        sender_query.append(np.full(len(sg.senders), qi, dtype=np.int64))
        pairs = sg.undirected_pairs() + off
        ssrc += [pairs[:, 0], pairs[:, 1]]
        sdst += [pairs[:, 1], pairs[:, 0]]
        for t, (src, dst, feat) in enumerate(sg.edges):
            step_src[t].append(src + off)
            step_dst[t].append(dst + off)
            step_feat[t].append(feat)
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
    return GraphBatch(
        n_queries=len(subgraphs),
        n_nodes=int(offs[-1]),
        n_steps=n_steps,
        node_feat=np.concatenate([sg.node_feat for sg in subgraphs]).astype(dtype),
        item_feat=np.stack([sg.item_feat for sg in subgraphs]).astype(dtype),
        targets=offs[:-1].astype(np.int64),
        sender_nodes=cat(sender_nodes),
        sender_query=cat(sender_query),
        struct_src=cat(ssrc).astype(np.int64),
        struct_dst=cat(sdst).astype(np.int64),
        step_src=[cat(s).astype(np.int64) for s in step_src],
        step_dst=[cat(s).astype(np.int64) for s in step_dst],
        step_feat=[np.concatenate(f).astype(dtype).reshape(-1, n_bins) for f in step_feat],
        labels=np.array([sg.query.label for sg in subgraphs], dtype=dtype),
        n_bins=n_bins,
    )


@dataclass
class NodeStates:
    """Intermediate values of one forward pass (batch-global node indices)."""

    structural: Tensor
    pre_encoder: list[list[Tensor]]
    post_encoder: list[list[Tensor]]
    dynamic: Tensor
    in_weights: list[list[np.ndarray]]
    out_weights: list[list[np.ndarray]]


def _uniform_weights(seg: np.ndarray, n: int) -> Tensor:
    counts = np.bincount(seg, minlength=n).astype(nx.get_default_dtype())
    return Tensor(1.0 / counts[seg])


class InfNet:
    def __init__(self, cfg: ModelConfig, node_dim: int, n_bins: int, seed: int = 0):
        self.cfg = cfg
        self.node_dim = node_dim
        self.n_bins = n_bins
        rng = np.random.default_rng(seed)
        c = cfg.hidden
        p: dict[str, Tensor] = {}

        def mat(name, a, b):
            p[name] = nx.glorot(rng, a, b, name)

        def vec(name, n):
            p[name] = nx.zeros(n, name)

        mat("node.W", node_dim, c)
        vec("node.b", c)
        for k in range(cfg.structural_layers):
            mat(f"struct{k}.W_nbr", c, c)
            mat(f"struct{k}.W_self", c, c)
            mat(f"struct{k}.a_src", c, 1)
            mat(f"struct{k}.a_dst", c, 1)
            vec(f"struct{k}.b", c)
        for k in range(cfg.diffusion_layers):
            mat(f"diff{k}.W_edge", n_bins, c)
            mat(f"diff{k}.W_in", 3 * c, 1)
            mat(f"diff{k}.W_out", 3 * c, 1)
            mat(f"diff{k}.W_proj", 2 * c, c)
            vec(f"diff{k}.b_proj", c)
            if cfg.encoder == "gru":
                for g in ("z", "r", "n"):
                    mat(f"diff{k}.gru.W_{g}", c, c)
                    mat(f"diff{k}.gru.U_{g}", c, c)
                    vec(f"diff{k}.gru.b_{g}", c)
            elif cfg.encoder == "self-attn":
                for g in ("query", "key", "value"):
                    mat(f"diff{k}.att.W_{g}", c, c)
        if cfg.encoder == "self-attn":
            mat("readout.a", c, 1)
        mat("head.W", 4 * c + n_bins, 1)
        vec("head.b", 1)
        self.params = p

    @property
    def n_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks parameters {sorted(missing)}")
        for k, t in self.params.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arrays[k].shape}, model {t.shape}")
            t.data = arrays[k].astype(t.data.dtype).copy()

    # ------------------------------------------------------------------ inputs

    def _inputs(self, batch: GraphBatch):
        node_feat = batch.node_feat
        if "user" in self.cfg.masks:
            node_feat = node_feat.copy()
            node_feat[:, : batch.n_bins] = 0.0
        item_feat = np.zeros_like(batch.item_feat) if "item" in self.cfg.masks else batch.item_feat
        if "taocode" in self.cfg.masks:
            step_feat = [np.zeros_like(f) for f in batch.step_feat]
        else:
            step_feat = batch.step_feat
        return node_feat, item_feat, step_feat

    def embed_nodes(self, node_feat: np.ndarray) -> Tensor:
        p = self.params
        return nx.leaky_relu(nx.linear(Tensor(node_feat), p["node.W"], p["node.b"]))

    # -------------------------------------------------------------- structural

    def structural_block(self, batch: GraphBatch, x0: Tensor) -> Tensor:
        """GAT-style message passing on the merged undirected graph."""
        p = self.params
        src, dst, n = batch.struct_src, batch.struct_dst, batch.n_nodes
        x = x0
        for k in range(self.cfg.structural_layers):
            z = nx.matmul(x, p[f"struct{k}.W_nbr"])
            self_part = nx.add(nx.matmul(x, p[f"struct{k}.W_self"]), p[f"struct{k}.b"])
            if len(src):
                score_src = nx.reshape(nx.matmul(z, p[f"struct{k}.a_src"]), (-1,))
                score_dst = nx.reshape(nx.matmul(z, p[f"struct{k}.a_dst"]), (-1,))
                logits = nx.leaky_relu(
                    nx.add(nx.gather_rows(score_src, src), nx.gather_rows(score_dst, dst))
                )
                alpha = nx.segment_softmax(logits, dst, n)
                msg = nx.weighted_segment_sum(alpha, nx.gather_rows(z, src), dst, n)
                x = nx.leaky_relu(nx.add(self_part, msg))
            else:
                x = nx.leaky_relu(self_part)
        return x

    # --------------------------------------------------------------- diffusion

    def edge_logits(self, layer: int, direction: str, h_self: Tensor, h_other: Tensor, e_emb: Tensor) -> Tensor:
        """Raw attention logits ``LeakyReLU(W [h_self, h_other, e])`` per edge."""
        if not (h_self.shape[-1] == h_other.shape[-1] == e_emb.shape[-1] == self.cfg.hidden):
            raise ValueError(
                f"edge attention: dims {h_self.shape}, {h_other.shape}, {e_emb.shape}, expected {self.cfg.hidden}"
            )
        w = self.params[f"diff{layer}.W_{direction}"]
        return nx.reshape(nx.leaky_relu(nx.matmul(nx.concat([h_self, h_other, e_emb], axis=1), w)), (-1,))

    def _aggregate(self, layer, h, src, dst, e_emb, n):
        """In- and out-aggregations of embedded edge features for one step."""
        c = self.cfg.hidden
        if len(src) == 0:
            zero = Tensor(np.zeros((n, c), dtype=nx.get_default_dtype()))
            return zero, zero, np.zeros(0), np.zeros(0)
        h_src, h_dst = nx.gather_rows(h, src), nx.gather_rows(h, dst)
        if self.cfg.use_edge_attention:
            w_in = nx.segment_softmax(self.edge_logits(layer, "in", h_dst, h_src, e_emb), dst, n)
            w_out = nx.segment_softmax(self.edge_logits(layer, "out", h_src, h_dst, e_emb), src, n)
        else:
            w_in, w_out = _uniform_weights(dst, n), _uniform_weights(src, n)
        agg_in = nx.weighted_segment_sum(w_in, e_emb, dst, n)
        agg_out = nx.weighted_segment_sum(w_out, e_emb, src, n)
        return agg_in, agg_out, w_in.data, w_out.data

    def _encode(self, layer: int, seq: list[Tensor]) -> list[Tensor]:
        enc = self.cfg.encoder
        p = self.params
        if enc == "none":
            return list(seq)
        if enc == "mean":
            out, run = [], None
            for t, h in enumerate(seq):
                run = h if run is None else nx.add(run, h)
                out.append(nx.mul(run, 1.0 / (t + 1)))
            return out
        if enc == "gru":
            gp = {
                k.split(".")[-1]: v for k, v in p.items() if k.startswith(f"diff{layer}.gru.")
            }
            h = Tensor(np.zeros(seq[0].shape, dtype=nx.get_default_dtype()))
            out = []
            for x in seq:
                h = nx.gru_cell(x, h, gp)
                out.append(h)
            return out
        stacked = nx.stack(seq, axis=1)
        att = nx.masked_self_attention(
            stacked,
            p[f"diff{layer}.att.W_query"],
            p[f"diff{layer}.att.W_key"],
            p[f"diff{layer}.att.W_value"],
        )
        mixed = nx.add(att, stacked)
        return [nx.select(mixed, t, axis=1) for t in range(len(seq))]

    def _readout(self, seq: list[Tensor]) -> Tensor:
        enc = self.cfg.encoder
        if enc in ("none", "gru"):
            return seq[-1]
        stacked = nx.stack(seq, axis=1)
        if enc == "mean":
            return nx.mean_over_steps(stacked)
        n, t_len, c = stacked.shape
        flat = nx.reshape(stacked, (n * t_len, c))
        scores = nx.reshape(nx.matmul(flat, self.params["readout.a"]), (-1,))
        seg = np.repeat(np.arange(n), t_len)
        alpha = nx.segment_softmax(scores, seg, n)
        return nx.weighted_segment_sum(alpha, flat, seg, n)

    def diffusion_block(self, batch: GraphBatch, h0: Tensor, step_feat: list[np.ndarray]):
        p = self.params
        n, T = batch.n_nodes, batch.n_steps
        states = [h0] * T
        pre_all, post_all, win_all, wout_all = [], [], [], []
        for k in range(self.cfg.diffusion_layers):
            pre, w_ins, w_outs = [], [], []
            for t in range(T):
                src, dst = batch.step_src[t], batch.step_dst[t]
                e_emb = nx.matmul(Tensor(step_feat[t]), p[f"diff{k}.W_edge"])
                agg_in, agg_out, w_in, w_out = self._aggregate(k, states[t], src, dst, e_emb, n)
                hp = nx.leaky_relu(
                    nx.linear(nx.concat([agg_in, agg_out], axis=1), p[f"diff{k}.W_proj"], p[f"diff{k}.b_proj"])
                )
                pre.append(nx.add(hp, states[t]))
                w_ins.append(w_in)
                w_outs.append(w_out)
            states = self._encode(k, pre)
            pre_all.append(pre)
            post_all.append(states)
            win_all.append(w_ins)
            wout_all.append(w_outs)
        return self._readout(states), pre_all, post_all, win_all, wout_all

    # -------------------------------------------------------------------- head

    def forward(self, batch: GraphBatch) -> tuple[Tensor, NodeStates]:
        p = self.params
        c = self.cfg.hidden
        node_feat, item_feat, step_feat = self._inputs(batch)
        x0 = self.embed_nodes(node_feat)
        if self.cfg.use_structural_block:
            s = self.structural_block(batch, x0)
        else:
            s = Tensor(np.zeros((batch.n_nodes, c), dtype=nx.get_default_dtype()))
        d, pre, post, w_in, w_out = self.diffusion_block(batch, x0, step_feat)
        assert len(batch.sender_nodes) >= batch.n_queries, "every query needs at least one sender"
        sd = nx.concat([s, d], axis=1)
        g = nx.segment_sum(nx.gather_rows(sd, batch.sender_nodes), batch.sender_query, batch.n_queries)
        head_in = nx.concat(
            [nx.gather_rows(d, batch.targets), nx.gather_rows(s, batch.targets), g, Tensor(item_feat)], axis=1
        )
        logit = nx.reshape(nx.linear(head_in, p["head.W"], p["head.b"]), (-1,))
        y_hat = nx.sigmoid(logit)
        return y_hat, NodeStates(s, pre, post, d, w_in, w_out)

    def predict(self, batch: GraphBatch) -> np.ndarray:
        return self.forward(batch)[0].data

    @staticmethod
    def loss(y_hat: Tensor, labels: np.ndarray) -> Tensor:
        """Mean binary cross-entropy over the batch."""
        return nx.binary_cross_entropy(labels, y_hat)
