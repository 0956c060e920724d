"""Reference heterogeneous message-passing encoder.

Forward-only; it exists to certify the sampling/batching pipeline through
equivalence and equivariance checks, not to train models.  One layer
computes, per node v::

    h'_v = act( sum_r mean_{u in N_r(v)} W_r h_u  +  W_self h_v )

i.e. in-neighbor messages are mean-aggregated within each relation, summed
across relations, and combined with a learned self term.  Weights are
stored float32; all arithmetic runs in float64 so layered and full-graph
evaluations agree to well below the documented tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import EdgeType, NOTE_RELATIONS, ScoreGraph
from .sampling import LayeredSubgraph

DEFAULT_HIDDEN = 256
DEFAULT_LAYERS = 3

_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class LayerParams:
    weights: dict[EdgeType, np.ndarray]  # (d_out, d_in) per relation
    self_weight: np.ndarray


@dataclass(frozen=True)
class EncoderParams:
    layers: tuple[LayerParams, ...]
    activation: str
    relations: tuple[EdgeType, ...]
    d_in: int
    hidden: int

    @property
    def num_layers(self) -> int:
        return len(self.layers)


def init_params(relations: tuple[EdgeType, ...] = NOTE_RELATIONS,
                d_in: int = 23, hidden: int = DEFAULT_HIDDEN,
                num_layers: int = DEFAULT_LAYERS, seed: int = 0,
                activation: str = "relu") -> EncoderParams:
    """Glorot-uniform parameters, deterministic for a fixed seed."""
    if d_in < 1 or hidden < 1 or num_layers < 1:
        raise ConfigError("encoder dimensions must be positive")
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    layers = []
    for layer_index in range(num_layers):
        fan_in = d_in if layer_index == 0 else hidden
        bound = np.sqrt(6.0 / (fan_in + hidden))
        weights = {
            r: rng.uniform(-bound, bound, size=(hidden, fan_in)).astype(np.float32)
            for r in relations
        }
        self_w = rng.uniform(-bound, bound, size=(hidden, fan_in)).astype(np.float32)
        layers.append(LayerParams(weights=weights, self_weight=self_w))
    return EncoderParams(layers=tuple(layers), activation=activation,
                         relations=tuple(relations), d_in=d_in, hidden=hidden)


def sage_layer_forward(edges: dict[EdgeType, np.ndarray], h: np.ndarray,
                       layer: LayerParams,
                       activation: str = "identity") -> np.ndarray:
    """One convolution step over typed edge lists; returns float64."""
    act = _ACTIVATIONS.get(activation)
    if act is None:
        raise ConfigError(f"unknown activation {activation!r}")
    h64 = np.asarray(h, dtype=np.float64)
    n = h64.shape[0]
    if h64.ndim != 2 or h64.shape[1] != layer.self_weight.shape[1]:
        raise ConfigError(
            f"feature width {h64.shape[1:]} does not match weights "
            f"{layer.self_weight.shape}")
    out = h64 @ layer.self_weight.astype(np.float64).T
    for etype in sorted(layer.weights, key=lambda t: t.value):
        rows = edges.get(etype)
        if rows is None or len(rows) == 0:
            continue
        src, dst = rows[:, 0], rows[:, 1]
        if src.max() >= n or dst.max() >= n:
            raise ConfigError("edge endpoint outside the feature matrix")
        msg = h64[src] @ layer.weights[etype].astype(np.float64).T
        sums = np.zeros((n, msg.shape[1]), dtype=np.float64)
        np.add.at(sums, dst, msg)
        counts = np.bincount(dst, minlength=n)
        nz = counts > 0
        sums[nz] /= counts[nz, None]
        out += sums
    return act(out)


def _local_edges(rows: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    if len(rows) == 0:
        return rows
    return np.searchsorted(nodes, rows)


def encoder_forward(graph: ScoreGraph | LayeredSubgraph, x: np.ndarray,
                    params: EncoderParams) -> np.ndarray:
    """Run the k-layer encoder.

    On a whole :class:`ScoreGraph`, returns embeddings for every note.  On a
    :class:`LayeredSubgraph`, ``x`` is still the full graph's note feature
    matrix; evaluation applies the deepest sampled layer first and returns
    embeddings for the target nodes only.
    """
    if isinstance(graph, ScoreGraph):
        edges = {t: graph.edges[t] for t in params.relations if t in graph.edges}
        h = np.asarray(x, dtype=np.float64)
        for layer in params.layers:
            h = sage_layer_forward(edges, h, layer, params.activation)
        return h
    if not isinstance(graph, LayeredSubgraph):
        raise ConfigError(f"cannot encode {type(graph).__name__}")
    k = len(graph.layer_edges)
    if k != params.num_layers:
        raise ConfigError(f"subgraph has {k} sampled layers but params "
                          f"define {params.num_layers}")
    nodes = graph.node_set
    h = np.asarray(x, dtype=np.float64)[nodes]
    for depth, layer in enumerate(params.layers):
        sampled = graph.layer_edges[k - 1 - depth]
        local = {t: _local_edges(rows, nodes) for t, rows in sampled.items()}
        h = sage_layer_forward(local, h, layer, params.activation)
    target_local = np.searchsorted(nodes, graph.targets.node_ids())
    return h[target_local]


def onset_pool(embeddings: np.ndarray, note_onsets: np.ndarray) -> np.ndarray:
    """Replace each row by the mean over its onset group."""
    emb = np.asarray(embeddings, dtype=np.float64)
    onsets = np.asarray(note_onsets)
    if emb.shape[0] != onsets.shape[0]:
        raise ConfigError(f"{emb.shape[0]} embedding rows but "
                          f"{onsets.shape[0]} onsets")
    if emb.shape[0] == 0:
        return emb
    _, inverse = np.unique(onsets, return_inverse=True)
    sums = np.zeros((inverse.max() + 1, emb.shape[1]), dtype=np.float64)
    np.add.at(sums, inverse, emb)
    counts = np.bincount(inverse)
    return (sums / counts[:, None])[inverse]
