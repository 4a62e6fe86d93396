"""Losses, the forward pass through the view hierarchy, and its gradients.

Two modes share the code path:

``ann``
    Leaf distances are fixed kNN-sparsified Euclidean distances of the raw
    features; trainable parameters are the latent matrices ``Z`` and the
    agglomeration weights ``W``.
``annld``
    Features are first projected with ``tanh(h * (X - mean))``; distances are
    recomputed from the projection on every pass, and every internal node
    gets an additive bias matrix ``B``. Trainable: ``Z``, ``W``, ``H``, ``B``.

The total loss is ``lam * L_sc + L_gc + L_cac``.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .graph import activate_backward, agglomerate, make_connection_graph
from .linalg import knn_mask, pairwise_distances

ANN = "ann"
ANNLD = "annld"
MODES = (ANN, ANNLD)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass
class ParameterSet:
    Z: dict
    W: dict
    H: dict = field(default_factory=dict)
    B: dict = field(default_factory=dict)

    GROUPS = ("Z", "W", "H", "B")

    def items(self):
        for group in self.GROUPS:
            for key, value in getattr(self, group).items():
                yield (group, key), value

    def copy(self):
        return copy.deepcopy(self)

    def zeros_like(self):
        return ParameterSet(**{g: {k: np.zeros_like(v) for k, v in getattr(self, g).items()} for g in self.GROUPS})

    def get(self, ref):
        group, key = ref
        return getattr(self, group)[key]

    def set(self, ref, value):
        group, key = ref
        getattr(self, group)[key] = value


@dataclass
class ForwardTrace:
    graphs: dict        # node id -> S
    distances: dict     # node id -> D
    S_c: np.ndarray
    D_c: np.ndarray
    sc: float           # lam * Tr(F^T L F)
    gc: float
    cac: float
    total: float
    caches: dict = field(default_factory=dict, repr=False)

    @property
    def losses(self):
        return {"sc": self.sc, "gc": self.gc, "cac": self.cac, "total": self.total}


# ---------------------------------------------------------------- raw information

def agglomerate_raw(D_leaves, structure):
    """Average child distance matrices bottom-up; returns ``(per_node, D_c)``."""
    per_node = {}
    shape = None
    for leaf in structure.leaves:
        if leaf not in D_leaves:
            raise ValueError(f"no distance matrix for leaf {leaf!r}")
        D = np.asarray(D_leaves[leaf], dtype=float)
        if shape is None:
            shape = D.shape
        elif D.shape != shape:
            raise ValueError(f"leaf {leaf!r} distance shape {D.shape} differs from {shape}")
        per_node[leaf] = D
    for node_id in structure.internal_bottom_up():
        children = structure.nodes[node_id].children
        per_node[node_id] = sum(per_node[c] for c in children) / len(children)
    return per_node, per_node[structure.root]


def project_data(X, h):
    """``tanh(h_j * (X_ij - mean_j))`` column by column."""
    X = np.asarray(X, dtype=float)
    return np.tanh(np.asarray(h, dtype=float)[None, :] * (X - X.mean(axis=0)))


def leaf_distances(dataset, structure, r, H=None):
    """kNN-sparsified distances per leaf, plus the dense distances and masks.

    With ``H`` given, features are projected first.
    """
    out, dense, masks, proj = {}, {}, {}, {}
    for leaf in structure.leaves:
        X = dataset.views[structure.nodes[leaf].data]
        if H is not None:
            X = project_data(X, H[leaf])
            proj[leaf] = X
        Dfull = pairwise_distances(X)
        mask = knn_mask(Dfull, r)
        dense[leaf], masks[leaf] = Dfull, mask
        out[leaf] = np.where(mask, Dfull, 0.0)
    return out, dense, masks, proj


# ---------------------------------------------------------------- losses

def _sym(z):
    return 0.5 * (z + z.T)


def loss_gc(Z, D_leaves):
    total = 0.0
    for leaf, z in Z.items():
        zs = _sym(np.asarray(z, dtype=float))
        total += float(np.sum(D_leaves[leaf] * zs) + np.sum(zs * zs))
    return total


def row_gaps(F):
    """``||F_i - F_j||^2`` for every pair of rows, clipped at zero."""
    F = np.asarray(F, dtype=float)
    sq = np.einsum("ij,ij->i", F, F)
    gaps = sq[:, None] + sq[None, :] - 2.0 * (F @ F.T)
    np.fill_diagonal(gaps, 0.0)
    return np.maximum(gaps, 0.0)


def loss_sc(F, S_c, lam):
    """``lam * Tr(F^T L F)`` evaluated as ``lam/2 * sum_ij A_ij ||F_i - F_j||^2``."""
    S_c = np.asarray(S_c, dtype=float)
    A = _sym(S_c)
    return float(lam * 0.5 * np.sum(A * row_gaps(F)))


def loss_cac(S_c, D_c, B=None):
    value = float(np.sum(D_c * S_c) + np.sum(S_c * S_c))
    if B:
        value += float(sum(np.sum(b * b) for b in B))
    return value


# ---------------------------------------------------------------- initialisation

def init_params(dataset, structure, mode, r):
    """Initial parameters.

    ``z`` of a leaf is ``rowmax(D) - D`` on the retained neighbours (zero
    elsewhere), symmetrised, so its first graph is a kNN affinity graph.
    Weights start at ``1/|v|``, scales at 1 and biases at 0.
    """
    _check_mode(mode)
    n = dataset.n
    H = None
    if mode == ANNLD:
        H = {leaf: np.ones(dataset.views[structure.nodes[leaf].data].shape[1]) for leaf in structure.leaves}
    D_leaves, _, masks, _ = leaf_distances(dataset, structure, r, H)
    Z = {}
    for leaf in structure.leaves:
        D, mask = D_leaves[leaf], masks[leaf]
        rowmax = np.where(mask, D, -np.inf).max(axis=1, keepdims=True)
        Z[leaf] = _sym(np.where(mask, rowmax - D, 0.0))
    W = {node: np.full(structure.subview_count(node), 1.0 / structure.subview_count(node))
         for node in structure.internal_bottom_up()}
    params = ParameterSet(Z=Z, W=W)
    if mode == ANNLD:
        params.H = H
        params.B = {node: np.zeros((n, n)) for node in structure.internal_bottom_up()}
    return params


# ---------------------------------------------------------------- forward / backward

def forward(params, dataset, structure, mode, P, lam, F, r, D_leaves=None):
    """Build every graph of the hierarchy and the loss breakdown.

    In ``ann`` mode ``D_leaves`` may be passed in to skip recomputing the
    fixed leaf distances.
    """
    _check_mode(mode)
    caches = {}
    if mode == ANNLD:
        D_leaves, dense, masks, proj = leaf_distances(dataset, structure, r, params.H)
        caches["annld"] = {"dense": dense, "masks": masks, "proj": proj}
    elif D_leaves is None:
        D_leaves = leaf_distances(dataset, structure, r)[0]

    D_nodes, D_c = agglomerate_raw(D_leaves, structure)
    graphs = {}
    for leaf in structure.leaves:
        graphs[leaf], caches[leaf] = make_connection_graph(params.Z[leaf], P, return_cache=True)
    for node_id in structure.internal_bottom_up():
        children = structure.nodes[node_id].children
        bias = params.B.get(node_id) if mode == ANNLD else None
        graphs[node_id], caches[node_id] = agglomerate(
            [graphs[c] for c in children], params.W[node_id], P, bias=bias, return_cache=True
        )
    S_c = graphs[structure.root]

    sc = loss_sc(F, S_c, lam)
    gc = loss_gc(params.Z, D_leaves)
    cac = loss_cac(S_c, D_c, list(params.B.values()) if mode == ANNLD else None)
    return ForwardTrace(
        graphs=graphs, distances=D_nodes, S_c=S_c, D_c=D_c,
        sc=sc, gc=gc, cac=cac, total=sc + gc + cac, caches=caches,
    )


def backward(trace, params, dataset, structure, mode, lam, F):
    """Gradient of ``trace.total`` with respect to every parameter, ``F`` held fixed."""
    grads = params.zeros_like()
    S_c = trace.S_c
    g_graph = {structure.root: 0.5 * lam * row_gaps(F) + trace.D_c + 2.0 * S_c}

    for node_id in reversed(structure.internal_bottom_up()):
        cache = trace.caches[node_id]
        g = g_graph.pop(node_id) * (trace.graphs[node_id] > 0)  # relu
        gX = activate_backward(g, cache)
        children = structure.nodes[node_id].children
        w = params.W[node_id]
        for idx, child in enumerate(children):
            grads.W[node_id][idx] = np.sum(gX * trace.graphs[child])
            g_graph[child] = g_graph.get(child, 0.0) + w[idx] * gX
        if mode == ANNLD:
            grads.B[node_id] = gX + 2.0 * params.B[node_id]

    D_leaves = {leaf: trace.distances[leaf] for leaf in structure.leaves}
    for leaf in structure.leaves:
        zs = _sym(params.Z[leaf])
        g_zs = activate_backward(g_graph.get(leaf, np.zeros_like(zs)), trace.caches[leaf])
        g_zs += D_leaves[leaf] + 2.0 * zs
        grads.Z[leaf] = _sym(g_zs)

    if mode == ANNLD:
        extra = trace.caches["annld"]
        shares = structure.leaf_weights()
        for leaf in structure.leaves:
            # d total / d D_leaf: gc contributes z~, cac contributes share * S_c
            g_D = _sym(params.Z[leaf]) + shares[leaf] * S_c
            g_D = np.where(extra["masks"][leaf], g_D, 0.0)
            Dfull = extra["dense"][leaf]
            with np.errstate(divide="ignore", invalid="ignore"):
                Gs = np.where(Dfull > 0, (g_D + g_D.T) / Dfull, 0.0)
            Xp = extra["proj"][leaf]
            g_Xp = Gs.sum(axis=1)[:, None] * Xp - Gs @ Xp
            X = dataset.views[structure.nodes[leaf].data]
            centered = X - X.mean(axis=0)
            grads.H[leaf] = np.sum(g_Xp * (1.0 - Xp * Xp) * centered, axis=0)
    return grads


def gradients(params, dataset, structure, mode, P, lam, F, r, D_leaves=None):
    trace = forward(params, dataset, structure, mode, P, lam, F, r, D_leaves=D_leaves)
    return backward(trace, params, dataset, structure, mode, lam, F)


def value_and_grad(params, dataset, structure, mode, P, lam, F, r, D_leaves=None):
    trace = forward(params, dataset, structure, mode, P, lam, F, r, D_leaves=D_leaves)
    return trace, backward(trace, params, dataset, structure, mode, lam, F)
