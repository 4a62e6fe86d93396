"""Connection graphs: the row activation, agglomeration, Laplacian and components.

All graphs are dense ``(n, n)`` float arrays with a zero diagonal.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc

EDGE_TOL = 1e-12
DENOM_TOL = 1e-12


def _offdiag(n):
    return ~np.eye(n, dtype=bool)


def activate(X, P, active=None):
    """Row-wise activation of a matrix, returning ``(Y, cache)``.

    Only entries flagged in ``active`` take part (the diagonal of a graph is
    excluded this way). For a row with positive entries ``x+`` and minimum
    ``x_min`` (over all active entries)::

        y_i = (P * x_i - x_min) / (P * (sum(x+) - x_min))   if x_i > 0
        y_i = 0                                             otherwise

    A row without positive entries, or with a vanishing denominator, keeps a
    single edge of weight 1 at its largest active entry (lowest index on ties).
    ``cache`` is what :func:`activate_backward` needs.
    """
    if P <= 1:
        raise ValueError(f"activation scale P must exceed 1, got {P}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        Y, cache = activate(X[None, :], P, None if active is None else np.asarray(active)[None, :])
        return Y[0], cache
    if not np.all(np.isfinite(X)):
        raise ValueError("activation input contains non-finite values")
    if active is None:
        active = np.ones(X.shape, dtype=bool)
    rows = np.arange(X.shape[0])
    has_active = active.any(axis=1)

    pos = active & (X > 0)
    amin = np.argmin(np.where(active, X, np.inf), axis=1)
    xmin = np.where(has_active, X[rows, amin], 0.0)
    T = np.where(pos, X, 0.0).sum(axis=1) - xmin
    ok = pos.any(axis=1) & (np.abs(P * T) >= DENOM_TOL)
    T_safe = np.where(ok, T, 1.0)

    Y = np.where(pos & ok[:, None], (P * X - xmin[:, None]) / (P * T_safe[:, None]), 0.0)
    np.maximum(Y, 0.0, out=Y)

    fallback = ~ok & has_active
    if fallback.any():
        amax = np.argmax(np.where(active, X, -np.inf), axis=1)
        Y[rows[fallback], amax[fallback]] = 1.0
    cache = {"P": P, "pos": pos & ok[:, None], "amin": amin, "T": T_safe, "ok": ok, "Y": Y}
    return Y, cache


def activate_backward(G, cache):
    """Vector-Jacobian product of :func:`activate`.

    The positive set and the position of ``x_min`` are held fixed; rows that
    fell back to the single-edge rule are constant and pass no gradient.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[None, :]
    P, pos, amin, T, ok, Y = (cache[key] for key in ("P", "pos", "amin", "T", "ok", "Y"))
    Gp = np.where(pos, G, 0.0)
    gy = (Gp * Y).sum(axis=1)
    gsum = Gp.sum(axis=1)
    dX = np.where(pos, (G - gy[:, None]) / T[:, None], 0.0)
    rows = np.flatnonzero(ok)
    np.add.at(dX, (rows, amin[rows]), ((-gsum / P + gy) / T)[rows])
    return dX


def activation_row(x, P):
    """Activate a single row (every entry is a candidate edge)."""
    y, _ = activate(np.asarray(x, dtype=float), P)
    return y


def make_connection_graph(z, P, return_cache=False):
    """Leaf graph from a latent representation: activate the symmetrised ``z``."""
    z = np.asarray(z, dtype=float)
    zs = 0.5 * (z + z.T)
    S, cache = activate(zs, P, _offdiag(z.shape[0]))
    return (S, cache) if return_cache else S


def agglomerate(graphs, weights, P, bias=None, return_cache=False):
    """Fuse child graphs: ``relu(C(sum_i w_i S_i + bias))``.

    The ReLU cannot change the activated graph but is kept so the two
    variants share one code path.
    """
    if len(graphs) == 0:
        raise ValueError("agglomerate needs at least one graph")
    if len(graphs) != len(weights):
        raise ValueError(f"{len(graphs)} graphs but {len(weights)} weights")
    n = graphs[0].shape[0]
    for S in graphs:
        if S.shape != (n, n):
            raise ValueError(f"graph shape {S.shape} does not match ({n}, {n})")
    X = np.zeros((n, n))
    for w, S in zip(weights, graphs):
        X += w * S
    if bias is not None:
        if bias.shape != (n, n):
            raise ValueError(f"bias shape {bias.shape} does not match ({n}, {n})")
        X += bias
    np.fill_diagonal(X, 0.0)
    Y, cache = activate(X, P, _offdiag(n))
    S = np.maximum(Y, 0.0)
    cache["X"] = X
    return (S, cache) if return_cache else S


def laplacian(S):
    """Unnormalised Laplacian of the symmetrised graph ``A = (S + S^T) / 2``."""
    S = np.asarray(S, dtype=float)
    A = 0.5 * (S + S.T)
    return np.diag(A.sum(axis=1)) - A


def connected_components(S, tol=EDGE_TOL):
    """Components of the undirected graph with edges where ``(S_ij + S_ji)/2 > tol``.

    Labels are numbered in order of first appearance.
    """
    S = np.asarray(S, dtype=float)
    A = 0.5 * (S + S.T) > tol
    count, raw = _cc(csr_matrix(A), directed=False)
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    relabel = np.empty(count, dtype=int)
    relabel[order] = np.arange(count)
    return count, relabel[raw]


def check_connection_graph(S, atol=0.0):
    """Assert the graph invariants; returns the indices of isolated rows."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"connection graph must be square, got {S.shape}")
    if np.any(S < -atol):
        raise ValueError("connection graph has negative entries")
    if np.any(np.diag(S) != 0):
        raise ValueError("connection graph has a nonzero diagonal")
    return np.flatnonzero(~(S > 0).any(axis=1))


def graph_edges(S, tol=EDGE_TOL):
    """Undirected edge list ``[(i, j, weight)]`` with ``i < j`` and weight ``A_ij``."""
    A = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    i, j = np.nonzero(np.triu(A > tol, k=1))
    return [(int(a), int(b), float(A[a, b])) for a, b in zip(i, j)]


def write_dot(S, path, labels=None):
    lines = ["graph S {"]
    for i in range(S.shape[0]):
        attr = f' [cluster={int(labels[i])}]' if labels is not None else ""
        lines.append(f"  {i}{attr};")
    for i, j, w in graph_edges(S):
        lines.append(f"  {i} -- {j} [weight={w!r}];")
    lines.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_edge_csv(S, path):
    with open(path, "w") as fh:
        for i, j, w in graph_edges(S):
            fh.write(f"{i},{j},{w!r}\n")
