"""Datasets: CSV manifests, synthetic generators and run persistence.

Synthetic data is drawn from numpy's Philox counter-based generator so a
seed reproduces the same matrices on every platform.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .structure import ViewNode, ViewStructure

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    views: dict
    labels: np.ndarray | None = None
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.views = {name: np.asarray(X, dtype=float) for name, X in self.views.items()}
        if not self.names:
            self.names = list(self.views)
        counts = {name: X.shape[0] for name, X in self.views.items()}
        if len(set(counts.values())) > 1:
            raise DatasetError(f"views disagree on the sample count: {counts}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.n,):
                raise DatasetError(f"expected {self.n} labels, got {self.labels.shape[0]}")

    @property
    def n(self):
        return next(iter(self.views.values())).shape[0] if self.views else 0

    def save(self, out_dir, manifest_name="manifest.json"):
        """Write one headerless CSV per view plus labels and a manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"views": {}}
        for name in self.names:
            fname = f"{name}.csv"
            np.savetxt(out / fname, self.views[name], delimiter=",", fmt="%.17g")
            manifest["views"][name] = fname
        if self.labels is not None:
            np.savetxt(out / "labels.csv", self.labels, fmt="%d")
            manifest["labels"] = "labels.csv"
        path = out / manifest_name
        path.write_text(json.dumps(manifest, indent=2))
        return path


def _read_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"view file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            if len(rows[-1]) != len(rows[0]):
                raise DatasetError(f"{path}:{lineno}: ragged row with {len(rows[-1])} columns, expected {len(rows[0])}")
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return np.array(rows)


def read_labels(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"labels file not found: {path}")
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            try:
                labels.append(int(token))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: label {token!r} is not an integer") from None
    return np.array(labels, dtype=int)


def load_dataset(manifest_path):
    """Load views and optional labels listed in a JSON manifest.

    Paths in the manifest are resolved relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    if not isinstance(manifest.get("views"), dict) or not manifest["views"]:
        raise DatasetError(f"{manifest_path}: 'views' must map view names to CSV paths")
    base = manifest_path.parent
    views = {name: _read_matrix(base / rel) for name, rel in manifest["views"].items()}
    counts = {name: X.shape[0] for name, X in views.items()}
    if len(set(counts.values())) > 1:
        raise DatasetError(f"row-count mismatch across views: {counts}")
    labels = None
    if manifest.get("labels"):
        labels = read_labels(base / manifest["labels"])
        n = next(iter(counts.values()))
        if labels.shape[0] != n:
            raise DatasetError(f"labels file has {labels.shape[0]} entries but views have {n} rows")
    return Dataset(views=views, labels=labels, names=list(views))


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _centers(rng, k, dims, min_dist, max_tries=10000):
    """``k`` points in a box, pairwise at least ``min_dist`` apart (rejection sampling)."""
    side = min_dist * max(2.0, k ** (1.0 / max(dims, 1)) * 2.0)
    centers = []
    tries = 0
    while len(centers) < k:
        c = rng.uniform(0.0, side, size=dims)
        if all(np.linalg.norm(c - o) >= min_dist for o in centers):
            centers.append(c)
        tries += 1
        if tries > max_tries:
            # box too tight; grow it and start over
            side *= 1.5
            centers, tries = [], 0
    return np.array(centers)


def _balanced_labels(n, k):
    return np.repeat(np.arange(k), [n // k + (1 if c < n % k else 0) for c in range(k)])


def synth_blobs(n_per_cluster, k, views=2, dims=2, separation=8.0, noise=1.0, seed=0):
    """Gaussian blobs seen through ``views`` independent feature spaces.

    Cluster centres in each view are at least ``separation * noise`` apart.
    All views share the cluster assignment; labels come out sorted.
    Returns ``(dataset, structure)`` with a flat one-layer structure.
    """
    if min(n_per_cluster, k, views, dims) < 1:
        raise ValueError("counts must be at least 1")
    if separation <= 0:
        raise ValueError("separation must be positive")
    rng = _rng(seed)
    labels = np.repeat(np.arange(k), n_per_cluster)
    out = {}
    for v in range(views):
        centers = _centers(rng, k, dims, separation * noise)
        out[f"view{v + 1}"] = centers[labels] + noise * rng.standard_normal((labels.size, dims))
    dataset = Dataset(views=out, labels=labels)
    return dataset, ViewStructure.flat(dataset.names)


def synth_layered(n, k, groups=(5, 6), overlap=0.6, seed=0, dims=75, separation=8.0, noise=0.25):
    """Two-layer entangled data shaped like a grouped questionnaire.

    Each leaf holds a few feature dimensions. A sample in leaf ``v`` sits at
    ``(1 - overlap) * c_v[y] + overlap * c_v[y']`` plus Gaussian noise, where
    ``y`` is its cluster and ``y' != y`` is a confounding cluster drawn once
    per sample and group, so leaves of one group are entangled the same way.
    Returns ``(dataset, structure)`` with ``root <- group nodes <- leaves``.
    """
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    n_leaves = sum(groups)
    if min(groups) < 1 or dims < n_leaves:
        raise ValueError("every group needs a leaf and every leaf a dimension")
    rng = _rng(seed)
    labels = _balanced_labels(n, k)
    leaf_dims = [dims // n_leaves + (1 if i < dims % n_leaves else 0) for i in range(n_leaves)]

    views, nodes, group_ids = {}, [], []
    leaf = 0
    for g, size in enumerate(groups):
        if k > 1:
            shift = rng.integers(1, k, size=n)
            confound = (labels + shift) % k
        else:
            confound = labels
        children = []
        for _ in range(size):
            d = leaf_dims[leaf]
            centers = _centers(rng, k, d, separation * noise)
            X = (1.0 - overlap) * centers[labels] + overlap * centers[confound]
            X = X + noise * rng.standard_normal((n, d))
            name = f"g{g + 1}a{leaf + 1}"
            views[name] = X
            nodes.append(ViewNode(id=name, layer=0, data=name))
            children.append(name)
            leaf += 1
        gid = f"group{g + 1}"
        nodes.append(ViewNode(id=gid, layer=1, children=tuple(children)))
        group_ids.append(gid)
    nodes.append(ViewNode(id="root", layer=2, children=tuple(group_ids)))
    return Dataset(views=views, labels=labels), ViewStructure.from_nodes(nodes)


def nearest_center_accuracy(dataset):
    """Accuracy of assigning each sample to the closest true-class mean (all views concatenated)."""
    X = np.hstack([dataset.views[name] for name in dataset.names])
    y = dataset.labels
    classes = np.unique(y)
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    d = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(classes[np.argmin(d, axis=1)] == y))


def save_results(result, report, out_dir, config=None):
    """Write labels, metrics, trace, graph exports and the resolved config."""
    from .graph import write_dot, write_edge_csv
    from .trainer import write_trace

    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "labels.csv"
        np.savetxt(path, result.labels, fmt="%d")
        written.append(path)
        if report is not None:
            path = out / "metrics.json"
            path.write_text(json.dumps(report.to_dict(), indent=2))
            written.append(path)
        path = out / "trace.csv"
        write_trace(result.trace, path)
        written.append(path)
        path = out / "graph.dot"
        write_dot(result.S_c, path, labels=result.labels)
        written.append(path)
        path = out / "graph_edges.csv"
        write_edge_csv(result.S_c, path)
        written.append(path)
        cfg = config if config is not None else result.config
        if cfg is not None:
            path = out / "run_config.json"
            path.write_text(json.dumps(cfg.to_dict(), indent=2))
            written.append(path)
    except OSError as exc:
        raise OSError(f"could not write results to {exc.filename or out}: {exc.strerror or exc}") from exc
    logger.info("wrote %d files to %s", len(written), out)
    return written
