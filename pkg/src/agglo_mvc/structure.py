"""Hierarchical view structures.

A structure is a tree whose leaves (layer 0) each point at one feature
matrix of the dataset and whose single top node (layer m) is the consensus
view. Every node in layer ``i - 1`` belongs to exactly one node in layer ``i``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path


logger = logging.getLogger(__name__)


class StructureError(ValueError):
    """Raised when a view structure violates a tree invariant."""


@dataclass(frozen=True)
class ViewNode:
    id: str
    layer: int
    children: tuple = ()
    data: str | None = None

    @property
    def is_leaf(self):
        return self.layer == 0


@dataclass
class ViewStructure:
    nodes: dict
    layers: list = field(default_factory=list)
    root: str = ""
    parent: dict = field(default_factory=dict)

    @classmethod
    def from_nodes(cls, nodes):
        """Build and structurally validate a tree from ``ViewNode`` objects."""
        table = {}
        for node in nodes:
            if node.id in table:
                raise StructureError(f"duplicate node id {node.id!r}")
            table[node.id] = node
        if not table:
            raise StructureError("view structure has no nodes")
        depth = max(node.layer for node in table.values())
        layers = [[] for _ in range(depth + 1)]
        for node in table.values():
            if node.layer < 0:
                raise StructureError(f"node {node.id!r} has negative layer {node.layer}")
            layers[node.layer].append(node.id)
        for i, members in enumerate(layers):
            if not members:
                raise StructureError(f"layer {i} is empty")
        if depth == 0:
            raise StructureError("view structure needs at least one layer above the leaves")
        if len(layers[depth]) != 1:
            raise StructureError(f"top layer {depth} must hold exactly one node, found {sorted(layers[depth])}")

        parent = {}
        for node in table.values():
            if node.is_leaf:
                if node.children:
                    raise StructureError(f"leaf {node.id!r} must not have children")
                if not node.data:
                    raise StructureError(f"leaf {node.id!r} has no data block")
                continue
            if node.data:
                raise StructureError(f"internal node {node.id!r} must not carry a data block")
            if not node.children:
                raise StructureError(f"internal node {node.id!r} has no children")
            for child in node.children:
                if child not in table:
                    raise StructureError(f"node {node.id!r} references unknown child {child!r}")
                if table[child].layer != node.layer - 1:
                    raise StructureError(
                        f"child {child!r} of {node.id!r} is in layer {table[child].layer}, expected {node.layer - 1}"
                    )
                if child in parent:
                    raise StructureError(f"node {child!r} has more than one parent ({parent[child]!r}, {node.id!r})")
                parent[child] = node.id
        for node_id in table:
            if table[node_id].layer < depth and node_id not in parent:
                raise StructureError(f"orphan node {node_id!r} has no parent")
        return cls(nodes=table, layers=layers, root=layers[depth][0], parent=parent)

    @classmethod
    def flat(cls, view_names, root="root"):
        """One-layer structure placing every view directly under the root."""
        leaves = [ViewNode(id=name, layer=0, data=name) for name in view_names]
        return cls.from_nodes(leaves + [ViewNode(id=root, layer=1, children=tuple(view_names))])

    @classmethod
    def from_dict(cls, payload):
        try:
            raw = payload["nodes"]
        except (KeyError, TypeError):
            raise StructureError("structure description must contain a 'nodes' list") from None
        nodes = []
        for entry in raw:
            try:
                nodes.append(
                    ViewNode(
                        id=str(entry["id"]),
                        layer=int(entry["layer"]),
                        children=tuple(str(c) for c in entry.get("children", [])),
                        data=entry.get("data"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StructureError(f"malformed node entry {entry!r}: {exc}") from None
        return cls.from_nodes(nodes)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise StructureError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(payload)

    def to_dict(self):
        out = []
        for layer in self.layers:
            for node_id in layer:
                node = self.nodes[node_id]
                entry = {"id": node.id, "layer": node.layer, "children": list(node.children)}
                if node.data is not None:
                    entry["data"] = node.data
                out.append(entry)
        return {"nodes": out}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @property
    def depth(self):
        """Number of layers above the leaves (``m``)."""
        return len(self.layers) - 1

    @property
    def leaves(self):
        return list(self.layers[0])

    def internal_bottom_up(self):
        """Internal node ids ordered from layer 1 up to the root."""
        return [node_id for layer in self.layers[1:] for node_id in layer]

    def subview_count(self, node_id):
        node = self.nodes[node_id]
        if node.is_leaf:
            raise StructureError(f"{node_id!r} is a leaf and has no subviews")
        return len(node.children)

    def leaf_weights(self):
        """Share of each leaf in the consensus raw information (products of 1/|v|)."""
        weights = {}
        for leaf in self.leaves:
            w, node = 1.0, leaf
            while node != self.root:
                node = self.parent[node]
                w /= self.subview_count(node)
            weights[leaf] = w
        return weights


def validate(structure, dataset=None):
    """Check the tree invariants and, if given, agreement with ``dataset``.

    Returns the structure unchanged so the call can be chained.
    """
    # re-run the structural checks in case the object was assembled by hand
    structure = ViewStructure.from_nodes(structure.nodes.values())
    if dataset is not None:
        counts = {}
        for leaf in structure.leaves:
            name = structure.nodes[leaf].data
            if name not in dataset.views:
                raise StructureError(f"leaf {leaf!r} references unknown view {name!r}")
            counts[leaf] = dataset.views[name].shape[0]
        if len(set(counts.values())) > 1:
            raise StructureError(f"leaf views disagree on the sample count: {counts}")
        logger.info("view structure ok: m=%d, %d leaves, n=%d", structure.depth, len(counts), dataset.n)
    return structure

