"""Codon -> amino-acid tree and its path-length metric."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import vocab

KINDS = ("root", "family", "leaf")


class TreeFormatError(ValueError):
    """A serialized tree violates the node schema."""


@dataclass(frozen=True)
class Node:
    id: str
    parent: str | None
    kind: str
    token: str | None = None


@dataclass
class CodonTree:
    """Rooted tree whose leaves are vocabulary tokens.

    ``leaf_token`` maps a leaf node id to its token id; token ids follow the
    order in which leaves were added.
    """

    nodes: dict[str, Node]
    leaf_token: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        roots = [n.id for n in self.nodes.values() if n.parent is None]
        if len(roots) != 1:
            raise TreeFormatError(f"expected exactly one root, found {len(roots)}: {roots}")
        for n in self.nodes.values():
            if n.kind not in KINDS:
                raise TreeFormatError(f"node {n.id!r}: kind {n.kind!r} not in {KINDS}")
            if n.parent is not None and n.parent not in self.nodes:
                raise TreeFormatError(f"node {n.id!r}: parent {n.parent!r} does not exist")
            if (n.kind == "root") != (n.parent is None):
                raise TreeFormatError(f"node {n.id!r}: only the root may lack a parent")
        for n in self.nodes.values():
            seen = {n.id}
            p = n.parent
            while p is not None:
                if p in seen:
                    raise TreeFormatError(f"cycle through node {n.id!r}")
                seen.add(p)
                p = self.nodes[p].parent
        for n in self.nodes.values():
            has_children = bool(self.children.get(n.id))
            if n.kind == "leaf" and has_children:
                raise TreeFormatError(f"leaf {n.id!r} has children")
        if not self.leaf_token:
            self.leaf_token = {
                n.id: i for i, n in enumerate(x for x in self.nodes.values() if x.kind == "leaf")
            }

    @cached_property
    def root(self) -> str:
        return next(n.id for n in self.nodes.values() if n.parent is None)

    @cached_property
    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for n in self.nodes.values():
            if n.parent is not None:
                out[n.parent].append(n.id)
        return out

    @cached_property
    def node_ids(self) -> list[str]:
        return list(self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {nid: i for i, nid in enumerate(self.node_ids)}

    @cached_property
    def depth(self) -> dict[str, int]:
        out = {self.root: 0}
        stack = [self.root]
        while stack:
            u = stack.pop()
            for v in self.children[u]:
                out[v] = out[u] + 1
                stack.append(v)
        return out

    @property
    def leaves(self) -> list[str]:
        """Leaf ids ordered by token id."""
        return sorted(self.leaf_token, key=self.leaf_token.get)

    @cached_property
    def token_leaf(self) -> dict[int, str]:
        return {t: leaf for leaf, t in self.leaf_token.items()}

    @property
    def families(self) -> list[str]:
        return self.children[self.root]

    def path_to_root(self, nid: str) -> list[str]:
        path = [nid]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs path lengths, indexed by :attr:`index`."""
        n = len(self.node_ids)
        anc = [self.path_to_root(u) for u in self.node_ids]
        out = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            pos = {a: k for k, a in enumerate(anc[i])}
            for j in range(i + 1, n):
                for k, a in enumerate(anc[j]):
                    if a in pos:
                        out[i, j] = out[j, i] = pos[a] + k
                        break
        return out

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "parent": n.parent, "kind": n.kind, "token": n.token}
                for n in self.nodes.values()
            ]
        }


def tree_distance(tree: CodonTree, u: str, v: str) -> int:
    for x in (u, v):
        if x not in tree.nodes:
            raise KeyError(f"unknown node id {x!r}")
    return int(tree.distance_matrix[tree.index[u], tree.index[v]])


def family_of(tree: CodonTree, token: int | str) -> str:
    """Parent family label of a token given by id or by string."""
    if isinstance(token, str):
        leaf = token if token in tree.leaf_token else None
    else:
        leaf = tree.token_leaf.get(int(token))
    if leaf is None:
        raise KeyError(f"unknown token {token!r}")
    return tree.nodes[leaf].parent


def build_codon_tree() -> CodonTree:
    """Root -> 21 coding families + Special -> 70 token leaves."""
    nodes: dict[str, Node] = {"root": Node("root", None, "root")}
    for fam in vocab.FAMILIES:
        nodes[fam] = Node(fam, "root", "family")
    for tok in vocab.VOCAB:
        parent = vocab.GENETIC_CODE.get(tok, vocab.SPECIAL_FAMILY)
        nodes[tok] = Node(tok, parent, "leaf", tok)
    leaf_token = {tok: vocab.TOKEN_TO_ID[tok] for tok in vocab.VOCAB}
    return CodonTree(nodes, leaf_token)


def load_tree(path: str | Path) -> CodonTree:
    """Parse the ``{"nodes": [...]}`` schema; errors name the offending entry."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise TreeFormatError(f"{path}: top-level field 'nodes' must be a list")
    nodes: dict[str, Node] = {}
    for i, entry in enumerate(doc["nodes"]):
        if not isinstance(entry, dict):
            raise TreeFormatError(f"nodes[{i}]: expected an object")
        for key in ("id", "parent", "kind"):
            if key not in entry:
                raise TreeFormatError(f"nodes[{i}]: missing field {key!r}")
        nid = entry["id"]
        if not isinstance(nid, str) or nid in nodes:
            raise TreeFormatError(f"nodes[{i}].id: {nid!r} is not a fresh string id")
        if entry["parent"] is not None and not isinstance(entry["parent"], str):
            raise TreeFormatError(f"nodes[{i}].parent: must be a string or null")
        token = entry.get("token")
        nodes[nid] = Node(nid, entry["parent"], entry["kind"], token)
    tree = CodonTree(nodes)
    # token ids follow the vocabulary when every leaf token is a known token
    tokens = [nodes[leaf].token or leaf for leaf in tree.leaf_token]
    if set(tokens) == set(vocab.VOCAB) and len(tokens) == len(vocab.VOCAB):
        tree.leaf_token = {leaf: vocab.TOKEN_TO_ID[nodes[leaf].token or leaf] for leaf in tree.leaf_token}
    return tree


def save_tree(tree: CodonTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree.to_json(), indent=1))
