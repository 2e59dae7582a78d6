"""
Taxonomy trees and tree-augmented designs.

This module provides:
    - parse_taxonomy: Build a TaxonomyTree from semicolon-delimited lineages
    - read_taxonomy: Read an `otu_id<TAB>lineage` file
    - clustering_matrix: Binary OTU-to-cluster membership at one rank
    - build_augmented_design: Leaf columns plus one aggregate per distinct internal node
    - parsimonious_representation: Minimal-L1 coefficients over all tree nodes for a leaf model
    - penalty: L1 norm of a representation
    - map_selection_to_leaves: Per-leaf effective coefficients of a fitted augmented model

Example:
    >>> tree = parse_taxonomy(["k;p1;c1", "k;p1;c1", "k;p2;c2"], otu_ids=["a", "b", "c"])
    >>> design = build_augmented_design(X, tree)
    >>> design.labels
"""
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..utils.errors import InputFileError, TaxonomyError
from ..utils.validation import as_design_matrix

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = ["kingdom", "phylum", "class", "order", "family", "genus", "species"]
DUPLICATE_RTOL = 1e-12


@dataclass
class TreeNode:
    """A node of the taxonomy; leaves carry the OTU column index."""
    id: int
    name: str
    label: str
    depth: int
    parent: Optional[int]
    children: list[int] = field(default_factory=list)
    leaf_index: Optional[int] = None
    unnamed: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.leaf_index is not None


class TaxonomyTree:
    """Rooted taxonomy over OTU columns."""

    def __init__(self, nodes: list[TreeNode], root: int, levels: list[str], otu_ids: list[str]):
        self.nodes = nodes
        self.root = root
        self.levels = levels
        self.otu_ids = otu_ids
        self.leaf_nodes = [0] * len(otu_ids)
        for node in nodes:
            if node.is_leaf:
                self.leaf_nodes[node.leaf_index] = node.id
        self._leaves_under: dict[int, np.ndarray] = {}
        self._height: dict[int, int] = {}
        self._fill_caches(root)

    def _fill_caches(self, root: int) -> None:
        for node_id in reversed(self.preorder(root)):
            node = self.nodes[node_id]
            if node.is_leaf:
                self._leaves_under[node_id] = np.array([node.leaf_index])
                self._height[node_id] = 0
            else:
                self._leaves_under[node_id] = np.sort(np.concatenate(
                    [self._leaves_under[c] for c in node.children]
                ))
                self._height[node_id] = 1 + max(self._height[c] for c in node.children)

    @classmethod
    def star(cls, otu_ids: Sequence[str]) -> "TaxonomyTree":
        """Root with every OTU as a direct leaf child."""
        nodes = [TreeNode(id=0, name="root", label="root", depth=-1, parent=None)]
        for i, otu in enumerate(otu_ids):
            nodes.append(TreeNode(id=i + 1, name=str(otu), label=str(otu), depth=0, parent=0, leaf_index=i))
            nodes[0].children.append(i + 1)
        return cls(nodes, 0, [], [str(o) for o in otu_ids])

    @property
    def n_leaves(self) -> int:
        return len(self.otu_ids)

    def preorder(self, start: Optional[int] = None) -> list[int]:
        start = self.root if start is None else start
        order, stack = [], [start]
        while stack:
            node_id = stack.pop()
            order.append(node_id)
            stack.extend(reversed(self.nodes[node_id].children))
        return order

    def leaves_under(self, node_id: int) -> np.ndarray:
        """Column indices of the OTUs below a node."""
        return self._leaves_under[node_id]

    def height(self, node_id: int) -> int:
        return self._height[node_id]

    def internal_nodes(self) -> list[int]:
        """Internal nodes ordered bottom-up: by height, then first leaf, then id."""
        internal = [n.id for n in self.nodes if not n.is_leaf]
        return sorted(internal, key=lambda v: (self._height[v], int(self._leaves_under[v][0]), v))

    def path_to_root(self, node_id: int) -> list[int]:
        path = []
        current: Optional[int] = node_id
        while current is not None:
            path.append(current)
            current = self.nodes[current].parent
        return path

    def node_by_label(self, label: str) -> TreeNode:
        for node in self.nodes:
            if node.label == label:
                return node
        raise KeyError(label)


def parse_taxonomy(
    lineages: Union[Sequence[str], Mapping[str, str]],
    otu_ids: Optional[Sequence[str]] = None,
    levels: Optional[Sequence[str]] = None,
) -> TaxonomyTree:
    """
    Build a taxonomy tree from one semicolon-delimited lineage per OTU.

    Identical lineage prefixes share a node; empty segments become unnamed
    pass-through nodes. OTU leaves hang under their deepest rank node, and a
    synthetic root is added only when there are several top-level taxa.

    Args:
        lineages: Lineage strings in column order, or a mapping otu_id -> lineage
        otu_ids: OTU identifiers (default "otu_<i>")
        levels: Rank names (default kingdom, phylum, ...)

    Returns:
        TaxonomyTree whose leaf i is OTU column i

    Raises:
        TaxonomyError: If lineages are missing or have inconsistent rank counts
    """
    if isinstance(lineages, Mapping):
        otu_ids = list(lineages.keys())
        lineages = list(lineages.values())
    lineages = list(lineages)
    if not lineages:
        raise TaxonomyError("taxonomy is empty")
    if otu_ids is None:
        otu_ids = [f"otu_{i}" for i in range(len(lineages))]
    otu_ids = [str(o) for o in otu_ids]
    if len(otu_ids) != len(lineages):
        raise TaxonomyError(f"{len(otu_ids)} OTU ids for {len(lineages)} lineages")
    if len(set(otu_ids)) != len(otu_ids):
        raise TaxonomyError("OTU ids are not unique")

    missing = [o for o, lin in zip(otu_ids, lineages) if lin is None or not str(lin).strip()]
    if missing:
        raise TaxonomyError("OTUs without a lineage", offending=missing)
    split = [[seg.strip() for seg in str(lin).split(";")] for lin in lineages]
    counts = pd.Series([len(s) for s in split])
    depth = int(counts.mode().iloc[0])
    offending = [o for o, s in zip(otu_ids, split) if len(s) != depth]
    if offending:
        raise TaxonomyError(f"inconsistent rank counts (expected {depth})", offending=offending)

    if levels is None:
        levels = DEFAULT_LEVELS[:depth] if depth <= len(DEFAULT_LEVELS) else [f"rank{i}" for i in range(depth)]
    levels = list(levels)
    if len(levels) != depth:
        raise TaxonomyError(f"{len(levels)} level names for {depth} ranks")

    nodes: list[TreeNode] = []
    index: dict[tuple, int] = {}
    tops: list[int] = []

    def add(name: str, label: str, d: int, parent: Optional[int], leaf: Optional[int] = None) -> int:
        node = TreeNode(id=len(nodes), name=name, label=label, depth=d, parent=parent,
                        leaf_index=leaf, unnamed=(name == "" and leaf is None))
        nodes.append(node)
        if parent is not None:
            nodes[parent].children.append(node.id)
        return node.id

    for i, segments in enumerate(split):
        parent: Optional[int] = None
        for d in range(depth):
            key = tuple(segments[:d + 1])
            if key not in index:
                index[key] = add(segments[d], ";".join(key), d, parent)
                if parent is None:
                    tops.append(index[key])
            parent = index[key]
        add(otu_ids[i], otu_ids[i], depth, parent, leaf=i)

    root = tops[0]
    if len(tops) > 1:
        root = add("root", "root", -1, None)
        for top in tops:
            nodes[top].parent = root
            nodes[root].children.append(top)
    logger.debug(f"Parsed taxonomy: {len(otu_ids)} OTUs, {len(nodes)} nodes, {depth} ranks")
    return TaxonomyTree(nodes, root, levels, otu_ids)


def read_taxonomy(path: str, levels: Optional[Sequence[str]] = None) -> TaxonomyTree:
    """Read a tab-separated taxonomy with columns `otu_id` and `lineage`."""
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as e:
        raise InputFileError(f"cannot read taxonomy: {e}", path=path)
    missing = {"otu_id", "lineage"} - set(frame.columns)
    if missing:
        raise InputFileError(f"taxonomy is missing columns {sorted(missing)}", path=path)
    return parse_taxonomy(frame["lineage"].tolist(), otu_ids=frame["otu_id"].tolist(), levels=levels)


@dataclass
class ClusteringMatrix:
    """Membership of every OTU in the clusters of one rank."""
    level: str
    entries: np.ndarray
    cluster_labels: list[str]


def clustering_matrix(tree: TaxonomyTree, level: Union[str, int]) -> ClusteringMatrix:
    """Binary p x m matrix with C[i, j] = 1 iff OTU i lies in cluster j at `level`."""
    depth = tree.levels.index(level) if isinstance(level, str) else int(level)
    if not 0 <= depth < len(tree.levels):
        raise TaxonomyError(f"unknown level {level!r}")
    clusters = [n.id for n in tree.nodes if n.depth == depth and not n.is_leaf]
    entries = np.zeros((tree.n_leaves, len(clusters)), dtype=int)
    for j, node_id in enumerate(clusters):
        entries[tree.leaves_under(node_id), j] = 1
    return ClusteringMatrix(
        level=tree.levels[depth],
        entries=entries,
        cluster_labels=[tree.nodes[c].label for c in clusters],
    )


@dataclass
class AugmentedDesign:
    """Design X(C, I): leaf columns, distinct internal aggregates, then pass-through covariates."""
    matrix: np.ndarray
    labels: list[str]
    column_nodes: list[Optional[int]]
    dropped: list[int]
    duplicate_of: dict[int, int]
    tree: TaxonomyTree
    passthrough: list[str] = field(default_factory=list)

    @property
    def n_tree_columns(self) -> int:
        return len(self.column_nodes) - len(self.passthrough)

    def transform(self, X_leaf, passthrough: Optional[np.ndarray] = None) -> np.ndarray:
        """Build the same columns for new rows of OTU data."""
        X_leaf = as_design_matrix(X_leaf)
        extra = None if passthrough is None else as_design_matrix(passthrough, name="passthrough")
        columns = []
        k = 0
        for node_id in self.column_nodes:
            if node_id is None:
                columns.append(extra[:, k])
                k += 1
            else:
                columns.append(X_leaf[:, self.tree.leaves_under(node_id)].sum(axis=1))
        return np.column_stack(columns)

    def column_of(self, node_id: int) -> Optional[int]:
        """Column holding a node's aggregate (its representative when dropped)."""
        if node_id in self.duplicate_of:
            return self.duplicate_of[node_id]
        try:
            return self.column_nodes.index(node_id)
        except ValueError:
            return None


def _matches(retained: np.ndarray, column: np.ndarray) -> np.ndarray:
    if retained.shape[1] == 0:
        return np.zeros(0, dtype=bool)
    diff = np.abs(retained - column[:, None])
    scale = np.maximum(np.abs(retained), np.abs(column)[:, None])
    return np.all(diff <= DUPLICATE_RTOL * scale, axis=0)


def build_augmented_design(
    X,
    tree: TaxonomyTree,
    passthrough: Optional[np.ndarray] = None,
    passthrough_names: Optional[Sequence[str]] = None,
) -> AugmentedDesign:
    """
    Augment OTU columns with one aggregate per internal node.

    Columns are ordered leaves first, then internal nodes bottom-up. A node
    whose aggregate equals an already retained column is dropped, so the
    lowest-level copy is kept. Pass-through covariates are appended last
    without aggregation.

    Args:
        X: n x p OTU matrix, column i is leaf i of the tree
        tree: Taxonomy over the p OTUs
        passthrough: Optional n x r covariates excluded from aggregation
        passthrough_names: Labels of the pass-through covariates

    Returns:
        AugmentedDesign

    Raises:
        TaxonomyError: If the number of columns differs from the number of leaves
    """
    X = as_design_matrix(X)
    n, p = X.shape
    if p != tree.n_leaves:
        raise TaxonomyError(f"design has {p} columns but the tree has {tree.n_leaves} leaves")

    columns = [X[:, i] for i in range(p)]
    labels = list(tree.otu_ids)
    column_nodes: list[Optional[int]] = list(tree.leaf_nodes)
    dropped: list[int] = []
    duplicate_of: dict[int, int] = {}

    retained = X.copy()
    for node_id in tree.internal_nodes():
        aggregate = X[:, tree.leaves_under(node_id)].sum(axis=1)
        hits = np.flatnonzero(_matches(retained, aggregate))
        if hits.size:
            dropped.append(node_id)
            duplicate_of[node_id] = int(hits[0])
            continue
        columns.append(aggregate)
        labels.append(tree.nodes[node_id].label)
        column_nodes.append(node_id)
        retained = np.column_stack([retained, aggregate])

    names: list[str] = []
    if passthrough is not None:
        extra = as_design_matrix(passthrough, name="passthrough")
        if extra.shape[0] != n:
            raise TaxonomyError("pass-through covariates have a different number of rows")
        names = list(passthrough_names) if passthrough_names is not None else [
            f"covariate_{j}" for j in range(extra.shape[1])
        ]
        for j in range(extra.shape[1]):
            columns.append(extra[:, j])
            labels.append(names[j])
            column_nodes.append(None)

    if dropped:
        logger.info(f"Dropped {len(dropped)} internal nodes equal to retained columns")
    return AugmentedDesign(
        matrix=np.column_stack(columns),
        labels=labels,
        column_nodes=column_nodes,
        dropped=dropped,
        duplicate_of=duplicate_of,
        tree=tree,
        passthrough=names,
    )


@dataclass
class AugmentedCoefficients:
    """Coefficients over every tree node and the leaf model they imply."""
    alpha: np.ndarray
    implied_beta: np.ndarray
    tree: TaxonomyTree

    def by_label(self) -> dict[str, float]:
        return {node.label: float(self.alpha[node.id]) for node in self.tree.nodes}

    def on_design(self, design: AugmentedDesign) -> np.ndarray:
        """Coefficients over design columns; a dropped node's value moves to its representative."""
        values = np.zeros(len(design.column_nodes))
        for node in self.tree.nodes:
            col = design.column_of(node.id)
            if col is not None:
                values[col] += self.alpha[node.id]
        return values


def _median_interval(points: list[float]) -> tuple[float, float]:
    ordered = sorted(points)
    m = len(ordered)
    if m % 2:
        return ordered[m // 2], ordered[m // 2]
    return ordered[m // 2 - 1], ordered[m // 2]


def _implied_beta(alpha: np.ndarray, tree: TaxonomyTree) -> np.ndarray:
    beta = np.zeros(tree.n_leaves)
    for i, leaf in enumerate(tree.leaf_nodes):
        beta[i] = sum(alpha[v] for v in reversed(tree.path_to_root(leaf)))
    return beta


def parsimonious_representation(beta, tree: TaxonomyTree, method: str = "exact") -> AugmentedCoefficients:
    """
    Coefficients over all tree nodes that reproduce `beta` with minimal L1 norm.

    Each node carries a cumulative value (the sum of coefficients on its
    root path) and its coefficient is its value minus its parent's; the
    root's parent value is 0. With method "exact", a bottom-up pass gives
    every node the median interval of its children's interval endpoints and
    a top-down pass picks the point of the median of those endpoints plus
    the parent's value (counted twice) that is closest to the parent's
    value. Nodes with a single child take their parent's value. With method
    "single_pass", every internal value is the lower median of {0} and its
    children's values, computed bottom-up.

    Args:
        beta: Leaf coefficients in column order
        tree: Taxonomy over the leaves
        method: "exact" or "single_pass"

    Returns:
        AugmentedCoefficients indexed by node id
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != tree.n_leaves:
        raise TaxonomyError(f"beta has {beta.shape[0]} entries for {tree.n_leaves} leaves")
    if not np.all(np.isfinite(beta)):
        raise TaxonomyError("beta must be finite")

    n_nodes = len(tree.nodes)
    value = np.zeros(n_nodes)
    order = tree.preorder()

    if method == "single_pass":
        for node_id in reversed(order):
            node = tree.nodes[node_id]
            if node.is_leaf:
                value[node_id] = beta[node.leaf_index]
            else:
                value[node_id] = _median_interval([0.0] + [value[c] for c in node.children])[0]
    elif method == "exact":
        interval: dict[int, tuple[float, float]] = {}
        for node_id in reversed(order):
            node = tree.nodes[node_id]
            if node.is_leaf:
                interval[node_id] = (beta[node.leaf_index], beta[node.leaf_index])
            else:
                endpoints = [e for c in node.children for e in interval[c]]
                interval[node_id] = _median_interval(endpoints)
        for node_id in order:
            node = tree.nodes[node_id]
            parent_value = 0.0 if node.parent is None else value[node.parent]
            if node.is_leaf:
                value[node_id] = beta[node.leaf_index]
            elif len(node.children) == 1 and node.parent is not None:
                value[node_id] = parent_value
            else:
                endpoints = [e for c in node.children for e in interval[c]]
                lo, hi = _median_interval(endpoints + [parent_value, parent_value])
                value[node_id] = min(max(parent_value, lo), hi)
    else:
        raise ValueError(f"unknown method '{method}'")

    alpha = np.zeros(n_nodes)
    for node in tree.nodes:
        parent_value = 0.0 if node.parent is None else value[node.parent]
        alpha[node.id] = value[node.id] - parent_value
    return AugmentedCoefficients(alpha=alpha, implied_beta=_implied_beta(alpha, tree), tree=tree)


def penalty(alpha: Union[AugmentedCoefficients, np.ndarray]) -> float:
    """L1 norm of a coefficient vector (per unit lambda)."""
    values = alpha.alpha if isinstance(alpha, AugmentedCoefficients) else np.asarray(alpha, dtype=float)
    return float(np.sum(np.abs(values)))


@dataclass
class LeafReport:
    """Per-leaf coefficients implied by a selection over augmented columns."""
    leaf_coefficients: np.ndarray
    otu_ids: list[str]
    passthrough_coefficients: dict[str, float]
    constraints: list[str]


def map_selection_to_leaves(
    selected: Sequence[int],
    alpha_hat: Sequence[float],
    design: AugmentedDesign,
) -> LeafReport:
    """
    Sum selected augmented coefficients down to the leaves.

    Args:
        selected: Design column indices
        alpha_hat: Fitted coefficient of each selected column (same order)
        design: The augmented design the columns refer to

    Returns:
        LeafReport with each leaf's effective coefficient and one constraint
        description per selected internal node
    """
    selected = [int(j) for j in selected]
    alpha_hat = [float(a) for a in alpha_hat]
    if len(selected) != len(alpha_hat):
        raise ValueError("selected and alpha_hat differ in length")
    tree = design.tree
    leaf = np.zeros(tree.n_leaves)
    passthrough: dict[str, float] = {}
    constraints: list[str] = []
    for j, coef in zip(selected, alpha_hat):
        node_id = design.column_nodes[j]
        if node_id is None:
            passthrough[design.labels[j]] = coef
            continue
        members = tree.leaves_under(node_id)
        leaf[members] += coef
        if not tree.nodes[node_id].is_leaf:
            ids = ", ".join(tree.otu_ids[i] for i in members)
            constraints.append(
                f"{design.labels[j]}: OTUs {ids} share an added coefficient of {coef:+.6g}"
            )
    return LeafReport(
        leaf_coefficients=leaf,
        otu_ids=list(tree.otu_ids),
        passthrough_coefficients=passthrough,
        constraints=constraints,
    )
