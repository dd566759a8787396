"""Causal chain data model: validation, text linearization, and
positive/negative node sampling for the contrastive chain loss.

A chain is a small typed DAG rooted at the question's condition.  Nodes
are (entity, variation) pairs marked visible or invisible; edges are
"causes" (forward inference) or "needs" (necessary condition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np


class Visibility(str, Enum):
    VISIBLE = "visible"
    INVISIBLE = "invisible"


class EdgeKind(str, Enum):
    CAUSES = "causes"
    NEEDS = "needs"


@dataclass(frozen=True)
class ChainNode:
    node_id: str
    entity: str
    variation: str
    visibility: Visibility = Visibility.VISIBLE

    def phrase(self) -> str:
        return f"the {self.entity} {self.variation}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.node_id,
            "entity": self.entity,
            "variation": self.variation,
            "visibility": self.visibility.value,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ChainNode":
        return ChainNode(d["id"], d["entity"], d["variation"], Visibility(d["visibility"]))


@dataclass(frozen=True)
class ChainEdge:
    src: str
    dst: str
    kind: EdgeKind

    def to_dict(self) -> dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "kind": self.kind.value}

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ChainEdge":
        return ChainEdge(d["src"], d["dst"], EdgeKind(d["kind"]))


@dataclass(frozen=True)
class CausalChain:
    nodes: tuple[ChainNode, ...]
    edges: tuple[ChainEdge, ...]
    root: str

    def node_map(self) -> dict[str, ChainNode]:
        return {n.node_id: n for n in self.nodes}

    def non_root_nodes(self) -> tuple[ChainNode, ...]:
        return tuple(n for n in self.nodes if n.node_id != self.root)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
            "root": self.root,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "CausalChain":
        return CausalChain(
            nodes=tuple(ChainNode.from_dict(n) for n in d["nodes"]),
            edges=tuple(ChainEdge.from_dict(e) for e in d["edges"]),
            root=d["root"],
        )


class InvalidChain(ValueError):
    pass


class NoChain(ValueError):
    pass


class InsufficientNegatives(ValueError):
    pass


def validate(chain: CausalChain) -> list[str]:
    """Return every violated invariant; an empty list means well-formed."""
    violations: list[str] = []
    ids = [n.node_id for n in chain.nodes]
    if len(ids) != len(set(ids)):
        violations.append("duplicate node ids")
    id_set = set(ids)
    for n in chain.nodes:
        if not n.entity or not n.variation:
            violations.append(f"node {n.node_id}: empty entity or variation")
        if not isinstance(n.visibility, Visibility):
            violations.append(f"node {n.node_id}: unknown visibility")
    for e in chain.edges:
        if not isinstance(e.kind, EdgeKind):
            violations.append(f"edge {e.src}->{e.dst}: unknown edge kind")
        if e.src not in id_set or e.dst not in id_set:
            violations.append(f"edge {e.src}->{e.dst}: dangling endpoint")
    if chain.root not in id_set:
        violations.append("root is not a node")
        return violations
    # acyclicity (over valid edges only)
    adj: dict[str, list[str]] = {i: [] for i in id_set}
    indeg = {i: 0 for i in id_set}
    for e in chain.edges:
        if e.src in id_set and e.dst in id_set:
            adj[e.src].append(e.dst)
            indeg[e.dst] += 1
    queue = [i for i in ids if indeg[i] == 0]
    seen = 0
    while queue:
        cur = queue.pop()
        seen += 1
        for nxt in adj[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if seen != len(id_set):
        violations.append("cycle detected")
    # connectivity from the root, ignoring edge direction
    undirected: dict[str, set[str]] = {i: set() for i in id_set}
    for e in chain.edges:
        if e.src in id_set and e.dst in id_set:
            undirected[e.src].add(e.dst)
            undirected[e.dst].add(e.src)
    reach = {chain.root}
    stack = [chain.root]
    while stack:
        for nxt in undirected[stack.pop()]:
            if nxt not in reach:
                reach.add(nxt)
                stack.append(nxt)
    if reach != id_set:
        violations.append("nodes unreachable from root")
    return violations


def topological_order(chain: CausalChain) -> list[str]:
    """Topological node order with ties broken by node_id."""
    id_set = {n.node_id for n in chain.nodes}
    indeg = {i: 0 for i in id_set}
    adj: dict[str, list[str]] = {i: [] for i in id_set}
    for e in chain.edges:
        adj[e.src].append(e.dst)
        indeg[e.dst] += 1
    ready = sorted(i for i in id_set if indeg[i] == 0)
    order: list[str] = []
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        changed = False
        for nxt in adj[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
                changed = True
        if changed:
            ready.sort()
    return order


def linearize(chain: CausalChain, template_id: int = 0) -> str:
    """Flatten a chain into deterministic template text.

    One clause per edge, in topological source order: "<src phrase>
    causes <dst phrase>", clauses joined by " ; ".  A single-node chain
    linearizes to the root phrase alone.
    """
    if template_id != 0:
        raise InvalidChain(f"unknown template id {template_id}")
    problems = validate(chain)
    if problems:
        raise InvalidChain("; ".join(problems))
    nodes = chain.node_map()
    if not chain.edges:
        return nodes[chain.root].phrase()
    pos = {nid: i for i, nid in enumerate(topological_order(chain))}
    edges = sorted(chain.edges, key=lambda e: (pos[e.src], pos[e.dst], e.kind.value))
    clauses = [
        f"{nodes[e.src].phrase()} {e.kind.value} {nodes[e.dst].phrase()}" for e in edges
    ]
    return " ; ".join(clauses)


def sample_contrast_nodes(
    chains: Sequence[CausalChain | None],
    index: int,
    m: int,
    rng: np.random.Generator,
    extra_pool: Iterable[ChainNode] = (),
) -> tuple[list[ChainNode], list[ChainNode]]:
    """Positive/negative chain nodes for the contrastive loss.

    Positives are all non-root nodes of the anchor chain.  Negatives are
    ``m`` nodes drawn uniformly without replacement from the other
    chains in the batch (plus ``extra_pool``, used as a dataset-level
    fallback), excluding any node whose phrase appears in the anchor.
    """
    if chains[index] is None:
        raise NoChain(f"sample {index} has no chain")
    anchor = chains[index]
    positives = list(anchor.non_root_nodes())
    anchor_phrases = {n.phrase() for n in anchor.nodes}
    pool: list[ChainNode] = []
    for i, ch in enumerate(chains):
        if i == index or ch is None:
            continue
        pool.extend(ch.nodes)
    pool.extend(extra_pool)
    pool = [n for n in pool if n.phrase() not in anchor_phrases]
    # dedupe by phrase so a frequent node does not dominate the draw
    by_phrase: dict[str, ChainNode] = {}
    for n in pool:
        by_phrase.setdefault(n.phrase(), n)
    candidates = [by_phrase[p] for p in sorted(by_phrase)]
    if len(candidates) < m:
        raise InsufficientNegatives(
            f"need {m} negatives, pool has {len(candidates)} after exclusion"
        )
    chosen = rng.choice(len(candidates), size=m, replace=False)
    return positives, [candidates[int(i)] for i in chosen]
