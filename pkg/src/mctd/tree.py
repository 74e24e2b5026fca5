"""Arena-backed search tree over subplans.

Selection uses the redundancy-aware UCT rule

    V_j + beta * sqrt(log(N_i + w * Nhat_i) / (N_j + w * Nhat_j))

where ``Nhat`` counts selections made earlier in the current batch. With
``w = 0`` it is plain UCT. Values are backed up with ``max``.

All mutation happens on the caller's (single) control thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DuplicateChild(KeyError):
    pass


class NoVisitedNode(LookupError):
    pass


@dataclass(eq=False)
class Node:
    id: int
    parent: int | None
    action: int | None  # index into the tree's guidance set; None at the root
    subplan: np.ndarray
    depth: int
    children: dict[int, int] = field(default_factory=dict)
    value: float = 0.0
    visits: int = 0
    temp_visits: int = 0
    terminal: bool = False
    simulations: int = 0
    rollout: np.ndarray | None = None  # completed trajectory that solved the problem, if any


def uct_score(child: Node, parent: Node, beta: float, w: float) -> float:
    denom = child.visits + child.temp_visits * w
    if denom <= 0:
        return math.inf
    total = parent.visits + parent.temp_visits * w
    return child.value + beta * math.sqrt(math.log(max(total, 1.0)) / denom)


class Tree:
    def __init__(self, root_subplan, guidance_set: Sequence[float], max_depth: int | None = None):
        self.guidance_set = tuple(float(g) for g in guidance_set)
        if not self.guidance_set:
            raise ValueError("guidance set must be non-empty")
        self.max_depth = max_depth
        self.nodes: list[Node] = []
        self.root = self._add(None, None, np.asarray(root_subplan, dtype=np.float64).reshape(-1, 2), 0)

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def _add(self, parent, action, subplan, depth) -> int:
        node = Node(len(self.nodes), parent, action, subplan, depth)
        if self.max_depth is not None and depth >= self.max_depth:
            node.terminal = True
        self.nodes.append(node)
        return node.id

    def fully_expanded(self, node_id: int) -> bool:
        return len(self.nodes[node_id].children) == len(self.guidance_set)

    def unexpanded_actions(self, node_id: int) -> list[int]:
        node = self.nodes[node_id]
        if node.terminal:
            return []
        return [a for a in range(len(self.guidance_set)) if a not in node.children]

    def best_child(self, node_id: int, beta: float, w: float) -> int:
        """Argmax of the UCT score; ties go to the earlier guidance level."""
        parent = self.nodes[node_id]
        best, best_score = -1, -math.inf
        for a in sorted(parent.children):
            child = self.nodes[parent.children[a]]
            s = uct_score(child, parent, beta, w)
            if s > best_score:
                best, best_score = child.id, s
        return best

    def select_leaf(self, beta: float, w: float) -> list[int]:
        node = self.root
        path = [node]
        while self.fully_expanded(node) and not self.nodes[node].terminal:
            node = self.best_child(node, beta, w)
            path.append(node)
        for n in path:
            self.nodes[n].temp_visits += 1
        return path

    def reset_temp_counts(self):
        for n in self.nodes:
            n.temp_visits = 0

    def expand(self, node_id: int, action: int, subplan) -> int:
        parent = self.nodes[node_id]
        if action in parent.children:
            raise DuplicateChild(f"node {node_id} already has a child for action {action}")
        if not 0 <= action < len(self.guidance_set):
            raise ValueError(f"action {action} outside the guidance set")
        child = self._add(node_id, action, np.asarray(subplan, dtype=np.float64).reshape(-1, 2), parent.depth + 1)
        parent.children[action] = child
        return child

    def backpropagate_batch(self, results: Iterable[tuple[int, float]]):
        for leaf, reward in results:
            reward = float(reward)
            if not math.isfinite(reward):
                raise ValueError("rewards must be finite")
            node = leaf
            while node is not None:
                n = self.nodes[node]
                n.visits += 1
                n.value = max(n.value, reward)
                node = n.parent

    def leaf_parallel_select(self, beta: float, w: float, m: int) -> list[tuple[int, int]]:
        """One selection, then up to ``m`` unexpanded actions of the chosen leaf."""
        if m < 1:
            raise ValueError("m must be >= 1")
        leaf = self.select_leaf(beta, w)[-1]
        return [(leaf, a) for a in self.unexpanded_actions(leaf)[:m]]

    def path_to(self, node_id: int) -> list[int]:
        path = []
        node = node_id
        while node is not None:
            path.append(node)
            node = self.nodes[node].parent
        return path[::-1]

    def trajectory(self, node_id: int) -> np.ndarray:
        """Concatenated subplans from the root to ``node_id``."""
        return np.concatenate([self.nodes[n].subplan for n in self.path_to(node_id)])

    def schedule(self, node_id: int) -> tuple[float, ...]:
        return tuple(self.guidance_set[self.nodes[n].action] for n in self.path_to(node_id)[1:])

    def best_path(self) -> tuple[tuple[float, ...], np.ndarray]:
        """Follow the highest-value child (then most visited, then guidance order).

        If the path ends in a node whose rollout solved the problem, that rollout is
        returned in place of the bare subplan concatenation.
        """
        root = self.nodes[self.root]
        if not any(self.nodes[c].visits > 0 for c in root.children.values()):
            raise NoVisitedNode("no child of the root has been visited")
        node = root
        while node.children and not node.terminal:
            visited = [self.nodes[node.children[a]] for a in sorted(node.children)]
            visited = [c for c in visited if c.visits > 0]
            if not visited:
                break
            node = max(visited, key=lambda c: (c.value, c.visits, -c.action))
        schedule = self.schedule(node.id)
        if node.rollout is not None:
            return schedule, node.rollout.copy()
        return schedule, self.trajectory(node.id)

    def dump(self) -> str:
        """``id parent depth action V N children...``, one node per line."""
        lines = []
        for n in self.nodes:
            parent = "-" if n.parent is None else str(n.parent)
            action = "-" if n.action is None else repr(self.guidance_set[n.action])
            kids = " ".join(str(n.children[a]) for a in sorted(n.children))
            lines.append(f"{n.id} {parent} {n.depth} {action} {n.value!r} {n.visits} {kids}".rstrip())
        return "\n".join(lines) + "\n"

    def check(self):
        """Assert structural invariants (parent/child consistency, acyclicity)."""
        for n in self.nodes:
            for a, c in n.children.items():
                child = self.nodes[c]
                assert child.parent == n.id and child.action == a and c > n.id
            if n.parent is None:
                assert n.id == self.root
            else:
                assert n.id in self.nodes[n.parent].children.values()
