import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx

from tableau_builder import AND, OR, Tableau
from utils.errors import EmptyTableau, ExtractionError
from utils.logic.formula import AU, Formula
from utils.logic.model_checker import Model, holds_initially
from utils.vocab.sorts import Sort
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)

StateKey = Tuple[int, int, int]   # (fragment root, AND-node, phase)


@dataclass
class Fragment:
    """A rooted DAG of AND-nodes fulfilling every eventuality of its root."""

    root: int
    nodes: List[Tuple[int, int]]
    edges: List[Tuple[Tuple[int, int], int, Tuple[int, int]]]
    frontier: List[Tuple[int, int]]
    fulfilled: List[Formula]

    @property
    def entry(self) -> Tuple[int, int]:
        return self.nodes[0]

    @property
    def depth(self) -> int:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from((s, t) for s, _, t in self.edges)
        return nx.dag_longest_path_length(graph)


@dataclass
class ModelTransition:
    source: int
    process: int
    target: int
    assign: Optional[int] = None

    def as_tuple(self):
        return (self.source, self.process, self.target)


@dataclass
class ExtractedModel:
    labels: List[Valuation]
    transitions: List[ModelTransition]
    initial: List[int]
    processes: int
    sorts: Dict[str, Sort]
    origins: List[StateKey] = field(default_factory=list)
    fragments: Dict[int, Fragment] = field(default_factory=dict)
    aux_variable: Optional[str] = None
    aux_domain: Optional[Tuple[int, ...]] = None

    @property
    def size(self) -> int:
        return len(self.labels)

    def outgoing(self, s: int) -> List[ModelTransition]:
        return [t for t in self.transitions if t.source == s]

    def to_model(self) -> Model:
        return Model(list(self.labels), [t.as_tuple() for t in self.transitions],
                     self.processes, list(self.initial))

    def to_dict(self) -> dict:
        return {
            "states": [label.to_dict() for label in self.labels],
            "initial": list(self.initial),
            "transitions": [[t.source, t.process, t.target, t.assign] for t in self.transitions],
            "aux_variable": self.aux_variable,
            "aux_domain": list(self.aux_domain) if self.aux_domain else None,
            "fragments": [{"root": f.root, "size": len(f.nodes), "depth": f.depth,
                           "fulfilled": [str(e) for e in f.fulfilled]}
                          for _, f in sorted(self.fragments.items())],
        }

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = self.to_model().to_networkx()
        for t in self.transitions:
            if t.assign is not None:
                for key, data in graph.get_edge_data(t.source, t.target).items():
                    if data["process"] == t.process:
                        data["label"] = f"{t.process} / {self.aux_variable} := {t.assign}"
        return graph


class ModelExtractor:
    """Stitches fragments of a pruned tableau into a model."""

    def __init__(self, tableau: Tableau):
        if not tableau.satisfiable:
            raise EmptyTableau("Cannot extract a model from a tableau with a deleted root", stage="modelx")
        self.tableau = tableau
        self.fragments: Dict[int, Fragment] = {}

    # --- Child selection ---

    def default_child(self, or_node: int) -> int:
        return min(self.tableau.alive_successors(or_node))

    def best_child(self, or_node: int, eventuality: Formula) -> Optional[Tuple[int, int]]:
        ranked = [(self.tableau.rank(eventuality, c), c) for c in self.tableau.alive_successors(or_node)
                  if self.tableau.rank(eventuality, c) is not None]
        return min(ranked) if ranked else None

    def pending(self, node: int, eventuality: Formula) -> bool:
        rank = self.tableau.rank(eventuality, node)
        return eventuality in self.tableau.node(node).formulas and bool(rank)

    # --- Fragments ---

    def fragment(self, root: int) -> Fragment:
        """
        Build the fragment rooted at AND-node ``root``.

        The root's unfulfilled eventualities are handled one phase each. An AU
        phase follows the lowest-ranked child under every successor; an EU phase
        follows it under one carrying successor and moves the others on to the
        next phase. Nodes left with no pending phase form the frontier.
        """
        if root in self.fragments:
            return self.fragments[root]
        t = self.tableau
        events = [e for e in t.node(root).eventualities()]
        pending = [e for e in events if self.pending(root, e)]
        nodes: Dict[Tuple[int, int], None] = {}
        edges = []
        frontier = []

        def advance(node: int, m: int) -> int:
            while m < len(pending) and not self.pending(node, pending[m]):
                m += 1
            return m

        def visit(node: int, m: int) -> Tuple[int, int]:
            m = advance(node, m)
            key = (node, m)
            if key in nodes:
                return key
            nodes[key] = None
            if m == len(pending):
                frontier.append(key)
                return key
            e = pending[m]
            successors = [(label, b) for label, b in t.node(node).successors if t.node(b).alive]
            chosen = None
            if not isinstance(e, AU):
                carriers = []
                for label, b in successors:
                    if e in t.node(b).formulas:
                        best = self.best_child(b, e)
                        if best is not None:
                            carriers.append((best, b))
                if not carriers:
                    raise ExtractionError(f"No successor of node {node} continues {e}", stage="modelx")
                chosen = min(carriers)[1]
            for label, b in successors:
                if isinstance(e, AU) or b == chosen:
                    best = self.best_child(b, e)
                    if best is None:
                        raise ExtractionError(f"Node {b} has no ranked child for {e}", stage="modelx")
                    child = visit(best[1], m)
                else:
                    child = visit(self.default_child(b), m + 1)
                edge = (key, label, child)
                if edge not in edges:
                    edges.append(edge)
            return key

        visit(root, 0)
        fragment = Fragment(root, list(nodes), edges, frontier, events)
        self.fragments[root] = fragment
        return fragment

    def initial_nodes(self) -> List[int]:
        t = self.tableau
        root = t.node(t.root)
        if root.kind == OR:
            return [self.default_child(root.id)]
        return [self.default_child(b) for b in t.alive_successors(root.id)]

    def extract(self) -> ExtractedModel:
        t = self.tableau
        index: Dict[StateKey, int] = {}
        origins: List[StateKey] = []
        transitions: List[ModelTransition] = []
        seen_edges = set()

        def state(key: StateKey) -> int:
            if key not in index:
                index[key] = len(origins)
                origins.append(key)
            return index[key]

        def entry(and_node: int) -> int:
            fragment = self.fragment(and_node)
            node, m = fragment.entry
            return state((and_node, node, m))

        def connect(s: int, process: int, target: int) -> None:
            if (s, process, target) not in seen_edges:
                seen_edges.add((s, process, target))
                transitions.append(ModelTransition(s, process, target))

        initial = []
        for node in self.initial_nodes():
            s = entry(node)
            if s not in initial:
                initial.append(s)
        queue = deque(sorted(set(n for n in self.initial_nodes())))
        done = set()
        while queue:
            root = queue.popleft()
            if root in done:
                continue
            done.add(root)
            fragment = self.fragment(root)
            for key in fragment.nodes:
                state((root,) + key)
            for src, label, dst in fragment.edges:
                connect(state((root,) + src), label, state((root,) + dst))
            for key in fragment.frontier:
                node = key[0]
                for label, b in t.node(node).successors:
                    if not t.node(b).alive:
                        continue
                    child = self.default_child(b)
                    connect(state((root,) + key), label, entry(child))
                    if child not in done:
                        queue.append(child)
        labels = [t.node(node).simple_atoms for _, node, _ in origins]
        transitions.sort(key=lambda tr: tr.as_tuple())
        model = ExtractedModel(labels, transitions, sorted(initial), t.processes, dict(t.sorts),
                               origins, dict(self.fragments))
        logger.debug(f"Extracted {model.size} states from {len(self.fragments)} fragments")
        return model


def extract_model(tableau: Tableau, check: bool = True) -> ExtractedModel:
    """
    Extract a model of the tableau's formula.

    Raises:
        EmptyTableau: The root was deleted.
        ExtractionError: The model does not satisfy the formula (post-extraction oracle).
    """
    model = ModelExtractor(tableau).extract()
    if check:
        holds, failing = holds_initially(model.to_model(), tableau.phi)
        if not holds:
            raise ExtractionError(f"Extracted model violates the formula at state {failing}", stage="modelx")
    return model


# --- Auxiliary variable ---

def aux_name(sorts: Dict[str, Sort]) -> str:
    for candidate in ("x", "x_aux", "x_sync"):
        if candidate not in sorts:
            return candidate
    n = 1
    while f"x_{n}" in sorts:
        n += 1
    return f"x_{n}"


def disambiguate(model: ExtractedModel) -> ExtractedModel:
    """
    Give same-labeled states distinct values of a fresh shared variable x.

    Members of a group of n states get x = 1..n; an initial state in a group
    keeps x = 0 and the others take 1..n-1. Every other state has x = 0. An
    edge entering a nonzero member assigns x := j; an edge from x ≠ 0 into an
    x = 0 state resets x := 0.
    """
    groups: Dict[Valuation, List[int]] = {}
    for s, label in enumerate(model.labels):
        groups.setdefault(label, []).append(s)
    duplicates = [members for _, members in sorted(groups.items(), key=lambda kv: kv[1][0]) if len(members) > 1]
    if not duplicates:
        return model
    x = [0] * model.size
    for members in duplicates:
        initial = [s for s in members if s in model.initial]
        rest = [s for s in members if s not in initial[:1]]
        for j, s in enumerate(rest, start=1):
            x[s] = j
    name = aux_name(model.sorts)
    domain = tuple(range(0, max(x) + 1))
    labels = [label.updated({name: x[s]}) for s, label in enumerate(model.labels)]
    transitions = []
    for tr in model.transitions:
        assign = None
        if x[tr.target] != 0 or x[tr.source] != x[tr.target]:
            assign = x[tr.target]
        transitions.append(ModelTransition(tr.source, tr.process, tr.target, assign))
    sorts = dict(model.sorts)
    sorts[name] = Sort.range(0, domain[-1])
    logger.info(f"Auxiliary variable {name} over {{0..{domain[-1]}}} for {len(duplicates)} duplicate groups")
    return ExtractedModel(labels, transitions, list(model.initial), model.processes, sorts,
                          list(model.origins), dict(model.fragments), name, domain)
