import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from utils.errors import NoSuccessor, PartialApplication, ResourceLimit, Unsatisfiable
from utils.logic.formula import (AR, AU, AX, EX, FALSE, TRUE, AtomLit,
                                 Formula, NegAtom, Top, classify, closure, conj, ex_any,
                                 group_by_process, instantiate, is_eventuality,
                                 sorted_formulas, truth, ELEMENTARY, Alpha)
from utils.vocab.sorts import Sort
from utils.vocab.terms import Equals, Var, as_simple, eval_term
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)

OR = "OR"
AND = "AND"


@dataclass
class TableauNode:
    id: int
    kind: str
    formulas: FrozenSet[Formula]
    simple_atoms: Valuation
    successors: List[Tuple[Optional[int], int]] = field(default_factory=list)
    alive: bool = True
    deleted_by: Optional[str] = None

    @property
    def key(self):
        return (self.kind, self.simple_atoms, self.formulas)

    def successor_ids(self) -> List[int]:
        return [n for _, n in self.successors]

    def eventualities(self) -> List[Formula]:
        return sorted_formulas(f for f in self.formulas if is_eventuality(f))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "formulas": [str(f) for f in sorted_formulas(self.formulas)],
            "simple_atoms": self.simple_atoms.to_dict(),
            "successors": [[label, n] for label, n in self.successors],
            "alive": self.alive,
            "deleted_by": self.deleted_by,
        }


@dataclass
class Tableau:
    phi: Formula
    processes: int
    sorts: Dict[str, Sort]
    nodes: Dict[int, TableauNode] = field(default_factory=dict)
    node_index: Dict[tuple, int] = field(default_factory=dict)
    root: int = 0
    ranks: Dict[Formula, Dict[int, int]] = field(default_factory=dict)

    def node(self, n: int) -> TableauNode:
        return self.nodes[n]

    @property
    def satisfiable(self) -> bool:
        return self.nodes[self.root].alive

    def alive_nodes(self, kind: Optional[str] = None) -> List[TableauNode]:
        return [node for _, node in sorted(self.nodes.items())
                if node.alive and (kind is None or node.kind == kind)]

    def alive_successors(self, n: int) -> List[int]:
        return [m for m in self.nodes[n].successor_ids() if self.nodes[m].alive]

    def predecessors(self) -> Dict[int, Set[int]]:
        preds: Dict[int, Set[int]] = {n: set() for n in self.nodes}
        for n, node in self.nodes.items():
            for m in node.successor_ids():
                preds[m].add(n)
        return preds

    def rank(self, eventuality: Formula, n: int) -> Optional[int]:
        return self.ranks.get(eventuality, {}).get(n)

    def stats(self) -> dict:
        """Node counts against the bound valuations × 2^closure (kept as log2)."""
        valuations = math.prod(len(s.domain) for s in self.sorts.values()) if self.sorts else 1
        size = len(closure(self.phi, self.processes))
        return {
            "nodes": len(self.nodes),
            "alive": len(self.alive_nodes()),
            "and_nodes": sum(1 for n in self.nodes.values() if n.kind == AND),
            "or_nodes": sum(1 for n in self.nodes.values() if n.kind == OR),
            "closure": size,
            "valuations": valuations,
            "bound_log2": round(math.log2(valuations) + size, 3),
            "within_bound": math.log2(max(len(self.nodes), 1)) <= math.log2(valuations) + size,
        }

    def to_dict(self, keep_deleted: bool = True) -> dict:
        nodes = [node.to_dict() for _, node in sorted(self.nodes.items())
                 if keep_deleted or node.alive]
        return {"root": self.root, "processes": self.processes, "phi": str(self.phi), "nodes": nodes}


# --- Construction ---

def _priority(f: Formula, k: int) -> int:
    if isinstance(f, (Top, AtomLit, NegAtom)):
        return 0
    kind = classify(f, k)
    if kind is ELEMENTARY:
        return 1
    return 2 if isinstance(kind, Alpha) else 3


class TableauBuilder:
    """
    Builds the AND/OR graph for an NNF formula.

    OR-nodes are expanded through a temporary tree of alpha/beta steps into
    AND-nodes whose valuations are complete; AND-nodes spawn one OR-successor per
    ``EXi`` obligation, or one per process when ``per_process`` is set.
    """

    def __init__(self, phi: Formula, sorts: Mapping[str, Sort], processes: int,
                 per_process: bool = False, node_budget: int = 200000):
        self.phi = phi
        self.sorts = dict(sorts)
        self.k = processes
        self.per_process = per_process
        self.node_budget = node_budget
        self.tableau = Tableau(phi, processes, self.sorts)

    def node_for(self, kind: str, formulas: FrozenSet[Formula], atoms: Valuation) -> Tuple[int, bool]:
        key = (kind, atoms, formulas)
        existing = self.tableau.node_index.get(key)
        if existing is not None:
            return existing, False
        if len(self.tableau.nodes) >= self.node_budget:
            raise ResourceLimit(f"Tableau exceeded the node budget of {self.node_budget}", stage="tableau")
        n = len(self.tableau.nodes)
        self.tableau.nodes[n] = TableauNode(n, kind, formulas, atoms)
        self.tableau.node_index[key] = n
        return n, True

    # --- Literals under a partial valuation ---

    def _literal(self, f: Formula, atoms: Dict) -> str:
        """Returns 'drop' (satisfied or absorbed), 'dead' or 'keep' (undetermined)."""
        if isinstance(f, AtomLit):
            fixed = self._fixes(f.atom, atoms)
            if fixed == "dead":
                return "dead"
            if fixed is not None:
                name, value = fixed
                if name in atoms:
                    return "drop" if atoms[name] == value else "dead"
                atoms[name] = value
                return "drop"
        value = truth(f, atoms)
        if value is None:
            return "keep"
        return "drop" if value else "dead"

    def _fixes(self, atom, atoms: Dict):
        """(name, value) when ``atom`` pins one variable given ``atoms``; 'dead' if it cannot hold."""
        simple = as_simple(atom)
        if simple is not None:
            name, value = simple
            if name in self.sorts and value not in self.sorts[name]:
                return "dead"
            return simple if name in self.sorts else None
        if not isinstance(atom, Equals):
            return None
        for var, other in ((atom.left, atom.right), (atom.right, atom.left)):
            if isinstance(var, Var) and var.name in self.sorts and other.variables() <= set(atoms):
                try:
                    value = eval_term(other, atoms)
                except PartialApplication:
                    return "dead"
                if value not in self.sorts[var.name]:
                    return "dead"
                return var.name, value
        return None

    def _status(self, f: Formula, label: Set[Formula], atoms: Dict) -> str:
        if f == FALSE:
            return "fails"
        if f in label:
            return "holds"
        value = truth(f, atoms)
        if value is None:
            return "open"
        return "holds" if value else "fails"

    # --- Expansion ---

    def expand_or_node(self, node: TableauNode) -> List[Tuple[FrozenSet[Formula], Valuation]]:
        """AND-node labels for the leaves of the temporary tree rooted at ``node``."""
        leaves: Dict[tuple, Tuple[FrozenSet[Formula], Valuation]] = {}
        start = [(_priority(f, self.k), f) for f in node.formulas]
        heapq.heapify(start)
        stack = [(start, set(), dict(node.simple_atoms))]
        while stack:
            todo, label, atoms = stack.pop()
            dead = False
            while todo and not dead:
                _, f = heapq.heappop(todo)
                if f in label or f == TRUE:
                    continue
                if f == FALSE:
                    dead = True
                    break
                if isinstance(f, (AtomLit, NegAtom)):
                    outcome = self._literal(f, atoms)
                    if outcome == "dead":
                        dead = True
                    elif outcome == "keep":
                        label.add(f)
                    continue
                kind = classify(f, self.k)
                label.add(f)
                if kind is ELEMENTARY:
                    continue
                if isinstance(kind, Alpha):
                    for part in kind:
                        if part not in label:
                            heapq.heappush(todo, (_priority(part, self.k), part))
                    continue
                first, second = (self._status(part, label, atoms) for part in kind)
                if "holds" in (first, second):
                    continue
                if first == "fails" and second == "fails":
                    dead = True
                elif first == "fails":
                    heapq.heappush(todo, (_priority(kind.second, self.k), kind.second))
                elif second == "fails":
                    heapq.heappush(todo, (_priority(kind.first, self.k), kind.first))
                else:
                    other = list(todo)
                    heapq.heappush(other, (_priority(kind.second, self.k), kind.second))
                    stack.append((other, set(label), dict(atoms)))
                    heapq.heappush(todo, (_priority(kind.first, self.k), kind.first))
            if not dead:
                for formulas, full in self._complete(label, atoms):
                    leaves[(formulas, full)] = (formulas, full)
        return list(leaves.values())

    def _complete(self, label: Set[Formula], atoms: Dict):
        """Extend ``atoms`` to every variable; literals must then evaluate true and are dropped."""
        missing = [name for name in sorted(self.sorts) if name not in atoms]
        literals = [f for f in label if isinstance(f, (AtomLit, NegAtom))]
        rest = frozenset(f for f in label if not isinstance(f, (AtomLit, NegAtom)))
        for values in product(*(self.sorts[name].domain for name in missing)):
            full = dict(atoms)
            full.update(zip(missing, values))
            if all(truth(f, full) is True for f in literals):
                yield rest, Valuation(full)

    def expand_and_node(self, node: TableauNode) -> List[Tuple[int, FrozenSet[Formula]]]:
        """(process index, OR-node label) for every successor of an AND-node."""
        state = node.simple_atoms
        ex = group_by_process(node.formulas, EX)
        ax = group_by_process(node.formulas, AX)
        if not ex:
            raise NoSuccessor(f"AND-node {node.id} has no EX obligation", stage="tableau")
        successors = []
        for i in sorted(ex):
            carried = [instantiate(b, state) for b in ax.get(i, [])]
            if self.per_process:
                bodies = [instantiate(b, state) for b in ex[i]]
                successors.append((i, frozenset(f for f in bodies + carried if f != TRUE)))
            else:
                for body in ex[i]:
                    label = [instantiate(body, state)] + carried
                    successors.append((i, frozenset(f for f in label if f != TRUE)))
        return successors

    def build(self, initials: Optional[Sequence[Valuation]] = None) -> Tableau:
        """
        Expand to closure with a FIFO worklist.

        Args:
            initials: When given, the root is an AND-node with one OR-successor per
                initial valuation, each labeled with phi and that valuation.

        Raises:
            ResourceLimit: The node budget is exhausted.
        """
        queue = deque()
        if initials:
            root, _ = self.node_for(AND, frozenset(), Valuation())
            for v in sorted(initials):
                child, created = self.node_for(OR, frozenset([self.phi]), v)
                self.tableau.nodes[root].successors.append((0, child))
                if created:
                    queue.append(child)
        else:
            root, _ = self.node_for(OR, frozenset([self.phi]), Valuation())
            queue.append(root)
        self.tableau.root = root
        while queue:
            node = self.tableau.nodes[queue.popleft()]
            if node.kind == OR:
                successors = [(None, label, atoms) for label, atoms in self.expand_or_node(node)]
                kind = AND
            else:
                successors = [(i, label, Valuation()) for i, label in self.expand_and_node(node)]
                kind = OR
            for edge, label, atoms in sorted(successors, key=_successor_order):
                child, created = self.node_for(kind, label, atoms)
                if (edge, child) not in node.successors:
                    node.successors.append((edge, child))
                if created:
                    queue.append(child)
        logger.debug(f"Tableau built with {len(self.tableau.nodes)} nodes")
        return self.tableau


def _successor_order(item):
    edge, label, atoms = item
    return (edge or 0, atoms.sort_key(), [str(f) for f in sorted_formulas(label)])


# --- Merging and deletion ---

def merge_equivalent(t: Tableau) -> Tableau:
    """Unify nodes with equal (kind, simple atoms, formula set), keeping the lowest id."""
    representative: Dict[tuple, int] = {}
    alias: Dict[int, int] = {}
    for n, node in sorted(t.nodes.items()):
        alias[n] = representative.setdefault(node.key, n)
    for n in list(t.nodes):
        if alias[n] != n:
            del t.nodes[n]
    for node in t.nodes.values():
        edges = []
        for label, m in node.successors:
            edge = (label, alias[m])
            if edge not in edges:
                edges.append(edge)
        node.successors = edges
    t.root = alias[t.root]
    t.node_index = {node.key: n for n, node in t.nodes.items()}
    return t


def _inconsistent(node: TableauNode) -> bool:
    if FALSE in node.formulas:
        return True
    pinned: Dict[str, object] = dict(node.simple_atoms)
    for f in node.formulas:
        if isinstance(f, AtomLit):
            simple = as_simple(f.atom)
            if simple is not None:
                name, value = simple
                if pinned.setdefault(name, value) != value:
                    return True
    for f in node.formulas:
        if isinstance(f, (AtomLit, NegAtom)) and truth(f, pinned) is False:
            return True
    return False


def _kill(t: Tableau, n: int, rule: str) -> None:
    node = t.nodes[n]
    node.alive = False
    node.deleted_by = rule


def _propagate(t: Tableau) -> bool:
    """Deletion rule 2 to a fixpoint: OR-nodes need one live successor, AND-nodes need all."""
    preds = t.predecessors()
    work = deque(sorted(n for n, node in t.nodes.items() if node.alive))
    changed = False
    while work:
        n = work.popleft()
        node = t.nodes[n]
        if not node.alive:
            continue
        succ = node.successor_ids()
        if node.kind == OR:
            doomed = not any(t.nodes[m].alive for m in succ)
        else:
            doomed = not succ or not all(t.nodes[m].alive for m in succ)
        if doomed:
            _kill(t, n, "rule2")
            changed = True
            work.extend(sorted(p for p in preds[n] if t.nodes[p].alive))
    return changed


def _fulfilled_here(node: TableauNode, eventuality: Formula) -> bool:
    goal = eventuality.right
    return goal in node.formulas or truth(goal, node.simple_atoms) is True


def eventuality_ranks(t: Tableau, eventuality: Formula) -> Dict[int, int]:
    """
    Least-fixpoint ranks of the live AND-nodes carrying ``eventuality``.

    Rank 0 means the goal holds at the node. An AU node gets rank r when every
    successor OR-node has a live AND-child of rank below r; an EU node needs one
    successor OR-node carrying the formula with such a child.
    """
    carriers = [node for node in t.alive_nodes(AND) if eventuality in node.formulas]
    ranks = {node.id: 0 for node in carriers if _fulfilled_here(node, eventuality)}
    universal = isinstance(eventuality, AU)
    r = 0
    while True:
        r += 1
        found = {}
        for node in carriers:
            if node.id in ranks:
                continue
            succ = t.alive_successors(node.id)

            def witnessed(b):
                return any(c in ranks for c in t.alive_successors(b))

            if universal:
                ok = bool(succ) and all(witnessed(b) for b in succ)
            else:
                ok = any(eventuality in t.nodes[b].formulas and witnessed(b) for b in succ)
            if ok:
                found[node.id] = r
        if not found:
            return ranks
        ranks.update(found)


def delete_inconsistent(t: Tableau) -> Tableau:
    """Apply the four deletion rules until nothing changes; ranks are kept on ``t``."""
    for n, node in sorted(t.nodes.items()):
        if node.alive and _inconsistent(node):
            _kill(t, n, "rule1")
    while True:
        changed = _propagate(t)
        t.ranks = {}
        pending = sorted_formulas({f for node in t.alive_nodes(AND) for f in node.eventualities()})
        for e in pending:
            ranks = eventuality_ranks(t, e)
            t.ranks[e] = ranks
            for node in t.alive_nodes(AND):
                if e in node.formulas and node.id not in ranks:
                    _kill(t, node.id, "rule4" if isinstance(e, AU) else "rule3")
                    changed = True
        if not changed:
            return t


def build_tableau(phi: Formula, sorts: Mapping[str, Sort], processes: int,
                  initials: Optional[Sequence[Valuation]] = None, per_process: bool = False,
                  node_budget: int = 200000) -> Tableau:
    """
    Decide ``phi`` (NNF) by building and pruning its tableau.

    Returns:
        Tableau: With a live root.

    Raises:
        Unsatisfiable: The root was deleted; the exception carries the tableau.
        ResourceLimit: More than ``node_budget`` nodes were needed.
    """
    builder = TableauBuilder(phi, sorts, processes, per_process=per_process, node_budget=node_budget)
    t = delete_inconsistent(builder.build(initials))
    stats = t.stats()
    logger.info(f"Tableau: {stats['nodes']} nodes, {stats['alive']} alive")
    if not t.satisfiable:
        raise Unsatisfiable(tableau=t)
    return t


def decide(phi: Formula, sorts: Mapping[str, Sort], processes: int, **kwargs) -> bool:
    """
    Satisfiability of ``phi`` over total models.

    ``AG EX true`` is conjoined so every AND-node has a successor even when
    ``phi`` has no progress clause of its own.
    """
    total = conj([phi, AR(FALSE, ex_any(TRUE, processes))])
    try:
        build_tableau(total, sorts, processes, **kwargs)
    except Unsatisfiable:
        return False
    return True
