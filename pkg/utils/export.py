"""Artifact writers: JSON through orjson, DOT through a Jinja2 template, CSV through pandas."""
import logging
from pathlib import Path
from typing import Iterable, Mapping, Union

import networkx as nx
import orjson
import pandas as pd
from jinja2 import Environment, FileSystemLoader

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"

_env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), trim_blocks=True,
                   lstrip_blocks=True, keep_trailing_newline=True)

PathLike = Union[str, Path]


def dumps(payload: Mapping) -> bytes:
    """Deterministic JSON: sorted keys, two-space indent, schema tag."""
    document = {"schema": SCHEMA_VERSION, **payload}
    return orjson.dumps(document, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2
                        | orjson.OPT_NON_STR_KEYS | orjson.OPT_APPEND_NEWLINE)


def write_json(path: PathLike, payload: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload))
    logger.debug(f"Wrote {path}")
    return path


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path: PathLike, rows: Iterable[Mapping]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(path, index=False, lineterminator="\n")
    logger.debug(f"Wrote {path}")
    return path


# --- DOT ---

def graph_to_dot(graph: nx.DiGraph, name: str = "G") -> str:
    nodes = [{"id": n, "label": data.get("label", str(n)), "shape": data.get("shape"),
              "style": data.get("style")} for n, data in sorted(graph.nodes(data=True))]
    edges = sorted(({"source": u, "target": v, "label": data.get("label")}
                    for u, v, data in graph.edges(data=True)),
                   key=lambda e: (e["source"], e["target"], str(e["label"])))
    return _env.get_template("graph.dot.j2").render(name=name, nodes=nodes, edges=edges)


def write_dot(path: PathLike, graph: nx.DiGraph, name: str = "G") -> Path:
    return write_text(path, graph_to_dot(graph, name))


def tableau_graph(tableau, keep_deleted: bool = False) -> nx.DiGraph:
    """AND-nodes as boxes, OR-nodes as ellipses, deleted nodes dashed."""
    graph = nx.DiGraph()
    for n, node in sorted(tableau.nodes.items()):
        if not (keep_deleted or node.alive):
            continue
        lines = [f"{n} {node.kind}", repr(node.simple_atoms)]
        lines += [str(f) for f in sorted(node.formulas)]
        if node.deleted_by:
            lines.append(f"deleted: {node.deleted_by}")
        graph.add_node(n, label="\\n".join(lines), shape="box" if node.kind == "AND" else "ellipse",
                       style=None if node.alive else "dashed")
    for n, node in sorted(tableau.nodes.items()):
        for label, m in node.successors:
            if n in graph and m in graph:
                graph.add_edge(n, m, label="" if label is None else str(label))
    return graph
