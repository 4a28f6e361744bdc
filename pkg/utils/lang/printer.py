"""Pretty-printer producing ``.cp`` text that ``parse_program`` reads back."""
from __future__ import annotations

from typing import List

from utils.lang.program import (CCR, Assign, Block, ConcurrentProgram,
                                Declaration, Goto, GuardedAssign, IfGoto,
                                Process)
from utils.vocab.sorts import BOOL, Sort, format_value

INDENT = "    "


def format_sort(sort: Sort) -> str:
    if sort == BOOL:
        return "bool"
    return sort.name


def format_declaration(d: Declaration, keyword: str) -> str:
    name = d.name.split(".", 1)[1] if d.owner else d.name
    text = f"{keyword} {name}: {format_sort(d.sort)}"
    if d.shadow_of is not None:
        text += f" with {name} = {d.shadow_of}"
    elif d.init is not None:
        text += f" with {name} = {format_value(d.init)}"
    return text + ";"


def format_statement(st) -> str:
    if isinstance(st, Assign):
        targets = ", ".join(t.name for t in st.targets)
        sources = ", ".join(str(s) for s in st.sources)
        return f"{targets} := {sources}"
    if isinstance(st, IfGoto):
        return f"if ({st.guard}) {st.l_if}, {st.l_else}"
    if isinstance(st, Goto):
        return f"goto {st.label}"
    if isinstance(st, GuardedAssign):
        text = f"if ({st.guard}) {format_statement(st.assign)}"
        if st.orelse is not None:
            text += f" else {format_statement(st.orelse)}"
        return text
    if isinstance(st, Block):
        return "atomic { " + "".join(format_statement(s) + "; " for s in st.statements) + "}"
    if isinstance(st, CCR):
        return f"when {st.guard} -> {{ " + "".join(format_statement(s) + "; " for s in st.body) + "}"
    raise TypeError(f"Not a statement: {st!r}")


def format_process(process: Process) -> List[str]:
    lines = [f"process {process.name} {{"]
    lines += [INDENT + format_declaration(d, "local") for d in process.locals]
    width = max(len(label) for label in process.labels)
    for label, instr in process.body().items():
        lines.append(f"{INDENT}{(label + ':').ljust(width + 1)} {format_statement(instr)};")
    lines.append("}")
    return lines


def format_program(program: ConcurrentProgram) -> str:
    lines = [format_declaration(d, "shared") for d in program.shared]
    if program.exposed:
        lines.append(f"expose {', '.join(program.exposed)};")
    for process in program.processes:
        if lines:
            lines.append("")
        lines += format_process(process)
    return "\n".join(lines) + "\n"
