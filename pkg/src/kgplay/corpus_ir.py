"""Document intermediate representation: the pre-parsed input to graph construction.

A document arrives as JSON with a section tree and a flat ordered block list.
Blocks carry their own text (body for text blocks, caption for figures and
tables, source form for equations). PDF parsing / OCR happen upstream and are
out of scope here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, SchemaError

BLOCK_KINDS = ("text", "figure", "table", "equation")


@dataclass
class NumericCell:
    """One numeric table cell, addressed by row and column keys."""

    row_key: str
    col_key: str
    value: float


@dataclass
class Block:
    id: str
    kind: str
    text: str
    label: str | None = None
    image_ref: str | None = None
    numeric_cells: list[NumericCell] | None = None


@dataclass
class SectionNode:
    id: str
    heading: str
    depth: int
    children: list["SectionNode"] = field(default_factory=list)
    block_ids: list[str] = field(default_factory=list)


@dataclass
class DocumentIR:
    doc_id: str
    title: str
    sections: list[SectionNode]
    blocks: list[Block]

    def block_by_id(self) -> dict[str, Block]:
        return {b.id: b for b in self.blocks}

    def walk_sections(self):
        """Yield (section, path-of-headings-to-it) depth-first in tree order."""
        stack = [(s, (s.heading,)) for s in reversed(self.sections)]
        while stack:
            section, path = stack.pop()
            yield section, path
            for child in reversed(section.children):
                stack.append((child, path + (child.heading,)))


@dataclass
class Finding:
    """One validation problem. Findings are data, not exceptions."""

    code: str
    path: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


def _require(obj: dict, key: str, typ, path: str):
    if key not in obj:
        raise SchemaError(f"{path}: missing field '{key}'")
    value = obj[key]
    if not isinstance(value, typ):
        raise SchemaError(f"{path}.{key}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def _parse_block(raw: dict, path: str) -> Block:
    block_id = _require(raw, "id", str, path)
    kind = _require(raw, "kind", str, path)
    if kind not in BLOCK_KINDS:
        raise SchemaError(f"{path}.kind: '{kind}' not one of {BLOCK_KINDS}")
    text = _require(raw, "text", str, path)
    label = raw.get("label")
    if label is not None and not isinstance(label, str):
        raise SchemaError(f"{path}.label: expected string")
    image_ref = raw.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        raise SchemaError(f"{path}.image_ref: expected string")
    if kind == "figure" and not image_ref:
        raise SchemaError(f"{path}: figure block '{block_id}' lacks image_ref")
    if kind != "figure" and image_ref is not None:
        raise SchemaError(f"{path}: block '{block_id}' of kind {kind} must not carry image_ref")
    cells_raw = raw.get("numeric_cells")
    cells = None
    if cells_raw is not None:
        if kind != "table":
            raise SchemaError(f"{path}: numeric_cells only allowed on table blocks, found on '{block_id}'")
        if not isinstance(cells_raw, list):
            raise SchemaError(f"{path}.numeric_cells: expected list")
        cells = []
        for i, cell in enumerate(cells_raw):
            cpath = f"{path}.numeric_cells[{i}]"
            if not (isinstance(cell, list) and len(cell) == 3):
                raise SchemaError(f"{cpath}: expected [row_key, col_key, value]")
            row, col, value = cell
            if not isinstance(row, str) or not isinstance(col, str):
                raise SchemaError(f"{cpath}: row/col keys must be strings")
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise SchemaError(f"{cpath}: value must be a number")
            value = float(value)
            if value != value or value in (float("inf"), float("-inf")):
                raise SchemaError(f"{cpath}: value must be finite")
            cells.append(NumericCell(row, col, value))
    return Block(id=block_id, kind=kind, text=text, label=label, image_ref=image_ref, numeric_cells=cells)


def _parse_section(raw: dict, depth: int, path: str) -> SectionNode:
    section_id = _require(raw, "id", str, path)
    heading = _require(raw, "heading", str, path)
    declared_depth = raw.get("depth", depth)
    if declared_depth != depth:
        raise SchemaError(f"{path}.depth: declared {declared_depth}, position implies {depth}")
    block_ids = raw.get("block_ids", [])
    if not isinstance(block_ids, list) or not all(isinstance(b, str) for b in block_ids):
        raise SchemaError(f"{path}.block_ids: expected list of strings")
    children = []
    for i, child in enumerate(raw.get("children", [])):
        if not isinstance(child, dict):
            raise SchemaError(f"{path}.children[{i}]: expected object")
        children.append(_parse_section(child, depth + 1, f"{path}.children[{i}]"))
    return SectionNode(id=section_id, heading=heading, depth=depth, children=children, block_ids=list(block_ids))


def parse_document(payload: dict, source: str = "<memory>") -> DocumentIR:
    """Build a DocumentIR from already-decoded JSON, enforcing every invariant."""
    if not isinstance(payload, dict):
        raise SchemaError(f"{source}: top level must be an object")
    doc_id = _require(payload, "doc_id", str, source)
    if not doc_id:
        raise SchemaError(f"{source}.doc_id: must be non-empty")
    title = _require(payload, "title", str, source)
    blocks_raw = _require(payload, "blocks", list, source)
    sections_raw = _require(payload, "sections", list, source)

    blocks = []
    seen_blocks: set[str] = set()
    for i, raw in enumerate(blocks_raw):
        path = f"{source}.blocks[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: expected object")
        block = _parse_block(raw, path)
        if block.id in seen_blocks:
            raise SchemaError(f"{path}: duplicate block id '{block.id}'")
        seen_blocks.add(block.id)
        blocks.append(block)

    sections = []
    for i, raw in enumerate(sections_raw):
        path = f"{source}.sections[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: expected object")
        sections.append(_parse_section(raw, 0, path))

    doc = DocumentIR(doc_id=doc_id, title=title, sections=sections, blocks=blocks)
    report = validate_ir(doc)
    if not report.ok:
        first = report.findings[0]
        raise SchemaError(f"{source}: {first.code} at {first.path}: {first.message}")
    return doc


def load_document(path: str | Path) -> DocumentIR:
    """Read and fully validate one IR JSON file. Block order is preserved."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return parse_document(payload, source=str(path))


def validate_ir(doc: DocumentIR) -> ValidationReport:
    """Check cross-cutting invariants; every finding names an existing id."""
    findings: list[Finding] = []
    block_ids = [b.id for b in doc.blocks]
    seen: set[str] = set()
    for bid in block_ids:
        if bid in seen:
            findings.append(Finding("DuplicateId", f"blocks.{bid}", f"block id '{bid}' occurs more than once"))
        seen.add(bid)

    section_ids: set[str] = set()
    assignment_counts: dict[str, int] = {bid: 0 for bid in block_ids}
    for section, _path in doc.walk_sections():
        if section.id in section_ids:
            findings.append(
                Finding("DuplicateId", f"sections.{section.id}", f"section id '{section.id}' occurs more than once")
            )
        section_ids.add(section.id)
        for child in section.children:
            if child.depth != section.depth + 1:
                findings.append(
                    Finding(
                        "BadDepth",
                        f"sections.{child.id}",
                        f"child depth {child.depth} != parent depth {section.depth} + 1",
                    )
                )
        for bid in section.block_ids:
            if bid not in assignment_counts:
                findings.append(
                    Finding("DanglingBlockId", f"sections.{section.id}", f"references unknown block '{bid}'")
                )
            else:
                assignment_counts[bid] += 1

    for bid, count in assignment_counts.items():
        if count == 0:
            findings.append(Finding("UnassignedBlock", f"blocks.{bid}", "belongs to no section"))
        elif count > 1:
            findings.append(Finding("MultiAssignedBlock", f"blocks.{bid}", f"assigned to {count} sections"))

    for block in doc.blocks:
        if block.kind == "figure" and not block.image_ref:
            findings.append(Finding("MissingImageRef", f"blocks.{block.id}", "figure block lacks image_ref"))
        if block.kind != "figure" and block.image_ref:
            findings.append(Finding("UnexpectedImageRef", f"blocks.{block.id}", "non-figure block carries image_ref"))
        if block.numeric_cells is not None and block.kind != "table":
            findings.append(
                Finding("UnexpectedNumericCells", f"blocks.{block.id}", "numeric_cells on a non-table block")
            )
    return ValidationReport(findings)


def serialize_document(doc: DocumentIR) -> dict:
    """Inverse of parse_document; list order is preserved byte-for-byte."""

    def section_dict(section: SectionNode) -> dict:
        return {
            "id": section.id,
            "heading": section.heading,
            "depth": section.depth,
            "children": [section_dict(c) for c in section.children],
            "block_ids": list(section.block_ids),
        }

    def block_dict(block: Block) -> dict:
        out: dict = {"id": block.id, "kind": block.kind, "text": block.text}
        if block.label is not None:
            out["label"] = block.label
        if block.image_ref is not None:
            out["image_ref"] = block.image_ref
        if block.numeric_cells is not None:
            out["numeric_cells"] = [[c.row_key, c.col_key, c.value] for c in block.numeric_cells]
        return out

    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "sections": [section_dict(s) for s in doc.sections],
        "blocks": [block_dict(b) for b in doc.blocks],
    }


def save_document(doc: DocumentIR, path: str | Path) -> None:
    Path(path).write_text(json.dumps(serialize_document(doc), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
