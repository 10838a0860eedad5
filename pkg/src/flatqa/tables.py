"""Table flattening: nested-table extraction, service/single-row filtering,
simple and template linearization, header heuristic, greedy chunking, and
answer-aware positive row sampling."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .corpus import CorpusError, Passage, SourceType, iter_jsonl, tokenize, write_jsonl_atomic
from .evaluation import has_answer

# Keyword rule for "service" tables (navigation/metadata furniture); matched
# case-insensitively as substrings of css_class or caption.
DEFAULT_SERVICE_KEYWORDS = (
    "navbox",
    "vcard",
    "infobox-navigation",
    "metadata",
    "sidebar",
    "sistersitebox",
)


@dataclass(frozen=True)
class Cell:
    text: str
    is_header_markup: bool = False


@dataclass
class Table:
    """Rows of cells with page metadata. Rows may be ragged. Children parsed
    from the wire format live in `nested` until extract_tables hoists them."""

    id: str
    page_title: str
    caption: str = ""
    rows: list[list[Cell]] = field(default_factory=list)
    parent_id: str | None = None
    css_class: str = ""
    nested: list["Table"] = field(default_factory=list)


@dataclass(frozen=True)
class TableChunk:
    passage: Passage
    table_id: str
    header_row: int
    body_rows: tuple[int, ...]


def extract_tables(raw: Sequence[Table]) -> list[Table]:
    """Hoist nested tables into separate top-level tables, depth first.

    Each child gets parent_id set to its direct parent; the parent keeps a
    placeholder cell (appended as a single-cell row, since the wire format
    does not anchor children to a specific cell). Repeated table ids indicate
    a cyclic or duplicated nesting declaration and are an error.
    """
    out: list[Table] = []
    seen: set[str] = set()

    def visit(table: Table, parent_id: str | None) -> None:
        if table.id in seen:
            raise ValueError(f"cyclic or duplicate table id {table.id!r} in nesting")
        seen.add(table.id)
        flat = replace(table, parent_id=parent_id, nested=[],
                       rows=[list(row) for row in table.rows])
        for child in table.nested:
            flat.rows.append([Cell(f"[nested: {child.id}]")])
        out.append(flat)
        for child in table.nested:
            visit(child, table.id)

    for table in raw:
        visit(table, table.parent_id)
    return out


def filter_tables(tables: Sequence[Table],
                  service_keywords: Sequence[str] = DEFAULT_SERVICE_KEYWORDS,
                  ) -> tuple[list[Table], dict[str, int]]:
    """Drop service tables (keyword rule) and tables with fewer than 2 rows.

    Returns the surviving tables unchanged plus per-reason drop counts.
    """
    kept: list[Table] = []
    drops = {"service": 0, "single_row": 0}
    keywords = [k.lower() for k in service_keywords]
    for t in tables:
        haystack = f"{t.css_class} {t.caption}".lower()
        if any(k in haystack for k in keywords):
            drops["service"] += 1
        elif len(t.rows) < 2:
            drops["single_row"] += 1
        else:
            kept.append(t)
    return kept, drops


def find_header(t: Table) -> int:
    """Index of the first row with any non-blank cell."""
    for i, row in enumerate(t.rows):
        if any(cell.text.strip() for cell in row):
            return i
    raise ValueError(f"table {t.id!r} has no non-empty row")


def linearize_simple(rows: Sequence[Sequence[Cell]]) -> str:
    """Cell texts joined by single spaces, rows joined by newline."""
    return "\n".join(" ".join(cell.text for cell in row) for row in rows)


def _header_names(t: Table) -> list[str]:
    header = t.rows[find_header(t)]
    return [cell.text if cell.text.strip() else f"column {j}" for j, cell in enumerate(header)]


def linearize_template(t: Table, row_indices: Sequence[int]) -> str:
    """Template rendering: "<page_title>. <header> is <cell>. ..." per row.

    Cells beyond the header (or under blank header cells) get "column <j>".
    """
    if not row_indices:
        return ""
    names = _header_names(t)
    lines = []
    for i in row_indices:
        parts = [f"{t.page_title}."]
        for j, cell in enumerate(t.rows[i]):
            name = names[j] if j < len(names) else f"column {j}"
            parts.append(f"{name} is {cell.text}.")
        lines.append(" ".join(parts))
    return "\n".join(lines)


def _row_line(t: Table, i: int, mode: str) -> str:
    if mode == "simple":
        return linearize_simple([t.rows[i]])
    if mode == "template":
        return linearize_template(t, [i])
    raise ValueError(f"unknown linearization mode {mode!r}")


def _chunk_passage(t: Table, header_row: int, header_line: str,
                   body: Sequence[int], mode: str, chunk_no: int,
                   oversized: bool, sampled: bool = False) -> TableChunk:
    lines = [header_line] + [_row_line(t, i, mode) for i in body]
    provenance: dict = {
        "table_id": t.id,
        "header_row": header_row,
        "body_rows": list(body),
        "mode": mode,
    }
    if oversized:
        provenance["oversized"] = True
    if sampled:
        provenance["sampled"] = True
    suffix = "sample" if sampled else f"chunk{chunk_no}"
    passage = Passage(
        id=f"{t.id}:{suffix}",
        source=SourceType.TABLE,
        title=t.page_title,
        text="\n".join(lines),
        provenance=provenance,
    )
    return TableChunk(passage=passage, table_id=t.id,
                      header_row=header_row, body_rows=tuple(body))


def chunk_table(t: Table, token_limit: int, mode: str = "simple") -> list[TableChunk]:
    """Split a table into passages: the header row's simple linearization is
    prepended to every chunk, body rows fill greedily in order, and a single
    row that overflows the limit forms its own chunk flagged oversized."""
    if token_limit < 1:
        raise ValueError("token_limit must be >= 1")
    header_row = find_header(t)
    header_line = linearize_simple([t.rows[header_row]])
    header_tokens = len(tokenize(header_line))
    body_indices = [i for i in range(len(t.rows)) if i != header_row]

    chunks: list[TableChunk] = []
    group: list[int] = []
    group_tokens = header_tokens

    def flush(oversized: bool = False) -> None:
        nonlocal group, group_tokens
        if not group:
            return
        chunks.append(_chunk_passage(t, header_row, header_line, group,
                                     mode, len(chunks), oversized))
        group = []
        group_tokens = header_tokens

    for i in body_indices:
        n = len(tokenize(_row_line(t, i, mode)))
        if not group and header_tokens + n > token_limit:
            group = [i]
            flush(oversized=True)
            continue
        if group and group_tokens + n > token_limit:
            flush()
            if header_tokens + n > token_limit:
                group = [i]
                flush(oversized=True)
                continue
        group.append(i)
        group_tokens += n
    flush()

    if not chunks:
        # degenerate table with no body rows: a single header-only chunk
        chunks.append(_chunk_passage(t, header_row, header_line, [], mode, 0,
                                     oversized=header_tokens > token_limit))
    return chunks


def sample_positive_chunk(t: Table, answers: Sequence[str], token_limit: int,
                          rng_seed: int, mode: str = "simple") -> TableChunk | None:
    """Build one answer-bearing training chunk: header first, then all
    answer-bearing rows in table order while the budget allows, then seeded
    random remaining rows until the budget is exhausted. Returns None when no
    row contains any answer. The first answer row is always included, flagged
    oversized if it alone exceeds the budget."""
    if token_limit < 1:
        raise ValueError("token_limit must be >= 1")
    header_row = find_header(t)
    header_line = linearize_simple([t.rows[header_row]])
    header_tokens = len(tokenize(header_line))
    body_indices = [i for i in range(len(t.rows)) if i != header_row]

    answer_rows = [i for i in body_indices
                   if has_answer(_row_line(t, i, mode), answers)]
    if not answer_rows:
        return None

    selected: list[int] = []
    used = header_tokens
    oversized = False
    budget_hit = False
    for i in answer_rows:
        n = len(tokenize(_row_line(t, i, mode)))
        if not selected:
            selected.append(i)
            used += n
            oversized = used > token_limit
            continue
        if used + n > token_limit:
            budget_hit = True
            break
        selected.append(i)
        used += n

    if not budget_hit and not oversized:
        rng = random.Random(rng_seed)
        remaining = [i for i in body_indices if i not in selected]
        rng.shuffle(remaining)
        for i in remaining:
            n = len(tokenize(_row_line(t, i, mode)))
            if used + n > token_limit:
                break
            selected.append(i)
            used += n

    return _chunk_passage(t, header_row, header_line, selected, mode, 0,
                          oversized, sampled=True)


def flatten_tables(tables: Sequence[Table], token_limit: int,
                   mode: str = "simple") -> tuple[list[Passage], dict[str, int]]:
    """extract -> filter -> chunk over a table collection."""
    extracted = extract_tables(tables)
    kept, drops = filter_tables(extracted)
    passages: list[Passage] = []
    for t in kept:
        passages.extend(chunk.passage for chunk in chunk_table(t, token_limit, mode))
    stats = dict(drops)
    stats["extracted"] = len(extracted)
    stats["kept"] = len(kept)
    return passages, stats


def _cell_from_dict(d: dict) -> Cell:
    if "text" not in d:
        raise ValueError("cell missing 'text'")
    return Cell(text=str(d["text"]), is_header_markup=bool(d.get("is_header_markup", False)))


def table_from_dict(d: dict) -> Table:
    for key in ("id", "page_title", "rows"):
        if key not in d:
            raise ValueError(f"missing {key!r} field")
    rows = [[_cell_from_dict(c) for c in row] for row in d["rows"]]
    nested = [table_from_dict(n) for n in d.get("nested", [])]
    return Table(
        id=str(d["id"]),
        page_title=str(d["page_title"]),
        caption=str(d.get("caption", "")),
        rows=rows,
        parent_id=d.get("parent_id"),
        css_class=str(d.get("css_class", "")),
        nested=nested,
    )


def table_to_dict(t: Table) -> dict:
    out: dict = {
        "id": t.id,
        "page_title": t.page_title,
        "caption": t.caption,
        "css_class": t.css_class,
        "rows": [
            [{"text": c.text, "is_header_markup": c.is_header_markup} for c in row]
            for row in t.rows
        ],
    }
    if t.parent_id is not None:
        out["parent_id"] = t.parent_id
    if t.nested:
        out["nested"] = [table_to_dict(n) for n in t.nested]
    return out


def load_tables(path: str | Path) -> list[Table]:
    tables = []
    for lineno, obj in iter_jsonl(path):
        try:
            tables.append(table_from_dict(obj))
        except ValueError as exc:
            raise CorpusError(
                f"{path}:{lineno}: {exc}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            ) from exc
    return tables


def write_tables(tables: Sequence[Table], path: str | Path) -> None:
    write_jsonl_atomic(path, (table_to_dict(t) for t in tables))
