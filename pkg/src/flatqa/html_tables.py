"""Import <table> markup into Table records using the stdlib HTML parser.

Handles nested tables (children are attached to Table.nested, ready for
extract_tables), th/td cells, and class attributes for the service filter.
Pages are plain HTML strings; table ids are assigned as
"<page_id>:t<ordinal>" in document order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser

from .tables import Cell, Table


@dataclass
class _TableFrame:
    table: Table
    current_row: list[Cell] | None = None
    cell_parts: list[str] = field(default_factory=list)
    cell_is_header: bool = False
    in_cell: bool = False
    # depth of nested non-table tags inside the open cell, so stray markup
    # (links, bold, spans) does not end the cell early
    cell_depth: int = 0


class _TableHTMLParser(HTMLParser):
    def __init__(self, page_id: str, page_title: str) -> None:
        super().__init__(convert_charrefs=True)
        self.page_id = page_id
        self.page_title = page_title
        self.tables: list[Table] = []
        self.stack: list[_TableFrame] = []
        self.counter = 0
        self._caption_frame: _TableFrame | None = None

    def _new_table(self, attrs: list[tuple[str, str | None]]) -> Table:
        ordinal = self.counter
        self.counter += 1
        css = ""
        for name, value in attrs:
            if name == "class" and value:
                css = value
        return Table(
            id=f"{self.page_id}:t{ordinal}",
            page_title=self.page_title,
            css_class=css,
        )

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag == "table":
            frame = _TableFrame(table=self._new_table(attrs))
            if self.stack:
                parent = self.stack[-1]
                parent.table.nested.append(frame.table)
                if parent.in_cell:
                    parent.cell_depth += 1
            self.stack.append(frame)
            return
        if not self.stack:
            return
        frame = self.stack[-1]
        if frame.in_cell and tag not in ("td", "th", "tr"):
            frame.cell_depth += 1
            return
        if tag == "tr":
            self._close_cell(frame)
            self._close_row(frame)
            frame.current_row = []
        elif tag in ("td", "th"):
            self._close_cell(frame)
            if frame.current_row is None:
                frame.current_row = []
            frame.in_cell = True
            frame.cell_is_header = tag == "th"
            frame.cell_parts = []
            frame.cell_depth = 0
        elif tag == "caption":
            self._caption_frame = frame

    def handle_endtag(self, tag: str) -> None:
        if not self.stack:
            return
        frame = self.stack[-1]
        if tag == "table":
            self._close_cell(frame)
            self._close_row(frame)
            self.stack.pop()
            if not self.stack:
                self.tables.append(frame.table)
            if self.stack and self.stack[-1].in_cell:
                self.stack[-1].cell_depth -= 1
            return
        if frame.in_cell:
            if tag in ("td", "th") and frame.cell_depth == 0:
                self._close_cell(frame)
            elif frame.cell_depth > 0:
                frame.cell_depth -= 1
            return
        if tag == "tr":
            self._close_row(frame)
        elif tag == "caption":
            self._caption_frame = None

    def handle_data(self, data: str) -> None:
        if self._caption_frame is not None:
            self._caption_frame.table.caption += data
            return
        if self.stack and self.stack[-1].in_cell:
            self.stack[-1].cell_parts.append(data)

    def _close_cell(self, frame: _TableFrame) -> None:
        if not frame.in_cell:
            return
        text = " ".join("".join(frame.cell_parts).split())
        if frame.current_row is None:
            frame.current_row = []
        frame.current_row.append(Cell(text=text, is_header_markup=frame.cell_is_header))
        frame.in_cell = False
        frame.cell_parts = []
        frame.cell_depth = 0

    def _close_row(self, frame: _TableFrame) -> None:
        if frame.current_row is not None:
            frame.table.rows.append(frame.current_row)
            frame.current_row = None

    def close(self) -> None:
        super().close()
        while self.stack:
            frame = self.stack[-1]
            self._close_cell(frame)
            self._close_row(frame)
            self.stack.pop()
            if not self.stack:
                self.tables.append(frame.table)

    def finish(self) -> list[Table]:
        self.close()
        for t in self.tables:
            t.caption = " ".join(t.caption.split())
        return self.tables


def parse_html_tables(html: str, page_id: str, page_title: str) -> list[Table]:
    """Extract all top-level tables from an HTML page; nested tables are
    attached to their parent's `nested` list."""
    parser = _TableHTMLParser(page_id, page_title)
    parser.feed(html)
    return parser.finish()
