"""Aligned plain-text tables with an optional grouped header row."""

from __future__ import annotations

from typing import Sequence


def fmt_rate(x) -> str:
    return "-" if x is None else f"{x:.3f}"


def render_table(columns: Sequence[tuple[str, str]], rows: Sequence[Sequence[str]]) -> str:
    """Render ``rows`` under ``columns``.

    Each column is ``(group, name)``. Neighbouring columns with the same
    non-empty group share one label on the first header line; columns in
    different groups are separated by ``|``.
    """
    ncol = len(columns)
    for r in rows:
        if len(r) != ncol:
            raise ValueError(f"row has {len(r)} cells, expected {ncol}")
    widths = [max([len(name)] + [len(str(r[i])) for r in rows]) for i, (_, name) in enumerate(columns)]

    # spans of consecutive columns sharing a group
    spans = []
    for i, (group, _) in enumerate(columns):
        if spans and group and spans[-1][0] == group:
            spans[-1][2] = i + 1
        else:
            spans.append([group, i, i + 1])
    for group, a, b in spans:
        inner = sum(widths[a:b]) + 2 * (b - a - 1)
        if len(group) > inner:
            widths[b - 1] += len(group) - inner

    def line(cells) -> str:
        parts = []
        for group, a, b in spans:
            parts.append("  ".join(str(cells[i]).ljust(widths[i]) for i in range(a, b)))
        return " | ".join(parts).rstrip()

    def group_line() -> str:
        parts = []
        for group, a, b in spans:
            inner = sum(widths[a:b]) + 2 * (b - a - 1)
            parts.append(group.center(inner) if group else " " * inner)
        return " | ".join(parts).rstrip()

    out = []
    if any(group for group, _ in columns):
        out.append(group_line())
    out.append(line([name for _, name in columns]))
    out.append("-+-".join("-" * (sum(widths[a:b]) + 2 * (b - a - 1)) for _, a, b in spans))
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"
