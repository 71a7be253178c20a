"""Exact sparse linear algebra over Q.

Rows are sparse dicts {column_key: Fraction}. Column keys are arbitrary
hashable values; every routine takes an explicit column priority list, which
fixes pivoting deterministically. No floating point anywhere.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Sequence

Row = dict[Hashable, Fraction]


def row_sub(r: Row, pivot_row: Row, factor: Fraction) -> Row:
    """r - factor * pivot_row, dropping exact zeros."""
    out = dict(r)
    for k, v in pivot_row.items():
        s = out.get(k, Fraction(0)) - factor * v
        if s:
            out[k] = s
        else:
            out.pop(k, None)
    return out


def rref(rows: Sequence[Row], columns: Sequence[Hashable]) -> list[tuple[Hashable, Row]]:
    """Reduced row echelon form with pivots chosen in the given column order.

    Returns [(pivot_column, row)] in processing order; each returned row has a
    unit pivot and zeros in every other pivot column.
    """
    work = [dict(r) for r in rows if r]
    used = [False] * len(work)
    pivots: list[tuple[Hashable, int]] = []
    for col in columns:
        pivot_idx = None
        for idx, r in enumerate(work):
            if not used[idx] and r.get(col):
                pivot_idx = idx
                break
        if pivot_idx is None:
            continue
        used[pivot_idx] = True
        prow = work[pivot_idx]
        inv = Fraction(1) / prow[col]
        work[pivot_idx] = {k: v * inv for k, v in prow.items()}
        for idx, r in enumerate(work):
            if idx != pivot_idx and r.get(col):
                work[idx] = row_sub(r, work[pivot_idx], r[col])
        pivots.append((col, pivot_idx))
    # Read the rows back only after every elimination: row_sub replaces
    # entries of `work`, so rows captured mid-loop would miss later pivots.
    return [(col, work[idx]) for col, idx in pivots]


def rank(rows: Sequence[Row], columns: Sequence[Hashable]) -> int:
    return len(rref(rows, columns))


def reduce_against(row: Row, echelon: Sequence[tuple[Hashable, Row]]) -> Row:
    """Reduce a row against an echelon basis (normal form modulo its span)."""
    out = dict(row)
    for col, prow in echelon:
        c = out.get(col)
        if c:
            out = row_sub(out, prow, c)
    return out


def kernel_of_columns(cols: Sequence[Row], columns_of_rows: Sequence[Hashable]) -> list[dict[int, Fraction]]:
    """Kernel of the linear map sending basis vector j to cols[j].

    cols[j] is a sparse vector over `columns_of_rows` coordinates. Returns
    kernel vectors as {j: coefficient}, one per free column, each normalized
    with coefficient 1 on its free column, in increasing free-column order.
    """
    # Assemble the matrix rows (coordinate -> per-column entries).
    rows_by_coord: dict[Hashable, dict[int, Fraction]] = {}
    for j, col in enumerate(cols):
        for coord, v in col.items():
            rows_by_coord.setdefault(coord, {})[j] = v
    mat = [rows_by_coord[c] for c in columns_of_rows if c in rows_by_coord]
    n = len(cols)
    echelon = rref(mat, range(n))
    pivot_cols = {col for col, _ in echelon}
    kernel = []
    for f in range(n):
        if f in pivot_cols:
            continue
        vec: dict[int, Fraction] = {f: Fraction(1)}
        for col, prow in echelon:
            c = prow.get(f)
            if c:
                vec[col] = -c
        kernel.append(vec)
    return kernel


def intersect_span_with_coordinates(
    rows: Sequence[Row],
    inside_cols: Sequence[Hashable],
    outside_cols: Sequence[Hashable],
) -> list[tuple[Hashable, Row]]:
    """Echelon basis of span(rows) ∩ {vectors supported on inside_cols}.

    Eliminates outside coordinates first; rows left with an outside pivot are
    not in the intersection and are dropped. The remaining echelon rows are
    supported entirely on inside_cols and span the intersection exactly.
    """
    echelon = rref(rows, list(outside_cols) + list(inside_cols))
    outside = set(outside_cols)
    return [(col, row) for col, row in echelon if col not in outside]
