"""Receiver operation counts for SIC (NOMA) and MPA (SCMA).

The counts are the exact integer products behind the usual big-O
expressions, so they can be compared with published tables digit by digit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import comb

__all__ = [
    "ComplexityParams",
    "ComplexityRow",
    "sic_complexity",
    "mpa_complexity",
    "complexity_table",
    "reference_rows",
    "render_csv",
    "render_text",
    "MAX_COUNT",
]

MAX_COUNT = 2**63 - 1  # counts must fit a signed 64-bit integer


def _positive_int(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"{name} must be an int")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}")
    return value


def _checked(value: int) -> int:
    if value > MAX_COUNT:
        raise OverflowError(f"operation count {value} does not fit in 64 bits")
    return value


def sic_complexity(L_T: int, G: int) -> int:
    """``(L_T**3 + 2*L_T**2) * G * (L_T - 1)``.

    Parameters
    ----------
    L_T : int
        Largest number of signals superimposed on one subcarrier.
    G : int
        Subcarriers per user.
    """
    _positive_int("L_T", L_T)
    _positive_int("G", G)
    return _checked((L_T**3 + 2 * L_T**2) * G * (L_T - 1))


def mpa_complexity(pi_size: int, d: int, I_T: int) -> int:
    """``I_T * pi_size**d``.

    Parameters
    ----------
    pi_size : int
        Number of codebooks.
    d : int
        Largest number of signals colliding on one subcarrier.
    I_T : int
        Message-passing iterations.
    """
    _positive_int("pi_size", pi_size)
    _positive_int("d", d)
    _positive_int("I_T", I_T)
    return _checked(I_T * pi_size**d)


@dataclass(frozen=True)
class ComplexityParams:
    """One receiver configuration.

    ``pi_size`` defaults to ``C(N, U)``.  ``printed_sic``/``printed_mpa``
    hold published values to audit against, if any.
    """

    L_T: int
    G: int
    d: int
    I_T: int
    N: int | None = None
    U: int | None = None
    pi_size: int | None = None
    printed_sic: int | None = None
    printed_mpa: int | None = None

    def __post_init__(self):
        for name in ("L_T", "G", "d", "I_T"):
            _positive_int(name, getattr(self, name))
        if self.pi_size is None:
            if self.N is None or self.U is None:
                raise ValueError("give pi_size or both N and U")
            _positive_int("N", self.N)
            _positive_int("U", self.U)
            if self.U > self.N:
                raise ValueError("U must not exceed N")
            object.__setattr__(self, "pi_size", comb(self.N, self.U))
        else:
            _positive_int("pi_size", self.pi_size)
            if self.N is not None and self.U is not None and comb(self.N, self.U) != self.pi_size:
                raise ValueError("pi_size disagrees with C(N, U)")


@dataclass(frozen=True)
class ComplexityRow:
    params: ComplexityParams
    sic: int
    mpa: int
    notes: tuple = ()

    @property
    def discrepancies(self) -> int:
        return len(self.notes)


def _mpa_note(p: ComplexityParams, mpa: int) -> str:
    note = f"MPA: formula gives {mpa:,} but {p.printed_mpa:,} is printed"
    # say which exponent would reproduce the printed value
    for d in range(1, 8):
        if p.I_T * p.pi_size**d == p.printed_mpa:
            note += f" (equals d={d})"
            break
    return note


def _sic_note(p: ComplexityParams, sic: int) -> str:
    note = f"SIC: formula gives {sic:,} but {p.printed_sic:,} is printed"
    if (p.L_T**3 + 2 * p.L_T**2) * p.G * p.L_T == p.printed_sic:
        note += " (equals a factor L_T instead of L_T-1)"
    return note


def complexity_table(rows) -> list[ComplexityRow]:
    """Evaluate both counts for every row and flag disagreements with any
    printed values."""
    out = []
    for p in rows:
        sic = sic_complexity(p.L_T, p.G)
        mpa = mpa_complexity(p.pi_size, p.d, p.I_T)
        notes = []
        if p.printed_sic is not None and p.printed_sic != sic:
            notes.append(_sic_note(p, sic))
        if p.printed_mpa is not None and p.printed_mpa != mpa:
            notes.append(_mpa_note(p, mpa))
        out.append(ComplexityRow(p, sic, mpa, tuple(notes)))
    return out


def reference_rows() -> list[ComplexityParams]:
    """The two published receiver examples, with three MPA iterations."""
    return [
        ComplexityParams(L_T=3, G=4, d=3, I_T=3, N=8, U=2, printed_sic=360, printed_mpa=65_856),
        ComplexityParams(L_T=4, G=5, d=4, I_T=3, N=10, U=3, printed_sic=1920, printed_mpa=5_184_000),
    ]


_COLUMNS = ["N", "U", "pi_size", "d", "I_T", "L_T", "G", "sic", "mpa", "printed_sic", "printed_mpa", "notes"]


def _record(row: ComplexityRow) -> list:
    p = row.params
    blank = lambda v: "" if v is None else v  # noqa: E731
    return [
        blank(p.N),
        blank(p.U),
        p.pi_size,
        p.d,
        p.I_T,
        p.L_T,
        p.G,
        row.sic,
        row.mpa,
        blank(p.printed_sic),
        blank(p.printed_mpa),
        "; ".join(row.notes),
    ]


def render_csv(table: list[ComplexityRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for row in table:
        writer.writerow(_record(row))
    return buf.getvalue()


def render_text(table: list[ComplexityRow]) -> str:
    """Aligned plain-text table followed by one line per discrepancy."""
    records = [[str(v) for v in _record(r)[:-1]] for r in table]
    header = _COLUMNS[:-1]
    widths = [max([len(h)] + [len(rec[i]) for rec in records]) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(rec, widths)) for rec in records]
    flagged = [(i, n) for i, r in enumerate(table) for n in r.notes]
    if flagged:
        lines.append("")
        lines += [f"row {i + 1}: {note}" for i, note in flagged]
    else:
        lines.append("")
        lines.append("no discrepancies")
    return "\n".join(lines) + "\n"
