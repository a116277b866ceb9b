"""Delimited output: trace CSV, run summaries and the steady-state table."""

from __future__ import annotations

import contextlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .equilibrium import Equilibrium
from .simulation import Trace, TraceSummary, finite_or_none


@contextlib.contextmanager
def atomic_open(path: str | Path, mode: str = "w") -> Iterator[io.TextIOBase]:
    """Write to a sibling temp file and rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def trace_header(n: int) -> list[str]:
    return (
        ["t"]
        + [f"v{j}" for j in range(1, n + 1)]
        + [f"it{j}" for j in range(1, n + 1)]
        + ["vL"]
        + [f"u{j}" for j in range(1, n + 1)]
        + ["V_eta", "min_b", "flags"]
    )


def _g(value: float) -> str:
    return "%.9g" % value


def write_trace_csv(path: str | Path, trace: Trace) -> None:
    n = trace.u.shape[1]
    X = trace.x
    cols = np.column_stack([trace.t, X[:, 0:-1:2], X[:, 1:-1:2], X[:, -1], trace.u, trace.V_eta, trace.min_b])
    with atomic_open(path) as fh:
        fh.write(",".join(trace_header(n)) + "\n")
        for row, flag in zip(cols, trace.flags):
            fh.write(",".join(_g(v) for v in row) + f",{int(flag)}\n")


def summary_dict(summary: TraceSummary, extra: Mapping | None = None) -> dict:
    d = summary.to_dict()
    for key in ("v_bus_avg", "v_bus_max_dev", "min_b", "settle_time"):
        if d[key] is not None:
            d[key] = finite_or_none(d[key])
    d["averaged_state"] = [finite_or_none(v) for v in d["averaged_state"]]
    d["averaged_input"] = [finite_or_none(v) for v in d["averaged_input"]]
    if extra:
        d.update(extra)
    return d


def write_json(path: str | Path, payload: dict) -> None:
    with atomic_open(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class TableRow:
    state: str
    equilibrium: float
    initial: float | None  # source currents have no initial value
    averaged: tuple[float, ...]
    unit: str


def steady_state_table(
    eq: Equilibrium, x0: np.ndarray, summaries: Mapping[str, TraceSummary]
) -> list[TableRow]:
    """Three rows per converter (``v_j``, ``i_sj``, ``i_tj``) plus the bus.

    Source currents come from the averaged input; at the equilibrium they equal
    the line currents.
    """
    n = eq.u_star.size
    names = list(summaries)
    rows: list[TableRow] = []
    for j in range(n):
        def avg(get):
            return tuple(float(get(summaries[c])) for c in names)

        rows.append(TableRow(f"v{j + 1}", float(eq.x_star[2 * j]), float(x0[2 * j]),
                             avg(lambda s: s.averaged_state[2 * j]), "V"))
        rows.append(TableRow(f"is{j + 1}", float(eq.u_star[j]), None,
                             avg(lambda s: s.averaged_input[j]), "A"))
        rows.append(TableRow(f"it{j + 1}", float(eq.x_star[2 * j + 1]), float(x0[2 * j + 1]),
                             avg(lambda s: s.averaged_state[2 * j + 1]), "A"))
    rows.append(TableRow("v_bus", float(eq.x_star[-1]), float(x0[-1]),
                         tuple(float(summaries[c].averaged_state[-1]) for c in names), "V"))
    return rows


def table_header(controllers: Sequence[str]) -> list[str]:
    return ["state", "equilibrium", "initial"] + [f"avg_{c}" for c in controllers] + ["unit"]


def _cell(value: float | None) -> str:
    if value is None:
        return "-"
    return "%.2f" % value if np.isfinite(value) else "nan"


def write_table_csv(path: str | Path, rows: Sequence[TableRow], controllers: Sequence[str]) -> None:
    with atomic_open(path) as fh:
        fh.write(",".join(table_header(controllers)) + "\n")
        for r in rows:
            cells = [r.state, _g(r.equilibrium), "" if r.initial is None else _g(r.initial)]
            cells += [_g(v) for v in r.averaged] + [r.unit]
            fh.write(",".join(cells) + "\n")


def format_table(rows: Sequence[TableRow], controllers: Sequence[str]) -> str:
    header = table_header(controllers)
    body = [
        [r.state, _cell(r.equilibrium), _cell(r.initial), *(_cell(v) for v in r.averaged), f"[{r.unit}]"]
        for r in rows
    ]
    widths = [max(len(str(line[i])) for line in [header, *body]) for i in range(len(header))]
    fmt = lambda line: "  ".join(str(c).rjust(w) for c, w in zip(line, widths))  # noqa: E731
    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule, *map(fmt, body)]) + "\n"


SWEEP_HEADER = [
    "run", "controller", "status", "converged", "safety_violated", "min_b", "v_bus_avg", "v_bus_max_dev",
    "vL0", "v0_min", "v0_max",
]


def write_sweep_csv(path: str | Path, records: Sequence[dict]) -> None:
    with atomic_open(path) as fh:
        fh.write(",".join(SWEEP_HEADER) + "\n")
        for rec in records:
            cells = []
            for key in SWEEP_HEADER:
                v = rec[key]
                if isinstance(v, bool):
                    cells.append("1" if v else "0")
                elif isinstance(v, float):
                    cells.append(_g(v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
