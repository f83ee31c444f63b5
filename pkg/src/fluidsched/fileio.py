"""Stable text formats for system states and trace specs.

State files are diff-friendly key-value documents with one ``[pipe]``
section per queue::

    n = 2
    t_upd = 10
    m = 5

    [pipe]
    a = 0.6
    b = 3
    label = uplink

    [pipe]
    a = 0.6
    b = 3

Trace spec files use the same syntax with global keys ``kind``, ``seed``,
``duration``, ``resolution`` (plus ``task_size`` for poisson-bucketed) and
kind-specific pipe keys (``rate``, ``breakpoints``, ``high``/``low``/
``period``/``duty``/``phase``). ``#`` starts a comment. Parse failures
carry the offending line and column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import DomainError, PipeState, SystemState
from .simulate import PipeTraffic, TraceSpec


class ParseError(ValueError):
    """A malformed document, annotated with its source position."""

    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


@dataclass(frozen=True)
class StateDocument:
    """A parsed state file: the system state plus optional pipe labels."""

    state: SystemState
    labels: tuple[Optional[str], ...]


def _split_sections(text: str):
    """Yield (global_items, sections) where each is a list of
    (line_no, col, key, value) tuples; sections start at [pipe] headers."""
    global_items: list[tuple[int, int, str, str]] = []
    sections: list[list[tuple[int, int, str, str]]] = []
    current = global_items
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if stripped != "[pipe]":
                raise ParseError(
                    f"unknown section {stripped!r} (only [pipe] is allowed)",
                    line_no,
                    raw.index("[") + 1,
                )
            sections.append([])
            current = sections[-1]
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line_no, 1)
        key, _, value = line.partition("=")
        key_col = raw.index(key.strip()[0]) + 1 if key.strip() else 1
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError("missing key before '='", line_no, 1)
        if not value:
            raise ParseError(f"missing value for {key!r}", line_no, key_col)
        if any(k == key for _, _, k, _ in current):
            raise ParseError(f"duplicate key {key!r}", line_no, key_col)
        current.append((line_no, key_col, key, value))
    return global_items, sections


def _as_number(value: str, line: int, col: int, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{key!r} needs a number, got {value!r}", line, col) from None


def _as_int(value: str, line: int, col: int, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key!r} needs an integer, got {value!r}", line, col) from None


def _take(items, key):
    for line, col, k, v in items:
        if k == key:
            return line, col, v
    return None


def parse_state(text: str) -> StateDocument:
    """Parse a state document; raises ParseError with position on bad input.

    Invariant violations (negative backlog, b > m, ...) surface as
    DomainError from the model types, not as parse errors.
    """
    global_items, sections = _split_sections(text)
    known = {"n", "t_upd", "m"}
    for line, col, key, _ in global_items:
        if key not in known:
            raise ParseError(f"unknown key {key!r}", line, col)
    missing = [k for k in ("n", "t_upd", "m") if _take(global_items, k) is None]
    if missing:
        raise ParseError(f"missing required key {missing[0]!r}", 1)
    line, col, raw_n = _take(global_items, "n")
    n = _as_int(raw_n, line, col, "n")
    line, col, raw = _take(global_items, "t_upd")
    t_upd = _as_number(raw, line, col, "t_upd")
    line, col, raw = _take(global_items, "m")
    m = _as_number(raw, line, col, "m")
    if len(sections) != n:
        raise ParseError(
            f"n = {n} but found {len(sections)} [pipe] sections", 1
        )
    pipes = []
    labels = []
    for idx, items in enumerate(sections):
        for line, col, key, _ in items:
            if key not in ("a", "b", "label"):
                raise ParseError(f"unknown pipe key {key!r}", line, col)
        got_a = _take(items, "a")
        got_b = _take(items, "b")
        if got_a is None or got_b is None:
            first_line = items[0][0] if items else 1
            raise ParseError(f"pipe {idx + 1} needs both 'a' and 'b'", first_line)
        a = _as_number(got_a[2], got_a[0], got_a[1], "a")
        b = _as_number(got_b[2], got_b[0], got_b[1], "b")
        pipes.append(PipeState(a=a, b=b))
        got_label = _take(items, "label")
        labels.append(got_label[2] if got_label else None)
    state = SystemState(pipes=tuple(pipes), t_upd=t_upd, m=m)
    return StateDocument(state=state, labels=tuple(labels))


def serialize_state(doc: StateDocument) -> str:
    """Render a state document back to its file form (round-trip safe)."""
    state = doc.state
    lines = [f"n = {state.n}", f"t_upd = {state.t_upd!r}", f"m = {state.m!r}"]
    for pipe, label in zip(state.pipes, doc.labels):
        lines.append("")
        lines.append("[pipe]")
        lines.append(f"a = {pipe.a!r}")
        lines.append(f"b = {pipe.b!r}")
        if label is not None:
            lines.append(f"label = {label}")
    return "\n".join(lines) + "\n"


def load_state(path) -> StateDocument:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_state(fh.read())


_TRACE_GLOBAL = {"kind", "seed", "duration", "resolution", "task_size", "n"}
_TRACE_PIPE = {"rate", "breakpoints", "high", "low", "period", "duty", "phase"}


def _parse_breakpoints(value: str, line: int, col: int) -> tuple[tuple[float, float], ...]:
    pairs = []
    for chunk in value.replace(",", " ").split():
        if ":" not in chunk:
            raise ParseError(
                f"breakpoints need 'time:rate' pairs, got {chunk!r}", line, col
            )
        t_raw, _, r_raw = chunk.partition(":")
        pairs.append(
            (
                _as_number(t_raw, line, col, "breakpoint time"),
                _as_number(r_raw, line, col, "breakpoint rate"),
            )
        )
    if not pairs:
        raise ParseError("breakpoints list is empty", line, col)
    return tuple(pairs)


def parse_trace_spec(text: str) -> TraceSpec:
    """Parse a trace spec document; position-annotated errors on bad input."""
    global_items, sections = _split_sections(text)
    for line, col, key, _ in global_items:
        if key not in _TRACE_GLOBAL:
            raise ParseError(f"unknown key {key!r}", line, col)
    got = _take(global_items, "kind")
    if got is None:
        raise ParseError("missing required key 'kind'", 1)
    kind = got[2]
    if not sections:
        raise ParseError("trace spec needs at least one [pipe] section", 1)
    got_n = _take(global_items, "n")
    if got_n is not None:
        n = _as_int(got_n[2], got_n[0], got_n[1], "n")
        if n != len(sections):
            raise ParseError(
                f"n = {n} but found {len(sections)} [pipe] sections", got_n[0]
            )

    def number_or(key: str, default: Optional[float]) -> Optional[float]:
        got = _take(global_items, key)
        if got is None:
            if default is None:
                raise ParseError(f"missing required key {key!r}", 1)
            return default
        return _as_number(got[2], got[0], got[1], key)

    duration = number_or("duration", None)
    resolution = number_or("resolution", None)
    task_size = number_or("task_size", 0.01)
    got_seed = _take(global_items, "seed")
    seed = _as_int(got_seed[2], got_seed[0], got_seed[1], "seed") if got_seed else 0

    pipes = []
    for idx, items in enumerate(sections):
        fields: dict = {}
        for line, col, key, value in items:
            if key not in _TRACE_PIPE:
                raise ParseError(f"unknown pipe key {key!r}", line, col)
            if key == "breakpoints":
                fields[key] = _parse_breakpoints(value, line, col)
            else:
                fields[key] = _as_number(value, line, col, key)
        pipes.append(PipeTraffic(**fields))
    try:
        return TraceSpec(
            kind=kind,
            pipes=tuple(pipes),
            duration=duration,
            resolution=resolution,
            seed=seed,
            task_size=task_size,
        )
    except DomainError as exc:
        raise ParseError(str(exc), 1) from exc
