"""Trace data model: recorded page activities with their call stacks.

A trace file is UTF-8, newline-delimited records (one per event), each a
JSON object with keys ``v`` (schema version, currently 1), ``event_kind``,
``timestamp``, ``call_stack`` and ``payload``. Unknown keys are ignored.
Script sources live in a separate archive directory whose filenames are the
percent-encoded script URL.
"""

from __future__ import annotations

import json
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

SCHEMA_VERSION = 1

EVENT_KINDS = frozenset(
    {"network_request", "dom_modification", "storage_access", "web_api_call"}
)

# Captured Web APIs, plus the DOM-interaction calls that feed the
# listener/attribute feature counters.
WEB_API_NAMES = frozenset(
    {
        "sendBeacon",
        "geolocation",
        "userAgent",
        "chargingTime",
        "dischargingTime",
        "movementX",
        "movementY",
        "copy",
        "paste",
        "visibilitychange",
        "force",
        "addEventListener",
        "removeEventListener",
        "getAttribute",
        "setAttribute",
        "removeAttribute",
    }
)

STORAGE_MECHANISMS = frozenset({"cookie", "local_storage"})
MUTATION_KINDS = frozenset({"attribute", "insert", "remove"})
ACCESS_MODES = frozenset({"get", "set"})

INLINE_MARKER = "#inline["
EVAL_MARKER = "#eval["


class TraceError(Exception):
    """Base class for trace parsing/validation failures."""


class MalformedRecord(TraceError):
    def __init__(self, line_no: int, reason: str = "unparseable record"):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class MissingField(TraceError):
    def __init__(self, field_name: str, line_no: int | None = None):
        self.field = field_name
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}missing required field {field_name!r}")


class UnknownEventKind(TraceError):
    def __init__(self, kind: Any, line_no: int | None = None):
        self.kind = kind
        self.line_no = line_no
        super().__init__(f"unknown event kind {kind!r}")


class ArchiveUnreadable(TraceError):
    pass


@dataclass(frozen=True)
class ScopeSignature:
    """Counts of symbols visible to a frame (values/types are not captured)."""

    num_args: int = 0
    num_local: int = 0
    num_global: int = 0
    num_closure: int = 0

    def __post_init__(self):
        for name in ("num_args", "num_local", "num_global", "num_closure"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class StackFrame:
    script_url: str
    function_name: str
    line: int
    column: int
    scope: ScopeSignature = field(default_factory=ScopeSignature)
    is_eval: bool = False
    is_inline: bool = False

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")
        if self.is_eval and self.is_inline:
            raise ValueError("is_eval and is_inline are mutually exclusive")


@dataclass(frozen=True)
class TraceEvent:
    event_kind: str
    timestamp: float
    call_stack: tuple[StackFrame, ...]
    payload: Mapping[str, Any]

    @property
    def initiator(self) -> StackFrame | None:
        """Top-of-stack frame, i.e. the function that performed the activity."""
        return self.call_stack[0] if self.call_stack else None


@dataclass(frozen=True)
class TraceLog:
    page_url: str
    events: tuple[TraceEvent, ...]
    script_sources: Mapping[str, str] = field(default_factory=dict)

    def with_sources(self, sources: Mapping[str, str]) -> "TraceLog":
        return TraceLog(self.page_url, self.events, dict(sources))


@dataclass(frozen=True)
class Diagnostic:
    line_no: int
    error: TraceError


_PAYLOAD_REQUIRED = {
    "network_request": ("url", "method", "resource_type", "page_origin"),
    "dom_modification": ("target_selector", "mutation_kind"),
    "storage_access": ("mechanism", "mode", "key"),
    "web_api_call": ("api_name", "mode"),
}


def _parse_scope(obj: Any, line_no: int) -> ScopeSignature:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "scope must be an object")
    try:
        return ScopeSignature(
            num_args=int(obj.get("num_args", 0)),
            num_local=int(obj.get("num_local", 0)),
            num_global=int(obj.get("num_global", 0)),
            num_closure=int(obj.get("num_closure", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, f"bad scope: {exc}") from exc


def _parse_frame(obj: Any, line_no: int) -> StackFrame:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "stack frame must be an object")
    for key in ("script_url", "function_name", "line", "column"):
        if key not in obj:
            raise MissingField(key, line_no)
    try:
        return StackFrame(
            script_url=str(obj["script_url"]),
            function_name=str(obj["function_name"]),
            line=int(obj["line"]),
            column=int(obj["column"]),
            scope=_parse_scope(obj.get("scope", {}), line_no),
            is_eval=bool(obj.get("is_eval", False)),
            is_inline=bool(obj.get("is_inline", False)),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, f"bad stack frame: {exc}") from exc


def _validate_payload(kind: str, payload: Any, line_no: int) -> dict:
    if not isinstance(payload, dict):
        raise MalformedRecord(line_no, "payload must be an object")
    for key in _PAYLOAD_REQUIRED[kind]:
        if key not in payload:
            raise MissingField(key, line_no)
    if kind == "dom_modification" and payload["mutation_kind"] not in MUTATION_KINDS:
        raise MalformedRecord(line_no, f"bad mutation_kind {payload['mutation_kind']!r}")
    if kind == "storage_access":
        if payload["mechanism"] not in STORAGE_MECHANISMS:
            raise MalformedRecord(line_no, f"bad mechanism {payload['mechanism']!r}")
        if payload["mode"] not in ACCESS_MODES:
            raise MalformedRecord(line_no, f"bad mode {payload['mode']!r}")
    if kind == "web_api_call":
        if payload["api_name"] not in WEB_API_NAMES:
            raise MalformedRecord(line_no, f"unknown api_name {payload['api_name']!r}")
        if payload["mode"] not in ACCESS_MODES:
            raise MalformedRecord(line_no, f"bad mode {payload['mode']!r}")
    return dict(payload)


def _parse_record(obj: Any, line_no: int) -> tuple[TraceEvent, str | None]:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record must be an object")
    if "v" not in obj:
        raise MissingField("v", line_no)
    if obj["v"] != SCHEMA_VERSION:
        raise MalformedRecord(line_no, f"unsupported schema version {obj['v']!r}")
    if "event_kind" not in obj:
        raise MissingField("event_kind", line_no)
    kind = obj["event_kind"]
    if kind not in EVENT_KINDS:
        raise UnknownEventKind(kind, line_no)
    if "timestamp" not in obj:
        raise MissingField("timestamp", line_no)
    if "call_stack" not in obj:
        raise MissingField("call_stack", line_no)
    if "payload" not in obj:
        raise MissingField("payload", line_no)
    stack_obj = obj["call_stack"]
    if not isinstance(stack_obj, list):
        raise MalformedRecord(line_no, "call_stack must be an array")
    frames = tuple(_parse_frame(f, line_no) for f in stack_obj)
    payload = _validate_payload(kind, obj["payload"], line_no)
    try:
        ts = float(obj["timestamp"])
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, "timestamp must be numeric") from exc
    page_url = obj.get("page_url")
    event = TraceEvent(event_kind=kind, timestamp=ts, call_stack=frames, payload=payload)
    return event, (str(page_url) if page_url is not None else None)


def scan_trace_log(
    data: bytes | str, *, page_url: str = ""
) -> tuple[TraceLog, list[Diagnostic]]:
    """Parse leniently: bad records are skipped, one diagnostic per bad record."""
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    events: list[TraceEvent] = []
    diagnostics: list[Diagnostic] = []
    page = page_url
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            diagnostics.append(Diagnostic(line_no, MalformedRecord(line_no)))
            continue
        try:
            event, rec_page = _parse_record(obj, line_no)
        except TraceError as exc:
            diagnostics.append(Diagnostic(line_no, exc))
            continue
        if rec_page and not page:
            page = rec_page
        events.append(event)
    return TraceLog(page_url=page, events=tuple(events)), diagnostics


def parse_trace_log(data: bytes | str, *, page_url: str = "") -> TraceLog:
    """Strict parse: raises on the first invalid record."""
    log, diagnostics = scan_trace_log(data, page_url=page_url)
    if diagnostics:
        raise diagnostics[0].error
    return log


def _frame_to_obj(frame: StackFrame) -> dict:
    return {
        "script_url": frame.script_url,
        "function_name": frame.function_name,
        "line": frame.line,
        "column": frame.column,
        "scope": {
            "num_args": frame.scope.num_args,
            "num_local": frame.scope.num_local,
            "num_global": frame.scope.num_global,
            "num_closure": frame.scope.num_closure,
        },
        "is_eval": frame.is_eval,
        "is_inline": frame.is_inline,
    }


def serialize_trace_log(log: TraceLog) -> bytes:
    """Inverse of parse_trace_log for logs without script sources attached."""
    lines = []
    for i, event in enumerate(log.events):
        obj = {
            "v": SCHEMA_VERSION,
            "event_kind": event.event_kind,
            "timestamp": event.timestamp,
            "call_stack": [_frame_to_obj(f) for f in event.call_stack],
            "payload": dict(event.payload),
        }
        if i == 0 and log.page_url:
            obj["page_url"] = log.page_url
        lines.append(json.dumps(obj, sort_keys=True))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def load_script_sources(archive: str | Path) -> dict[str, str]:
    """Load a script archive directory into a url -> source map.

    Entries that cannot be decoded are skipped; an unreadable archive raises.
    """
    path = Path(archive)
    if not path.is_dir():
        raise ArchiveUnreadable(f"not a readable directory: {path}")
    sources: dict[str, str] = {}
    for entry in sorted(path.iterdir()):
        if not entry.is_file():
            continue
        url = urllib.parse.unquote(entry.name)
        try:
            sources[url] = entry.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError):
            continue
    return sources


def save_script_sources(sources: Mapping[str, str], archive: str | Path) -> None:
    path = Path(archive)
    path.mkdir(parents=True, exist_ok=True)
    for url, text in sources.items():
        (path / urllib.parse.quote(url, safe="")).write_text(text, encoding="utf-8")


def missing_sources(log: TraceLog) -> set[str]:
    """Script URLs referenced by frames but absent from the source archive."""
    missing: set[str] = set()
    for event in log.events:
        for frame in event.call_stack:
            if frame.is_inline or frame.is_eval or not frame.script_url:
                continue
            if frame.script_url not in log.script_sources:
                missing.add(frame.script_url)
    return missing


def iter_request_events(log: TraceLog) -> Iterable[TraceEvent]:
    for event in log.events:
        if event.event_kind == "network_request":
            yield event
