"""Surrogate script generation: neutralize tracking call sites in JS source.

Each targeted call expression (receiver chain + argument list) is replaced
by a mock invocation that returns nothing; the mock definition is prepended
once. Extent scanning is lexer-grade: it tracks string/template literals,
comments and nested delimiters, but does not build an AST.
"""

from __future__ import annotations

import re
import urllib.parse
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import domains
from .trace_model import EVAL_MARKER, INLINE_MARKER

MOCK_NAME = "__notjsMock"
MOCK_CALL = MOCK_NAME + "()"
MOCK_PRELUDE = "function " + MOCK_NAME + "() {}\n"

SKIP_SOURCE_UNCAPTURED = "SourceUncaptured"
SKIP_INLINE = "InlineScript"
SKIP_POSITION_MISMATCH = "PositionMismatch"
SKIP_UNBALANCED = "UnbalancedExtent"


class PositionMismatch(Exception):
    pass


class UnbalancedExtent(Exception):
    pass


class InvalidUrl(Exception):
    pass


@dataclass(frozen=True, order=True)
class CallSite:
    script_url: str
    function_name: str
    line: int
    column: int  # 1-based, first character of the function name

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")


@dataclass
class NeutralizationReport:
    neutralized: list[CallSite] = field(default_factory=list)
    skipped: list[tuple[CallSite, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.neutralized) + len(self.skipped)


@dataclass
class SurrogateScript:
    script_url: str
    original: str
    rewritten: str
    report: NeutralizationReport


@dataclass(frozen=True)
class ReplacementRule:
    pattern: str  # registrable host + path, * wildcards
    surrogate_path: str = ""

    def matches(self, url: str) -> bool:
        host = domains.hostname(url)
        path = urllib.parse.urlsplit(url).path or "/"
        pat_host, _slash, pat_path = self.pattern.partition("/")
        if not domains.same_or_subdomain(host, pat_host):
            return False
        regex = "^" + ".*".join(re.escape(part) for part in ("/" + pat_path).split("*")) + "$"
        return re.match(regex, path) is not None


_IDENT_CHARS = re.compile(r"[A-Za-z0-9_$]")

_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")": "(", "]": "[", "}": "{"}


def _line_starts(source: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(source):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _offset_of(source: str, line: int, column: int) -> int:
    starts = _line_starts(source)
    if line > len(starts):
        raise PositionMismatch(f"line {line} beyond end of source")
    offset = starts[line - 1] + (column - 1)
    if offset > len(source):
        raise PositionMismatch(f"column {column} beyond end of line {line}")
    return offset


def _scan_balanced(source: str, open_pos: int) -> int:
    """Index just past the delimiter matching source[open_pos].

    Skips string literals (single, double, template with ${} nesting),
    line and block comments. Raises UnbalancedExtent when unmatched.
    """
    stack = [source[open_pos]]
    i = open_pos + 1
    n = len(source)
    while i < n and stack:
        ch = source[i]
        if ch in ("'", '"'):
            i = _skip_string(source, i, ch)
            continue
        if ch == "`":
            i = _skip_template(source, i)
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            i = _skip_line_comment(source, i)
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "*":
            i = _skip_block_comment(source, i)
            continue
        if ch in _OPEN:
            stack.append(ch)
        elif ch in _CLOSE:
            if not stack or stack[-1] != _CLOSE[ch]:
                raise UnbalancedExtent(f"mismatched {ch!r} at offset {i}")
            stack.pop()
        i += 1
    if stack:
        raise UnbalancedExtent("no matching close delimiter before end of source")
    return i


def _skip_string(source: str, i: int, quote: str) -> int:
    i += 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\\":
            i += 2
            continue
        if ch == quote:
            return i + 1
        if ch == "\n":
            raise UnbalancedExtent("unterminated string literal")
        i += 1
    raise UnbalancedExtent("unterminated string literal")


def _skip_template(source: str, i: int) -> int:
    i += 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\\":
            i += 2
            continue
        if ch == "`":
            return i + 1
        if ch == "$" and i + 1 < n and source[i + 1] == "{":
            i = _scan_balanced(source, i + 1)
            continue
        i += 1
    raise UnbalancedExtent("unterminated template literal")


def _skip_line_comment(source: str, i: int) -> int:
    end = source.find("\n", i)
    return len(source) if end == -1 else end


def _skip_block_comment(source: str, i: int) -> int:
    end = source.find("*/", i + 2)
    if end == -1:
        raise UnbalancedExtent("unterminated block comment")
    return end + 2


def _receiver_start(source: str, name_start: int) -> int:
    """Leftmost offset of the receiver chain preceding the function name."""
    pos = name_start
    while pos > 0:
        if source[pos - 1] == ".":
            end = pos - 1
            if end > 0 and source[end - 1] == "]":
                # bracketed segment: scan backwards to its matching '['
                depth = 0
                j = end - 1
                while j >= 0:
                    if source[j] == "]":
                        depth += 1
                    elif source[j] == "[":
                        depth -= 1
                        if depth == 0:
                            break
                    j -= 1
                if j < 0:
                    break
                # the bracketed segment itself may follow an identifier
                while j > 0 and _IDENT_CHARS.match(source[j - 1]):
                    j -= 1
                pos = j
                continue
            j = end
            while j > 0 and _IDENT_CHARS.match(source[j - 1]):
                j -= 1
            if j == end:
                break  # bare dot with nothing before it; stop
            pos = j
            continue
        break
    return pos


def locate_call_extent(source: str, site: CallSite) -> tuple[int, int]:
    """Character span [start, end) of the full call expression at the site.

    The span runs from the leftmost character of the receiver chain to just
    past the matching close parenthesis of the argument list.
    """
    offset = _offset_of(source, site.line, site.column)
    name = site.function_name
    if name:
        if not source.startswith(name, offset):
            raise PositionMismatch(
                f"{name!r} not found at {site.line}:{site.column}"
            )
        after = offset + len(name)
    else:
        # anonymous: column points at the start of the call expression;
        # consume the callee expression up to its argument list
        after = offset
        n = len(source)
        while after < n and source[after] != "(":
            ch = source[after]
            if _IDENT_CHARS.match(ch) or ch == ".":
                after += 1
            elif ch == "[":
                after = _scan_balanced(source, after)
            else:
                raise PositionMismatch(
                    f"no call expression at {site.line}:{site.column}"
                )
    # optional whitespace between name and '('
    paren = after
    while paren < len(source) and source[paren] in " \t":
        paren += 1
    if paren >= len(source) or source[paren] != "(":
        raise PositionMismatch(
            f"no argument list after {site.line}:{site.column}"
        )
    end = _scan_balanced(source, paren)
    start = _receiver_start(source, offset) if name else offset
    return start, end


def neutralize(source: str, sites: Iterable[CallSite]) -> SurrogateScript:
    """Replace each locatable call extent with the mock call.

    Replacements are applied right-to-left so earlier spans stay valid.
    Overlapping extents: the earlier (outer) site wins, the inner one is
    skipped. With no neutralized site, the source is returned unchanged.
    """
    report = NeutralizationReport()
    located: list[tuple[int, int, CallSite]] = []
    for site in sorted(set(sites)):
        try:
            start, end = locate_call_extent(source, site)
        except PositionMismatch:
            report.skipped.append((site, SKIP_POSITION_MISMATCH))
            continue
        except UnbalancedExtent:
            report.skipped.append((site, SKIP_UNBALANCED))
            continue
        located.append((start, end, site))
    located.sort()
    kept: list[tuple[int, int, CallSite]] = []
    for start, end, site in located:
        if kept and start < kept[-1][1]:
            report.skipped.append((site, SKIP_POSITION_MISMATCH))
            continue
        kept.append((start, end, site))
    rewritten = source
    for start, end, site in reversed(kept):
        rewritten = rewritten[:start] + MOCK_CALL + rewritten[end:]
        report.neutralized.append(site)
    report.neutralized.reverse()
    if report.neutralized:
        rewritten = MOCK_PRELUDE + rewritten
    return SurrogateScript(
        script_url="", original=source, rewritten=rewritten, report=report
    )


def verify_integrity(source: str) -> bool:
    """Delimiters balance outside strings/comments and all constructs terminate."""
    stack: list[str] = []
    i = 0
    n = len(source)
    try:
        while i < n:
            ch = source[i]
            if ch in ("'", '"'):
                i = _skip_string(source, i, ch)
                continue
            if ch == "`":
                i = _skip_template(source, i)
                continue
            if ch == "/" and i + 1 < n and source[i + 1] == "/":
                i = _skip_line_comment(source, i)
                continue
            if ch == "/" and i + 1 < n and source[i + 1] == "*":
                i = _skip_block_comment(source, i)
                continue
            if ch in _OPEN:
                stack.append(ch)
            elif ch in _CLOSE:
                if not stack or stack[-1] != _CLOSE[ch]:
                    return False
                stack.pop()
            i += 1
    except UnbalancedExtent:
        return False
    return not stack


_VOLATILE_RUN = re.compile(r"[A-Za-z0-9]{6,}")


def emit_rule(script_url: str, surrogate_path: str = "") -> ReplacementRule:
    """Wildcard pattern for the script URL: registrable domain + path with
    volatile alphanumeric runs (>= 6 chars containing a digit) replaced by *."""
    parts = urllib.parse.urlsplit(script_url)
    if not parts.scheme or not parts.hostname:
        raise InvalidUrl(script_url)
    host = domains.registrable_domain(parts.hostname)
    path = parts.path or "/"

    def _wildcard(match: re.Match) -> str:
        run = match.group(0)
        return "*" if any(c.isdigit() for c in run) else run

    pattern = host + _VOLATILE_RUN.sub(_wildcard, path)
    rule = ReplacementRule(pattern=pattern, surrogate_path=surrogate_path)
    assert rule.matches(script_url)
    return rule


def generate_surrogates(
    script_sources: Mapping[str, str], sites: Iterable[CallSite]
) -> tuple[dict[str, SurrogateScript], NeutralizationReport]:
    """Rewrite every script that has targeted sites and a captured source.

    Sites in inline scripts are skipped as InlineScript; sites whose source
    was never captured (including eval) as SourceUncaptured. The combined
    report covers every input site exactly once.
    """
    by_url: dict[str, list[CallSite]] = {}
    combined = NeutralizationReport()
    for site in sorted(set(sites)):
        if INLINE_MARKER in site.script_url:
            combined.skipped.append((site, SKIP_INLINE))
        elif EVAL_MARKER in site.script_url or site.script_url not in script_sources:
            combined.skipped.append((site, SKIP_SOURCE_UNCAPTURED))
        else:
            by_url.setdefault(site.script_url, []).append(site)
    surrogates: dict[str, SurrogateScript] = {}
    for url, url_sites in sorted(by_url.items()):
        result = neutralize(script_sources[url], url_sites)
        result.script_url = url
        surrogates[url] = result
        combined.neutralized.extend(result.report.neutralized)
        combined.skipped.extend(result.report.skipped)
    return surrogates, combined
