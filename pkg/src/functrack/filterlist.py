"""Adblock-Plus-style filter rule subset: parsing, matching, function labeling.

Supported: block and @@ exception rules, anchors | and ||, wildcard *,
separator ^, options $third-party/~third-party, $script/$image/
$xmlhttprequest and $domain=. Comments, element-hiding rules and rules with
unsupported options are skipped with counts.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import domains
from .graph import PageGraph, FunctionNode, build_graph, function_nodes, stack_function_nodes
from .trace_model import TraceLog

TRACKING = "tracking"
NON_TRACKING = "non_tracking"
EXCLUDED = "excluded"

SUPPORTED_TYPE_OPTIONS = frozenset({"script", "image", "xmlhttprequest"})

_SEPARATOR_RE = r"(?:[^\w\-.%]|$)"
_DOMAIN_ANCHOR_RE = r"^[a-z][a-z0-9+.\-]*://(?:[^/?#]*\.)?"


class InvalidUrl(Exception):
    pass


@dataclass(frozen=True)
class FilterRule:
    raw: str
    exception: bool
    anchor_start: str  # none | start | domain
    anchor_end: bool
    pattern: str  # body with * and ^ retained, anchors stripped
    third_party: Optional[bool]
    resource_types: frozenset[str]
    domain_includes: frozenset[str]
    domain_excludes: frozenset[str]
    regex: re.Pattern = field(compare=False, repr=False, hash=False, default=None)

    def matches(self, url: str, ctx: "RequestContext") -> bool:
        if self.third_party is not None:
            if ctx.is_third_party is None or ctx.is_third_party != self.third_party:
                return False
        if self.resource_types:
            if ctx.resource_type not in self.resource_types:
                return False
        if self.domain_includes or self.domain_excludes:
            page_host = domains.hostname(ctx.page_origin) if ctx.page_origin else ""
            if self.domain_excludes and any(
                domains.same_or_subdomain(page_host, d) for d in self.domain_excludes
            ):
                return False
            if self.domain_includes and not any(
                domains.same_or_subdomain(page_host, d) for d in self.domain_includes
            ):
                return False
        return self.regex.search(url) is not None


@dataclass(frozen=True)
class RequestContext:
    page_origin: str = ""
    resource_type: Optional[str] = None
    is_third_party: Optional[bool] = None


@dataclass(frozen=True)
class Decision:
    verdict: str  # Block | Allow | NoMatch
    matched_rule: Optional[str] = None


@dataclass(frozen=True)
class FunctionLabel:
    node: str
    label: str
    function: FunctionNode | None = None


@dataclass
class RuleSet:
    block_rules: list[FilterRule] = field(default_factory=list)
    exception_rules: list[FilterRule] = field(default_factory=list)
    skipped_comments: int = 0
    skipped_element_hiding: int = 0
    skipped_unsupported: int = 0
    diagnostics: list[str] = field(default_factory=list)
    # index key (literal substring) -> rule list; None key = always checked
    _block_index: dict[Optional[str], list[FilterRule]] = field(default_factory=dict)
    _exception_index: dict[Optional[str], list[FilterRule]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.block_rules) + len(self.exception_rules)

    def _candidates(
        self, index: dict[Optional[str], list[FilterRule]], url: str
    ) -> Iterable[FilterRule]:
        url_l = url.lower()
        for key, rules in index.items():
            if key is None or key in url_l:
                yield from rules


def _pattern_to_regex(pattern: str, anchor_start: str, anchor_end: bool) -> re.Pattern:
    parts: list[str] = []
    if anchor_start == "start":
        parts.append("^")
    elif anchor_start == "domain":
        parts.append(_DOMAIN_ANCHOR_RE)
    for ch in pattern:
        if ch == "*":
            parts.append(".*")
        elif ch == "^":
            parts.append(_SEPARATOR_RE)
        else:
            parts.append(re.escape(ch))
    if anchor_end:
        parts.append("$")
    return re.compile("".join(parts), re.IGNORECASE)


def _index_key(pattern: str) -> Optional[str]:
    """Longest literal run usable to prune candidates; None when too short."""
    runs = re.split(r"[\*\^]", pattern)
    best = max(runs, key=len) if runs else ""
    return best.lower() if len(best) >= 3 else None


def _parse_options(option_text: str) -> Optional[dict]:
    """Returns parsed options or None when an unsupported option appears."""
    third_party: Optional[bool] = None
    types: set[str] = set()
    includes: set[str] = set()
    excludes: set[str] = set()
    for opt in option_text.split(","):
        opt = opt.strip()
        if not opt:
            continue
        low = opt.lower()
        if low == "third-party":
            third_party = True
        elif low == "~third-party":
            third_party = False
        elif low in SUPPORTED_TYPE_OPTIONS:
            types.add(low)
        elif low.startswith("domain="):
            for dom in opt[len("domain=") :].split("|"):
                dom = dom.strip().lower()
                if not dom:
                    continue
                if dom.startswith("~"):
                    excludes.add(dom[1:])
                else:
                    includes.add(dom)
        else:
            return None
    return {
        "third_party": third_party,
        "resource_types": frozenset(types),
        "domain_includes": frozenset(includes),
        "domain_excludes": frozenset(excludes),
    }


def parse_rule(line: str) -> Optional[FilterRule]:
    """Parse a single rule line; None when the line is not a supported rule."""
    raw = line
    text = line.strip()
    exception = text.startswith("@@")
    if exception:
        text = text[2:]
    options = {
        "third_party": None,
        "resource_types": frozenset(),
        "domain_includes": frozenset(),
        "domain_excludes": frozenset(),
    }
    dollar = text.rfind("$")
    if dollar > 0:
        parsed = _parse_options(text[dollar + 1 :])
        if parsed is None:
            return None
        options = parsed
        text = text[:dollar]
    anchor_start = "none"
    if text.startswith("||"):
        anchor_start = "domain"
        text = text[2:]
    elif text.startswith("|"):
        anchor_start = "start"
        text = text[1:]
    anchor_end = text.endswith("|")
    if anchor_end:
        text = text[:-1]
    if not text:
        return None
    return FilterRule(
        raw=raw.strip(),
        exception=exception,
        anchor_start=anchor_start,
        anchor_end=anchor_end,
        pattern=text,
        regex=_pattern_to_regex(text, anchor_start, anchor_end),
        **options,
    )


def parse_rules(text: str) -> RuleSet:
    ruleset = RuleSet()
    block_index: dict[Optional[str], list[FilterRule]] = defaultdict(list)
    exc_index: dict[Optional[str], list[FilterRule]] = defaultdict(list)
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("!") or stripped.startswith("["):
            ruleset.skipped_comments += 1
            continue
        if "##" in stripped or "#@#" in stripped or "#?#" in stripped:
            ruleset.skipped_element_hiding += 1
            continue
        rule = parse_rule(stripped)
        if rule is None:
            ruleset.skipped_unsupported += 1
            ruleset.diagnostics.append(f"line {line_no}: unsupported rule skipped")
            continue
        if rule.exception:
            ruleset.exception_rules.append(rule)
            exc_index[_index_key(rule.pattern)].append(rule)
        else:
            ruleset.block_rules.append(rule)
            block_index[_index_key(rule.pattern)].append(rule)
    ruleset._block_index = dict(block_index)
    ruleset._exception_index = dict(exc_index)
    return ruleset


def match(ruleset: RuleSet, url: str, ctx: RequestContext | None = None) -> Decision:
    """Exception rules take precedence; NoMatch when nothing fires."""
    if "://" not in url:
        raise InvalidUrl(url)
    if ctx is None:
        ctx = RequestContext()
    if ctx.is_third_party is None and ctx.page_origin:
        ctx = RequestContext(
            page_origin=ctx.page_origin,
            resource_type=ctx.resource_type,
            is_third_party=domains.is_third_party(url, ctx.page_origin),
        )
    for rule in ruleset._candidates(ruleset._exception_index, url):
        if rule.matches(url, ctx):
            return Decision("Allow", rule.raw)
    for rule in ruleset._candidates(ruleset._block_index, url):
        if rule.matches(url, ctx):
            return Decision("Block", rule.raw)
    return Decision("NoMatch")


def match_linear(ruleset: RuleSet, url: str, ctx: RequestContext | None = None) -> Decision:
    """Index-free scan; must agree with match() on every input."""
    if "://" not in url:
        raise InvalidUrl(url)
    if ctx is None:
        ctx = RequestContext()
    if ctx.is_third_party is None and ctx.page_origin:
        ctx = RequestContext(
            page_origin=ctx.page_origin,
            resource_type=ctx.resource_type,
            is_third_party=domains.is_third_party(url, ctx.page_origin),
        )
    for rule in ruleset.exception_rules:
        if rule.matches(url, ctx):
            return Decision("Allow", rule.raw)
    for rule in ruleset.block_rules:
        if rule.matches(url, ctx):
            return Decision("Block", rule.raw)
    return Decision("NoMatch")


def decide_request(ruleset: RuleSet, payload) -> Decision:
    url = str(payload["url"])
    ctx = RequestContext(
        page_origin=str(payload.get("page_origin", "")),
        resource_type=payload.get("resource_type"),
    )
    return match(ruleset, url, ctx)


def label_functions(
    log: TraceLog, graph: PageGraph | None, ruleset: RuleSet
) -> list[FunctionLabel]:
    """Tracking iff the node appears exclusively in tracking-request stacks.

    A node in any non-tracking request stack is non_tracking (conservative);
    nodes in no request stack at all are excluded.
    """
    if graph is None:
        graph = build_graph(log)
    node_ids = {nid for nid, _ in function_nodes(graph)}
    in_tracking: set[str] = set()
    in_non_tracking: set[str] = set()
    for event in log.events:
        if event.event_kind != "network_request" or not event.call_stack:
            continue
        decision = decide_request(ruleset, event.payload)
        target = in_tracking if decision.verdict == "Block" else in_non_tracking
        for fn in stack_function_nodes(event):
            nid = graph.add_node(fn)  # idempotent: node already present
            target.add(nid)
    labels: list[FunctionLabel] = []
    for nid, fn in function_nodes(graph):
        if nid in in_non_tracking:
            label = NON_TRACKING
        elif nid in in_tracking:
            label = TRACKING
        else:
            label = EXCLUDED
        labels.append(FunctionLabel(node=nid, label=label, function=fn))
    assert {l.node for l in labels} == node_ids
    return labels
