import random

import pytest

from functrack import surrogate as su
from functrack import trace_model as tm

from conftest import TAG_SCRIPT_URL, MOUSE_SCRIPT


def _site(name, line, col, url="https://s.example/a.js"):
    return su.CallSite(url, name, line, col)


def test_tag_script_extent(script_sources):
    src = script_sources[TAG_SCRIPT_URL]
    line = src.splitlines()[6]
    col = line.index("track(") + 1
    start, end = su.locate_call_extent(src, _site("track", 7, col))
    assert src[start:end] == "t._satellite.track(o[0], o[1])"


def test_position_mismatch():
    with pytest.raises(su.PositionMismatch):
        su.locate_call_extent("f()", _site("g", 1, 1))


def test_unbalanced_extent():
    with pytest.raises(su.UnbalancedExtent):
        su.locate_call_extent("track(1, 2", _site("track", 1, 1))


def test_string_with_paren_and_nested_call():
    src = 'x.t(a(")"),b)'
    start, end = su.locate_call_extent(src, _site("t", 1, 3))
    assert src[start:end] == src


def test_neutralize_tag_script(script_sources):
    src = script_sources[TAG_SCRIPT_URL]
    col = src.splitlines()[6].index("track(") + 1
    out = su.neutralize(src, [_site("track", 7, col)])
    assert su.MOCK_CALL in out.rewritten
    assert '_satellite.track("pageload")' in out.rewritten
    assert "t._satellite.track(o[0], o[1])" not in out.rewritten
    assert su.verify_integrity(out.rewritten)
    assert out.report.neutralized and not out.report.skipped
    # the mock call sits exactly where the original call started
    line7 = out.rewritten.splitlines()[7]  # prelude shifted lines by one
    assert line7.strip() == su.MOCK_CALL


def test_neutralize_empty_sites_identity():
    src = "function a() { b(); }"
    out = su.neutralize(src, [])
    assert out.rewritten == src  # no prelude either


def test_neutralize_two_sites_same_line():
    src = "track(1); track(2);\n"
    out = su.neutralize(src, [_site("track", 1, 1), _site("track", 1, 11)])
    assert out.rewritten.count(su.MOCK_CALL) >= 2
    assert su.verify_integrity(out.rewritten)
    assert len(out.report.neutralized) == 2


def test_neutralize_idempotent():
    src = "a.b.track(x(1), '222)');\nkeep();\n"
    once = su.neutralize(src, [_site("track", 1, 5)])
    again = su.neutralize(once.rewritten, [])
    assert again.rewritten == once.rewritten


def test_locality():
    src = "before();\na.track(1);\nafter();\n"
    out = su.neutralize(src, [_site("track", 2, 3)])
    body = out.rewritten[len(su.MOCK_PRELUDE):]
    assert body.splitlines()[0] == "before();"
    assert body.splitlines()[2] == "after();"


def test_overlapping_sites_outer_wins():
    src = "a.outer(inner(1), 2);\n"
    outer = _site("outer", 1, 3)
    inner = _site("inner", 1, 9)
    out = su.neutralize(src, [outer, inner])
    assert out.report.neutralized == [outer]
    assert out.report.skipped == [(inner, su.SKIP_POSITION_MISMATCH)]
    assert su.verify_integrity(out.rewritten)


def test_coverage_accounting():
    src = "good(1);\n"
    sites = [_site("good", 1, 1), _site("missing", 3, 1), _site("bad", 1, 1)]
    out = su.neutralize(src, sites)
    assert len(out.report.neutralized) + len(out.report.skipped) == len(sites)


def test_verify_integrity_cases():
    assert su.verify_integrity("function a(){}")
    assert not su.verify_integrity("function a(){")
    assert su.verify_integrity("var s = '())((';")
    assert su.verify_integrity("// ) comment\nvar x = `)${f(1)}`;")
    assert not su.verify_integrity("var s = 'unterminated")
    assert not su.verify_integrity("/* open comment")
    assert not su.verify_integrity("a(]")


def test_anonymous_site():
    src = "  fn[0](a, b);\n"
    site = su.CallSite("u", "", 1, 3)
    start, end = su.locate_call_extent(src, site)
    assert src[start:end] == "fn[0](a, b)"


def test_emit_rule_examples():
    rule = su.emit_rule("https://assets.adobedtm.com/launch-ENabc123.min.js")
    assert rule.pattern == "adobedtm.com/launch-*.min.js"
    assert rule.matches("https://assets.adobedtm.com/launch-ENabc123.min.js")
    plain = su.emit_rule("https://cdn.shop.example/static/app.js")
    assert plain.pattern == "shop.example/static/app.js"
    versioned = su.emit_rule("https://www.adobe.com/v20240101/analytics.js")
    assert versioned.pattern == "adobe.com/*/analytics.js"
    assert versioned.matches("https://www.adobe.com/v20240101/analytics.js")


def test_emit_rule_invalid_url():
    with pytest.raises(su.InvalidUrl):
        su.emit_rule("not a url")


def test_emit_rule_self_match_randomized():
    rng = random.Random(21)
    hosts = ["cdn.shop.com", "a.b.tracker.co.uk", "static.example", "x.media.net"]
    words = ["app", "analytics", "launch", "min", "bundle", "v2", "deadbeef99", "x9y8z7q6"]
    for _ in range(1000):
        segments = [
            rng.choice(words) + rng.choice(["", "-" + rng.choice(words)])
            for _ in range(rng.randint(1, 4))
        ]
        url = f"https://{rng.choice(hosts)}/" + "/".join(segments) + rng.choice(["", ".js"])
        rule = su.emit_rule(url)
        assert rule.matches(url), (url, rule.pattern)


# ---- construction oracle for adversarial call expressions ----

ATOMS = [
    "1",
    "o[0]",
    '"str with ) and ("',
    "'single ) quoted'",
    "`template ${inner(1, \")\")} )`",
    "nested(a, b(c))",
    "/* comment with ) */ x",
    "a + b",
    "[1, 2, [3]]",
    "{k: ')'}",
]

RECEIVERS = ["", "t.", "a.b.", "obj[0].", "x['k)e'].", "_ns.deep.chain."]
PREFIXES = ["", "var r = ", "if (z) ", "foo(); ", "return ", "q = p + "]
SUFFIXES = ["", ";", ", other(1);", " + tail()", "; // trailing ) comment"]


def _build_case(rng):
    receiver = rng.choice(RECEIVERS)
    name = rng.choice(["track", "send", "fire", "t"])
    args = ", ".join(rng.choice(ATOMS) for _ in range(rng.randint(0, 3)))
    call = f"{receiver}{name}({args})"
    prefix_lines = ["// header ) line", "var pre = '());';"][: rng.randint(0, 2)]
    prefix = rng.choice(PREFIXES)
    suffix = rng.choice(SUFFIXES)
    line_no = len(prefix_lines) + 1
    col = len(prefix) + len(receiver) + 1
    source = "\n".join(prefix_lines + [prefix + call + suffix]) + "\n"
    expected_start = sum(len(l) + 1 for l in prefix_lines) + len(prefix)
    return source, su.CallSite("u", name, line_no, col), expected_start, len(call)


def test_extent_scanner_against_construction_oracle():
    rng = random.Random(2024)
    for i in range(500):
        source, site, expected_start, length = _build_case(rng)
        start, end = su.locate_call_extent(source, site)
        assert (start, end) == (expected_start, expected_start + length), (
            i,
            source,
        )


def test_generate_surrogates_skip_reasons(script_sources):
    sites = [
        su.CallSite(MOUSE_SCRIPT, "updateCookie", 9, 10),
        su.CallSite("https://p.example/#inline[0]", "x", 1, 1),
        su.CallSite("https://p.example/app.js#eval[0]", "y", 1, 1),
        su.CallSite("https://never.captured/z.js", "z", 1, 1),
    ]
    surrogates, report = su.generate_surrogates(script_sources, sites)
    assert set(surrogates) == {MOUSE_SCRIPT}
    assert report.total == len(sites)
    reasons = {s.script_url: reason for s, reason in report.skipped}
    assert reasons["https://p.example/#inline[0]"] == su.SKIP_INLINE
    assert reasons["https://p.example/app.js#eval[0]"] == su.SKIP_SOURCE_UNCAPTURED
    assert reasons["https://never.captured/z.js"] == su.SKIP_SOURCE_UNCAPTURED
    assert su.verify_integrity(surrogates[MOUSE_SCRIPT].rewritten)


def _planted_corpus(rng, count=100):
    """Scripts with known call sites planted at recorded positions."""
    corpus = []
    for i in range(count):
        lines = ["var a = 1;", "// setup ) {", 'var s = "(((";']
        sites = []
        for j in range(rng.randint(1, 3)):
            receiver = rng.choice(RECEIVERS)
            args = ", ".join(rng.choice(ATOMS) for _ in range(rng.randint(0, 2)))
            indent = " " * rng.randint(0, 6)
            line = f"{indent}{receiver}track({args});"
            lines.append(line)
            sites.append(
                su.CallSite(
                    f"https://corpus.example/s{i}.js",
                    "track",
                    len(lines),
                    len(indent) + len(receiver) + 1,
                )
            )
        lines.append("function keep() { return [1, 2]; }")
        corpus.append(("\n".join(lines) + "\n", sites))
    return corpus


def test_planted_corpus_full_neutralization():
    rng = random.Random(77)
    for source, sites in _planted_corpus(rng):
        out = su.neutralize(source, sites)
        assert len(out.report.neutralized) + len(out.report.skipped) == len(sites)
        assert len(out.report.neutralized) == len(sites)
        assert su.verify_integrity(out.rewritten)
        assert "keep()" in out.rewritten
