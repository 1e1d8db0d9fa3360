"""Registrable-domain helpers over a bundled public-suffix snapshot."""

from __future__ import annotations

import urllib.parse

# Snapshot of common public suffixes; enough for labeling and rule emission.
PUBLIC_SUFFIXES = frozenset(
    {
        "com", "org", "net", "edu", "gov", "mil", "int", "info", "biz",
        "io", "co", "ai", "app", "dev", "xyz", "online", "site", "tech",
        "me", "tv", "cc", "us", "example", "test", "invalid", "localhost",
        "uk", "co.uk", "org.uk", "ac.uk", "gov.uk",
        "de", "fr", "it", "es", "nl", "se", "no", "fi", "dk", "pl", "ru",
        "jp", "co.jp", "ne.jp", "or.jp",
        "cn", "com.cn", "net.cn", "org.cn",
        "au", "com.au", "net.au", "org.au",
        "br", "com.br", "in", "co.in", "ca", "ch", "at", "be",
        "kr", "co.kr", "mx", "com.mx",
    }
)


def hostname(url: str) -> str:
    host = urllib.parse.urlsplit(url).hostname
    return (host or "").lower()


def registrable_domain(host: str) -> str:
    """Public suffix plus one label; the host itself if no suffix matches."""
    host = host.lower().rstrip(".")
    if not host:
        return ""
    labels = host.split(".")
    # longest matching suffix wins
    for i in range(len(labels)):
        suffix = ".".join(labels[i:])
        if suffix in PUBLIC_SUFFIXES:
            if i == 0:
                return host  # host is itself a bare suffix
            return ".".join(labels[i - 1 :])
    return host


def is_third_party(url: str, page_origin: str) -> bool:
    """True when the registrable domains of request and page differ."""
    req = registrable_domain(hostname(url))
    page = registrable_domain(hostname(page_origin))
    if not req or not page:
        return False
    return req != page


def same_or_subdomain(host: str, domain: str) -> bool:
    host = host.lower()
    domain = domain.lower()
    return host == domain or host.endswith("." + domain)
