"""Public-suffix matching (normal, wildcard and exception rules).

The bundled rule file is a curated subset of the ICANN section of the public
suffix list; :func:`load_rules` accepts the full upstream file as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

INVALID = "(invalid)"


@dataclass(frozen=True)
class SuffixRules:
    normal: frozenset[str]
    wildcard: frozenset[str]   # "*.ck" stored as "ck"
    exception: frozenset[str]  # "!www.ck" stored as "www.ck"

    def public_suffix(self, domain: str) -> str:
        labels = domain.lower().rstrip(".").split(".")
        n = len(labels)
        for i in range(n):
            cand = ".".join(labels[i:])
            if cand in self.exception:
                return ".".join(labels[i + 1:])
        for i in range(n):
            cand = ".".join(labels[i:])
            if cand in self.normal:
                return cand
            if i + 1 < n and ".".join(labels[i + 1:]) in self.wildcard:
                return cand
        return labels[-1]

    def registrable_domain(self, domain: str) -> str | None:
        domain = domain.lower().rstrip(".")
        suffix = self.public_suffix(domain)
        if domain == suffix:
            return None
        head = domain[: -len(suffix) - 1]
        return head.rsplit(".", 1)[-1] + "." + suffix

    def service_label(self, fqdn: str) -> str:
        """Label left of the public suffix: ``www.bing.com`` -> ``bing``."""
        reg = self.registrable_domain(fqdn) if fqdn else None
        return INVALID if reg is None else reg.split(".", 1)[0]


def load_rules(lines: Iterable[str]) -> SuffixRules:
    normal, wild, exc = set(), set(), set()
    for line in lines:
        rule = line.strip().split(" ", 1)[0]
        if not rule or rule.startswith("//"):
            continue
        rule = rule.lower()
        if rule.startswith("!"):
            exc.add(rule[1:])
        elif rule.startswith("*."):
            wild.add(rule[2:])
        else:
            normal.add(rule)
    return SuffixRules(frozenset(normal), frozenset(wild), frozenset(exc))


@lru_cache(maxsize=1)
def default_rules() -> SuffixRules:
    text = resources.files("acdn.data").joinpath("public_suffixes.dat").read_text(encoding="utf-8")
    return load_rules(text.splitlines())
