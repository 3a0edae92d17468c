"""Fallback responder for messages that match no registered key.

Rules are ordered <pattern, effect> pairs: the pattern is a regular
expression matched case-insensitively against the whole utterance, the
effect is a template where $1..$9 reference capture groups, $0 the whole
match, and $u the author's handle. First matching rule wins; a default
effect answers everything else. No conversation state is kept.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .domain import GatewayError

# Rule files should stick to a portable regex subset (literals, character
# classes, alternation, grouping, quantifiers, anchors) so rule sets stay
# engine-independent; the loader only enforces that patterns compile and
# that effects reference existing groups.

_PLACEHOLDER = re.compile(r"\$(\d|u)")


class BadPattern(GatewayError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"rule line {line_number}: {reason}")
        self.line_number = line_number


class BadEffect(GatewayError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"rule line {line_number}: {reason}")
        self.line_number = line_number


@dataclass(frozen=True)
class ChatRule:
    pattern: str
    effect: str
    priority: int
    compiled: re.Pattern

    def render(self, match: re.Match, author: str) -> str:
        def expand(m: re.Match) -> str:
            ref = m.group(1)
            if ref == "u":
                return author
            captured = match.group(int(ref))
            return captured if captured is not None else ""

        return _PLACEHOLDER.sub(expand, self.effect)


@dataclass(frozen=True)
class RuleSet:
    """Ordered rules plus the default effect used when nothing matches."""

    rules: tuple[ChatRule, ...]
    default_effect: str


def _max_group_ref(effect: str) -> int:
    refs = [int(ref) for ref in _PLACEHOLDER.findall(effect) if ref != "u"]
    return max(refs, default=-1)


def load_rules(source: bytes) -> RuleSet:
    """Parse and eagerly compile a rule file.

    Format: one ``pattern<TAB>effect`` per line; ``#`` starts a comment;
    the first rule line may be ``DEFAULT<TAB>effect`` to set the fallback.
    Bad rules fail here, at load, never at chat time.
    """
    rules: list[ChatRule] = []
    default_effect = ""
    seen_rule = False
    for line_number, line in enumerate(source.decode("utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise BadPattern(line_number, "expected pattern<TAB>effect")
        pattern, effect = line.split("\t", 1)
        if pattern == "DEFAULT":
            if seen_rule:
                raise BadPattern(line_number, "DEFAULT must come before any rule")
            if _max_group_ref(effect) >= 0:
                raise BadEffect(line_number, "default effect may only reference $u")
            default_effect = effect
            continue
        seen_rule = True
        try:
            compiled = re.compile(pattern, re.IGNORECASE)
        except re.error as exc:
            raise BadPattern(line_number, f"pattern does not compile: {exc}") from exc
        highest = _max_group_ref(effect)
        if highest > compiled.groups:
            raise BadEffect(
                line_number, f"effect references group {highest}, pattern has {compiled.groups}"
            )
        rules.append(ChatRule(pattern=pattern, effect=effect, priority=len(rules), compiled=compiled))
    return RuleSet(rules=tuple(rules), default_effect=default_effect)


def default_rules() -> RuleSet:
    """The rule set shipped with the package."""
    data = resources.files("gateway.data").joinpath("default_rules.txt").read_bytes()
    return load_rules(data)


def respond(rules: RuleSet, text: str, author: str) -> str:
    """Effect of the first rule whose pattern fully matches ``text``.

    Matching is case-insensitive and anchored at both ends, so declaration
    order is the only disambiguator. Pure function; never fails once the
    rule set loaded.
    """
    for rule in rules.rules:
        match = rule.compiled.fullmatch(text)
        if match is not None:
            return rule.render(match, author)
    return _PLACEHOLDER.sub(lambda m: author if m.group(1) == "u" else "", rules.default_effect)
