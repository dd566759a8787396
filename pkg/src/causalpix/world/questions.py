"""Question phrasing over a closed template grammar, plus the closed
vocabulary shared by questions and linearized chains."""

from __future__ import annotations

import re
from functools import lru_cache

from ..chains import CausalChain
from .rules import Rule, RuleTable, default_rule_table
from .state import Category, Condition, Kind

_TOKEN_RE = re.compile(r"[a-z']+|\?|;")


def words_of(text: str) -> list[str]:
    """Lowercased word/punctuation tokens of a question or chain label."""
    return _TOKEN_RE.findall(text.lower())


def phrase_question(
    cond: Condition, category: Category, table: RuleTable | None = None
) -> str:
    """Fill the rule's question template; deterministic in the condition.

    The template index is carried in the condition parameters so two
    conditions with the same parameters always phrase identically.
    """
    table = table or default_rule_table()
    rule = table.get(cond.rule_id)
    if rule.category != category:
        raise ValueError(
            f"rule {rule.rule_id} has category {rule.category.value}, not {category.value}"
        )
    idx = int(cond.parameters.get("template", 0)) % len(rule.question_templates)
    return rule.question_templates[idx]


def question_is_safe(rule: Rule, question: str) -> bool:
    """True iff no outcome-state word leaks into the question unless the
    rule declares it part of the condition itself."""
    leaked = set(words_of(question)) & rule.outcome_words()
    return leaked <= set(rule.reveal_ok)


def _chain_phrases(rule: Rule) -> list[str]:
    """Every node phrase this rule can emit, with targets expanded."""
    phrases = []
    specs = [rule.condition_node]
    for eff in rule.effects:
        for key in ("via", "node"):
            if eff.get(key) is not None:
                specs.append(eff[key])
    for spec in specs:
        if "{target}" in spec["entity"]:
            for kind in Kind:
                phrases.append(f"the {spec['entity'].replace('{target}', kind.value)} {spec['variation']}")
        else:
            phrases.append(f"the {spec['entity']} {spec['variation']}")
    return phrases


@lru_cache(maxsize=4)
def vocabulary(table: RuleTable | None = None) -> tuple[str, ...]:
    """The closed word list covering every question and linearized chain
    the rule table can produce, sorted for reproducibility."""
    table = table or default_rule_table()
    words: set[str] = {"?", ";", "the", "causes", "needs"}
    for rule in table.rules:
        for tpl in rule.question_templates:
            words.update(words_of(tpl))
        for phrase in _chain_phrases(rule):
            words.update(words_of(phrase))
    return tuple(sorted(words))


def chain_label(chain: CausalChain) -> str:
    """Chain-supervision text label; thin alias kept next to the grammar."""
    from ..chains import linearize

    return linearize(chain)
