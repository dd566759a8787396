"""Procedural causal sprite microworld: states, rules, rendering,
questions, and dataset generation."""

from .dataset import (
    DEFAULT_CATEGORY_MIX,
    DEFAULT_CHAIN_FRACTION,
    SampleRecord,
    generate_samples,
    make_dataset,
    read_manifest,
    write_manifest,
)
from .questions import phrase_question, question_is_safe, vocabulary, words_of
from .render import render
from .rules import (
    PreconditionFailed,
    RuleTable,
    SubjectNotFound,
    UnknownRule,
    apply_condition,
    default_rule_table,
    mutated_fields,
)
from .sampler import sample_scene
from .state import (
    CATEGORY_ORDER,
    CHARACTER_KINDS,
    Category,
    Condition,
    Emotion,
    Entity,
    Kind,
    Pose,
    SceneState,
    Scenery,
)

__all__ = [name for name in dir() if not name.startswith("_")]
