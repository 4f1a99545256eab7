"""Prompt templates for the three annotation questions.

The templates are frozen strings; placeholder substitution is literal
(no format-string parsing, so sentences containing braces are safe).
Answers are requested in angle brackets so they can be parsed out of
chatty replies.
"""
from __future__ import annotations

from collections.abc import Sequence

from .vocabulary import VOCABULARY_SIZE

LONGITUDINAL_TEMPLATE = (
    "You are a medical AI assistant. Given a radiology report sentence "
    "{sentence}, determine if it compares the current image with prior "
    "studies (e.g., remain, compare, similar, stable, increased, still, new, "
    'again). If yes, return <1>. If no, return <0>. Examples: "Cardiac and '
    'mediastinal silhouettes are stable." returns <1>, "No larger pleural '
    'effusions." returns <1>,"Increased retrocardiac opacity may reflect '
    'atelectasis." returns <1>.'
)

KEYWORD_TEMPLATE = (
    "Which item in the list most related to the following sentence "
    "{sentence}? The list is {disease_list}. Please reply with the answer "
    "enclosed in <>, for example <spinal fracture>. Return <support devices> "
    "for any changes in support device positions."
)

PROGRESSION_TEMPLATE = (
    "The following sentence {sentence} describes the status of {disease} as "
    "<no change> (e.g., similar, unchanged), <improved> (e.g., resolved), or "
    "<worsened>. Return the answer in the form of <no change>, <improved> , "
    "or <worsened>. If this condition is not mentioned, return <unmentioned>. "
    "Note that if 'change' or 'new' is mentioned along with a newly appearing "
    "lesion, it usually implies worsening. Example: in cases of 'pleural "
    "effusion', 'New small bilateral pleural effusions.' means <worsened>. In "
    "cases of 'low lung volumes', 'lower' means <worsened>; 'increased' means "
    "<improved>."
)

# Some backends need an explicit nudge to emit a bare binary answer; appended
# to the longitudinal prompt when configured, never hard-coded per model.
BINARY_OUTPUT_SUFFIX = "Please output <0> or <1>."


def render_disease_list(vocab: Sequence[str]) -> str:
    """Render the vocabulary as a bracketed, comma-separated sequence."""
    return "[" + ", ".join(vocab) + "]"


def build_longitudinal_prompt(sentence: str, suffix: str = "") -> str:
    """First question: does the sentence compare against prior studies?"""
    if not sentence:
        raise ValueError("sentence must be non-empty")
    prompt = LONGITUDINAL_TEMPLATE.replace("{sentence}", sentence)
    if suffix:
        prompt = prompt + " " + suffix
    return prompt


def build_keyword_prompt(sentence: str, vocab: Sequence[str]) -> str:
    """Second question: which vocabulary term does the sentence concern?"""
    if not sentence:
        raise ValueError("sentence must be non-empty")
    if len(vocab) != VOCABULARY_SIZE:
        raise ValueError(
            f"vocabulary must have exactly {VOCABULARY_SIZE} terms, got {len(vocab)}"
        )
    prompt = KEYWORD_TEMPLATE.replace("{disease_list}", render_disease_list(vocab))
    return prompt.replace("{sentence}", sentence)


def build_progression_prompt(sentence: str, disease: str, vocab: Sequence[str]) -> str:
    """Third question: how did the named condition change?"""
    if not sentence:
        raise ValueError("sentence must be non-empty")
    if disease not in vocab:
        raise ValueError(f"disease {disease!r} is not in the vocabulary")
    prompt = PROGRESSION_TEMPLATE.replace("{disease}", disease)
    return prompt.replace("{sentence}", sentence)
