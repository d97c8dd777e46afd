"""Prompt templates with ``{{name}}`` placeholders."""

from __future__ import annotations

import re
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping

from metarev.errors import UnboundPlaceholder

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


class PromptTemplate(str, Enum):
    EXTRACT_EXPRESSIONS = "extract_expressions"
    PREDICT_COMPONENTS = "predict_components"
    PREDICT_LEVEL_FROM_JUDGEMENTS = "predict_level_from_judgements"
    PREDICT_LEVEL_FROM_FULL_TEXT = "predict_level_from_full_text"
    GENERATE_NAIVE = "generate_naive"
    GENERATE_LLM_STEPS_ASK = "generate_llm_steps_ask"
    GENERATE_LLM_STEPS_USE = "generate_llm_steps_use"
    GENERATE_OURS_LOGIC = "generate_ours_logic"
    SUB_SUMMARY = "sub_summary"
    FINAL_FROM_SUB_SUMMARIES = "final_from_sub_summaries"

    @property
    def body(self) -> str:
        return template_body(self)

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(PLACEHOLDER_RE.findall(self.body)))


@lru_cache(maxsize=None)
def template_body(template_id: PromptTemplate) -> str:
    text = resources.files("metarev.gateway").joinpath("templates", f"{template_id.value}.txt").read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


def render_prompt(template_id: PromptTemplate | str, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder in one pass; bound values are inserted as-is."""
    template_id = PromptTemplate(template_id)
    body = template_body(template_id)
    for name in PLACEHOLDER_RE.findall(body):
        if name not in bindings:
            raise UnboundPlaceholder(name)
    return PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), body)
