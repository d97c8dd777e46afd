from metarev.gateway.backends import (
    CompletionRequest,
    CompletionResult,
    Gateway,
    RateLimiter,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    request_key,
    write_fixture,
)
from metarev.gateway.parsing import (
    ComponentRecord,
    Diagnostic,
    parse_component_lines,
    parse_judgement_lines,
    parse_level_reply,
)
from metarev.gateway.prompts import PromptTemplate, render_prompt

__all__ = [
    "CompletionRequest",
    "CompletionResult",
    "ComponentRecord",
    "Diagnostic",
    "Gateway",
    "PromptTemplate",
    "RateLimiter",
    "RecordingBackend",
    "RemoteBackend",
    "ReplayBackend",
    "parse_component_lines",
    "parse_judgement_lines",
    "parse_level_reply",
    "render_prompt",
    "request_key",
    "write_fixture",
]
