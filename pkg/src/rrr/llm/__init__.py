from .cache import CallCache
from .gateway import Gateway
from .ledger import DEFAULT_RATES, CallRecord, CostLedger, CostReport, ModelRates, replay
from .mock import MockBackend, MockRules, UnhandledPrompt, load_mock_rules
from .types import (
    ChatRequest,
    ChatResponse,
    LLMError,
    Message,
    PermanentError,
    RetryableError,
    TransportError,
)

__all__ = [
    "DEFAULT_RATES",
    "CallCache",
    "CallRecord",
    "ChatRequest",
    "ChatResponse",
    "CostLedger",
    "CostReport",
    "Gateway",
    "LLMError",
    "Message",
    "MockBackend",
    "MockRules",
    "ModelRates",
    "PermanentError",
    "RetryableError",
    "TransportError",
    "UnhandledPrompt",
    "load_mock_rules",
    "replay",
]
