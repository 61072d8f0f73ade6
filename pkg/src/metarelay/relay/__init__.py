"""Untrusted web backend: HTTP API, confirmation tracking, funding daemon."""

from .config import PLATFORM_SECRET_ENV, RelayConfig, platform_secret_from_env
from .nodeclient import NodeClient, NodeRejectionError, NodeUnreachableError
from .records import (
    ABORTED,
    CONFIRMED,
    FAILED,
    SIGNED,
    SUBMITTED,
    InvalidTransitionError,
    RecordStore,
    RelayRecord,
)
from .service import RelayError, RelayService, resolve_gas, start_http

__all__ = [
    "PLATFORM_SECRET_ENV",
    "RelayConfig",
    "platform_secret_from_env",
    "NodeClient",
    "NodeRejectionError",
    "NodeUnreachableError",
    "ABORTED",
    "CONFIRMED",
    "FAILED",
    "SIGNED",
    "SUBMITTED",
    "InvalidTransitionError",
    "RecordStore",
    "RelayRecord",
    "RelayError",
    "RelayService",
    "resolve_gas",
    "start_http",
]
