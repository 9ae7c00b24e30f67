"""Edge-node runtime: inference loop, decision policy, sync, HTTP API."""

from .runtime import (
    ActuationCommand,
    Alert,
    EdgePolicy,
    EdgeRuntime,
    ModelSnapshot,
    decide,
)
from .api import EdgeApiServer

__all__ = [
    "ActuationCommand", "Alert", "EdgePolicy", "EdgeRuntime", "ModelSnapshot",
    "decide", "EdgeApiServer",
]
