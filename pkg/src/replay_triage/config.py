"""Application configuration shared by the CLI and the HTTP service.

A single JSON config file carries hyperparameters, the summarizer endpoint,
and service settings; CLI flags override file values one-to-one. Secrets
(API keys, the service token) come from environment variables only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .events import Hyperparameters
from .summarizer import EndpointConfig


@dataclass(frozen=True)
class AppConfig:
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    endpoint_kind: str = "offline"  # offline | http
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    feature_mode: str = "em_ss_summary"
    vectorizer_kind: str = "subword"
    max_drop: float = 0.02
    data_dir: str = "triage-data"
    auth_token_env: str = "TRIAGE_API_TOKEN"
    max_summarizer_in_flight: int = 4

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AppConfig":
        return cls(
            hyperparameters=Hyperparameters.from_dict(d.get("hyperparameters", {})),
            endpoint_kind=d.get("endpoint_kind", "offline"),
            endpoint=EndpointConfig.from_dict(d.get("endpoint", {})),
            feature_mode=d.get("feature_mode", "em_ss_summary"),
            vectorizer_kind=d.get("vectorizer_kind", "subword"),
            max_drop=float(d.get("max_drop", 0.02)),
            data_dir=d.get("data_dir", "triage-data"),
            auth_token_env=d.get("auth_token_env", "TRIAGE_API_TOKEN"),
            max_summarizer_in_flight=int(d.get("max_summarizer_in_flight", 4)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "hyperparameters": self.hyperparameters.to_dict(),
            "endpoint_kind": self.endpoint_kind,
            "endpoint": {
                "base_url": self.endpoint.base_url,
                "model": self.endpoint.model,
                "max_context_tokens": self.endpoint.max_context_tokens,
                "temperature": self.endpoint.temperature,
                "timeout_s": self.endpoint.timeout_s,
                "max_retries": self.endpoint.max_retries,
                "api_key_env": self.endpoint.api_key_env,
            },
            "feature_mode": self.feature_mode,
            "vectorizer_kind": self.vectorizer_kind,
            "max_drop": self.max_drop,
            "data_dir": self.data_dir,
            "auth_token_env": self.auth_token_env,
            "max_summarizer_in_flight": self.max_summarizer_in_flight,
        }


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    with Path(path).open("r", encoding="utf-8") as fh:
        return AppConfig.from_dict(json.load(fh))
