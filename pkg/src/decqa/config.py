"""Application configuration loaded from a single JSON document."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelIds(_Section):
    main: str = "default"
    ek: Optional[str] = None
    judge: Optional[str] = None


class GatewaySettings(_Section):
    base_url: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    models: ModelIds = ModelIds()
    temperature: float = Field(0.0, ge=0.0, le=1.0)
    max_output_tokens: int = Field(512, ge=1)
    max_in_flight: int = Field(4, ge=1)
    timeout: float = Field(60.0, gt=0)


class RetrievalSettings(_Section):
    mode: Literal["local", "remote"] = "local"
    top_n: int = Field(10, ge=1)
    backup_k: int = Field(2, ge=1)
    remote_url: Optional[str] = None
    k1: float = Field(1.2, ge=0.0)
    b: float = Field(0.75, ge=0.0, le=1.0)


class OrchestratorSettings(_Section):
    max_chain_length: int = Field(6, ge=1)
    unanswerable_token: str = "unanswerable"
    rewrite_first_step: bool = False


class PathSettings(_Section):
    corpus: Optional[str] = None
    index_cache: Optional[str] = None
    prompts: Optional[str] = None
    script: Optional[str] = None


class AppConfig(_Section):
    gateway: GatewaySettings = GatewaySettings()
    retrieval: RetrievalSettings = RetrievalSettings()
    orchestrator: OrchestratorSettings = OrchestratorSettings()
    paths: PathSettings = PathSettings()

    @classmethod
    def load(cls, path: str | Path) -> "AppConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON ({exc.msg})") from None
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ValueError(f"{path}: invalid configuration\n{exc}") from None

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        """Stable digest of the fully resolved configuration (defaults included)."""
        payload = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
