"""Run configuration: a YAML or JSON document validated with pydantic (unknown keys rejected)."""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cluster import DEFAULT_ROLE_RULES, LabelRule
from .errors import ConfigError
from .events import ProjectRef, TimeWindow
from .factor import DEFAULT_ACTIVITY_LABELS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WindowConfig(_Strict):
    start: datetime = datetime(2015, 1, 1, tzinfo=timezone.utc)
    end: datetime = datetime(2018, 1, 1, tzinfo=timezone.utc)

    def build(self) -> TimeWindow:
        return TimeWindow(self.start, self.end)

    @model_validator(mode="after")
    def _check(self) -> "WindowConfig":
        try:
            self.build()
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return self


class FetchConfig(_Strict):
    api_base: str = "https://api.github.com"
    web_host: str = "github.com"
    token_env: str = "GITHUB_TOKEN"
    max_workers: int = Field(4, ge=1)
    requests_per_second: float = Field(10.0, gt=0)


class FactorConfig(_Strict):
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(100, ge=1)
    rotation_max_iter: int = Field(1000, ge=1)
    rotation_tol: float = Field(1e-5, gt=0)


class ClusterConfig(_Strict):
    select_by_silhouette: bool = False
    k_active: int = Field(4, ge=1)
    k_supporting: int = Field(5, ge=1)
    k_candidates: list[int] = Field(default_factory=lambda: list(range(2, 9)))
    silhouette_exact_max: int = Field(20000, ge=2)
    silhouette_sample_size: int = Field(20000, ge=2)
    seed: int = 0


class RuleConfig(_Strict):
    label: str
    kind: Literal["max", "min", "above", "below", "rest"]
    factor: str = "norm"
    group: Optional[Literal["Active", "Supporting"]] = None
    value: float = 0.0
    priority: int = 0

    def build(self) -> LabelRule:
        return LabelRule(self.label, self.kind, self.factor, self.group, self.value, self.priority)


def _default_rules() -> list[RuleConfig]:
    return [
        RuleConfig(label=r.label, kind=r.kind, factor=r.factor, group=r.group, value=r.value, priority=r.priority)
        for r in DEFAULT_ROLE_RULES
    ]


class LabelConfig(_Strict):
    activities: list[str] = Field(default_factory=lambda: list(DEFAULT_ACTIVITY_LABELS))
    roles: list[RuleConfig] = Field(default_factory=_default_rules)
    rare_role: str = "Rare Contributor"


class DynamicsConfig(_Strict):
    skip_absent: bool = False
    histogram_bins: int = Field(20, ge=1)


class RunConfig(_Strict):
    projects: list[str] = Field(default_factory=list)
    window: WindowConfig = Field(default_factory=WindowConfig)
    store: str = "store"
    output: str = "out"
    bot_denylist: list[str] = Field(default_factory=list)
    alias_file: Optional[str] = None
    fetch: FetchConfig = Field(default_factory=FetchConfig)
    factor: FactorConfig = Field(default_factory=FactorConfig)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    labels: LabelConfig = Field(default_factory=LabelConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)

    @field_validator("projects")
    @classmethod
    def _projects(cls, v: list[str]) -> list[str]:
        refs = [ProjectRef.parse(p) for p in v]
        if len(set(refs)) != len(refs):
            raise ValueError("duplicate project")
        return v

    @property
    def project_refs(self) -> list[ProjectRef]:
        return [ProjectRef.parse(p) for p in self.projects]

    def resolve(self, base: Path) -> "RunConfig":
        """Return a copy with relative paths anchored at ``base`` (the config file's directory)."""
        def anchor(p: str | None) -> str | None:
            if p is None or Path(p).is_absolute():
                return p
            return os.path.normpath(base / p)

        return self.model_copy(update={
            "store": anchor(self.store),
            "output": anchor(self.output),
            "alias_file": anchor(self.alias_file),
        })

    def provenance(self) -> dict:
        """Config as recorded in output metadata (paths excluded so artifacts stay relocatable)."""
        return self.model_dump(mode="json", exclude={"store", "output", "alias_file"})


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        cfg = RunConfig.model_validate(data or {})
    except (OSError, yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{exc}") from exc
    return cfg.resolve(path.parent.resolve())
