"""Experiment configuration: a versioned JSON schema validated with pydantic."""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

from .coverage import parse_power_tail
from .dist import LawError, parse_law
from .tree import TreeError, parse_tree

LINE_MODELS = ("fireworks_line", "reverse_line", "env_line")
TREE_MODELS = ("cone", "disk", "reverse_cone", "env_cone")
COVERAGE_MODELS = ("markov_coverage", "boolean_coverage")
CONFIG_MODELS = LINE_MODELS + TREE_MODELS + COVERAGE_MODELS
SWEEP_FIELDS = ("horizon", "trials")

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(ValueError):
    """Carries every violation found, each prefixed by its field path."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _law_literal(text: Optional[str]) -> Optional[str]:
    if text is not None and not _PLACEHOLDER.search(text):
        parse_law(text)
    return text


def _substrate_literal(text: str) -> str:
    if text != "line" and not _PLACEHOLDER.search(text):
        parse_tree(text)
    return text


LawLiteral = Annotated[Optional[str], AfterValidator(_law_literal)]


class Laws(_Strict):
    R: LawLiteral = None
    N: LawLiteral = None


class Sweep(_Strict):
    param: str = Field(min_length=1)
    grid: list[Union[int, float, str]] = Field(min_length=1)


class CoverageParams(_Strict):
    p01: Optional[float] = None
    p10: Optional[float] = None
    lam: Optional[float] = None
    tail: Optional[str] = None
    d: int = Field(1, ge=1)


class ExperimentConfig(_Strict):
    schema_: Literal[1] = Field(alias="schema")
    command: Literal["analyze", "simulate", "sweep", "xval"]
    model: Literal[CONFIG_MODELS]
    laws: Laws = Laws()
    substrate: Annotated[str, AfterValidator(_substrate_literal)] = "line"
    horizon: int = Field(1000, ge=1)
    trials: int = Field(10_000, ge=1)
    master_seed: int = Field(0, ge=0, lt=1 << 64)
    tolerance: float = Field(1e-12, gt=0, lt=1)
    format: Literal["csv", "json"] = "csv"
    sweep: Optional[Sweep] = None
    coverage: Optional[CoverageParams] = None
    eps_residual: float = Field(1e-6, gt=0, lt=1)
    max_vertices: int = Field(1 << 20, ge=16)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _semantics(self):
        errs = semantic_errors(self)
        if errs:
            raise ValueError("\n".join(errs))
        return self

    def literals(self) -> dict[str, str]:
        """Law and substrate literals that may carry sweep placeholders."""
        out = {f"laws.{k}": v for k, v in self.laws.model_dump().items() if v is not None}
        out["substrate"] = self.substrate
        if self.coverage is not None and self.coverage.tail is not None:
            out["coverage.tail"] = self.coverage.tail
        return out

    def at(self, value) -> "ExperimentConfig":
        """The config with the sweep parameter fixed to ``value``."""
        if self.sweep is None:
            return self
        p = self.sweep.param
        data = self.model_dump(by_alias=True, exclude={"sweep"})
        data["command"] = "simulate"
        if p in SWEEP_FIELDS:
            data[p] = int(value)
            return ExperimentConfig.model_validate(data)
        text = _fmt(value)
        data["laws"] = {k: (v.replace("{" + p + "}", text) if v is not None else None)
                        for k, v in data["laws"].items()}
        data["substrate"] = data["substrate"].replace("{" + p + "}", text)
        if data.get("coverage") and data["coverage"].get("tail"):
            data["coverage"]["tail"] = data["coverage"]["tail"].replace("{" + p + "}", text)
        return ExperimentConfig.model_validate(data)

    def points(self) -> list["ExperimentConfig"]:
        return [self.at(v) for v in self.sweep.grid] if self.sweep is not None else [self]


def _fmt(v) -> str:
    return v if isinstance(v, str) else repr(v)


def _check_literals(lit: dict[str, str], model: str, base_dir: Optional[Path]) -> list[str]:
    errs = []
    for path, text in lit.items():
        try:
            if path.startswith("laws."):
                parse_law(text)
            elif path == "coverage.tail":
                parse_power_tail(text)
            elif model in TREE_MODELS:
                parse_tree(text, base_dir)
            elif text != "line":
                errs.append(f"substrate: model {model} runs on 'line', got {text!r}")
        except (LawError, TreeError, OSError) as exc:
            errs.append(f"{path}: {exc}")
    return errs


def semantic_errors(cfg: ExperimentConfig, base_dir: Optional[Path] = None) -> list[str]:
    errs = []
    m = cfg.model
    if m != "boolean_coverage" and cfg.laws.R is None:
        errs.append(f"laws.R: model {m} needs a radius law")
    if m in ("env_line", "env_cone") and cfg.laws.N is None:
        errs.append(f"laws.N: model {m} needs a station law")
    if m not in ("env_line", "env_cone") and cfg.laws.N is not None:
        errs.append(f"laws.N: model {m} takes no station law")
    if m in COVERAGE_MODELS:
        c = cfg.coverage
        need = ("p01", "p10") if m == "markov_coverage" else ("lam", "tail")
        for k in need:
            if c is None or getattr(c, k) is None:
                errs.append(f"coverage.{k}: required for model {m}")
        if cfg.command == "xval":
            errs.append("command: coverage models have no survival probability to cross-validate")
    elif cfg.coverage is not None:
        errs.append(f"coverage: model {m} takes no coverage parameters")
    if m in TREE_MODELS and cfg.substrate == "line":
        errs.append(f"substrate: model {m} needs a tree literal")

    lit = cfg.literals()
    used = {name for text in lit.values() for name in _PLACEHOLDER.findall(text)}
    if cfg.command == "sweep":
        if cfg.sweep is None:
            errs.append("sweep: required for command sweep")
        else:
            p = cfg.sweep.param
            if p in SWEEP_FIELDS:
                bad = [v for v in cfg.sweep.grid if not isinstance(v, int) or v < 1]
                if bad:
                    errs.append(f"sweep.grid: {p} values must be positive integers, got {bad!r}")
                if used:
                    errs.append(f"sweep.param: placeholders {sorted(used)} left unfilled")
            elif p not in used:
                errs.append(f"sweep.param: placeholder {{{p}}} appears in no law or substrate literal")
            elif used - {p}:
                errs.append(f"sweep.param: placeholders {sorted(used - {p})} left unfilled")
            else:
                for i, v in enumerate(cfg.sweep.grid):
                    text = _fmt(v)
                    sub = {k: t.replace("{" + p + "}", text) for k, t in lit.items()}
                    errs += [f"sweep.grid.{i}: {e}" for e in _check_literals(sub, m, base_dir)]
            return errs
    elif cfg.sweep is not None:
        errs.append(f"sweep: only valid for command sweep, not {cfg.command}")
    if used:
        errs.append(f"laws: placeholders {sorted(used)} need command sweep")
        return errs
    return errs + _check_literals(lit, m, base_dir)


def _path(loc) -> str:
    parts = [str(x) for x in loc]
    return ".".join(parts) if parts else "$"


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON config, reporting every violation at once."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["$: config must be a JSON object"])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errs = []
        for e in exc.errors():
            if e["type"] == "value_error" and not e["loc"]:
                # semantic check: messages already carry their paths
                errs += str(e["ctx"]["error"]).splitlines()
            else:
                msg = e["msg"].removeprefix("Value error, ")
                errs.append(f"{_path(e['loc'])}: {msg}")
        raise ConfigError(errs) from None


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def canonical(cfg: ExperimentConfig) -> str:
    """Sorted-key JSON with every default filled in; parse_config(canonical(c)) == c."""
    data = cfg.model_dump(mode="json", by_alias=True, exclude_none=True)
    return json.dumps(data, sort_keys=True, indent=2) + "\n"
