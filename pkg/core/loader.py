"""Experiment config parsing with line- and field-precise errors.

Configs are YAML documents with one section per module; JSON is accepted
too. Unknown keys are errors and name the closest valid key.
"""

import difflib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ValidationError

from core.errors import ConfigError
from schemas import models
from schemas.models import ConfigIssue, ExperimentConfig
from utils.logging import get_logger

logger = get_logger("loader")

_CONFIG_MODELS: Tuple[type, ...] = (
    models.ExperimentConfig,
    models.RunSection,
    models.ClassifySection,
    models.LadderSection,
    models.RecursionSection,
    models.WalkSection,
    models.ExampleSection,
    models.EnvironmentSpec,
    models.TwoPointPLaw,
    models.FinitePLaw,
    models.LogitUniformPLaw,
    models.ConstantMLaw,
    models.FiniteMLaw,
    models.PoissonMLaw,
    models.HeavyTailMLaw,
)


def _valid_keys(config_models: Iterable[type] = _CONFIG_MODELS) -> List[str]:
    keys = set()
    for model in config_models:
        for name, info in model.model_fields.items():
            keys.add(name)
            if info.alias:
                keys.add(info.alias)
    return sorted(keys)


def nearest_key(key: str) -> Optional[str]:
    """Closest valid config key, if any is reasonably close."""
    matches = difflib.get_close_matches(key, _valid_keys(), n=1, cutoff=0.6)
    return matches[0] if matches else None


def _line_index(text: str) -> Dict[Tuple[str, ...], int]:
    """Map key paths to 1-based line numbers using the YAML node tree."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    index: Dict[Tuple[str, ...], int] = {}

    def walk(node, path: Tuple[str, ...]) -> None:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = path + (str(key_node.value),)
                index[child] = key_node.start_mark.line + 1
                walk(value_node, child)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                child = path + (str(i),)
                index[child] = item.start_mark.line + 1
                walk(item, child)

    if root is not None:
        walk(root, ())
    return index


def _locate(location: Sequence[Any], lines: Dict[Tuple[str, ...], int]) -> Optional[int]:
    # discriminator tags in pydantic locations have no counterpart in the document
    path: Tuple[str, ...] = ()
    line = None
    for part in location:
        candidate = path + (str(part),)
        if candidate in lines:
            path = candidate
            line = lines[candidate]
    return line


def _issues_from(error: ValidationError, lines: Dict[Tuple[str, ...], int]) -> List[ConfigIssue]:
    issues = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        message = item["msg"]
        if item["type"] == "extra_forbidden":
            key = str(item["loc"][-1])
            suggestion = nearest_key(key)
            message = f"unknown key {key!r}"
            if suggestion:
                message += f"; did you mean {suggestion!r}?"
        issues.append(ConfigIssue(location=location, line=_locate(item["loc"], lines), message=message))
    return issues


def _format_issues(issues: List[ConfigIssue]) -> str:
    parts = []
    for issue in issues:
        where = f"line {issue.line}, " if issue.line is not None else ""
        parts.append(f"{where}{issue.location}: {issue.message}")
    return "; ".join(parts)


def _load_document(text: str) -> Any:
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            issue = ConfigIssue(location="<document>", line=e.lineno, message=e.msg)
            raise ConfigError(f"invalid JSON: {_format_issues([issue])}", [issue]) from e
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        issue = ConfigIssue(
            location="<document>",
            line=mark.line + 1 if mark is not None else None,
            message=str(getattr(e, "problem", None) or e),
        )
        raise ConfigError(f"invalid YAML: {_format_issues([issue])}", [issue]) from e


def validate_document(document: Any, text: str = "") -> ExperimentConfig:
    """Validate an already-parsed document into an ExperimentConfig."""
    if not isinstance(document, dict):
        issue = ConfigIssue(location="<root>", line=1, message="config must be a mapping of sections")
        raise ConfigError(_format_issues([issue]), [issue])
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        issues = _issues_from(e, _line_index(text) if text else {})
        raise ConfigError(f"invalid config: {_format_issues(issues)}", issues) from e


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML or JSON experiment config.

    Args:
        text: Config document

    Returns:
        Validated ExperimentConfig with defaults filled

    Raises:
        ConfigError: With one issue per problem, each carrying its location
    """
    config = validate_document(_load_document(text), text)
    logger.debug(f"Parsed {config.experiment.kind} config")
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        issue = ConfigIssue(location=str(path), message=f"cannot read config: {e}")
        raise ConfigError(issue.message, [issue]) from e
    return parse_config(text)


def with_overrides(
    config: Optional[ExperimentConfig],
    kind: Optional[str] = None,
    **overrides: Any,
) -> ExperimentConfig:
    """Apply command-line overrides and revalidate.

    ``classical_mode`` and ``exact_threshold`` also reach the environment
    section; every other override lands in the experiment section.
    """
    document: Dict[str, Any] = config.model_dump(by_alias=True, exclude_none=True) if config else {}
    experiment = document.setdefault("experiment", {})
    if kind is not None:
        experiment["kind"] = kind
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "classical_mode":
            if "environment" in document:
                document["environment"]["classical_mode"] = value
            continue
        experiment[key] = value
        if key == "exact_threshold" and "environment" in document:
            document["environment"]["exact_threshold"] = value
    return validate_document(document)


def dump_config(config: BaseModel) -> Dict[str, Any]:
    """JSON-ready echo of a config, aliases included."""
    return config.model_dump(mode="json", by_alias=True)
