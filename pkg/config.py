"""
Configuration module for the DAMC toolkit
Validates environment variables and loads JSON run configs
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from dotenv import load_dotenv

from core.errors import ConfigurationError

# Load environment variables
load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class DamcConfig:
    """
    Configuration class that loads and validates environment variables
    """

    def __init__(self):
        """Initialize configuration from environment variables"""
        # Logging
        self.log_level = os.getenv("DAMC_LOG", "INFO").upper()
        if self.log_level not in LOG_LEVELS:
            raise ValueError(f"DAMC_LOG must be one of {', '.join(LOG_LEVELS)}, got {self.log_level}")

        # Parallel grid workers
        self.jobs = int(os.getenv("DAMC_JOBS", "1"))
        if self.jobs < 1:
            raise ValueError("DAMC_JOBS must be at least 1")

        # Output and data locations
        self.output_dir = Path(os.getenv("DAMC_OUTPUT_DIR", "results"))
        self.ml100k_path: Optional[str] = os.getenv("DAMC_ML100K_PATH") or None


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """
    Apply one dotted-path override such as "solver.config.max_iters=50"

    Args:
        config: Parsed run config (modified in place)
        assignment: key=value; the value is parsed as JSON when possible

    Returns:
        The same dict
    """
    if "=" not in assignment:
        raise ConfigurationError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigurationError(f"invalid override key {key!r}")

    node = config
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigurationError(f"override {key!r}: {part!r} is not an object")
        node = child
    node[parts[-1]] = _parse_value(raw.strip())
    return config


def load_run_config(path: Optional[Union[str, Path]], overrides: Iterable[str] = ()) -> Dict[str, Any]:
    """
    Load a JSON run config and apply --set overrides

    Args:
        path: Config file, or None for an empty config
        overrides: key=value assignments

    Returns:
        Config dict

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigurationError: On malformed JSON or a non-object top level
    """
    config: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            config = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: malformed JSON at line {e.lineno}: {e.msg}") from e
        if not isinstance(config, dict):
            raise ConfigurationError(f"{path}: run config must be a JSON object")

    for assignment in overrides:
        apply_override(config, assignment)
    return config
