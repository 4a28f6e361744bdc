import os
import logging
import configparser
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator


logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_FILE = REPO_ROOT / "config.prop"
NODE_BUDGET_ENV = "SYNC_NODE_BUDGET"


class PipelineConfig(BaseModel):
    """Settings for one synthesizer run. Field names mirror the CLI flags."""

    program: Optional[Path] = None
    spec: Optional[Path] = None
    mode: Literal["auto", "all-init", "with-inputs"] = "auto"
    target: Literal["ccr", "coarse", "fine"] = "ccr"
    observability: Literal["auto", "force-shared", "limited"] = "auto"
    dump_tableau: bool = False
    dump_model: bool = False
    dump_guards: bool = True
    keep_deleted: bool = False
    node_budget: int = Field(default=200_000, gt=0)
    output_dir: Path = Path("output")
    jobs: int = Field(default=1, ge=1)
    progress: bool = False
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value):
        value = value.upper()
        if value not in ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"):
            raise ValueError(f"Unknown log level: {value}")
        return value


def _read_ini(path):
    config = configparser.ConfigParser()
    read = config.read(path)
    if not read:
        logger.debug(f"No configuration file at {path}, using defaults")
        return {}

    values = {}
    if config.has_section("synthesis"):
        section = config["synthesis"]
        for key in ("mode", "target", "observability", "output_dir"):
            if key in section:
                values[key] = section[key]
        for key in ("node_budget", "jobs"):
            if key in section:
                values[key] = section.getint(key)
        for key in ("dump_tableau", "dump_model", "dump_guards", "keep_deleted", "progress"):
            if key in section:
                values[key] = section.getboolean(key)
    if config.has_section("logging") and "level" in config["logging"]:
        values["log_level"] = config["logging"]["level"]
    return values


def load_config(path=DEFAULT_CONFIG_FILE, **overrides):
    """
    Build a PipelineConfig from config.prop, the environment and explicit overrides.

    Precedence, lowest first: defaults, the ``[synthesis]`` section of the
    config file, keyword overrides (CLI flags; ``None`` means "not given"),
    then the ``SYNC_NODE_BUDGET`` environment variable.

    Parameters:
        path (str | Path): Location of the INI file.
        **overrides: Field values to force.

    Returns:
        PipelineConfig: The validated configuration.
    """
    values = _read_ini(path)
    values.update({k: v for k, v in overrides.items() if v is not None})

    budget = os.environ.get(NODE_BUDGET_ENV)
    if budget:
        try:
            values["node_budget"] = int(budget)
        except ValueError as e:
            raise ValueError(f"{NODE_BUDGET_ENV} must be an integer: {e}")

    return PipelineConfig(**values)
