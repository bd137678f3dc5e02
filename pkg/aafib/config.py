"""
Runtime configuration
Environment (.env) settings, logging setup and the optional YAML run file
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

load_dotenv()

OUTPUT_DIR = Path(os.environ.get("AAFIB_OUTPUT_DIR", "aafib_output"))
LOG_LEVEL = os.environ.get("AAFIB_LOG_LEVEL", "INFO")
LOG_FILE = os.environ.get("AAFIB_LOG_FILE", "")
WORKERS = int(os.environ.get("AAFIB_WORKERS", "1"))

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Configure root logging the same way for every entry point"""
    handlers = [logging.StreamHandler(sys.stdout)]
    log_file = log_file if log_file is not None else LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def load_run_file(path: str) -> Dict[str, Any]:
    """Load a YAML run config. Keys mirror the CLI flags with underscores."""
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, 'r') as f:
        data = yaml.safe_load(f) or {}

    if not isinstance(data, dict):
        raise ValueError(f"Config file {config_path} must contain a mapping")

    return {key.replace('-', '_'): value for key, value in data.items()}


def merge_settings(defaults: Dict[str, Any], file_values: Dict[str, Any],
                   flag_values: Dict[str, Any]) -> Dict[str, Any]:
    """Flags override the config file, which overrides the defaults"""
    merged = dict(defaults)
    merged.update({k: v for k, v in file_values.items() if v is not None})
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged
