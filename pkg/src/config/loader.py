"""
YAML configuration: logging settings, scale presets and experiment defaults.
"""
import logging
import os
from typing import Any, Dict, Optional

import yaml

from src.lib.error.handler import ConfigValidationError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "config", "defaults.yaml")


class ConfigLoader:
    """Configuration loader for the simulator"""

    def __init__(self, config_path: Optional[str] = None):
        """Initialize with optional path to config file"""
        self.config_path = config_path or os.environ.get("DSC_CONFIG_PATH", DEFAULT_CONFIG_PATH)
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file"""
        try:
            with open(self.config_path, "r") as f:
                return yaml.safe_load(f) or {}
        except Exception as e:
            logger.error(f"Error loading configuration from {self.config_path}: {e}")
            return {}

    def get(self, section: str, key: Optional[str] = None, default: Any = None) -> Any:
        """Get configuration value by section and optional key"""
        if section not in self.config:
            return default

        if key is None:
            return self.config[section]

        return self.config[section].get(key, default)

    def preset(self, name: str) -> Dict[str, Any]:
        """
        Scale preset by name.

        Raises:
            ConfigValidationError: If the preset is not defined
        """
        presets = self.get("presets", default={}) or {}
        if name not in presets:
            raise ConfigValidationError(
                f"Unknown preset '{name}'",
                errors=[{"field": "preset", "message": f"expected one of {sorted(presets)}"}],
            )
        return dict(presets[name])


def load_document(path: str) -> Dict[str, Any]:
    """
    Read a JSON or YAML experiment file into a dict.

    Raises:
        ConfigValidationError: If the file is missing, unparsable or not a mapping
    """
    if not os.path.exists(path):
        raise ConfigValidationError(f"Config file '{path}' not found", errors=[{"field": "config", "message": "missing"}])
    try:
        with open(path, "r") as f:
            payload = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigValidationError(f"Cannot parse '{path}': {e}", errors=[{"field": "config", "message": str(e)}])
    if not isinstance(payload, dict):
        raise ConfigValidationError(
            f"Config file '{path}' must hold a mapping", errors=[{"field": "config", "message": "not a mapping"}]
        )
    return payload
