import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from wlr.errors import UsageError
from wlr.model import BgParams

logger = logging.getLogger(__name__)

ENV_PREFIX = "WLR_"


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _optional_float(value: Any) -> Optional[float]:
    if value is None or str(value).strip().lower() in ("", "none", "auto"):
        return None
    return float(value)


# Every setting a config file or WLR_* variable may supply, with its parser.
SETTINGS: Dict[str, Callable[[Any], Any]] = {
    "mode": str,
    "p": int,
    "tau": _optional_float,
    "alpha": float,
    "beta": float,
    "eps": float,
    "eps1": _optional_float,
    "max_iter": int,
    "i1": int,
    "i2": int,
    "ir": int,
    "k_max": int,
    "seed": int,
    "init_rank": int,
    "prior_source": str,
    "solver": str,
    "workers": int,
    "raw_foreground": _to_bool,
    "window": int,
    "log_level": str,
}

ALIASES = {"kmax": "k_max"}


def normalize_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return ALIASES.get(key, key)


class RunConfig:
    """Layered settings for one CLI run.

    Lowest to highest precedence: model defaults, ``WLR_*`` environment
    variables (a ``.env`` file is loaded first), the ``key = value`` config
    file, explicit command-line flags.
    """

    def __init__(self, config_file: Optional[str] = None):
        load_dotenv()
        self.config_file = Path(config_file) if config_file else None
        self.env_values = self._read_env()
        self.file_values = self._read_file()

    def _read_env(self) -> Dict[str, Any]:
        values = {}
        for key in SETTINGS:
            raw = os.getenv(f"{ENV_PREFIX}{key.upper()}")
            if raw is not None:
                values[key] = self._parse(key, raw, f"environment variable {ENV_PREFIX}{key.upper()}")
        return values

    def _read_file(self) -> Dict[str, Any]:
        if self.config_file is None:
            return {}
        if not self.config_file.is_file():
            raise UsageError(f"config file not found: {self.config_file}")
        values = {}
        for raw_key, raw in dotenv_values(self.config_file).items():
            key = normalize_key(raw_key)
            if key not in SETTINGS:
                raise UsageError(f"unknown config key '{raw_key}' in {self.config_file}")
            values[key] = self._parse(key, raw, f"config key '{raw_key}'")
        logger.debug(f"Loaded {len(values)} settings from {self.config_file}")
        return values

    @staticmethod
    def _parse(key: str, raw: Any, origin: str) -> Any:
        try:
            return SETTINGS[key](raw)
        except (TypeError, ValueError) as e:
            raise UsageError(f"invalid value {raw!r} for {origin}: {e}")

    def resolve(self, flags: Dict[str, Any]) -> Dict[str, Any]:
        """Merge the layers; flags set to None count as not given."""
        merged = dict(self.env_values)
        merged.update(self.file_values)
        merged.update({normalize_key(k): v for k, v in flags.items() if v is not None})
        return merged

    def bg_params(self, flags: Dict[str, Any]) -> BgParams:
        values = self.resolve(flags)
        fields = {k: v for k, v in values.items() if k in BgParams.model_fields}
        try:
            return BgParams(**fields)
        except ValidationError as e:
            raise UsageError(f"invalid pipeline parameters: {e}")


def ensure_output_dir(path: str) -> Path:
    """Create the output directory (and parents) if missing."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out
