import os
import tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigurationError

THREADS_ENV = "TLID_THREADS"
LOG_DIR_ENV = "TLID_LOG_DIR"


def _env_threads() -> Optional[int]:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


@dataclass
class SeriesSettings:
    order: int = 64
    tol: float = 1e-10


@dataclass
class SimulationSettings:
    block_size: int = 8192
    threads: Optional[int] = field(default_factory=_env_threads)
    burn_in: int = 1000
    horizon: float = 15.0
    eps: float = 1e-4


@dataclass
class OutputSettings:
    float_digits: int = 17
    csv_schema_version: int = 1


@dataclass
class LoggingSettings:
    log_dir: str = field(default_factory=lambda: os.environ.get(LOG_DIR_ENV, "~/.tlid/logs"))
    level: str = "INFO"
    to_file: bool = True

    @property
    def path(self) -> Path:
        return Path(self.log_dir).expanduser()


class AppConfig:
    _instance: Optional['AppConfig'] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self._series = SeriesSettings()
        self._simulation = SimulationSettings()
        self._output = OutputSettings()
        self._logging = LoggingSettings()
        self._file_defaults: Dict[str, Any] = {}

        self._initialized = True

    @property
    def series(self) -> SeriesSettings:
        return self._series

    @property
    def simulation(self) -> SimulationSettings:
        return self._simulation

    @property
    def output(self) -> OutputSettings:
        return self._output

    @property
    def logging(self) -> LoggingSettings:
        return self._logging

    @property
    def file_defaults(self) -> Dict[str, Any]:
        return dict(self._file_defaults)

    def flag_defaults(self) -> Dict[str, Any]:
        """Defaults for CLI flags: built-in settings overlaid by the config file."""
        defaults: Dict[str, Any] = {
            "order": self._series.order,
            "tol": self._series.tol,
            "block_size": self._simulation.block_size,
            "threads": self._simulation.threads,
            "burn_in": self._simulation.burn_in,
            "horizon": self._simulation.horizon,
            "eps": self._simulation.eps,
            "log_dir": self._logging.log_dir,
            "log_level": self._logging.level,
        }
        defaults.update(self._file_defaults)
        return defaults

    def load_file(self, path: str, known_keys: Optional[set] = None) -> Dict[str, Any]:
        """Read a flat key/value TOML file whose keys mirror long flag names."""
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid key/value TOML: {e}")

        for key, value in data.items():
            if isinstance(value, (dict, list)):
                raise ConfigurationError(
                    f"config file {path}: key {key!r} must be a scalar (flat key/value format)"
                )
            if known_keys is not None and key not in known_keys:
                raise ConfigurationError(f"config file {path}: unknown key {key!r}")

        self._file_defaults.update(data)
        self._apply(data)
        return data

    def _apply(self, data: Dict[str, Any]) -> None:
        targets = (self._series, self._simulation, self._output)
        for key, value in data.items():
            for target in targets:
                if key in {f.name for f in fields(target)}:
                    setattr(target, key, value)
        if "log_dir" in data:
            self._logging.log_dir = str(data["log_dir"])
        if "log_level" in data:
            self._logging.level = str(data["log_level"])


def get_config() -> AppConfig:
    return AppConfig()


def reset_config() -> AppConfig:
    AppConfig._instance = None
    return AppConfig()
