"""Process-wide shared resources and per-run context for the CLI.

``ServiceManager`` configures settings and logging once per process;
``RunContext`` is created per CLI invocation and stamps every log line with
its run identifier, command and seed.
"""

import logging
import time
import uuid
from collections.abc import MutableMapping
from dataclasses import dataclass, field
from typing import Any, Optional

from services.config.config_service import Settings, get_config_service

__all__ = ["RunContext", "RunLoggerAdapter", "ServiceManager", "get_run_context", "get_service_manager"]

# ============================================================================
# SINGLETON SERVICE MANAGER
# ============================================================================


class ServiceManager:
    """Singleton holding settings and the configured ``bnnsim`` logger."""

    _instance: Optional["ServiceManager"] = None
    _initialized: bool = False

    def __new__(cls) -> "ServiceManager":
        """Implement singleton pattern."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def initialize(self, *, quiet: bool = False) -> None:
        """Load settings and configure logging once; the level is reapplied on every call."""
        if not self._initialized:
            self.settings = get_config_service().get_settings()
            self.logger = self._setup_logger()
            self._initialized = True
        level = logging.getLevelNamesMapping().get(self.settings.LOG_LEVEL.upper(), logging.INFO)
        self.logger.setLevel(max(level, logging.WARNING) if quiet else level)

    def _setup_logger(self) -> logging.Logger:
        """Setup logger once."""
        logger = logging.getLogger("bnnsim")
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(self.settings.LOG_FORMAT))
            logger.addHandler(handler)
        return logger

    def reset(self) -> None:
        """Forget settings and logger so the next ``initialize`` rereads the environment."""
        if hasattr(self, "logger"):
            for handler in list(self.logger.handlers):
                self.logger.removeHandler(handler)
        get_config_service().clear_settings()
        self._initialized = False


# Global singleton instance
_service_manager = ServiceManager()


# ============================================================================
# PER-RUN CONTEXT
# ============================================================================


class RunLoggerAdapter(logging.LoggerAdapter):
    """Prefixes each message with the run identifier, command and seed."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> tuple[Any, MutableMapping[str, Any]]:
        extra = self.extra or {}
        seed = extra.get("seed")
        seed_tag = f" seed={seed}" if seed is not None else ""
        return f"[{extra.get('run_id')} {extra.get('command')}{seed_tag}] {msg}", kwargs


@dataclass
class RunContext:
    """Context of one CLI invocation.

    Attributes:
        service_manager: Singleton with settings and the shared logger
        command: Subcommand being executed
        seed: Resolved seed, when the command uses one
        quiet: Progress bars and info logging suppressed
        run_id: Short unique identifier for this run
        start_time: Run start timestamp
    """

    service_manager: ServiceManager
    command: str
    seed: int | None = None
    quiet: bool = False
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:8])
    start_time: float = field(default_factory=time.time)

    @property
    def logger(self) -> logging.LoggerAdapter:
        """Shared logger carrying this run's context."""
        return RunLoggerAdapter(
            self.service_manager.logger, {"run_id": self.run_id, "command": self.command, "seed": self.seed}
        )

    @property
    def settings(self) -> Settings:
        return self.service_manager.settings

    @property
    def progress_enabled(self) -> bool:
        return self.settings.PROGRESS_BARS and not self.quiet

    def get_duration(self) -> float:
        """Run duration in seconds."""
        return time.time() - self.start_time


# ============================================================================
# DEPENDENCY FUNCTIONS
# ============================================================================


def get_service_manager(*, quiet: bool = False) -> ServiceManager:
    """Get the initialized singleton service manager."""
    _service_manager.initialize(quiet=quiet)
    return _service_manager


def get_run_context(command: str, *, seed: int | None = None, quiet: bool = False) -> RunContext:
    return RunContext(service_manager=get_service_manager(quiet=quiet), command=command, seed=seed, quiet=quiet)
