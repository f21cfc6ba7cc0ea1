import logging
import os

FORMAT = "%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"

_configured = False


def configure_logging(level: str | None = None) -> None:
    """Install the root handler once; level comes from DISCERN_LOG_LEVEL unless given."""
    global _configured
    if _configured:
        return
    level = (level or os.getenv("DISCERN_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=FORMAT)
    _configured = True
