"""
Logging settings for the softanchor_swarm package.

The console layout (level, timestamp, logger, function and line number) is
shared by the CLI and by the experiment workers.
"""

import logging

import colorlog
from colorlog import ColoredFormatter

PACKAGE_LOGGER = "softanchor_swarm"

color_formatter = ColoredFormatter(
    (
        "%(log_color)s%(levelname)-5s%(reset)s "
        "%(yellow)s[%(asctime)s]%(reset)s"
        "%(white)s %(name)s %(funcName)s %(bold_purple)s:%(lineno)d%(reset)s "
        "%(log_color)s%(message)s%(reset)s"
    ),
    datefmt="%y-%m-%d %H:%M:%S",
    log_colors={
        "DEBUG": "blue",
        "INFO": "bold_cyan",
        "WARNING": "red",
        "ERROR": "bg_bold_red",
        "CRITICAL": "red,bg_white",
    },
)


def configure_logging(level: str | int = "INFO") -> logging.Logger:
    """Install the coloured console handler on the package logger.

    Calling it again replaces the handler instead of stacking a second one.

    Args:
        level (str | int): Logging level name or number.

    Returns:
        logging.Logger: The configured package logger.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        if getattr(handler, "_softanchor_console", False):
            logger.removeHandler(handler)

    handler = colorlog.StreamHandler()
    handler.setFormatter(color_formatter)
    handler._softanchor_console = True  # type: ignore[attr-defined] # pylint: disable=W0212
    logger.addHandler(handler)
    logger.setLevel(level.upper() if isinstance(level, str) else level)
    logger.propagate = False
    return logger
