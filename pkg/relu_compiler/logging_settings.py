# -*- coding: utf-8 -*-
import logging.config

default_settings = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default": {"format": "[%(asctime)s] %(levelname)s in %(module)s: %(message)s"},
        "verbose": {
            "format": "%(asctime)s | %(levelname)s [%(name)s.%(filename)s:%(lineno)s] %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S%z",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "default",
            "level": "DEBUG",
        }
    },
    "loggers": {
        "relu_compiler": {"handlers": ["console"], "level": "INFO", "propagate": False},
        "matplotlib": {"handlers": ["console"], "level": "WARNING", "propagate": False},
    },
    # "root": {"level": "DEBUG", "handlers": ["console"]},
}


def configure_logging(level=None, verbose=False):
    """Install the dictConfig above, optionally overriding the package level."""
    settings = {**default_settings, "loggers": {k: dict(v) for k, v in default_settings["loggers"].items()}}
    settings["handlers"] = {k: dict(v) for k, v in default_settings["handlers"].items()}
    if level:
        settings["loggers"]["relu_compiler"]["level"] = level.upper()
    if verbose:
        settings["handlers"]["console"]["formatter"] = "verbose"
    logging.config.dictConfig(settings)
