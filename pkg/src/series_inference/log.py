from __future__ import annotations

from contextvars import ContextVar
from logging import Filter
from logging import LogRecord
from logging import getLogger

REPLICATION_ID: ContextVar[str] = ContextVar("REPLICATION_ID", default="-")
"""Holds the index of the Monte Carlo replication processed by the current worker, set
by :func:`~series_inference.sim_harness.run_replication`. In conjunction with
:class:`ReplicationIdFilter` every message of the :data:`simulation_logger` is prefixed
with it, without having to pass the index to each logging call.
"""


class ReplicationIdFilter(Filter):
    """Subclass of :class:`logging.Filter` which is used to add attributes to log
    records rather than to filter them.

    Is configured and applied in :data:`DEFAULT_LOGGING_CONFIG`.
    """

    def filter(self, record: LogRecord) -> bool:
        """Adds the replication index stored in :data:`REPLICATION_ID` to the record.

        :param record: Log record to extend
        :return: Always ``True``, nothing is filtered.
        """
        record.replication_id = REPLICATION_ID.get()  # type: ignore
        return True


internal_logger = getLogger("series_inference.internal")
"""Used for the plumbing: settings, worker pools, numerical repairs such as clipping of
negative eigenvalues.
"""
fit_logger = getLogger("series_inference.fit")
"""Logs the least squares fits per number of series terms and the cross-validation."""
inference_logger = getLogger("series_inference.inference")
"""Logs the computation of critical values, confidence intervals and bands."""
simulation_logger = getLogger("series_inference.simulation")
"""Logs the progress of coverage studies, see :ref:`Simulation Study`."""
cli_logger = getLogger("series_inference.cli")

DEFAULT_LOG_LEVEL = {
    "series_inference.internal": "INFO",
    "series_inference.fit": "INFO",
    "series_inference.inference": "INFO",
    "series_inference.simulation": "INFO",
    "series_inference.cli": "INFO",
}
"""Default logging level of all loggers, lowered to ``DEBUG`` by ``--verbose``."""

DEFAULT_LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "replication_handler": {
            "format": "[%(levelname)s] %(asctime)s %(name)s %(funcName)s:%(lineno)d: [%(replication_id)s] %(message)s"
        },
        "simple_handler": {
            "format": "[%(levelname)s] %(asctime)s %(name)s %(funcName)s:%(lineno)d: %(message)s"
        },
    },
    "filters": {
        "replication_id_filter": {"()": "series_inference.log.ReplicationIdFilter"}
    },
    "handlers": {
        "with_replication_id": {
            "class": "logging.StreamHandler",
            "level": "DEBUG",
            "stream": "ext://sys.stderr",
            "formatter": "replication_handler",
            "filters": ["replication_id_filter"],
        },
        "simple": {
            "class": "logging.StreamHandler",
            "level": "DEBUG",
            "stream": "ext://sys.stderr",
            "formatter": "simple_handler",
        },
    },
    "loggers": {
        "series_inference.internal": {
            "level": DEFAULT_LOG_LEVEL["series_inference.internal"],
            "handlers": ["simple"],
        },
        "series_inference.fit": {
            "level": DEFAULT_LOG_LEVEL["series_inference.fit"],
            "handlers": ["simple"],
        },
        "series_inference.inference": {
            "level": DEFAULT_LOG_LEVEL["series_inference.inference"],
            "handlers": ["simple"],
        },
        "series_inference.simulation": {
            "level": DEFAULT_LOG_LEVEL["series_inference.simulation"],
            "handlers": ["with_replication_id"],
        },
        "series_inference.cli": {
            "level": DEFAULT_LOG_LEVEL["series_inference.cli"],
            "handlers": ["simple"],
        },
    },
}
"""Passed to :func:`~logging.config.dictConfig` by :func:`series_inference.cli.main`.
"""


def logging_config(verbose: bool = False) -> dict:
    """Returns :data:`DEFAULT_LOGGING_CONFIG`, with every logger set to ``DEBUG`` if
    requested.

    >>> logging_config(verbose=True)["loggers"]["series_inference.fit"]["level"]
    'DEBUG'
    >>> DEFAULT_LOGGING_CONFIG["loggers"]["series_inference.fit"]["level"]
    'INFO'
    """
    loggers = {
        name: {**settings, "level": "DEBUG" if verbose else settings["level"]}
        for name, settings in DEFAULT_LOGGING_CONFIG["loggers"].items()  # type: ignore
    }
    return {**DEFAULT_LOGGING_CONFIG, "loggers": loggers}
