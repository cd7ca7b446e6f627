"""Settings of the library and the command line interface.

The settings can be accessed via the :attr:`config` dictionary which is a
:class:`collections.ChainMap` containing the parsed and processed environment variables,
the default config values and a special dictionary :class:`_EmptyConfig` whose only
purpose is to log any access to non existing settings and raise a
:exc:`~series_inference.exceptions.MissingConfigError`.

Only the output directory can be set via the environment. Everything else is passed as
function arguments or, for the command line interface, as flags or inside a flat
``key=value`` config file, see :func:`read_config_file`.
"""

from __future__ import annotations

from collections import ChainMap
from collections import UserDict
from os import environ
from pathlib import Path
from typing import Any
from typing import Dict
from typing import TypedDict
from typing import Union
from typing import cast

from .exceptions import DataFormatError
from .exceptions import MissingConfigError
from .log import internal_logger

OUTPUT_DIR_ENV_VAR = "SERIES_INFERENCE_OUTPUT_DIR"


class Config(TypedDict):
    """Used to keep track of all available settings and allows the type checker to infer
    the types of individual keys/settings.

    .. envvar:: SERIES_INFERENCE_OUTPUT_DIR

        Directory the command line interface writes its reports to unless
        ``--output-dir`` is given.

        Default: ``.``

    The remaining settings are not read from the environment.

    ``POINTWISE_DRAWS``
        Number of Gaussian draws used to simulate pointwise critical values.
        Default: ``5000``
    ``BOOTSTRAP_DRAWS``
        Number of weighted bootstrap replications for uniform bands. Default: ``1000``
    ``BAND_GRID_SIZE``
        Number of evenly spaced grid points of a uniform band. Default: ``91``
    ``RANK_TOLERANCE``
        Relative singular value cutoff below which a design counts as singular.
        Default: ``1e-10``
    ``BOUNDARY_TOLERANCE``
        Relative tolerance for evaluation points at the boundary of the support.
        Default: ``1e-12``
    ``ANNIHILATOR_FLOOR``
        Smallest admissible diagonal entry of the annihilator matrix of the partially
        linear model. Default: ``0.01``
    ``PSD_TOLERANCE``
        Negative eigenvalues of a correlation matrix down to ``-PSD_TOLERANCE`` are
        clipped, below it the matrix is rejected. Default: ``1e-8``
    ``THREADS``
        Default number of worker threads, ``0`` uses all cores. Default: ``1``
    ``DRAW_BLOCK_SIZE``
        Gaussian draws are generated in blocks of this size, each block from its own
        random stream. Changing it changes simulated critical values. Default: ``4096``
    """

    OUTPUT_DIR: str
    POINTWISE_DRAWS: int
    BOOTSTRAP_DRAWS: int
    BAND_GRID_SIZE: int
    RANK_TOLERANCE: float
    BOUNDARY_TOLERANCE: float
    ANNIHILATOR_FLOOR: float
    PSD_TOLERANCE: float
    THREADS: int
    DRAW_BLOCK_SIZE: int


default_config = Config(
    OUTPUT_DIR=".",
    POINTWISE_DRAWS=5000,
    BOOTSTRAP_DRAWS=1000,
    BAND_GRID_SIZE=91,
    RANK_TOLERANCE=1e-10,
    BOUNDARY_TOLERANCE=1e-12,
    ANNIHILATOR_FLOOR=0.01,
    PSD_TOLERANCE=1e-8,
    THREADS=1,
    DRAW_BLOCK_SIZE=4096,
)


def parse_config_from_environment() -> Config:
    processed_env_config: Dict[str, Any] = {}
    output_dir = environ.get(OUTPUT_DIR_ENV_VAR, "").strip()
    if output_dir:
        processed_env_config["OUTPUT_DIR"] = output_dir
        internal_logger.debug("Output directory set to %s via environment", output_dir)
    return cast(Config, processed_env_config)


class _EmptyConfig(UserDict):
    """
    Used as last element inside the config chainmap. If its :func:`__getitem__` method
    is called the requested value is not available and we have to exit.
    """

    def __getitem__(self, key):
        internal_logger.error("Config value %s was requested but not known.", key)
        raise MissingConfigError(f"Missing value for key {key}")


config = cast(
    Config,
    ChainMap(parse_config_from_environment(), dict(default_config), _EmptyConfig()),
)


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parses a flat ``key=value`` config file as accepted by the ``--config`` flag.

    Blank lines and lines starting with ``#`` are ignored, dashes inside keys are
    treated as underscores so every key can mirror its command line flag.

    >>> from tempfile import NamedTemporaryFile
    >>> with NamedTemporaryFile("w", suffix=".cfg", delete=False) as f:
    ...     _ = f.write("# comment\\nalpha = 0.1\\nk-rule=sim\\n")
    >>> sorted(read_config_file(f.name).items())
    [('alpha', '0.1'), ('k_rule', 'sim')]

    :param path: Location of the file
    :return: Mapping of normalized keys to their raw string values
    :raises DataFormatError: If a line is neither empty, a comment nor an assignment.
    """
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as config_file:
        for line_number, line in enumerate(config_file, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or not key:
                raise DataFormatError(
                    f"Expected 'key=value' in config file {path}", row=line_number
                )
            values[key] = value.strip()
    internal_logger.debug("Read %d values from config file %s", len(values), path)
    return values
