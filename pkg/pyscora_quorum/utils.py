import json
import logging
import yaml
import numpy as np
from enum import Enum
from fractions import Fraction
from types import FunctionType
from time import time
from functools import wraps
from typing import Any, Dict, Iterable, List, Tuple, Type
from typeguard import check_type, TypeCheckError
from .constants import *


class QuorumError(Exception):
    """Base class for every error raised by the package."""


class ParamsError(QuorumError, ValueError):
    pass


class CryptoError(QuorumError):
    pass


class InsufficientSharesError(CryptoError):
    pass


class SelectionError(QuorumError):
    pass


class EncodingError(QuorumError, ValueError):
    pass


class ProtocolError(QuorumError):
    pass


class AdversaryError(QuorumError):
    pass


class ConfigError(QuorumError, ValueError):
    def __init__(self, message: str, diagnostics: List[str] | None = None) -> None:
        super().__init__(message)
        self.diagnostics: List[str] = diagnostics or []


class CustomLoggerFormatter(logging.Formatter):
    default_string = '(%(asctime)s - %(name)s) - %(levelname)s: %(message)s'

    FORMATS = {
        logging.DEBUG: GREY + default_string + RESET,
        logging.INFO: BLUE + default_string + RESET,
        logging.WARNING: YELLOW + default_string + RESET,
        logging.ERROR: RED + default_string + RESET,
        logging.CRITICAL: BOLD_RED + default_string + RESET,
    }

    def format(self, record: logging.LogRecord) -> str:
        log_fmt = self.FORMATS.get(record.levelno)
        formatter = logging.Formatter(log_fmt)

        return formatter.format(record)


_PACKAGE_LOGGERS: Dict[str, logging.Logger] = {}


def setup_logger(
    name: str, level: int | str | None = None, Formatter: logging.Formatter = CustomLoggerFormatter
) -> logging.Logger:
    level = level if level != None else DEFAULT_LOG_LEVEL

    logger = logging.getLogger(name)
    logger.setLevel(level)

    if not logger.handlers:
        ch = logging.StreamHandler()
        ch.setLevel(logging.DEBUG)
        ch.setFormatter(Formatter())
        logger.addHandler(ch)

    _PACKAGE_LOGGERS[name] = logger

    return logger


def set_log_level(level: int | str) -> None:
    """Apply `level` to every logger created through `setup_logger`."""

    for logger in _PACKAGE_LOGGERS.values():
        logger.setLevel(level)


class ItemEncoder(json.JSONEncoder):
    def default(self, obj: Any) -> Any:
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif isinstance(obj, (bytes, bytearray)):
            return bytes(obj).hex()
        elif isinstance(obj, Fraction):
            return f'{obj.numerator}/{obj.denominator}'
        elif isinstance(obj, Enum):
            return obj.value
        elif isinstance(obj, (set, frozenset)):
            return sorted(obj)
        elif hasattr(obj, 'to_dict'):
            return obj.to_dict()
        else:
            return super(ItemEncoder, self).default(obj)


def get_data_decoded(data: Any) -> Any:
    """Turn `data` into plain JSON types (bytes become hex, fractions become `"p/q"`)."""

    new_data = ItemEncoder().encode(data)
    data_parsed = json.loads(new_data)

    return data_parsed


def canonical_json(data: Any) -> str:
    return json.dumps(data, cls=ItemEncoder, sort_keys=True, separators=(',', ':'))


def measure_time(func: FunctionType):
    logger = setup_logger('Timer')

    @wraps(func)
    def _time_it(*args, **kwargs):
        start = int(round(time() * 1000))
        try:
            return func(*args, **kwargs)
        finally:
            end_ = int(round(time() * 1000)) - start
            logger.info(f'[{func.__name__}] execution time: {end_ if end_ > 0 else 0} ms')

    return _time_it


def get_metadata_from_yaml(file_path: str) -> Any:
    data = []

    try:
        with open(file_path, encoding='utf-8') as file:
            data = yaml.load(file, Loader=yaml.FullLoader)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark
        where = f'line {mark.line + 1}, column {mark.column + 1}' if mark else 'unknown position'
        raise ConfigError(f'Cannot parse {file_path}.', [f'{where}: {err.problem}']) from err
    except OSError as err:
        raise ConfigError(f'Cannot read {file_path}.', [str(err)]) from err

    return data


def parse_fraction(value: Any) -> Fraction:
    """Read a rational given as int, float, Fraction or a `"p/q"` string."""

    if isinstance(value, bool):
        raise ValueError(f'Not a rational: {value!r}')
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**6)
    if isinstance(value, str):
        return Fraction(value.strip())

    raise ValueError(f'Not a rational: {value!r}')


def validate_schema(
    config: Dict[str, Any], schema: Dict[str, Type], path: str = '', required: Iterable[str] | None = None
) -> Tuple[bool, List[str]]:
    """Check `config` against `schema`

    Args:
        config (Dict[str, Any]): Values to check.
        schema (Dict[str, Type]): Expected type per key.
        path (str, optional): Prefix used in the messages. Defaults to ''.
        required (Iterable[str] | None, optional): Keys that must be present. Defaults to every schema key.

    Returns:
        Tuple[bool, List[str]]:
            - bool: `True` if `config` is valid, `False` otherwise.
            - List[str]: Error messages
    """

    is_valid = True
    err_msgs = []
    required = list(schema) if required == None else list(required)

    if not isinstance(config, dict):
        return False, [f'{path or "<root>"}: expected a mapping, got {type(config).__name__}.']

    for key, value in config.items():
        if key not in schema:
            is_valid = False
            err_msgs.append(f'{path}{key}: unknown key.')
            continue

        try:
            check_type(value, schema.get(key))
        except (TypeError, TypeCheckError):
            is_valid = False
            err_msgs.append(f'{path}{key}: invalid value type. Expected {schema[key]}, got {type(value).__name__}.')

    for key in required:
        if key not in config:
            is_valid = False
            err_msgs.append(f'{path}{key}: missing key.')

    return is_valid, err_msgs
