#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# UTILITIES MODULE v1.0
# CODEX: This module provides utility functions used across the application.
# CODEX: Includes logging setup, directory creation, artifact writers and the worker pool helper.

import os
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler

import numpy as np

from src.errors import DataError

logger = logging.getLogger(__name__)


def setup_logging(logging_config):
    """
    CODEX: Configure application logging based on configuration.
    CODEX: Sets up file and console handlers with appropriate formatting.

    Args:
        logging_config (dict): Logging configuration dictionary
    """
    # Get configuration values with defaults
    log_level = getattr(logging, logging_config.get('level', 'INFO'))
    log_file = logging_config.get('file', './logs/curenet.log')
    max_size = logging_config.get('max_size', 10) * 1024 * 1024  # Convert MB to bytes
    backup_count = logging_config.get('backup_count', 5)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Clear existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    try:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=max_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
    except OSError as e:
        print(f"Warning: Could not set up file logging: {str(e)}")

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(logging_config.get('console_level', 'WARNING'))
    root_logger.addHandler(console_handler)

    logging.info("Logging initialized")


def create_directories(base_dir, *subdirs):
    """
    CODEX: Create an output directory and optional subdirectories.

    Args:
        base_dir (str): Root directory
        *subdirs (str): Subdirectories relative to base_dir

    Returns:
        str: The base directory
    """
    os.makedirs(base_dir, exist_ok=True)
    for sub in subdirs:
        os.makedirs(os.path.join(base_dir, sub), exist_ok=True)
    return base_dir


def write_csv(frame, path):
    """
    CODEX: Write a DataFrame with '.' decimals, comma separator and LF line endings.

    Args:
        frame (pandas.DataFrame): Table to write
        path (str): Destination file
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame.to_csv(path, index=False, sep=',', decimal='.', lineterminator='\n')


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(payload, path):
    """
    CODEX: Write a JSON document with sorted keys so identical inputs give identical bytes.

    Args:
        payload (dict): Document
        path (str): Destination file
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        json.dump(payload, file, indent=2, sort_keys=True, default=_json_default)
        file.write('\n')


def read_json(path):
    """
    CODEX: Read a JSON document.

    Args:
        path (str): Source file

    Returns:
        dict: Parsed document

    Raises:
        DataError: When the file is missing or not valid JSON
    """
    try:
        with open(path, 'r', encoding='utf-8') as file:
            return json.load(file)
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Invalid JSON in {path}: {str(e)}")


def require_path(path, what="input"):
    """
    CODEX: Fail early with a data error when a referenced input does not exist.

    Args:
        path (str): Path to check
        what (str, optional): Label used in the message. Defaults to "input".

    Returns:
        str: The path
    """
    if not path or not os.path.exists(path):
        raise DataError(f"Missing {what}: {path!r}")
    return path


def parallel_map(func, items, workers=1, executor=None):
    """
    CODEX: Map a picklable function over items, preserving input order.
    CODEX: workers <= 1 runs in-process, which keeps tracebacks simple for debugging.

    Args:
        func (callable): Module-level function (or functools.partial of one)
        items (iterable): Work items
        workers (int, optional): Number of worker processes. Defaults to 1.
        executor (ProcessPoolExecutor, optional): Open pool to reuse (see worker_pool); takes
            precedence over workers

    Returns:
        list: Results in the order of items
    """
    items = list(items)
    if executor is not None and len(items) > 1:
        return list(executor.map(func, items))
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(func, items))


@contextmanager
def worker_pool(workers, max_items=None):
    """
    CODEX: One process pool shared by repeated parallel_map calls; yields None when
    CODEX: the work should run in-process.

    Args:
        workers (int): Requested worker processes
        max_items (int, optional): Largest batch the pool will see (caps the pool size)
    """
    size = workers or 1
    if max_items is not None:
        size = min(size, max_items)
    if size <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=size) as executor:
        logger.debug(f"Opened a pool of {size} worker processes")
        yield executor


def default_workers():
    """
    CODEX: Available parallelism for the default worker count.

    Returns:
        int: Number of usable CPUs
    """
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)
