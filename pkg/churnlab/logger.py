# -*- encoding: utf-8 -*-
import functools
import sys
from pathlib import Path
from typing import Optional, Union

from loguru import logger

LOGURU_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


@functools.lru_cache()
def get_logger(level: str = "INFO"):
    logger.remove()
    logger.add(sys.stderr, format=LOGURU_FORMAT, level=level, enqueue=True)
    return logger


@functools.lru_cache()
def add_file_sink(save_dir: Union[str, Path], level: Optional[str] = "DEBUG") -> int:
    """Log into ``save_dir`` as well. Returns the loguru sink id."""
    save_dir = Path(save_dir)
    save_dir.mkdir(parents=True, exist_ok=True)
    file_name = "{time:YYYY-MM-DD-HH-mm-ss}.log"
    return logger.add(
        save_dir / file_name, level=level, rotation=None, retention="5 days"
    )


logger = get_logger()
