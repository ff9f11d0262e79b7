# Copyright (c) 2025 sprowii
import logging
import os


def configure_logging() -> logging.Logger:
    level_name = os.getenv("DDS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        level=getattr(logging, level_name, logging.INFO),
    )
    return logging.getLogger("dds")


log = configure_logging()
