"""Digital twin of a paper fixation process built on partial-integral equations."""

from __future__ import annotations

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
