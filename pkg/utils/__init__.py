"""
Probin - Utils Module
"""

from .logger import setup_logger
from .helpers import *
