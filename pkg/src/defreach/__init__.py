"""Reaching-definitions analysis and a dataflow-guided graph network for
null-dereference detection on a mini-C language."""

from .cfg import Cfg, Statement, dump_cfg, load_cfg
from .parser import parse_function

__all__ = ["Cfg", "Statement", "dump_cfg", "load_cfg", "parse_function"]
__version__ = "0.1.0"
