"""Python bindings for the lsfd super-resolution distillation toolkit."""

from ._lsfd import *  # noqa: F401,F403
from ._lsfd import __version__  # noqa: F401
