"""Kanerva Machine memory, generative model and classical SDM."""

from ._kanerva import *  # noqa: F401,F403
from ._kanerva import __doc__  # noqa: F401
