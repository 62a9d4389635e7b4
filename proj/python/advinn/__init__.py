"""Invertible-network adversarial attacks on a synthetic texture classifier."""

from ._advinn import *  # noqa: F401,F403
from ._advinn import __doc__  # noqa: F401
