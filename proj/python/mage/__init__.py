"""Python bindings for the mage C++ core."""

from ._mage import *  # noqa: F401,F403
from ._mage import __doc__  # noqa: F401
