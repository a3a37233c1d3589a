"""Emergency EV charging scheduling for unbalanced distribution feeders."""

__version__ = "0.1.0"

from . import cla, congen, eevc, fixtures, mathprog, netmodel, powerflow  # noqa: F401
