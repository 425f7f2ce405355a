"""Around-device interaction from corneal reflections in a single eye image."""

__version__ = "0.1.0"
