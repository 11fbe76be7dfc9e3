"""Zero-shot task-oriented dexterous grasp synthesis."""

__version__ = "0.1.0"
