"""Preemptive single-machine scheduling with a limited number of job-size predictions."""

__version__ = "0.1.0"
