"""roadsift: predict lane-keeping test verdicts from road geometry and
select simulation tests cost-effectively."""

__version__ = "0.1.0"
