"""Set-valued equilibrium problems on self segment-dense sets, at desk scale."""

__version__ = "0.1.0"
