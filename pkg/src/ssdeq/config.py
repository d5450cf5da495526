"""Centralised tolerances and budgets.

Every numeric threshold used by the toolkit lives here so a run can be
re-parameterised in one place. Functions take explicit keyword overrides;
``None`` means "use the value from :data:`DEFAULTS`".
"""
from __future__ import annotations

from dataclasses import dataclass, replace

DEFAULT_SEED = 0x5EED


@dataclass(frozen=True)
class Tolerances:
    membership: float = 1e-9
    lp: float = 1e-9
    dedup: float = 1e-12
    solve: float = 1e-6
    certificate: float = 1e-9
    inclusion: float = 1e-9
    # Lipschitz modulus used as slack by the semicontinuity validators.
    lipschitz: float = 10.0
    grid_cap: int = 2_000_000
    # How many D-grid centres a validator visits before striding.
    center_budget: int = 64
    # D-sampler points appended to the K-grid when D is not the full set.
    d_samples: int = 32
    workers: int = 1

    def with_overrides(self, **kwargs) -> "Tolerances":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


DEFAULTS = Tolerances()


def pick(value, name: str):
    """Return ``value`` unless it is None, else the default called ``name``."""
    return getattr(DEFAULTS, name) if value is None else value
