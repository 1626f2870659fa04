"""Two-phase flow laboratory: high-fidelity simulation, POD-TPWL surrogates,
and machine-learned surrogate-error models."""

from ._emlab import *  # noqa: F401,F403
from ._emlab import __doc__ as _core_doc

__all__ = [name for name in dir() if not name.startswith("_")]
__doc__ = _core_doc
