from __future__ import annotations

from reifenberg.context import RunContext
from reifenberg.decorators import pipeline
from reifenberg.decorators import stage
from reifenberg.domains import BallDomain
from reifenberg.domains import DomainRep
from reifenberg.domains import HalfSpace
from reifenberg.domains import MeshDomain
from reifenberg.domains import SnowflakeDomain
from reifenberg.errors import LaboratoryError

__all__ = [
    "stage",
    "pipeline",
    "RunContext",
    "DomainRep",
    "HalfSpace",
    "BallDomain",
    "MeshDomain",
    "SnowflakeDomain",
    "LaboratoryError",
]
