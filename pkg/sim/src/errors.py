"""
Fault types raised by the simulation engine
- Every fault carries a machine-readable kind
- runner.py turns uncaught faults into a JSON fault record on stderr
"""
from typing import Any, Dict, Optional


class SimulationError(Exception):
    """Base class for all engine faults"""

    kind = "simulation-error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = {k: v for k, v in details.items() if v is not None}

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"fault": self.kind, "message": str(self)}
        record.update(self.details)
        return record


class InvalidArgument(SimulationError):
    kind = "invalid-argument"


class ConfigFault(SimulationError):
    kind = "config-fault"


class IntegrationFault(SimulationError):
    kind = "integration-fault"

    def __init__(self, message: str, index: Optional[int] = None, time: Optional[float] = None):
        super().__init__(message, index=index, time=time)
        self.index = index
        self.time = time


class DynamicsFault(SimulationError):
    kind = "dynamics-fault"


class DegenerateGeometry(SimulationError):
    kind = "degenerate-geometry"


class FovFault(SimulationError):
    kind = "fov-fault"


class InfeasibleGeometry(SimulationError):
    kind = "infeasible-geometry"


class InfeasibleConfig(SimulationError):
    kind = "infeasible-config"


class LoadFault(SimulationError):
    kind = "load-fault"

    def __init__(self, message: str, tensor: Optional[str] = None, field: Optional[str] = None):
        super().__init__(message, tensor=tensor, field=field)
        self.tensor = tensor
        self.field = field


class PastIntercept(SimulationError):
    """Closing velocity is not positive; the ZEM law has nothing left to steer"""

    kind = "past-intercept"
