"""Exception and warning classes shared by every module of the lab."""
from typing import Optional


class EPLabError(Exception):
    """Base class for all errors raised by the lab."""


class RejectedInputError(EPLabError, ValueError):
    """Input data violates a precondition (non-finite samples, broken symmetry, range)."""


class ComponentMismatchError(EPLabError, ValueError):
    """Scalar/vector component counts do not fit the operator."""


class GridMismatchError(EPLabError, ValueError):
    """Two fields live on different grids."""


class OperatorDefinitionError(EPLabError, ValueError):
    """A Fourier multiplier is not finite on a represented wavenumber."""


class ConfigurationError(EPLabError, ValueError):
    """Parameters are inconsistent or unsupported."""


class QuadratureError(EPLabError, ValueError):
    """Not enough samples for the requested time quadrature or difference."""


class VacuumError(EPLabError, ValueError):
    """Density is not strictly positive."""


class CFLViolationError(EPLabError):
    """Time step too large for the transport step."""

    def __init__(self, dt: float, suggested_dt: float):
        self.dt = dt
        self.suggested_dt = suggested_dt
        super().__init__(f"dt={dt:.3e} violates the CFL limit; use dt <= {suggested_dt:.3e}")


class BlowUpError(EPLabError):
    """A sub-solve produced non-finite values."""

    def __init__(self, time: float, solver: str = ""):
        self.time = time
        self.solver = solver
        label = f" in {solver}" if solver else ""
        super().__init__(f"non-finite state{label} at t={time:.6g}")


class DivergenceError(EPLabError):
    """The Picard iteration failed at iterate m."""

    def __init__(self, m: int, time: Optional[float] = None, suggestion: str = ""):
        self.m = m
        self.time = time
        self.suggestion = suggestion
        where = f" at t={time:.6g}" if time is not None else ""
        tail = f"; {suggestion}" if suggestion else ""
        super().__init__(f"iteration diverged at m={m}{where}{tail}")


class NeutralityWarning(UserWarning):
    """Data fed to the inverse Laplacian has a non-zero mean."""


class AmplitudeClampWarning(UserWarning):
    """Initial-data amplitude was reduced to keep the density away from vacuum."""
