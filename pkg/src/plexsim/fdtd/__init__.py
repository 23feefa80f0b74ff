from .engine import (  # noqa: F401
    EngineError,
    InstabilityError,
    RunStats,
    ScatteringRun,
    Simulation,
    run_scattering,
)
from .grid import GridSpec, cpml_profiles, make_grid  # noqa: F401
from .source import CwWaveform, PlaneWaveSource, SourceError  # noqa: F401
