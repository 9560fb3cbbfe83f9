"""meshrl: automatic all-quad mesh generation with a learned extraction policy."""

__version__ = "0.1.0"

from .env import EnvConfig, MeshEnv, StepResult
from .estimator import QuadMeshGenerator
from .geometry import Boundary
from .quality import Mesh, QualityReport, report
from .sac import SacAgent, SacConfig, evaluate, train

__all__ = [
    "Boundary",
    "EnvConfig",
    "Mesh",
    "MeshEnv",
    "QuadMeshGenerator",
    "QualityReport",
    "SacAgent",
    "SacConfig",
    "StepResult",
    "evaluate",
    "report",
    "train",
    "__version__",
]
