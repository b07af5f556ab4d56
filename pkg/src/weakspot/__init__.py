"""Risk-averse identification of weakened regions in elastic structures."""
from .fem import BAR, TRI, Element, FEModel, Factorization, Material, Mesh, SensorSet
from .optimizer import OptConfig, OptState, run, step
from .problem import LoadModel, Problem
from .risk import CVAR, EXPECTATION, RiskSpec, SampledRV, cvar
from .stochastic import LoadGroups, ParamBox, QuadratureGrid, tensor_grid

__version__ = "0.1.0"
