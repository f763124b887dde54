"""Global sensitivity analysis of (a)symmetric bistable piezoelectric energy harvesters."""
__version__ = "0.1.0"

from .errors import (BlowUpError, ConfigError, DegenerateOutputError, DomainError, HarvestError,
                     IllConditionedDesign, NonConvergentIntegration)
from .integrator import IntegratorSettings, TimeSeries, integrate, resample
from .model import HarvesterParams, State3
