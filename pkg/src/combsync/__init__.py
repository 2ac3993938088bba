"""Joint clock phase caching and comb-based RF carrier distribution simulator."""

from .fiber import FiberLink, RampProfile, SinusoidProfile, TraceProfile, one_way_shift, two_way_shift
from .noise import PhaseNoiseProfile, PhaseRecord, apply_divider, integrate_jitter, synthesize_phase
from .optics import CombSpec, DispersiveSpan, PhotodetectorSpec, estimate_ber, rf_comb_harmonics
from .protocol import CachingConfig, CachingState, PhaseUpdateMsg, Session, run_session
from .sim import Scenario, ScenarioReport, default_scenario, run_scenario

__version__ = "0.1.0"
