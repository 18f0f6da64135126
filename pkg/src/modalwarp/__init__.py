"""Modal analysis of impulse responses with ESPRIT, frequency warping and subbands."""
from .core import (
    InputError,
    ModalError,
    Mode,
    ModeSet,
    NumericalError,
    Partial,
    Signal,
    Source,
    SyntheticSpec,
    generate,
    mse_db,
    piano_like_spec,
)
from .esprit import Fixed, KneePoint, ThresholdDb, esprit, parse_order
from .optimize import OptConfig, optimize_all, optimize_band
from .subband import BandPlan, fz_esprit, plan_bark, plan_harmonic, plan_uniform
from .synth import biquad_coeffs, magnitude_response, render, render_recursive
from .warp import WarpConfig, bark_rho, fw_esprit, warp_signal

__version__ = "0.1.0"

__all__ = [
    "BandPlan", "Fixed", "InputError", "KneePoint", "ModalError", "Mode", "ModeSet",
    "NumericalError", "OptConfig", "Partial", "Signal", "Source", "SyntheticSpec",
    "ThresholdDb", "WarpConfig", "bark_rho", "biquad_coeffs", "esprit", "fw_esprit",
    "fz_esprit", "generate", "magnitude_response", "mse_db", "optimize_all",
    "optimize_band", "parse_order", "piano_like_spec", "plan_bark", "plan_harmonic",
    "plan_uniform", "render", "render_recursive", "warp_signal",
]
