"""Named analysis settings for piano notes and room impulse responses."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .core import InputError
from .subband import FilterFamily, FilterSpec


@dataclass(frozen=True)
class Preset:
    name: str
    hankel: int = 2048
    order: str = "knee"
    rho: float | None = None  # None: Bark-matched factor for the file's rate
    pre_damp_sigma: float = 0.0
    delta_omega_hz: float = 0.5
    delta_alpha_rel: float = 0.1
    max_band_iters: int = 100
    # band plan
    n_bands: int = 16
    decimation: int = 8
    overlap: float = 1.2
    max_modes: int = 100
    # harmonic plans
    n_partials: int = 60
    inharmonicity: float = 1e-4
    bw_fraction: float = 0.1
    filter: FilterSpec | None = None

    def with_overrides(self, **kw) -> "Preset":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


PIANO = Preset(
    name="piano",
    hankel=2048,
    delta_omega_hz=0.5,
    delta_alpha_rel=0.1,
    n_partials=60,
    inharmonicity=1e-4,
    bw_fraction=0.1,
    decimation=5000,
    max_modes=12,
    filter=FilterSpec(FilterFamily.BUTTERWORTH, order=4),
)

RIR = Preset(
    name="rir",
    hankel=4096,
    order="db:-18",
    pre_damp_sigma=1.5,
    n_bands=20,
    decimation=8,
    delta_omega_hz=2.0,
    overlap=1.2,
    max_modes=100,
    max_band_iters=100,
)

CUSTOM = Preset(name="custom")

PRESETS = {p.name: p for p in (PIANO, RIR, CUSTOM)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
