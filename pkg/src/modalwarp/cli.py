"""Command-line entry point: ``modalwarp {analyze,synth,compare,gen}``."""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import scipy.signal as sps

from . import io
from .core import (
    DB_FLOOR,
    InputError,
    ModalError,
    NumericalError,
    Partial,
    Signal,
    SyntheticSpec,
    generate,
    mse_db,
    piano_like_spec,
)
from .esprit import esprit, parse_order
from .optimize import OptConfig, optimize_all
from .presets import get_preset
from .subband import fz_esprit, plan_bark, plan_harmonic, plan_uniform
from .synth import render
from .warp import WarpConfig, bark_rho, fw_esprit, rho_for_zoom

log = logging.getLogger("modalwarp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------

def _resolve_rho(args, fs):
    if args.rho is not None and args.zoom is not None:
        raise InputError("give --rho or --zoom, not both")
    if args.rho is not None:
        return args.rho
    if args.zoom is not None:
        return rho_for_zoom(args.zoom)
    return bark_rho(fs)


def _plan(args, preset, fs, rho):
    if preset.name == "piano" or args.f0 is not None:
        if args.f0 is None:
            raise InputError("the piano band plan needs --f0")
        return plan_harmonic(args.f0, preset.inharmonicity, preset.n_partials, fs,
                             decimation=preset.decimation, bw_fraction=preset.bw_fraction,
                             max_modes=preset.max_modes, filt=preset.filter)
    if preset.name == "rir":
        return plan_bark(preset.n_bands, fs, rho, overlap=preset.overlap,
                         decimation=preset.decimation, max_modes=preset.max_modes,
                         filt=preset.filter)
    return plan_uniform(preset.n_bands, fs, overlap=preset.overlap,
                        decimation=preset.decimation, max_modes=preset.max_modes,
                        filt=preset.filter)


def run_analysis(x: Signal, args) -> tuple:
    """Returns ``(modes, params, band_reports)``."""
    preset = get_preset(args.preset).with_overrides(
        hankel=args.hankel, order=args.order, delta_omega_hz=args.delta_omega,
        delta_alpha_rel=args.delta_alpha, n_bands=args.bands, decimation=args.decimate,
        pre_damp_sigma=args.pre_damp)
    order = parse_order(preset.order)
    fs = x.sample_rate
    rho = _resolve_rho(args, fs)
    params = {"method": args.method, "preset": preset.name, "hankel": preset.hankel,
              "order": str(order), "optimize": bool(args.optimize)}
    plan = None
    if args.method == "esprit":
        modes = esprit(x, preset.hankel, order)
    elif args.method == "fw":
        cfg = WarpConfig(rho, pre_damp_sigma=preset.pre_damp_sigma)
        params.update(rho=rho, omega_c=cfg.omega_c, pre_damp_sigma=preset.pre_damp_sigma)
        modes = fw_esprit(x, cfg, preset.hankel, order)
    elif args.method == "fz":
        plan = _plan(args, preset, fs, rho)
        params.update(rho=rho, bands=len(plan.bands), decimation=preset.decimation,
                      max_modes=preset.max_modes, scheme=plan.scheme.value)
        modes = fz_esprit(x, plan, order, hankel=preset.hankel)
    else:  # argparse restricts the choices
        raise InputError(f"unknown method {args.method!r}")
    reports = list(modes.meta.get("bands", []))
    if args.optimize:
        if plan is None and args.f0 is not None:
            plan = _plan(args, preset, fs, rho)
        cfg = OptConfig(delta_omega_hz=preset.delta_omega_hz,
                        delta_alpha_rel=preset.delta_alpha_rel,
                        max_band_iters=preset.max_band_iters)
        params.update(delta_omega_hz=cfg.delta_omega_hz, delta_alpha_rel=cfg.delta_alpha_rel)
        modes = optimize_all(x, modes, plan, cfg)
        reports = [{"stage": "optimize", **r} for r in modes.meta.get("bands", [])] + reports
    return modes, params, reports


def cmd_analyze(args) -> int:
    t0 = time.perf_counter()
    x = io.read_wav(args.input)
    if not np.any(x.samples):
        raise InputError(f"{args.input}: input is silent")
    modes, params, reports = run_analysis(x, args)
    nmse = mse_db(x, render(modes, len(x)))
    wall = time.perf_counter() - t0
    out = Path(args.out)
    io.write_table(out, modes, params)
    if args.csv:
        io.write_table_csv(out.with_suffix(".csv"), modes)
    report = {"input": str(args.input), "modes": len(modes), "nmse_db": nmse,
              "wall_time_s": wall, "params": params, "bands": reports}
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    io.write_text(report_path, json.dumps(io._jsonable(report), indent=1) + "\n")
    print(f"modes: {len(modes)}")
    print(f"nmse_db: {nmse:.2f}")
    print(f"wall_time_s: {wall:.2f}")
    for r in reports:
        print(f"band {r.get('band')}: " + " ".join(f"{k}={v}" for k, v in r.items() if k != "band"))
    print(f"wrote {out} and {report_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    modes = io.read_table(args.table)
    if args.duration <= 0:
        raise InputError("--duration must be positive")
    T = max(1, int(round(args.duration * modes.sample_rate)))
    y = render(modes, T).samples
    peak = float(np.max(np.abs(y)))
    gain = 1.0
    if args.normalize:
        if peak == 0:
            raise NumericalError("rendered signal is silent; cannot normalize")
        gain = 1.0 / peak
    io.write_wav(args.out, Signal(y * gain, modes.sample_rate))
    print(f"samples: {T}")
    print(f"peak: {peak:.6g}")
    print(f"gain: {gain!r}")
    print(f"wrote {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

def _db(mag, floor):
    with np.errstate(divide="ignore"):
        return np.maximum(20 * np.log10(mag), floor)


def spectrum_csv(a: np.ndarray, b: np.ndarray, fs: float, floor: float) -> str:
    n = a.shape[0]
    w = sps.get_window("hann", n, fftbins=False) if n > 1 else np.ones(1)
    fa, fb = np.abs(np.fft.rfft(a * w)), np.abs(np.fft.rfft(b * w))
    freqs = np.fft.rfftfreq(n, 1 / fs)
    buf = _io.StringIO()
    buf.write(f"# magnitude spectrum; window=hann length={n}; floor_db={floor:g}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["freq_hz", "a_db", "b_db"])
    for row in zip(freqs, _db(fa, floor), _db(fb, floor)):
        wr.writerow([f"{v:.10g}" for v in row])
    return buf.getvalue()


def spectrogram_frames(n: int, window: int, hop: int) -> int:
    return 0 if n < window else 1 + (n - window) // hop


def spectrogram_csv(x: np.ndarray, fs: float, window: int, hop: int, floor: float) -> str:
    """One row per frame: frame start time, then dB magnitude of each bin."""
    frames = spectrogram_frames(x.shape[0], window, hop)
    if frames == 0:
        raise InputError(f"signal shorter than the {window}-sample spectrogram window")
    win = sps.get_window("hann", window)
    idx = np.arange(window)[None, :] + hop * np.arange(frames)[:, None]
    S = _db(np.abs(np.fft.rfft(x[idx] * win, axis=1)), floor)
    freqs = np.fft.rfftfreq(window, 1 / fs)
    buf = _io.StringIO()
    buf.write(f"# spectrogram; window=hann window_length={window} hop={hop} "
              f"floor_db={floor:g}\n")
    buf.write(f"# frames={frames} bins={freqs.shape[0]}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["time_s"] + [f"{f:.6g}" for f in freqs])
    for k in range(frames):
        wr.writerow([f"{k * hop / fs:.10g}"] + [f"{v:.6g}" for v in S[k]])
    return buf.getvalue()


def cmd_compare(args) -> int:
    a, b = io.read_wav(args.a), io.read_wav(args.b)
    if a.sample_rate != b.sample_rate:
        raise InputError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    n = min(len(a), len(b))
    xa, xb = a.samples[:n], b.samples[:n]
    nmse = mse_db(Signal(xa, a.sample_rate), Signal(xb, b.sample_rate))
    print(f"nmse_db: {nmse:.2f}")
    if args.out_dir:
        d = Path(args.out_dir)
        io.write_text(d / "spectrum.csv", spectrum_csv(xa, xb, a.sample_rate, args.floor_db))
        for tag, x in (("a", xa), ("b", xb)):
            io.write_text(d / f"spectrogram_{tag}.csv",
                          spectrogram_csv(x, a.sample_rate, args.window, args.hop, args.floor_db))
        print(f"wrote plot data to {d}")
    return EXIT_OK


# --------------------------------------------------------------------------
# gen
# --------------------------------------------------------------------------

def _floats(text, n, what):
    parts = text.split(":")
    if len(parts) != n:
        raise InputError(f"bad {what} {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise InputError(f"bad {what} {text!r}") from None


def build_spec(args) -> SyntheticSpec:
    parts = []
    for m in args.mode or []:
        f, a, g = _floats(m, 3, "--mode (want f:alpha:amp)")
        parts.append(Partial(freq_hz=f, alpha=a, gamma_c=g))
    for t in args.triplet or []:
        f, d = _floats(t, 2, "--triplet (want f:detune)")
        parts.append(Partial(freq_hz=f, alpha=args.alpha, gamma_c=args.amp, detune_hz=d,
                             cluster=3))
    spec = SyntheticSpec(tuple(parts), noise_snr_db=args.noise_snr, seed=args.seed)
    if args.piano is not None:
        spec = spec | piano_like_spec(args.piano, args.partials, sample_rate=args.fs,
                                      seed=args.seed)
    if not spec.partials:
        raise InputError("nothing to generate: give --mode, --triplet or --piano")
    return spec


def cmd_gen(args) -> int:
    spec = build_spec(args)
    T = int(round(args.duration * args.fs))
    x = generate(spec, T, args.fs)
    truth = spec.modes(args.fs)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    io.write_wav(out, x)
    io.write_table(truth_path, truth, {"generator": True, "seed": args.seed,
                                       "noise_snr_db": args.noise_snr})
    print(f"modes: {len(truth)}")
    print(f"peak: {float(np.max(np.abs(x.samples))):.6g}")
    print(f"wrote {out} and {truth_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modalwarp", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate modes from a WAV impulse response")
    a.add_argument("input")
    a.add_argument("--method", choices=("esprit", "fw", "fz"), default="fw")
    a.add_argument("--preset", choices=("piano", "rir", "custom"), default="custom")
    a.add_argument("--rho", type=float, help="warping factor (default: Bark-matched)")
    a.add_argument("--zoom", type=float, help="low-frequency stretch instead of --rho")
    a.add_argument("--hankel", type=int, help="Hankel matrix size N")
    a.add_argument("--order", help="knee | db:<L> | fixed:<M>")
    a.add_argument("--optimize", action="store_true", help="refine with time-domain optimization")
    a.add_argument("--delta-omega", type=float, help="frequency window half-width in Hz")
    a.add_argument("--delta-alpha", type=float, help="decay window, relative to each decay")
    a.add_argument("--bands", type=int, help="number of bands (fz)")
    a.add_argument("--decimate", type=int, help="band decimation factor (fz)")
    a.add_argument("--f0", type=float, help="fundamental for harmonic band plans")
    a.add_argument("--pre-damp", type=float, help="pre-damping sigma in 1/s")
    a.add_argument("--out", default="modes.json")
    a.add_argument("--report", help="report path (default: <out>.report.json)")
    a.add_argument("--csv", action="store_true", help="also write the table as CSV")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="render a mode table to WAV")
    s.add_argument("table")
    s.add_argument("--duration", type=float, default=1.0, help="seconds")
    s.add_argument("--out", default="out.wav")
    s.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="write at the table's own scale instead of peak 1")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("compare", help="NMSE and plot data for two WAV files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--out-dir", help="directory for spectrum/spectrogram CSVs")
    c.add_argument("--window", type=int, default=1024)
    c.add_argument("--hop", type=int, default=256)
    c.add_argument("--floor-db", type=float, default=DB_FLOOR)
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen", help="write a synthetic impulse response and its true modes")
    g.add_argument("--mode", action="append", metavar="F:ALPHA:AMP")
    g.add_argument("--triplet", action="append", metavar="F:DETUNE")
    g.add_argument("--alpha", type=float, default=1e-4, help="decay for --triplet modes")
    g.add_argument("--amp", type=float, default=1.0, help="amplitude for --triplet modes")
    g.add_argument("--piano", type=float, metavar="F0", help="add a piano-like note")
    g.add_argument("--partials", type=int, default=60)
    g.add_argument("--fs", type=float, default=44100.0)
    g.add_argument("--duration", type=float, default=1.0, help="seconds")
    g.add_argument("--noise-snr", type=float, help="add white noise at this SNR (dB)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="gen.wav")
    g.add_argument("--truth", help="mode table path (default: <out>.truth.json)")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ModalError as exc:  # pragma: no cover - all subclasses handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
