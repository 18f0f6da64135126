"""WAV files, mode tables (JSON/CSV) and atomic writes."""
from __future__ import annotations

import contextlib
import csv
import enum
import io
import json
import logging
import math
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .core import InputError, ModeSet, Signal, Source

log = logging.getLogger(__name__)

TABLE_FORMAT = "modalwarp-modes"
TABLE_VERSION = 1
COLUMNS = ("omega_rad_per_sample", "freq_hz", "alpha_per_sample", "t60_seconds",
           "gamma_s", "gamma_c")

# dtype -> full-scale divisor; 24-bit PCM comes back from scipy left-justified in int32
_PCM_SCALE = {np.dtype(np.int16): 2.0 ** 15, np.dtype(np.int32): 2.0 ** 31}


# --------------------------------------------------------------------------
# atomic writes
# --------------------------------------------------------------------------

@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


# --------------------------------------------------------------------------
# WAV
# --------------------------------------------------------------------------

def read_wav(path) -> Signal:
    """Mono float64 signal in [-1, 1) from PCM16/24/32 or float32 WAV.

    Multichannel files are averaged to mono with a warning.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            fs, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except ValueError as exc:
        raise InputError(f"{path}: unsupported or corrupt WAV ({exc})") from None
    if data.dtype in _PCM_SCALE:
        x = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        kind = "8-bit PCM" if data.dtype == np.uint8 else f"{data.dtype} samples"
        raise InputError(f"{path}: unsupported WAV encoding ({kind}); "
                         "use PCM16/24/32 or float32")
    if x.ndim == 2:
        if x.shape[1] > 1:
            log.warning("%s has %d channels; downmixing to mono", path, x.shape[1])
        x = x.mean(axis=1)
    if x.shape[0] == 0:
        raise InputError(f"{path}: no samples")
    return Signal(x, float(fs))


def write_wav(path, signal: Signal) -> None:
    """Float32 WAV, written atomically; the rate is rounded to an integer."""
    if not signal.is_real:
        raise InputError("cannot write a complex signal to WAV")
    with atomic_path(path) as tmp:
        wavfile.write(str(tmp), int(round(signal.sample_rate)), signal.samples.astype(np.float32))


# --------------------------------------------------------------------------
# mode tables
# --------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if v is None or isinstance(v, (str, int, float, bool)):
        return v
    return str(v)


def table_dict(modes: ModeSet, params: dict | None = None) -> dict:
    fs = modes.sample_rate
    rows = []
    for m in modes:  # ModeSet keeps modes sorted by frequency
        t60 = m.t60(fs)
        rows.append({
            "omega_rad_per_sample": m.omega,
            "freq_hz": m.freq_hz(fs),
            "alpha_per_sample": m.alpha,
            "t60_seconds": t60 if math.isfinite(t60) else None,
            "gamma_s": m.gamma_s,
            "gamma_c": m.gamma_c,
        })
    return {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "sample_rate": fs,
        "source": modes.source.value,
        "params": _jsonable(params or {}),
        "modes": rows,
    }


def dumps_table(modes: ModeSet, params: dict | None = None) -> str:
    return json.dumps(table_dict(modes, params), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_table(path, modes: ModeSet, params: dict | None = None) -> None:
    write_text(path, dumps_table(modes, params))


def loads_table(text: str, name: str = "<table>") -> ModeSet:
    """Parse a mode table; per-sample columns are authoritative, Hz/seconds are derived."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{name}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise InputError(f"{name}: not a {TABLE_FORMAT} file")
    try:
        fs = float(doc["sample_rate"])
        source = Source(doc.get("source", Source.PLAIN.value))
        rows = doc["modes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{name}: bad header ({exc})") from None
    if not isinstance(rows, list) or not rows:
        raise InputError(f"{name}: mode table is empty")
    cols = {k: [] for k in ("omega_rad_per_sample", "alpha_per_sample", "gamma_s", "gamma_c")}
    for i, row in enumerate(rows, start=1):
        try:
            for k in cols:
                v = float(row[k])
                if not math.isfinite(v):
                    raise ValueError(f"{k} is not finite")
                cols[k].append(v)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{name}: row {i}: {exc!s}") from None
    try:
        return ModeSet.from_arrays(cols["omega_rad_per_sample"], cols["alpha_per_sample"],
                                   cols["gamma_s"], cols["gamma_c"], source=source,
                                   sample_rate=fs, meta={"params": doc.get("params", {})})
    except InputError as exc:
        raise InputError(f"{name}: {exc}") from None


def read_table(path) -> ModeSet:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    return loads_table(text, str(path))


def write_table_csv(path, modes: ModeSet) -> None:
    buf = io.StringIO()
    buf.write(f"# sample_rate={modes.sample_rate!r} source={modes.source.value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in table_dict(modes)["modes"]:
        w.writerow(["inf" if row[c] is None else repr(row[c]) for c in COLUMNS])
    write_text(path, buf.getvalue())
