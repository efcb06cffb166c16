"""File formats: raw EEG container, JSON sidecars, array encoding.

The EEG container is deliberately minimal: a fixed header (magic ``EEGS``,
version, sampling rate, channel names) followed by frame-major float32
little-endian samples. Ground truth, models and replay logs are JSON with
float arrays embedded as base64 of little-endian float64 bytes, so round
trips are bit exact. All JSON is written with sorted keys and a trailing
newline; identical content yields identical bytes.
"""

import base64
import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadArgumentError, FormatError
from .synth import GroundTruth

MAGIC = b"EEGS"
VERSION = 1


def write_eeg(path, x, fs, channel_names):
    x = np.asarray(x)
    if x.ndim != 2:
        raise BadArgumentError(f"EEG data must be 2-D, got {x.shape}")
    if x.shape[1] != len(channel_names):
        raise BadArgumentError(
            f"{x.shape[1]} data columns but {len(channel_names)} channel names"
        )
    if not np.all(np.isfinite(x)):
        raise BadArgumentError("EEG data contains non-finite values")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIH", VERSION, int(fs), x.shape[1]))
        for name in channel_names:
            raw = str(name).encode("utf-8")
            if len(raw) > 255:
                raise BadArgumentError(f"channel name too long: {name!r}")
            fh.write(struct.pack("<B", len(raw)))
            fh.write(raw)
        fh.write(struct.pack("<Q", x.shape[0]))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def read_eeg(path):
    """Read an EEG container; returns ``(x_float64, fs, channel_names)``."""
    path = Path(path)
    blob = path.read_bytes()

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"{path.name}: truncated while reading {what}")
        out = blob[off:off + n]
        off += n
        return out

    off = 0
    if take(4, "magic") != MAGIC:
        raise FormatError(f"{path.name}: not an EEG container (bad magic)")
    version, fs, n_ch = struct.unpack("<HIH", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"{path.name}: unsupported version {version}")
    names = []
    for i in range(n_ch):
        (ln,) = struct.unpack("<B", take(1, f"name {i} length"))
        names.append(take(ln, f"name {i}").decode("utf-8"))
    (n_frames,) = struct.unpack("<Q", take(8, "frame count"))
    payload = take(4 * n_frames * n_ch, "samples")
    if off != len(blob):
        raise FormatError(f"{path.name}: {len(blob) - off} trailing bytes")
    x = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_ch)
    return x.astype(np.float64), int(fs), tuple(names)


def encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(d):
    try:
        shape = tuple(int(s) for s in d["shape"])
        raw = base64.b64decode(d["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad array record: {exc}") from exc
    n = int(np.prod(shape)) if shape else 1
    if len(raw) != 8 * n:
        raise FormatError(
            f"array payload is {len(raw)} bytes, expected {8 * n} for {shape}"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dump_json(obj), encoding="utf-8")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path.name}: invalid JSON ({exc})") from exc


def run_filename(prefix, run_id):
    return f"{prefix}_run{run_id:02d}.eeg"


def write_session(out_dir, prefix, runs, truth):
    """Write one ``.eeg`` per run plus ``<prefix>_truth.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(runs) != len(truth.runs):
        raise BadArgumentError(
            f"{len(runs)} run arrays but {len(truth.runs)} truth records"
        )
    paths = []
    for x, rt in zip(runs, truth.runs):
        if x.shape[0] != rt.n_frames:
            raise BadArgumentError(
                f"run {rt.run_id}: {x.shape[0]} frames, truth says {rt.n_frames}"
            )
        p = out_dir / run_filename(prefix, rt.run_id)
        write_eeg(p, x, truth.fs, truth.channel_names)
        paths.append(p)
    tp = out_dir / f"{prefix}_truth.json"
    write_json(tp, truth.to_dict())
    return paths, tp


def read_session(in_dir, prefix):
    """Read a session back; returns ``(runs, truth)``."""
    in_dir = Path(in_dir)
    tp = in_dir / f"{prefix}_truth.json"
    if not tp.exists():
        raise FormatError(f"missing ground-truth sidecar {tp.name}")
    truth = GroundTruth.from_dict(read_json(tp))
    runs = []
    for rt in truth.runs:
        p = in_dir / run_filename(prefix, rt.run_id)
        if not p.exists():
            raise FormatError(f"missing run file {p.name}")
        x, fs, names = read_eeg(p)
        if fs != truth.fs or names != tuple(truth.channel_names):
            raise FormatError(f"{p.name}: header disagrees with sidecar")
        if x.shape[0] != rt.n_frames:
            raise FormatError(
                f"{p.name}: {x.shape[0]} frames, sidecar says {rt.n_frames}"
            )
        runs.append(x)
    return runs, truth
