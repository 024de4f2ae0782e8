"""Serialization: JSON with 17-significant-digit floats, samples CSV, transcript JSONL."""

import json
import math

import numpy as np


def fmt_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    return format(x, ".17g")


def dumps17(obj) -> str:
    """Compact JSON where every float is written with 17 significant digits.

    NaN maps to ``null``; infinities are rejected.
    """
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "null" if math.isnan(obj) else fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps17(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return dumps17(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps17(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_samples_csv(fh, iters, samples):
    samples = np.asarray(samples, dtype=float)
    d = samples.shape[1]
    fh.write("iter," + ",".join(f"theta_{i}" for i in range(1, d + 1)) + "\n")
    for t, row in zip(iters, samples):
        fh.write(f"{int(t)}," + ",".join(fmt_float(v) for v in row) + "\n")


def read_samples_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "iter":
            raise ValueError(f"{path}: header must start with 'iter'")
        arr = np.loadtxt(fh, delimiter=",", ndmin=2)
    return arr[:, 0].astype(np.int64), arr[:, 1:]


def transcript_record(entry) -> dict:
    rec = {
        "iter": entry.iter,
        "theta_prev": list(entry.theta_prev),
        "theta_prop": list(entry.theta_proposed),
        "noisy_d": list(entry.noisy_d) if isinstance(entry.noisy_d, tuple) else entry.noisy_d,
        "sigma2": entry.sigma2_used,
        "accepted": entry.accepted,
    }
    if entry.noisy_stat is not None:
        rec["noisy_stat"] = list(entry.noisy_stat)
    return rec


def write_transcript_jsonl(fh, transcript):
    for e in transcript.entries():
        fh.write(dumps17(transcript_record(e)) + "\n")
