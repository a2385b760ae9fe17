"""Output files: CSV tables, the weight result file and saved models.

Every file starts with ``#`` comment lines naming the tool version, the
seed and the sha256 of the configuration that produced it.  Numbers are
written with 17 significant digits through ``format``, which never
consults the locale, so the decimal point is always ``.``.
"""

import hashlib
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError
from .network import TRACE_FIELDS

__version__ = "0.1.0"

TRACE_HEADER = ("t", "unit_id", "p_pu", "q_pu", "v_pu", "omega_rad_s", "theta_rad", "freq_hz")
MODEL_MAGIC = "gfmblend-model"
MODEL_VERSION = 1


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def config_digest(text):
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def header_lines(seed, digest, extra=()):
    lines = [f"# gfmblend {__version__}", f"# seed: {seed}", f"# config_sha256: {digest}"]
    lines.extend(f"# {e}" for e in extra)
    return lines


def _write(path, lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_csv(path, columns, rows, seed=0, digest="", extra=()):
    lines = header_lines(seed, digest, extra)
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise InvalidInputError(f"row has {len(row)} fields, header has {len(columns)}")
        lines.append(",".join(fmt(v) for v in row))
    return _write(path, lines)


def read_csv(path):
    """Return ``(comments, columns, rows)`` with every field kept as a string."""
    comments, rows, columns = [], [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append(line.split(","))
    return comments, columns, rows


def payload(path):
    """File contents without the comment header."""
    with open(path, encoding="utf-8") as fh:
        return "".join(line for line in fh if not line.startswith("#"))


def trace_rows(trace):
    """One row per unit per recorded step, units in declaration order."""
    for k, t in enumerate(trace.t):
        for uid in trace.unit_ids:
            s = trace.series[uid]
            yield (float(t), uid, *(float(s[f][k]) for f in TRACE_FIELDS))


def write_trace(path, trace, seed=0, digest=""):
    return write_csv(path, TRACE_HEADER, trace_rows(trace), seed, digest)


def write_iteration_log(path, log, seed=0, digest="", extra=()):
    return write_csv(path, ("iteration", "objective"), log.entries, seed, digest, extra)


def write_training_record(path, record, seed=0, digest=""):
    return write_csv(path, ("epoch", "train_err", "val_err", "mu"), record.epochs, seed, digest)


def write_weights(path, weights, final_objective, iterations, seed=0, digest="", extra=None):
    body = {
        "alpha": float(weights.alpha),
        "beta": float(weights.beta),
        "gamma": float(weights.gamma),
        "nu": float(weights.nu),
        "final_objective": float(final_objective),
        "iterations": int(iterations),
    }
    if extra:
        body.update(extra)
    lines = header_lines(seed, digest)
    for key, value in body.items():
        lines.append(f"{key}: {fmt(value)}")
    return _write(path, lines)


def read_weights(path):
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh)


# --- model files ------------------------------------------------------------


def _matrix_lines(tag, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    out = [f"{tag} {a.shape[0]} {a.shape[1]}"]
    out.extend(" ".join(fmt(v) for v in row) for row in a)
    return out


def save_model(path, model, seed=0, digest=""):
    """Write an :class:`MlpNetwork` or :class:`LstmCell` as versioned text."""
    from .neural import LstmCell, MlpNetwork

    lines = header_lines(seed, digest)
    lines.append(f"{MODEL_MAGIC} {MODEL_VERSION}")
    if isinstance(model, MlpNetwork):
        lines.append("kind mlp")
        lines.append("layer_sizes " + " ".join(str(n) for n in model.layer_sizes))
        for name in ("in_offset", "in_scale", "out_offset", "out_scale"):
            lines.extend(_matrix_lines(name, getattr(model, name)[None, :]))
        for k, (w, b) in enumerate(zip(model.weights, model.biases)):
            lines.extend(_matrix_lines(f"weight{k}", w))
            lines.extend(_matrix_lines(f"bias{k}", b[None, :]))
    elif isinstance(model, LstmCell):
        lines.append("kind lstm")
        lines.append(f"sizes {model.input_size} {model.hidden_size}")
        lines.extend(_matrix_lines("w", model.w))
        lines.extend(_matrix_lines("b", model.b[None, :]))
        lines.extend(_matrix_lines("w_out", model.w_out[None, :]))
        lines.extend(_matrix_lines("b_out", [[model.b_out]]))
    else:
        raise InvalidInputError(f"cannot save {type(model).__name__}")
    return _write(path, lines)


def _parse_blocks(lines):
    blocks, pos = {}, 0
    while pos < len(lines):
        parts = lines[pos].split()
        if len(parts) != 3:
            raise InvalidInputError(f"malformed block header {lines[pos]!r}")
        tag, r, c = parts[0], int(parts[1]), int(parts[2])
        rows = lines[pos + 1 : pos + 1 + r]
        if len(rows) != r:
            raise InvalidInputError(f"block {tag} is truncated")
        a = np.array([[float(v) for v in row.split()] for row in rows]).reshape(r, -1)
        if a.shape != (r, c):
            raise InvalidInputError(f"block {tag} has shape {a.shape}, header says {(r, c)}")
        blocks[tag] = a
        pos += 1 + r
    return blocks


def load_model(path):
    from .neural import LstmCell, MlpNetwork

    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if len(lines) < 3 or lines[0].split()[0] != MODEL_MAGIC:
        raise InvalidInputError(f"{path} is not a model file")
    version = int(lines[0].split()[1])
    if version != MODEL_VERSION:
        raise InvalidInputError(f"unsupported model file version {version}")
    kind = lines[1].split()[1]
    if kind == "mlp":
        sizes = tuple(int(v) for v in lines[2].split()[1:])
        bl = _parse_blocks(lines[3:])
        n = len(sizes) - 1
        try:
            ws = tuple(bl[f"weight{k}"] for k in range(n))
            bs = tuple(bl[f"bias{k}"][0] for k in range(n))
            scal = {k: bl[k][0] for k in ("in_offset", "in_scale", "out_offset", "out_scale")}
        except KeyError as exc:
            raise InvalidInputError(f"model file lacks block {exc}") from exc
        return MlpNetwork(sizes, ws, bs, **scal)
    if kind == "lstm":
        i, h = (int(v) for v in lines[2].split()[1:])
        bl = _parse_blocks(lines[3:])
        return LstmCell(i, h, bl["w"], bl["b"][0], bl["w_out"][0], float(bl["b_out"][0, 0]))
    raise InvalidInputError(f"unknown model kind {kind!r}")
