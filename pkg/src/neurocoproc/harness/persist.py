"""File formats: JSON weights, CSV tables, spike trains and run manifests.

Floats are written as decimal strings with 17 significant digits so every
double round-trips exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..coproc import LayeredNet
from ..decoders import HingeClassifier, KalmanModel, LdaModel, LinearDecoder
from ..mimo import MisoModel

SCHEMA = 1


class SchemaError(ValueError):
    """Malformed or inconsistent file contents."""


class UnsupportedVersion(SchemaError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def _enc(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "values": [fmt(v) for v in a.ravel()]}


def _dec(d, where):
    try:
        shape = tuple(int(s) for s in d["shape"])
        vals = np.array([float(v) for v in d["values"]], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed array ({exc})") from None
    if vals.size != int(np.prod(shape, dtype=int)):
        raise SchemaError(f"{where}: {vals.size} values do not fill shape {shape}")
    return vals.reshape(shape)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def to_document(obj) -> dict:
    if isinstance(obj, LayeredNet):
        return {
            "schema": SCHEMA, "kind": "layered_net",
            "shapes": [list(w.shape) for w in obj.weights],
            "activations": list(obj.activations),
            "use_bias": obj.use_bias,
            "weights": [_enc(w) for w in obj.weights],
            "biases": [_enc(b) for b in obj.biases],
        }
    if isinstance(obj, MisoModel):
        obj = [obj]
    if isinstance(obj, (list, tuple)) and obj and all(isinstance(m, MisoModel) for m in obj):
        return {
            "schema": SCHEMA, "kind": "miso_bank",
            "models": [{"k": _enc(m.k), "h": _enc(m.h), "theta": fmt(m.theta),
                        "sigma": fmt(m.sigma), "bin_ms": fmt(m.bin_ms)} for m in obj],
        }
    if isinstance(obj, KalmanModel):
        return {"schema": SCHEMA, "kind": "kalman",
                **{k: _enc(getattr(obj, k)) for k in ("A", "B", "Q", "R", "mean", "cov")}}
    if isinstance(obj, LinearDecoder):
        return {"schema": SCHEMA, "kind": "linear_decoder", "B": _enc(obj.B)}
    if isinstance(obj, LdaModel):
        return {"schema": SCHEMA, "kind": "lda", "class_means": _enc(obj.class_means),
                "shared_cov": _enc(obj.shared_cov), "priors": _enc(obj.priors)}
    if isinstance(obj, HingeClassifier):
        return {"schema": SCHEMA, "kind": "hinge", "weights": _enc(obj.weights),
                "biases": _enc(obj.biases), "classes": [int(c) for c in obj.classes],
                "lam": fmt(obj.lam)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_document(doc):
    if not isinstance(doc, dict):
        raise SchemaError("weights document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise UnsupportedVersion(
            f"unsupported schema version {doc.get('schema')!r} (expected {SCHEMA})")
    kind = doc.get("kind")
    try:
        if kind == "layered_net":
            weights = [_dec(w, f"weights[{i}]") for i, w in enumerate(doc["weights"])]
            biases = [_dec(b, f"biases[{i}]") for i, b in enumerate(doc["biases"])]
            shapes = [tuple(s) for s in doc["shapes"]]
            if [w.shape for w in weights] != shapes:
                raise SchemaError("weight arrays do not match the declared shapes")
            return LayeredNet(weights, doc["activations"], biases, bool(doc["use_bias"]))
        if kind == "miso_bank":
            return [MisoModel(_dec(m["k"], "k"), _dec(m["h"], "h"), float(m["theta"]),
                              float(m["sigma"]), float(m["bin_ms"])) for m in doc["models"]]
        if kind == "kalman":
            return KalmanModel(*(_dec(doc[k], k) for k in ("A", "B", "Q", "R", "mean", "cov")))
        if kind == "linear_decoder":
            return LinearDecoder(_dec(doc["B"], "B"))
        if kind == "lda":
            return LdaModel(_dec(doc["class_means"], "class_means"),
                            _dec(doc["shared_cov"], "shared_cov"), _dec(doc["priors"], "priors"))
        if kind == "hinge":
            return HingeClassifier(_dec(doc["weights"], "weights"), _dec(doc["biases"], "biases"),
                                   np.array(doc["classes"], dtype=int), float(doc["lam"]))
    except KeyError as exc:
        raise SchemaError(f"{kind}: missing field {exc}") from None
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(f"{kind}: {exc}") from None
    raise SchemaError(f"unknown weights kind {kind!r}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def persist_weights(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(to_document(obj)))
    return path


def load_weights(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return from_document(doc)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# spike trains
# ---------------------------------------------------------------------------

def write_spikes_csv(path, train):
    """One ``bin,channel,value`` row per entry of a (channels, bins) 0/1 array."""
    y = np.atleast_2d(np.asarray(train)).astype(int)
    rows = ((t, c, y[c, t]) for t in range(y.shape[1]) for c in range(y.shape[0]))
    write_csv(path, ("bin", "channel", "value"), rows)


def read_spikes_csv(path):
    header, rows = read_csv(path)
    if header != ["bin", "channel", "value"]:
        raise SchemaError(f"{path}: expected header bin,channel,value")
    data = np.array(rows, dtype=int).reshape(-1, 3)
    train = np.zeros((data[:, 1].max() + 1, data[:, 0].max() + 1), dtype=int)
    if not np.all((data[:, 2] == 0) | (data[:, 2] == 1)):
        raise SchemaError(f"{path}: spike values must be 0 or 1")
    train[data[:, 1], data[:, 0]] = data[:, 2]
    return train


def spikes_to_rle(train, bin_ms=2.0) -> dict:
    """Run lengths per channel, alternating zeros and ones, starting with zeros."""
    y = np.atleast_2d(np.asarray(train)).astype(int)
    channels = []
    for row in y:
        change = np.flatnonzero(np.diff(row)) + 1
        bounds = np.r_[0, change, row.size]
        runs = np.diff(bounds).tolist()
        if row.size and row[0] == 1:
            runs = [0] + runs
        channels.append(runs)
    return {"schema": SCHEMA, "bin_ms": fmt(bin_ms), "n_bins": int(y.shape[1]),
            "runs": channels}


def rle_to_spikes(doc):
    if doc.get("schema") != SCHEMA:
        raise UnsupportedVersion(f"unsupported schema version {doc.get('schema')!r}")
    n = int(doc["n_bins"])
    out = np.zeros((len(doc["runs"]), n), dtype=int)
    for c, runs in enumerate(doc["runs"]):
        if sum(runs) != n:
            raise SchemaError(f"channel {c}: run lengths sum to {sum(runs)}, expected {n}")
        pos, val = 0, 0
        for r in runs:
            out[c, pos:pos + r] = val
            pos += r
            val ^= 1
    return out


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run_dir, scenario, name="manifest.json"):
    """Hash every file under ``run_dir`` except the manifest itself."""
    run_dir = Path(run_dir)
    files = {p.relative_to(run_dir).as_posix(): sha256_file(p)
             for p in sorted(run_dir.rglob("*")) if p.is_file() and p.name != name}
    doc = {"schema": SCHEMA, "scenario": scenario, "files": files}
    path = run_dir / name
    path.write_text(dumps(doc))
    return path, doc


def verify_manifest(run_dir, name="manifest.json"):
    """List of files whose current hash disagrees with the manifest."""
    run_dir = Path(run_dir)
    doc = json.loads((run_dir / name).read_text())
    bad = []
    for rel, digest in doc["files"].items():
        p = run_dir / rel
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(rel)
    return bad
