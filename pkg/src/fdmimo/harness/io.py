"""Binary containers for datasets (CEDS) and trained models (FDXM), and
CSV/JSON result emission.

Both containers share one layout, all integers little-endian u32:

    magic (4 bytes) | version | [FDXM only: header length, UTF-8 JSON header] |
    n_tensors | per tensor: ndim, dims... | [CEDS only: n_train, n_val, n_test] |
    float32 LE payloads in order

The FDXM header carries the network description and scaler ranges, so a
model file loads on its own. Provenance lives in a JSON sidecar next to
the binary (``<path>.json``).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, IoError
from ..nn.data import Dataset, MinMaxScaler
from ..nn.model import NetworkSpec, build_network
from ..nn.train import TrainedModel

DATASET_MAGIC = b"CEDS"
MODEL_MAGIC = b"FDXM"
VERSION = 1
_U32 = struct.Struct("<I")


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.path}: truncated at byte offset {len(self.data)} while reading {what} "
                f"(needed {self.pos + n} bytes)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def _pack(magic: bytes, tensors, extra=(), header: bytes | None = None) -> bytes:
    head = [magic, _U32.pack(VERSION)]
    if header is not None:
        head += [_U32.pack(len(header)), header]
    head.append(_U32.pack(len(tensors)))
    for t in tensors:
        head.append(_U32.pack(t.ndim))
        head.extend(_U32.pack(d) for d in t.shape)
    head.extend(_U32.pack(v) for v in extra)
    body = [np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors]
    return b"".join(head + body)


def _unpack(data: bytes, magic: bytes, path, n_extra: int = 0, with_header: bool = False):
    r = _Reader(data, path)
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    header = None
    if with_header:
        size = r.u32("header length")
        raw = r.take(size, "JSON header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: corrupt header at byte offset 12: {e}") from e
    n = r.u32("tensor count")
    shapes = []
    for i in range(n):
        ndim = r.u32(f"rank of tensor {i}")
        if ndim > 8:
            raise FormatError(f"{path}: implausible rank {ndim} for tensor {i} at byte offset {r.pos - 4}")
        shapes.append(tuple(r.u32(f"dimension {j} of tensor {i}") for j in range(ndim)))
    extra = [r.u32("header field") for _ in range(n_extra)]
    tensors = []
    for i, shape in enumerate(shapes):
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.take(4 * count, f"payload of tensor {i}")
        tensors.append(np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32))
    if r.pos != len(data):
        raise FormatError(f"{path}: {len(data) - r.pos} trailing bytes after byte offset {r.pos}")
    return (tensors, extra, header) if with_header else (tensors, extra)


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _write(path, payload: bytes, sidecar: dict) -> None:
    try:
        Path(path).write_bytes(payload)
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=_json_default))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# datasets


def export_dataset(ds: Dataset, path) -> None:
    tensors = [ds.inputs, ds.labels] + ([ds.tags] if ds.tags is not None else [])
    payload = _pack(DATASET_MAGIC, tensors, ds.split)
    _write(path, payload, {"metadata": ds.metadata, "has_tags": ds.tags is not None})


def import_dataset(path) -> Dataset:
    """Read a CEDS file. The sidecar is optional; the result is marked ``source="external"``."""
    tensors, split = _unpack(_read_bytes(path), DATASET_MAGIC, path, n_extra=3)
    if len(tensors) not in (2, 3):
        raise FormatError(f"{path}: expected 2 or 3 tensors, found {len(tensors)}")
    side = sidecar_path(path)
    meta = {}
    if side.exists():
        try:
            meta = json.loads(side.read_text()).get("metadata", {})
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"{side}: unreadable sidecar: {e}") from e
    if "source" in meta:
        meta["origin_source"] = meta["source"]
    meta["source"] = "external"
    inputs, labels = tensors[:2]
    tags = tensors[2] if len(tensors) == 3 else None
    if len(inputs) != len(labels) or sum(split) != len(inputs):
        raise FormatError(f"{path}: split {split} does not match {len(inputs)} inputs / {len(labels)} labels")
    return Dataset(inputs, labels, tuple(split), meta, tags)


# models


def _scaler_dict(s: MinMaxScaler) -> dict:
    return {"min": s.min, "max": s.max, "fitted_on": s.fitted_on}


def save_model(model: TrainedModel, path, provenance: dict | None = None) -> None:
    header = {
        "spec": model.spec.to_dict(),
        "input_scaler": _scaler_dict(model.input_scaler),
        "label_scaler": _scaler_dict(model.label_scaler),
    }
    payload = _pack(MODEL_MAGIC, model.network.params, header=json.dumps(header, sort_keys=True).encode())
    _write(path, payload, {"history": model.history, "provenance": provenance or {}})


def load_model(path) -> TrainedModel:
    """Load an FDXM model; the sidecar (training history) is optional."""
    tensors, _, header = _unpack(_read_bytes(path), MODEL_MAGIC, path, with_header=True)
    try:
        spec = NetworkSpec(**header["spec"])
        scalers = [MinMaxScaler(s["min"], s["max"], s.get("fitted_on", ""))
                   for s in (header["input_scaler"], header["label_scaler"])]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: invalid model header: {e}") from e
    net = build_network(spec, 0, np.float32)
    if len(tensors) != len(net.params):
        raise FormatError(f"{path}: {len(tensors)} tensors for a network with {len(net.params)} parameters")
    try:
        net.set_params(tensors)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    history = []
    side = sidecar_path(path)
    if side.exists():
        try:
            history = json.loads(side.read_text()).get("history", [])
        except json.JSONDecodeError as e:
            raise FormatError(f"{side}: {e}") from e
    return TrainedModel(net, scalers[0], scalers[1], history)


# results

RESULT_FIELDS = (
    "snr_si_db", "snr_ue_db", "theta_as_deg", "kappa_db", "bits", "scheme", "method",
    "target", "cancellation", "trials", "nmse_db", "flops", "seed",
)


def _fmt(v) -> str:
    if v is None:
        return "inf"
    if isinstance(v, bool):
        return "on" if v else "off"
    # repr keeps full precision and never depends on the locale
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _row(rec) -> dict:
    return {f: getattr(rec, f) for f in RESULT_FIELDS}


def results_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for rec in records:
        w.writerow([_fmt(v) for v in _row(rec).values()])
    return buf.getvalue()


def results_to_json(records, config: dict | None = None) -> str:
    rows = [{k: (v if not isinstance(v, np.generic) else v.item()) for k, v in _row(r).items()} for r in records]
    doc = {"fields": list(RESULT_FIELDS), "records": rows}
    if config is not None:
        doc["config"] = config
    return json.dumps(doc, indent=2, sort_keys=False, default=_json_default) + "\n"


def emit_results(records, fmt: str, path, config: dict | None = None) -> None:
    """Write records as CSV or JSON; the resolved config goes into ``<path>.json`` for CSV."""
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    fmt = fmt.lower()
    if fmt == "csv":
        text = results_to_csv(records)
    elif fmt == "json":
        text = results_to_json(records, config)
    else:
        raise ValueError(f"unknown result format {fmt}")
    try:
        Path(path).write_text(text)
        if fmt == "csv" and config is not None:
            sidecar_path(path).write_text(json.dumps({"config": config}, indent=2, default=_json_default) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _parse(field: str, text: str):
    if field in ("scheme", "method", "target"):
        return text
    if field == "cancellation":
        return text == "on"
    if field == "bits":
        return None if text == "inf" else int(text)
    if field in ("trials", "flops", "seed"):
        return int(text)
    return float(text)


def read_results_csv(path_or_text, record_type=None):
    """Parse emitted CSV back into records (``ResultRecord`` by default)."""
    if record_type is None:
        from .sweep import ResultRecord as record_type
    text = str(path_or_text)
    if "\n" not in text:
        text = Path(text).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != RESULT_FIELDS:
        raise FormatError(f"unexpected CSV header {rows[0]}")
    return [record_type(**{f: _parse(f, v) for f, v in zip(RESULT_FIELDS, row)}) for row in rows[1:]]
