import csv
import json
import logging
import os
import re
import struct
import time
from dataclasses import dataclass

import numpy as np

from samgc.errors import (
    ConfigurationError,
    CorruptHeaderError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from samgc.models import Metrics, build_model

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SAMGCKPT"
CHECKPOINT_VERSION = 1
# magic, format version (u32), header length (u64); little-endian
_PREAMBLE = struct.Struct("<8sIQ")
METRICS_HEADER = ("epoch", "split", "loss", "oa", "macc")
_HEADER_KEYS = {"config", "model", "payload_bytes", "tensors"}
_ENTRY_KEYS = {"name", "rows", "cols", "offset"}


### FILE UTILS ###


def make_dir(path):
    if not os.path.exists(path):
        os.makedirs(path)


def write_file(path, contents, mode="w"):
    with open(path, mode) as f:
        f.write(contents)


def read_file(path, mode="r"):
    with open(path, mode) as f:
        contents = f.read()

    if not contents:
        logger.warning("file %s empty", path)

    return contents


def sanitize_dir_name(dir_name):
    # Remove invalid characters
    dir_name = re.sub(r'[<>:"/\|?*]', "_", dir_name)

    dir_name = dir_name.replace(" ", "_")

    # Remove leading period
    if dir_name.startswith("."):
        dir_name = dir_name[1:]

    return dir_name


def run_dir(out_dir, command, current_datetime=""):
    """``<out_dir>/<command>_<datetime>``, created on demand."""
    current_datetime = current_datetime or time.strftime("%Y-%m-%d_%H-%M-%S")
    path = os.path.join(out_dir, sanitize_dir_name(command) + "_" + current_datetime)
    make_dir(path)
    return path


### CHECKPOINTS ###


@dataclass
class Checkpoint:
    model: object
    config: dict
    version: int
    tensors: list


def save_checkpoint(model, path, config=None):
    """Header JSON (model description, config echo, tensor table) + float64 payload."""
    named = model.named_parameters()
    table, chunks, offset = [], [], 0
    for name, param in named.items():
        rows, cols = param.shape
        chunk = np.ascontiguousarray(param.data, dtype="<f8").tobytes()
        table.append({"name": name, "rows": rows, "cols": cols, "offset": offset})
        chunks.append(chunk)
        offset += len(chunk)
    header = {
        "config": config or {},
        "model": model.describe(),
        "payload_bytes": offset,
        "tensors": table,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(encoded)))
        f.write(encoded)
        for chunk in chunks:
            f.write(chunk)
    logger.info("saved %d tensors (%d bytes) to %s", len(table), offset, path)


def _read_header(raw, path):
    if len(raw) < _PREAMBLE.size:
        if CHECKPOINT_MAGIC.startswith(raw[: len(CHECKPOINT_MAGIC)]):
            raise TruncatedCheckpointError(f"{path}: file ends inside the preamble")
        raise CorruptHeaderError(f"{path}: not a checkpoint file")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptHeaderError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    end = _PREAMBLE.size + header_len
    if len(raw) < end:
        raise TruncatedCheckpointError(f"{path}: file ends inside the header")
    try:
        header = json.loads(raw[_PREAMBLE.size : end].decode())
    except (UnicodeDecodeError, ValueError) as e:
        raise CorruptHeaderError(f"{path}: unreadable header ({e})") from None
    if not isinstance(header, dict) or not _HEADER_KEYS <= header.keys():
        raise CorruptHeaderError(f"{path}: header lacks {sorted(_HEADER_KEYS)}")
    entries = header["tensors"]
    if not isinstance(entries, list) or not all(
        isinstance(e, dict) and _ENTRY_KEYS <= e.keys() for e in entries
    ):
        raise CorruptHeaderError(f"{path}: malformed tensor table")
    return header, version, end


def read_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    header, version, start = _read_header(raw, path)
    payload = raw[start:]
    if len(payload) < header["payload_bytes"]:
        raise TruncatedCheckpointError(
            f"{path}: payload has {len(payload)} of {header['payload_bytes']} bytes"
        )
    try:
        model = build_model(header["model"])
    except (ConfigurationError, TypeError, KeyError) as e:
        raise CorruptHeaderError(f"{path}: bad model description ({e})") from None
    named = model.named_parameters()
    names = [entry["name"] for entry in header["tensors"]]
    if names != list(named):
        raise CorruptHeaderError(f"{path}: tensor table does not match the model")
    for entry in header["tensors"]:
        param = named[entry["name"]]
        shape = (entry["rows"], entry["cols"])
        if shape != param.shape:
            raise CorruptHeaderError(
                f"{path}: {entry['name']} is {shape}, model expects {param.shape}"
            )
        count = shape[0] * shape[1]
        try:
            values = np.frombuffer(
                payload, dtype="<f8", count=count, offset=entry["offset"]
            )
        except ValueError:
            raise CorruptHeaderError(f"{path}: bad offset for {entry['name']}") from None
        param.data[...] = values.reshape(shape)
    return Checkpoint(model, header["config"], version, header["tensors"])


def load_checkpoint(path):
    return read_checkpoint(path).model


### METRICS AND DUMPS ###


def _fmt(value, precision):
    return f"{value:.{precision}f}"


def write_metrics_csv(path, rows, precision=6):
    """``rows`` yields (epoch, split, Metrics); one CSV line each."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for epoch, split, metrics in rows:
            writer.writerow(
                [
                    epoch,
                    split,
                    _fmt(metrics.loss, precision),
                    _fmt(metrics.oa, precision),
                    _fmt(metrics.macc, precision),
                ]
            )


def read_metrics_csv(path):
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        return [
            (
                int(row["epoch"]),
                row["split"],
                Metrics(
                    oa=float(row["oa"]), macc=float(row["macc"]), loss=float(row["loss"])
                ),
            )
            for row in reader
        ]


def write_feature_dump(path, bundle, precision=6):
    """One line per directed edge: target v, neighbor u, fa, L1 norm of fd, re."""
    re_cols = bundle.re.cols
    fd_l1 = np.abs(bundle.fd.data).sum(axis=1)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["v", "u", "fa", "fd_l1"] + [f"re_{j}" for j in range(re_cols)])
        for e in range(len(bundle.rows)):
            writer.writerow(
                [int(bundle.rows[e]), int(bundle.cols[e])]
                + [_fmt(bundle.fa.data[e, 0], precision), _fmt(fd_l1[e], precision)]
                + [_fmt(x, precision) for x in bundle.re.data[e]]
            )
    logger.info("wrote %d edge rows to %s", len(bundle.rows), path)
