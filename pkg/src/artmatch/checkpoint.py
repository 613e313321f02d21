"""Model checkpoints and training history files.

Checkpoint layout (little-endian): magic b"AMCK", version u32, a string
key/value header (model kind plus hyperparameters), then named float64
matrices, each length-prefixed like SEMF records. Weights stay 64-bit so
a save/load cycle reproduces evaluations exactly.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .cca import CcaModel
from .embedding import AmdModel, CmlModel, EpochStats
from .errors import CorruptFileError, FormatError, SchemaError

MAGIC = b"AMCK"
VERSION = 1


def _write_str(fh, s: str) -> None:
    encoded = s.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)


def _read_exact(fh, n: int, what: str) -> bytes:
    offset = fh.tell()
    chunk = fh.read(n)
    if len(chunk) != n:
        raise CorruptFileError(f"truncated while reading {what}", offset)
    return chunk


def _read_str(fh, what: str) -> str:
    (length,) = struct.unpack("<H", _read_exact(fh, 2, f"{what} length"))
    return _read_exact(fh, length, what).decode("utf-8")


def _write_checkpoint(path, header: dict[str, str], matrices: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        for key, value in header.items():
            _write_str(fh, key)
            _write_str(fh, str(value))
        fh.write(struct.pack("<I", len(matrices)))
        for name, M in matrices.items():
            M = np.atleast_2d(np.asarray(M, dtype=np.float64))
            _write_str(fh, name)
            fh.write(struct.pack("<II", M.shape[0], M.shape[1]))
            fh.write(M.astype("<f8").tobytes())


def _read_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (n_header,) = struct.unpack("<I", _read_exact(fh, 4, "header size"))
        header = {}
        for _ in range(n_header):
            key = _read_str(fh, "header key")
            header[key] = _read_str(fh, "header value")
        (n_matrices,) = struct.unpack("<I", _read_exact(fh, 4, "matrix count"))
        matrices = {}
        for _ in range(n_matrices):
            name = _read_str(fh, "matrix name")
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, f"shape of {name!r}"))
            raw = _read_exact(fh, 8 * rows * cols, f"values of {name!r}")
            matrices[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
    return header, matrices


def save_model(model, path) -> None:
    """Serialize a fitted CcaModel, CmlModel, or AmdModel."""
    if isinstance(model, CcaModel):
        header = {
            "kind": "cca",
            "n_components": model.n_components,
            "ridge": repr(model.ridge),
        }
        matrices = {
            "mean_x": model.mean_x_,
            "mean_y": model.mean_y_,
            "Wx": model.Wx_,
            "Wy": model.Wy_,
            "correlations": model.correlations_,
        }
    elif isinstance(model, (CmlModel, AmdModel)):
        kind = "amd" if isinstance(model, AmdModel) else "cml"
        header = {
            "kind": kind,
            "dim": model.dim,
            "margin": repr(model.margin),
            "arch": model.arch,
            "comment_dim": "" if model.comment_dim is None else model.comment_dim,
            "mlp_comment_dim": model.mlp_comment_dim,
            "mlp_title_dim": model.mlp_title_dim,
            "seed": model.seed,
            "vis_dim": model.vis_dim_,
            "text_dim": model.text_dim_,
            "best_epoch": model.best_epoch_,
        }
        if kind == "amd":
            header["alpha"] = repr(model.alpha)
            header["n_classes"] = model._n_classes_fit
        matrices = dict(model.params_)
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")
    _write_checkpoint(path, header, matrices)


def load_model(path):
    """Reconstruct a fitted model from a checkpoint file."""
    header, matrices = _read_checkpoint(path)
    kind = header.get("kind")
    if kind == "cca":
        model = CcaModel(
            n_components=int(header["n_components"]), ridge=float(header["ridge"])
        )
        try:
            model.mean_x_ = matrices["mean_x"].ravel()
            model.mean_y_ = matrices["mean_y"].ravel()
            model.Wx_ = matrices["Wx"]
            model.Wy_ = matrices["Wy"]
            model.correlations_ = matrices["correlations"].ravel()
        except KeyError as exc:
            raise SchemaError(f"{path}: checkpoint lacks matrix {exc.args[0]!r}") from None
        return model
    if kind in ("cml", "amd"):
        comment_dim = int(header["comment_dim"]) if header.get("comment_dim") else None
        common = dict(
            dim=int(header["dim"]),
            margin=float(header["margin"]),
            arch=header["arch"],
            comment_dim=comment_dim,
            mlp_comment_dim=int(header["mlp_comment_dim"]),
            mlp_title_dim=int(header["mlp_title_dim"]),
            seed=int(header["seed"]),
        )
        if kind == "amd":
            model = AmdModel(
                alpha=float(header["alpha"]), n_classes=int(header["n_classes"]), **common
            )
            model._n_classes_fit = int(header["n_classes"])
        else:
            model = CmlModel(**common)
        params = {}
        for name, M in matrices.items():
            params[name] = M.ravel() if name.endswith(".b") else M
        model.params_ = params
        model.vis_dim_ = int(header["vis_dim"])
        model.text_dim_ = int(header["text_dim"])
        model.best_epoch_ = int(header["best_epoch"])
        model.history_ = []
        model.text_tower_ = model._make_text_tower(model.text_dim_)
        return model
    raise FormatError(f"{path}: unknown model kind {kind!r}")


def write_history(history: list[EpochStats], path) -> None:
    """CSV: epoch,loss,val_mr_t2i,val_mr_i2t."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["epoch", "loss", "val_mr_t2i", "val_mr_i2t"])
    for row in history:
        writer.writerow([row.epoch, repr(row.loss), repr(row.val_mr_t2i), repr(row.val_mr_i2t)])
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def read_history(path) -> list[EpochStats]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                EpochStats(
                    epoch=int(record["epoch"]),
                    loss=float(record["loss"]),
                    val_mr_t2i=float(record["val_mr_t2i"]),
                    val_mr_i2t=float(record["val_mr_i2t"]),
                )
            )
    return rows
