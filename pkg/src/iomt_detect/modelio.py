"""JSON model documents.

Every fitted model serializes to::

    {model_type, schema_version, hyperparameters, parameters, threshold,
     standardizer_ref}

with arrays stored as ``{"shape": [...], "data": [...]}``. Python's float
repr round-trips float64 exactly, so save -> load -> score is bit-exact.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

MODEL_SCHEMA_VERSION = 1

_REGISTRY: dict[str, type] = {}


def register(model_type: str):
    def deco(cls):
        cls.model_type = model_type
        _REGISTRY[model_type] = cls
        return cls
    return deco


def encode_array(a) -> dict:
    a = np.asarray(a)
    if a.dtype.kind in "iub":
        data = [int(v) for v in a.ravel()]
        dtype = "int64"
    else:
        data = [float(v) for v in a.ravel()]
        dtype = "float64"
    return {"shape": list(a.shape), "dtype": dtype, "data": data}


def decode_array(doc: dict) -> np.ndarray:
    return np.array(doc["data"], dtype=doc.get("dtype", "float64")).reshape(doc["shape"])


def model_document(model_type, hyperparameters, parameters, threshold, standardizer_ref=None, **extra):
    doc = {
        "model_type": model_type,
        "schema_version": MODEL_SCHEMA_VERSION,
        "hyperparameters": hyperparameters,
        "parameters": parameters,
        "threshold": None if threshold is None else float(threshold),
        "standardizer_ref": standardizer_ref,
    }
    doc.update(extra)
    return doc


def model_from_dict(doc: dict):
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema_version {doc.get('schema_version')!r}")
    try:
        cls = _REGISTRY[doc["model_type"]]
    except KeyError:
        raise ValueError(f"unknown model_type {doc.get('model_type')!r}") from None
    return cls.from_dict(doc)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model, path, **extra) -> None:
    doc = model.to_dict()
    doc.update(extra)
    write_atomic(path, dumps(doc))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
