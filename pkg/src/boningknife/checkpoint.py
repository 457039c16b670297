"""Versioned checkpoint files: parameter name -> array, plus a JSON
metadata blob (config, label set, training progress, optional optimizer
state). Loading validates every parameter shape against the model.
"""

from __future__ import annotations

import json

import numpy as np

from .config import TrainConfig
from .errors import DataValidationError
from .model import NestedNerModel

FORMAT_VERSION = 1


def save_checkpoint(path, model: NestedNerModel, vocab_size: int,
                    optimizer=None, extra: dict | None = None) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "type_names": model.type_names,
        "vocab_size": vocab_size,
    }
    if extra:
        meta.update(extra)
    arrays = dict(model.state_arrays())
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
        meta["has_optimizer"] = True
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (arrays, meta). Raises DataValidationError on bad files."""
    try:
        npz = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in npz:
        raise DataValidationError(f"checkpoint {path} has no metadata entry")
    meta = json.loads(str(npz["__meta__"]))
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataValidationError(
            f"checkpoint {path} has format_version {meta.get('format_version')}, "
            f"expected {FORMAT_VERSION}")
    arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    return arrays, meta


def model_from_checkpoint(path) -> tuple[NestedNerModel, dict, dict]:
    """Rebuild a model (config + labels from metadata) and load its weights."""
    arrays, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    model = NestedNerModel(cfg, meta["vocab_size"], meta["type_names"])
    model.load_state_arrays(arrays)
    return model, arrays, meta
