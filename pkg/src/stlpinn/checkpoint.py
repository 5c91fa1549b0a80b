"""Checkpoint persistence.

Plain JSON with flat row-major float arrays: diffable, lossless (Python's
float repr round-trips), and free of binary sidecars at this scale.
"""

import json

import numpy as np

from .equations import instantiate
from .errors import CorruptFloatArray, IoError, SchemaVersionMismatch
from .network import BaseNetwork
from .training import Checkpoint, LossConfig, TrainConfig

FORMAT_VERSION = 1


def _spec_descriptor(spec):
    return {
        "family": spec.family,
        "alpha": spec.alpha,
        "params": spec.params,
        "T": spec.T,
    }


def save_checkpoint(ckpt: Checkpoint, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "family": ckpt.head_specs[0].family,
        "widths": list(ckpt.net.widths),
        "activation": "silu",
        "seed": ckpt.net.seed,
        "params": {},
        "heads": [
            {"problem": _spec_descriptor(spec), "w": w.ravel().tolist()}
            for spec, w in zip(ckpt.head_specs, ckpt.heads)
        ],
        "loss_config": vars(ckpt.loss_config) | {
            "grid_shape": list(ckpt.loss_config.grid_shape)
        },
        "train_config": vars(ckpt.train_config) | {
            "widths": list(ckpt.train_config.widths)
        },
        "loss_history": [
            [rec["total"], rec["residual"], rec["ic"], rec["bc"]]
            for rec in ckpt.loss_history
        ],
    }
    for i, (w, b) in enumerate(ckpt.net.params):
        doc["params"][f"layer_{i}_w"] = w.ravel().tolist()
        doc["params"][f"layer_{i}_b"] = b.tolist()
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint: {exc}") from None


def _float_array(values, shape, what):
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise CorruptFloatArray(f"{what} is not a float array") from None
    if arr.size != int(np.prod(shape)):
        raise CorruptFloatArray(
            f"{what} has {arr.size} entries, expected {int(np.prod(shape))}"
        )
    return arr.reshape(shape)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CorruptFloatArray(f"checkpoint is not valid JSON: {exc}") from None

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"checkpoint format {version!r} not supported; this build reads "
            f"version {FORMAT_VERSION}"
        )
    widths = [int(w) for w in doc["widths"]]
    params = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = _float_array(doc["params"][f"layer_{i}_w"], (fan_out, fan_in),
                         f"layer_{i}_w")
        b = _float_array(doc["params"][f"layer_{i}_b"], (fan_out,), f"layer_{i}_b")
        params.append((w, b))
    net = BaseNetwork(widths=widths, params=params, seed=int(doc["seed"]))

    heads = []
    head_specs = []
    m1 = widths[-1] + 1
    for i, head in enumerate(doc["heads"]):
        prob = head["problem"]
        spec = instantiate(prob["family"], prob["alpha"], prob["params"],
                           T=prob["T"])
        n = spec.n
        heads.append(_float_array(head["w"], (m1, n), f"head {i} weights"))
        head_specs.append(spec)

    lc = dict(doc["loss_config"])
    lc["grid_shape"] = tuple(lc["grid_shape"])
    tc = dict(doc["train_config"])
    history = [
        {"total": row[0], "residual": row[1], "ic": row[2], "bc": row[3]}
        for row in doc["loss_history"]
    ]
    return Checkpoint(
        net=net,
        heads=heads,
        head_specs=head_specs,
        loss_config=LossConfig(**lc),
        train_config=TrainConfig(**tc),
        loss_history=history,
    )
