"""Parameter checkpoints as versioned text files.

Header carries the model config (JSON), a digest of the training config, and
the seed; tensors follow as name/shape lines with flat decimal values.
repr() round-trips doubles exactly, so load(save(p)) is bit-identical.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .config import ModelConfig, TrainConfig

FORMAT_VERSION = 1


def train_digest(train_config: TrainConfig | None) -> str:
    if train_config is None:
        return "-"
    blob = json.dumps(train_config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def save_params(path, params: dict[str, np.ndarray], config: ModelConfig,
                train_config: TrainConfig | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"neuralparams {FORMAT_VERSION}\n")
        fh.write("config " + json.dumps(config.to_dict(), sort_keys=True) + "\n")
        fh.write(f"train_digest {train_digest(train_config)}\n")
        fh.write(f"seed {config.seed}\n")
        for name in sorted(params):
            tensor = params[name]
            shape = " ".join(str(s) for s in tensor.shape)
            fh.write(f"tensor {name} {shape}\n")
            fh.write(" ".join(repr(float(x)) for x in tensor.ravel()) + "\n")
        fh.write("end\n")


def load_params(path) -> tuple[dict[str, np.ndarray], ModelConfig, str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or not lines[0].startswith("neuralparams "):
        raise ValueError("not a parameter checkpoint file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if not lines[1].startswith("config "):
        raise ValueError("missing config line")
    config = ModelConfig.from_dict(json.loads(lines[1][len("config "):]))
    if not lines[2].startswith("train_digest "):
        raise ValueError("missing train_digest line")
    digest = lines[2].split()[1]
    params: dict[str, np.ndarray] = {}
    pos = 4
    while pos < len(lines) and lines[pos] != "end":
        parts = lines[pos].split()
        if parts[0] != "tensor":
            raise ValueError(f"expected tensor line, got {lines[pos][:40]!r}")
        name = parts[1]
        shape = tuple(int(s) for s in parts[2:])
        values = np.asarray([float(x) for x in lines[pos + 1].split()])
        params[name] = values.reshape(shape)
        pos += 2
    if pos >= len(lines):
        raise ValueError("truncated checkpoint: missing end marker")
    return params, config, digest
