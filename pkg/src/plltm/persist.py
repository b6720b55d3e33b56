"""Trained-model files (see ``binfmt`` for the container layout)."""
from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .binfmt import FormatError, read_container, write_container
from .corpus import Corpus
from .model import LabelMask, ModelConfig, TrainedModel, state_from_assignments

MODEL_MAGIC = b"PLLTMMOD"


def save_model(model: TrainedModel, path, include_z: bool = True, extra: dict | None = None) -> None:
    """Write config, label mask, vocabulary sizes, phi (one <f8 matrix per language) and optionally z."""
    cfg = asdict(model.config)
    cfg["beta"] = list(cfg["beta"])
    header = {"kind": "plltm-model", "config": cfg, "vocab_sizes": model.vocab_sizes, "extra": extra or {}}
    arrays = {f"phi{l}": p for l, p in enumerate(model.phi)}
    arrays["mask_ptr"] = model.label_mask.ptr
    arrays["mask_topics"] = model.label_mask.topics
    if include_z and model.final_state is not None:
        arrays["z"] = model.final_state.z
    write_container(path, MODEL_MAGIC, header, arrays)


def read_model_header(path) -> dict:
    header, _ = read_container(path, MODEL_MAGIC)
    return header


def load_model(path, corpus: Corpus | None = None) -> TrainedModel:
    """Load a model; with the training corpus and stored z, the final state is rebuilt too."""
    header, arrays = read_container(path, MODEL_MAGIC)
    cfg = header["config"]
    cfg["beta"] = tuple(cfg["beta"])
    config = ModelConfig(**cfg)
    phi = [arrays[f"phi{l}"] for l in range(config.L)]
    if [p.shape[1] for p in phi] != header["vocab_sizes"]:
        raise FormatError(f"{path}: phi shapes disagree with recorded vocabulary sizes")
    ptr, topics = arrays["mask_ptr"], arrays["mask_topics"]
    mask = LabelMask([topics[ptr[i]:ptr[i + 1]] for i in range(len(ptr) - 1)])
    state = None
    if corpus is not None and "z" in arrays:
        state = state_from_assignments(corpus, config, arrays["z"])
    return TrainedModel(phi, config, mask, state)
