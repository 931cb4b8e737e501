"""Forward and reverse passes over a fixed graph.

Graph: embedding lookup -> encoder (LSTM or convolution with max-over-time
pooling) -> optional goal one-hot concat -> dropout (train mode) -> dense ->
softmax over data commands. The goal enters per the variant: one-hot at the
dense input (goal_dense), one-hot appended to every step input (goal_steps),
or an embedded pseudo-command prepended to the window (goal_token).

Parameters live in a flat dict of float64 arrays; backward returns a dict of
matching gradients. The graph is closed and small, so differentiation is
written out by hand and gated by finite-difference checks.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig


def embedding_rows(config: ModelConfig) -> int:
    extra = config.goal_count if config.variant == "goal_token" else 0
    return config.vocab_size + extra


def step_input_dim(config: ModelConfig) -> int:
    extra = config.goal_count if config.variant == "goal_steps" else 0
    return config.embed_dim + extra


def encoder_output_dim(config: ModelConfig) -> int:
    if config.encoder == "lstm":
        return config.hidden_dim
    return len(config.conv_widths) * config.conv_filters


def dense_input_dim(config: ModelConfig) -> int:
    extra = config.goal_count if config.variant == "goal_dense" else 0
    return encoder_output_dim(config) + extra


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d = step_input_dim(config)
    shapes: dict[str, tuple[int, ...]] = {
        "embed": (embedding_rows(config), config.embed_dim),
    }
    if config.encoder == "lstm":
        h = config.hidden_dim
        shapes["lstm_W"] = (4 * h, d + h)
        shapes["lstm_b"] = (4 * h,)
    else:
        for w in config.conv_widths:
            shapes[f"conv{w}_w"] = (config.conv_filters, w, d)
            shapes[f"conv{w}_b"] = (config.conv_filters,)
    shapes["dense_W"] = (dense_input_dim(config), config.dc_count)
    shapes["dense_b"] = (config.dc_count,)
    return shapes


def init_parameters(config: ModelConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Seeded random init: small normal embeddings, fan-in scaled weights, zero biases."""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name == "embed":
            params[name] = rng.normal(0.0, 0.1, shape)
        elif name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            # fan-in scaled: lstm_W is (4H, D+H), conv is (F, w, D), dense is (F_in, n_dc)
            fan_in = shape[1] if name == "lstm_W" else (
                shape[1] * shape[2] if name.startswith("conv") else shape[0])
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
    return params


def zero_parameters(config: ModelConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in parameter_shapes(config).items()}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _lstm_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray):
    b, t, d = x.shape
    h_dim = weight.shape[0] // 4
    h = np.zeros((b, h_dim))
    c = np.zeros((b, h_dim))
    steps = []
    for step in range(t):
        zin = np.concatenate([x[:, step, :], h], axis=1)
        z = zin @ weight.T + bias
        gi = _sigmoid(z[:, :h_dim])
        gf = _sigmoid(z[:, h_dim:2 * h_dim])
        go = _sigmoid(z[:, 2 * h_dim:3 * h_dim])
        gc = np.tanh(z[:, 3 * h_dim:])
        c_new = gf * c + gi * gc
        tanh_c = np.tanh(c_new)
        steps.append((zin, gi, gf, go, gc, c, tanh_c))
        h = go * tanh_c
        c = c_new
    return h, (steps, x.shape)


def _lstm_backward(weight: np.ndarray, cache, dh_last: np.ndarray):
    steps, (b, t, d) = cache
    h_dim = weight.shape[0] // 4
    d_weight = np.zeros_like(weight)
    d_bias = np.zeros(4 * h_dim)
    dx = np.zeros((b, t, d))
    dh = dh_last
    dc = np.zeros((b, h_dim))
    for step in range(t - 1, -1, -1):
        zin, gi, gf, go, gc, c_prev, tanh_c = steps[step]
        d_go = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c ** 2)
        d_gi = dc * gc
        d_gc = dc * gi
        d_gf = dc * c_prev
        dc_prev = dc * gf
        dz = np.concatenate([
            d_gi * gi * (1.0 - gi),
            d_gf * gf * (1.0 - gf),
            d_go * go * (1.0 - go),
            d_gc * (1.0 - gc ** 2),
        ], axis=1)
        d_weight += dz.T @ zin
        d_bias += dz.sum(axis=0)
        dzin = dz @ weight
        dx[:, step, :] = dzin[:, :d]
        dh = dzin[:, d:]
        dc = dc_prev
    return dx, d_weight, d_bias


def _conv_forward(params: dict, config: ModelConfig, x: np.ndarray):
    b, t, d = x.shape
    pad = max(0, max(config.conv_widths) - t)
    if pad:
        x = np.concatenate([np.zeros((b, pad, d)), x], axis=1)
        t += pad
    feats = []
    per_width = []
    for w in config.conv_widths:
        weight = params[f"conv{w}_w"]
        bias = params[f"conv{w}_b"]
        n_pos = t - w + 1
        win = np.stack([x[:, p:p + w, :].reshape(b, w * d) for p in range(n_pos)], axis=1)
        act = np.tanh(win @ weight.reshape(config.conv_filters, w * d).T + bias)
        arg = act.argmax(axis=1)  # (b, filters); first max on ties
        pooled = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :]
        feats.append(pooled)
        per_width.append((win, act, arg, w, n_pos))
    return np.concatenate(feats, axis=1), (per_width, (b, t, d), pad)


def _conv_backward(params: dict, config: ModelConfig, cache, dout: np.ndarray):
    per_width, (b, t, d), pad = cache
    dx = np.zeros((b, t, d))
    grads: dict[str, np.ndarray] = {}
    offset = 0
    for win, act, arg, w, n_pos in per_width:
        n_f = config.conv_filters
        d_pool = dout[:, offset:offset + n_f]
        offset += n_f
        d_act = np.zeros_like(act)
        np.put_along_axis(d_act, arg[:, None, :], d_pool[:, None, :], axis=1)
        d_pre = d_act * (1.0 - act ** 2)
        weight = params[f"conv{w}_w"]
        grads[f"conv{w}_w"] = np.einsum("bpf,bpk->fk", d_pre, win).reshape(weight.shape)
        grads[f"conv{w}_b"] = d_pre.sum(axis=(0, 1))
        d_win = d_pre @ weight.reshape(n_f, w * d)
        for p in range(n_pos):
            dx[:, p:p + w, :] += d_win[:, p, :].reshape(b, w, d)
    if pad:
        dx = dx[:, pad:, :]
    return dx, grads


def forward(params: dict, config: ModelConfig, ids: np.ndarray,
            goals: np.ndarray | None = None, train_mode: bool = False,
            rng: np.random.Generator | None = None):
    """Batched forward pass.

    ids is (B, T) of vocabulary indices; goals is (B,) and required for every
    variant except vanilla. Returns (probs over data commands (B, dc_count),
    cache for backward). Dropout fires only in train mode and draws from rng.
    """
    if ids.ndim != 2 or ids.shape[1] < 1:
        raise ValueError("ids must be (batch, steps) with at least one step")
    if config.needs_goal:
        if goals is None:
            raise ValueError(f"variant {config.variant} requires a goal")
        goals = np.asarray(goals, dtype=np.int64)
        if np.any((goals < 0) | (goals >= config.goal_count)):
            raise ValueError("goal id out of range")

    full_ids = ids
    if config.variant == "goal_token":
        goal_rows = config.vocab_size + goals
        full_ids = np.concatenate([goal_rows[:, None], ids], axis=1)
    emb = params["embed"][full_ids]  # (B, T', E)

    x = emb
    onehot = None
    if config.needs_goal:
        onehot = np.zeros((ids.shape[0], config.goal_count))
        onehot[np.arange(ids.shape[0]), goals] = 1.0
    if config.variant == "goal_steps":
        x = np.concatenate([emb, np.repeat(onehot[:, None, :], emb.shape[1], axis=1)], axis=2)

    if config.encoder == "lstm":
        enc_out, enc_cache = _lstm_forward(params["lstm_W"], params["lstm_b"], x)
    else:
        enc_out, enc_cache = _conv_forward(params, config, x)

    feat = enc_out
    if config.variant == "goal_dense":
        feat = np.concatenate([enc_out, onehot], axis=1)

    mask = None
    if train_mode and config.dropout_p > 0.0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = 1.0 - config.dropout_p
        mask = (rng.random(feat.shape) < keep) / keep
        feat = feat * mask

    logits = feat @ params["dense_W"] + params["dense_b"]
    probs = _softmax(logits)
    cache = {"full_ids": full_ids, "enc_cache": enc_cache, "feat": feat,
             "mask": mask, "enc_dim": enc_out.shape[1]}
    return probs, cache


def backward(params: dict, config: ModelConfig, cache: dict,
             dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient at the logits."""
    feat = cache["feat"]
    grads: dict[str, np.ndarray] = {
        "dense_W": feat.T @ dlogits,
        "dense_b": dlogits.sum(axis=0),
    }
    dfeat = dlogits @ params["dense_W"].T
    if cache["mask"] is not None:
        dfeat = dfeat * cache["mask"]
    denc = dfeat[:, :cache["enc_dim"]]  # goal one-hot part has no parameters

    if config.encoder == "lstm":
        dx, d_w, d_b = _lstm_backward(params["lstm_W"], cache["enc_cache"], denc)
        grads["lstm_W"] = d_w
        grads["lstm_b"] = d_b
    else:
        dx, conv_grads = _conv_backward(params, config, cache["enc_cache"], denc)
        grads.update(conv_grads)

    demb = dx[:, :, :config.embed_dim]  # step one-hot channels carry no parameters
    d_embed = np.zeros_like(params["embed"])
    np.add.at(d_embed, cache["full_ids"], demb)
    grads["embed"] = d_embed
    return grads
