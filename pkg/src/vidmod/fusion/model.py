"""Two-modality fusion classifier with hand-rolled forward and backward passes.

Each modality goes through a projection block (linear, ReLU, dropout). The
projected vectors are then fused either by concatenation or by treating them
as two tokens with learned type embeddings and running multihead
self-attention with a residual LayerNorm before mean-pooling. Either way the
fused vector passes a stack of linear+LayerNorm+ReLU+dropout layers and a
final linear head over the four classes.

Everything is float64 numpy. backward() consumes the activation cache
recorded by a train-mode forward() and produces exact gradients for every
parameter; tests check them against central finite differences.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..constants import LAYERNORM_EPS
from .config import ModelConfig

CHECKPOINT_MAGIC = b"MTGC"


class DimMismatch(ValueError):
    pass


class StaleCache(RuntimeError):
    pass


class NonFiniteLogits(ValueError):
    pass


def parameter_names(cfg: ModelConfig) -> list[str]:
    """Parameter declaration order; also the checkpoint tensor order."""
    names = ["proj_v.W", "proj_v.b", "proj_t.W", "proj_t.b"]
    if cfg.fusion_kind == "attention":
        names += ["emb.e_v", "emb.e_t"]
        for i in range(cfg.attention_layers):
            names += [
                f"attn{i}.Wq",
                f"attn{i}.Wk",
                f"attn{i}.Wv",
                f"attn{i}.Wo",
                f"attn{i}.ln_g",
                f"attn{i}.ln_b",
            ]
    din = cfg.stack_input_dim
    for i, dout in enumerate(cfg.fusion_hidden_dims):
        names += [f"fuse{i}.W", f"fuse{i}.b", f"fuse{i}.ln_g", f"fuse{i}.ln_b"]
        din = dout
    names += ["head.W", "head.b"]
    return names


@dataclass
class FusionModel:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0) -> "FusionModel":
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}
        P = cfg.proj_dim

        def he(dout, din):
            return rng.normal(0.0, np.sqrt(2.0 / din), size=(dout, din))

        p["proj_v.W"] = he(P, cfg.video_dim)
        p["proj_v.b"] = np.zeros(P)
        p["proj_t.W"] = he(P, cfg.text_dim)
        p["proj_t.b"] = np.zeros(P)
        if cfg.fusion_kind == "attention":
            p["emb.e_v"] = rng.normal(0.0, 0.02, size=P)
            p["emb.e_t"] = rng.normal(0.0, 0.02, size=P)
            for i in range(cfg.attention_layers):
                for w in ("Wq", "Wk", "Wv", "Wo"):
                    p[f"attn{i}.{w}"] = rng.normal(0.0, np.sqrt(1.0 / P), size=(P, P))
                p[f"attn{i}.ln_g"] = np.ones(P)
                p[f"attn{i}.ln_b"] = np.zeros(P)
        din = cfg.stack_input_dim
        for i, dout in enumerate(cfg.fusion_hidden_dims):
            p[f"fuse{i}.W"] = he(dout, din)
            p[f"fuse{i}.b"] = np.zeros(dout)
            p[f"fuse{i}.ln_g"] = np.ones(dout)
            p[f"fuse{i}.ln_b"] = np.zeros(dout)
            din = dout
        p["head.W"] = rng.normal(0.0, np.sqrt(1.0 / din), size=(cfg.num_classes, din))
        p["head.b"] = np.zeros(cfg.num_classes)
        return cls(config=cfg, params=p)

    def copy(self) -> "FusionModel":
        return FusionModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def check_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.isfinite(arr).all():
                raise ValueError(f"parameter {name} contains non-finite values")


def _layernorm_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _layernorm_backward(dy: np.ndarray, cache):
    xhat, inv, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _dropout_forward(x: np.ndarray, p: float, train: bool, rng):
    if not train or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return x * mask, mask


def _softmax_lastaxis(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(
    model: FusionModel,
    x_v: np.ndarray,
    x_t: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Batched forward pass. Inputs are (N, video_dim) and (N, text_dim).

    Returns (logits, cache); the cache is only usable by backward() when
    train_mode is True (dropout masks must be recorded).
    """
    cfg = model.config
    p = model.params
    x_v = np.atleast_2d(np.asarray(x_v, dtype=np.float64))
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    if x_v.shape[1] != cfg.video_dim:
        raise DimMismatch(f"video input dim {x_v.shape[1]} != {cfg.video_dim}")
    if x_t.shape[1] != cfg.text_dim:
        raise DimMismatch(f"text input dim {x_t.shape[1]} != {cfg.text_dim}")
    if x_v.shape[0] != x_t.shape[0]:
        raise DimMismatch("batch sizes differ between modalities")
    if train_mode and rng is None:
        rng = np.random.default_rng(0)

    cache: dict = {"train": train_mode, "x_v": x_v, "x_t": x_t}

    def proj(side: str, x: np.ndarray):
        pre = x @ p[f"proj_{side}.W"].T + p[f"proj_{side}.b"]
        act = np.maximum(pre, 0.0)
        out, mask = _dropout_forward(act, cfg.dropout_p, train_mode, rng)
        cache[f"proj_{side}"] = (pre, mask)
        return out

    pv = proj("v", x_v)
    pt = proj("t", x_t)

    if cfg.fusion_kind == "concat":
        z = np.concatenate([pv, pt], axis=1)
    else:
        tokens = np.stack([pv + p["emb.e_v"], pt + p["emb.e_t"]], axis=1)
        attn_caches = []
        for i in range(cfg.attention_layers):
            tokens, ac = _attention_layer_forward(cfg, p, i, tokens)
            attn_caches.append(ac)
        cache["attn"] = attn_caches
        cache["tokens_out"] = tokens
        z = tokens.mean(axis=1)

    layer_caches = []
    for i in range(len(cfg.fusion_hidden_dims)):
        a = z @ p[f"fuse{i}.W"].T + p[f"fuse{i}.b"]
        if cfg.use_layernorm:
            ln_out, ln_cache = _layernorm_forward(a, p[f"fuse{i}.ln_g"], p[f"fuse{i}.ln_b"])
        else:
            ln_out, ln_cache = a, None
        act = np.maximum(ln_out, 0.0)
        out, mask = _dropout_forward(act, cfg.dropout_p, train_mode, rng)
        layer_caches.append((z, ln_out, ln_cache, mask))
        z = out
    cache["layers"] = layer_caches
    cache["z_final"] = z

    logits = z @ p["head.W"].T + p["head.b"]
    return logits, cache


def _attention_layer_forward(cfg: ModelConfig, p, i: int, tokens: np.ndarray):
    n, t, P = tokens.shape
    H = cfg.attention_heads
    hd = P // H

    def split(x):
        return x.reshape(n, t, H, hd).transpose(0, 2, 1, 3)

    q = tokens @ p[f"attn{i}.Wq"].T
    k = tokens @ p[f"attn{i}.Wk"].T
    v = tokens @ p[f"attn{i}.Wv"].T
    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(hd)
    attn = _softmax_lastaxis(scores)
    ctx_h = attn @ vh
    ctx = ctx_h.transpose(0, 2, 1, 3).reshape(n, t, P)
    out = ctx @ p[f"attn{i}.Wo"].T
    residual = tokens + out
    if cfg.use_layernorm:
        normed, ln_cache = _layernorm_forward(
            residual, p[f"attn{i}.ln_g"], p[f"attn{i}.ln_b"]
        )
    else:
        normed, ln_cache = residual, None
    return normed, (tokens, qh, kh, vh, attn, ctx, ln_cache)


def backward(model: FusionModel, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients from a train-mode forward cache."""
    if not cache.get("train"):
        raise StaleCache("backward needs a cache from forward(train_mode=True)")
    cfg = model.config
    p = model.params
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    dlogits = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))

    z_final = cache["z_final"]
    grads["head.W"] += dlogits.T @ z_final
    grads["head.b"] += dlogits.sum(axis=0)
    dz = dlogits @ p["head.W"]

    for i in reversed(range(len(cfg.fusion_hidden_dims))):
        z_in, ln_out, ln_cache, mask = cache["layers"][i]
        if mask is not None:
            dz = dz * mask
        dz = dz * (ln_out > 0)
        if ln_cache is not None:
            dz, dg, db_ln = _layernorm_backward(dz, ln_cache)
            grads[f"fuse{i}.ln_g"] += dg
            grads[f"fuse{i}.ln_b"] += db_ln
        grads[f"fuse{i}.W"] += dz.T @ z_in
        grads[f"fuse{i}.b"] += dz.sum(axis=0)
        dz = dz @ p[f"fuse{i}.W"]

    if cfg.fusion_kind == "concat":
        P = cfg.proj_dim
        dpv, dpt = dz[:, :P], dz[:, P:]
    else:
        n = dz.shape[0]
        dtokens = np.repeat(dz[:, None, :], 2, axis=1) / 2.0
        for i in reversed(range(cfg.attention_layers)):
            dtokens = _attention_layer_backward(cfg, p, grads, i, cache["attn"][i], dtokens)
        grads["emb.e_v"] += dtokens[:, 0, :].sum(axis=0)
        grads["emb.e_t"] += dtokens[:, 1, :].sum(axis=0)
        dpv, dpt = dtokens[:, 0, :], dtokens[:, 1, :]

    for side, dout, x in (("v", dpv, cache["x_v"]), ("t", dpt, cache["x_t"])):
        pre, mask = cache[f"proj_{side}"]
        if mask is not None:
            dout = dout * mask
        dpre = dout * (pre > 0)
        grads[f"proj_{side}.W"] += dpre.T @ x
        grads[f"proj_{side}.b"] += dpre.sum(axis=0)

    return grads


def _attention_layer_backward(cfg, p, grads, i: int, ac, dnormed: np.ndarray):
    tokens, qh, kh, vh, attn, ctx, ln_cache = ac
    n, t, P = tokens.shape
    H = cfg.attention_heads
    hd = P // H

    if ln_cache is not None:
        dresidual, dg, db = _layernorm_backward(dnormed, ln_cache)
        grads[f"attn{i}.ln_g"] += dg
        grads[f"attn{i}.ln_b"] += db
    else:
        dresidual = dnormed

    dout = dresidual  # residual branch handled at the end
    grads[f"attn{i}.Wo"] += dout.reshape(-1, P).T @ ctx.reshape(-1, P)
    dctx = dout @ p[f"attn{i}.Wo"]
    dctx_h = dctx.reshape(n, t, H, hd).transpose(0, 2, 1, 3)

    dattn = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx_h
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh / np.sqrt(hd)
    dkh = dscores.transpose(0, 1, 3, 2) @ qh / np.sqrt(hd)

    def merge(x):
        return x.transpose(0, 2, 1, 3).reshape(n, t, P)

    dq, dk, dv = merge(dqh), merge(dkh), merge(dvh)
    flat_tokens = tokens.reshape(-1, P)
    grads[f"attn{i}.Wq"] += dq.reshape(-1, P).T @ flat_tokens
    grads[f"attn{i}.Wk"] += dk.reshape(-1, P).T @ flat_tokens
    grads[f"attn{i}.Wv"] += dv.reshape(-1, P).T @ flat_tokens

    dtokens = dresidual + dq @ p[f"attn{i}.Wq"] + dk @ p[f"attn{i}.Wk"] + dv @ p[f"attn{i}.Wv"]
    return dtokens


def predict(model: FusionModel, x_v: np.ndarray, x_t: np.ndarray):
    """Eval-mode class probabilities and argmax label ordinal.

    Exact probability ties resolve to the lowest class ordinal.
    """
    logits, _ = forward(model, x_v, x_t, train_mode=False)
    if not np.isfinite(logits).all():
        raise NonFiniteLogits("model produced non-finite logits")
    probs = _softmax_lastaxis(logits)
    preds = probs.argmax(axis=1)  # argmax returns the first (lowest) index on ties
    return probs, preds


# ---------------------------------------------------------------------------
# Checkpoint serialization (magic MTGC)
# ---------------------------------------------------------------------------


def write_checkpoint(path, model: FusionModel, metadata: dict | None = None) -> None:
    meta = dict(metadata or {})
    meta["config"] = model.config.to_json_dict()
    meta.setdefault("fingerprint", model.config.fingerprint())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<B", 1))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name in parameter_names(model.config):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint(path) -> tuple[FusionModel, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version = data[4]
    if version != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<I", data, 5)
    meta = json.loads(data[9 : 9 + blob_len].decode("utf-8"))
    cfg = ModelConfig.from_json_dict(meta["config"])
    pos = 9 + blob_len
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(cfg):
        ndim = data[pos]
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        params[name] = arr.astype(np.float64)
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    if meta.get("fingerprint") and meta["fingerprint"] != cfg.fingerprint():
        raise ValueError(f"{path}: fingerprint does not match embedded config")
    model = FusionModel(cfg, params)
    model.check_finite()
    return model, meta
