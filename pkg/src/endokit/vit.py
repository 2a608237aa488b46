"""Desk-scale Vision Transformer multi-label classifier in float64 numpy.

Architecture: flatten+project patch embedding, learned class token and
positional embeddings, pre-layernorm residual encoder blocks (multi-head
self-attention, then a GELU MLP), final layernorm, and a 17-way sigmoid
head on the class token. Forward and reverse-mode math are written out by
hand so gradients can be verified against finite differences.

Frozen layout conventions (checkpoints depend on them):

* Patches are enumerated row-major over the patch grid; within a patch the
  pixel order is (channel, y, x), C-contiguous.
* Parameters are a flat dict of named float64 arrays; ``param_names`` gives
  the canonical ordering used by checkpoints and the optimizer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

from . import labels as lb
from .errors import NonFinite, SchemaMismatch, ShapeMismatch

LN_EPS = 1e-12
CLAMP = 1e-12
CHECKPOINT_MAGIC = b"ENDOKIT-CKPT-v1\n"

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    patch_size: int = 8
    channels: int = 3
    hidden_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    mlp_dim: int = 64
    num_classes: int = lb.NUM_LABELS

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ShapeMismatch("image_size must be divisible by patch_size")
        if self.hidden_dim % self.num_heads:
            raise ShapeMismatch("hidden_dim must be divisible by num_heads")
        if self.num_classes != lb.NUM_LABELS:
            raise ShapeMismatch(f"num_classes is fixed at {lb.NUM_LABELS}")
        if min(self.image_size, self.patch_size, self.channels, self.hidden_dim,
               self.num_layers, self.num_heads, self.mlp_dim) < 1:
            raise ShapeMismatch("all dimensions must be positive")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size * self.patch_size


TOY_CONFIG = ViTConfig()
# ViT-Base/16 geometry at 224x224 input: 14x14 = 196 patches + class token.
# Full-scale training is out of scope; this constant documents the shape.
FULL_CONFIG = ViTConfig(
    image_size=224,
    patch_size=16,
    channels=3,
    hidden_dim=768,
    num_layers=12,
    num_heads=12,
    mlp_dim=3072,
)

_LAYER_FIELDS = (
    "ln1_g", "ln1_b",
    "qw", "qb", "kw", "kb", "vw", "vb", "ow", "ob",
    "ln2_g", "ln2_b",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)


def param_names(cfg: ViTConfig) -> list[str]:
    names = ["patch_proj_w", "patch_proj_b", "cls_token", "pos_embed"]
    for i in range(cfg.num_layers):
        names.extend(f"L{i}.{f}" for f in _LAYER_FIELDS)
    names.extend(["final_ln_g", "final_ln_b", "head_w", "head_b"])
    return names


def param_shapes(cfg: ViTConfig) -> dict[str, tuple[int, ...]]:
    d, m = cfg.hidden_dim, cfg.mlp_dim
    shapes: dict[str, tuple[int, ...]] = {
        "patch_proj_w": (cfg.patch_dim, d),
        "patch_proj_b": (d,),
        "cls_token": (d,),
        "pos_embed": (cfg.num_tokens, d),
        "final_ln_g": (d,),
        "final_ln_b": (d,),
        "head_w": (d, cfg.num_classes),
        "head_b": (cfg.num_classes,),
    }
    layer_shapes = {
        "ln1_g": (d,), "ln1_b": (d,),
        "qw": (d, d), "qb": (d,), "kw": (d, d), "kb": (d,),
        "vw": (d, d), "vb": (d,), "ow": (d, d), "ob": (d,),
        "ln2_g": (d,), "ln2_b": (d,),
        "fc1_w": (d, m), "fc1_b": (m,), "fc2_w": (m, d), "fc2_b": (d,),
    }
    for i in range(cfg.num_layers):
        for f, shape in layer_shapes.items():
            shapes[f"L{i}.{f}"] = shape
    return shapes


def init_params(cfg: ViTConfig, seed: int) -> Params:
    """Seeded Gaussian (sigma 0.02) weights, unit layernorm gains, zero biases
    and class token."""
    gen = np.random.Generator(np.random.PCG64(seed))
    params: Params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.endswith("_b") or name == "cls_token":
            params[name] = np.zeros(shape)
        else:
            params[name] = gen.normal(0.0, 0.02, size=shape)
    return params


def check_params(params: Params, cfg: ViTConfig) -> None:
    shapes = param_shapes(cfg)
    missing = set(shapes) - set(params)
    extra = set(params) - set(shapes)
    if missing or extra:
        raise ShapeMismatch(f"parameter names do not match config (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected shape {shape}, got {params[name].shape}")


def patchify(image: np.ndarray, cfg: ViTConfig) -> np.ndarray:
    """(C, H, W) image -> (num_patches, patch_dim) rows in the frozen order."""
    image = np.asarray(image, dtype=np.float64)
    expected = (cfg.channels, cfg.image_size, cfg.image_size)
    if image.shape != expected:
        raise ShapeMismatch(f"expected image shape {expected}, got {image.shape}")
    p, g = cfg.patch_size, cfg.grid
    # (C, gy, p, gx, p) -> (gy, gx, C, p, p) -> (N, C*p*p)
    tiles = image.reshape(cfg.channels, g, p, g, p).transpose(1, 3, 0, 2, 4)
    return np.ascontiguousarray(tiles).reshape(cfg.num_patches, cfg.patch_dim)


def patch_embed(image: np.ndarray, params: Params, cfg: ViTConfig) -> np.ndarray:
    """Projected patch tokens with class token prepended and positions added."""
    patches = patchify(image, cfg)
    tokens = patches @ params["patch_proj_w"] + params["patch_proj_b"]
    x = np.vstack([params["cls_token"][None, :], tokens])
    return x + params["pos_embed"]


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS):
    """Rowwise layernorm; returns (y, xhat, inv_std) for reuse in backward."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return gain * xhat + bias, xhat, inv_std


def _layer_norm_backward(dy, xhat, inv_std, gain):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def gelu(u: np.ndarray) -> np.ndarray:
    return 0.5 * u * (1.0 + erf(u / np.sqrt(2.0)))


def _gelu_grad(u: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(u / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
    return cdf + u * pdf


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, num_heads, d // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _attention_forward(tokens: np.ndarray, lp: dict[str, np.ndarray], num_heads: int):
    t, d = tokens.shape
    if d % num_heads:
        raise ShapeMismatch("token width must be divisible by num_heads")
    scale = 1.0 / np.sqrt(d // num_heads)
    q = _split_heads(tokens @ lp["qw"] + lp["qb"], num_heads)
    k = _split_heads(tokens @ lp["kw"] + lp["kb"], num_heads)
    v = _split_heads(tokens @ lp["vw"] + lp["vb"], num_heads)
    att = softmax_rows(q @ k.transpose(0, 2, 1) * scale)
    ctx = _merge_heads(att @ v)
    out = ctx @ lp["ow"] + lp["ob"]
    cache = {"tokens": tokens, "q": q, "k": k, "v": v, "att": att, "ctx": ctx, "scale": scale}
    return out, cache


def _attention_backward(dout: np.ndarray, cache, lp: dict[str, np.ndarray], num_heads: int):
    tokens, q, k, v = cache["tokens"], cache["q"], cache["k"], cache["v"]
    att, ctx, scale = cache["att"], cache["ctx"], cache["scale"]
    grads = {
        "ow": ctx.T @ dout,
        "ob": dout.sum(axis=0),
    }
    dctx = _split_heads(dout @ lp["ow"].T, num_heads)
    datt = dctx @ v.transpose(0, 2, 1)
    dv = att.transpose(0, 2, 1) @ dctx
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    dq = dscores @ k * scale
    dk = dscores.transpose(0, 2, 1) @ q * scale
    dtokens = np.zeros_like(tokens)
    for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
        flat = _merge_heads(dproj)
        grads[name + "w"] = tokens.T @ flat
        grads[name + "b"] = flat.sum(axis=0)
        dtokens += flat @ lp[name + "w"].T
    return dtokens, grads


def attention(tokens: np.ndarray, layer_params: dict[str, np.ndarray], num_heads: int) -> np.ndarray:
    """Multi-head self-attention over a (tokens, dim) array."""
    out, _ = _attention_forward(np.asarray(tokens, dtype=np.float64), layer_params, num_heads)
    return out


def layer_params_view(params: Params, layer: int) -> dict[str, np.ndarray]:
    prefix = f"L{layer}."
    return {f: params[prefix + f] for f in _LAYER_FIELDS}


def _forward_cached(image: np.ndarray, params: Params, cfg: ViTConfig):
    patches = patchify(image, cfg)
    tokens = patches @ params["patch_proj_w"] + params["patch_proj_b"]
    x = np.vstack([params["cls_token"][None, :], tokens]) + params["pos_embed"]
    cache: dict = {"patches": patches, "blocks": []}
    for i in range(cfg.num_layers):
        lp = layer_params_view(params, i)
        block: dict = {"x_in": x}
        n1, xhat1, inv1 = layer_norm(x, lp["ln1_g"], lp["ln1_b"])
        a, att_cache = _attention_forward(n1, lp, cfg.num_heads)
        x = x + a
        block.update(n1=n1, xhat1=xhat1, inv1=inv1, att=att_cache, x_mid=x)
        n2, xhat2, inv2 = layer_norm(x, lp["ln2_g"], lp["ln2_b"])
        u = n2 @ lp["fc1_w"] + lp["fc1_b"]
        g = gelu(u)
        m = g @ lp["fc2_w"] + lp["fc2_b"]
        x = x + m
        block.update(n2=n2, xhat2=xhat2, inv2=inv2, u=u, g=g)
        cache["blocks"].append(block)
    nf, xhatf, invf = layer_norm(x, params["final_ln_g"], params["final_ln_b"])
    logits = nf[0] @ params["head_w"] + params["head_b"]
    scores = 1.0 / (1.0 + np.exp(-logits))
    cache.update(x_out=x, nf=nf, xhatf=xhatf, invf=invf, logits=logits, scores=scores)
    return scores, cache


def forward(image: np.ndarray, params: Params, cfg: ViTConfig) -> np.ndarray:
    """17 class scores in (0, 1)."""
    check_params(params, cfg)
    scores, _ = _forward_cached(image, params, cfg)
    if not np.all(np.isfinite(scores)):
        raise NonFinite("forward produced non-finite scores")
    return scores


def _target_vector(target: lb.LabelSet) -> np.ndarray:
    return np.array([(target >> i) & 1 for i in range(lb.NUM_LABELS)], dtype=np.float64)


def bce_loss(scores: np.ndarray, target: lb.LabelSet) -> float:
    """Mean binary cross-entropy over the 17 classes; log inputs clamped."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (lb.NUM_LABELS,):
        raise ShapeMismatch(f"expected {lb.NUM_LABELS} scores, got shape {scores.shape}")
    y = _target_vector(target)
    loss = -(y * np.log(np.maximum(scores, CLAMP))
             + (1.0 - y) * np.log(np.maximum(1.0 - scores, CLAMP)))
    return float(loss.mean())


def loss_and_grads(
    image: np.ndarray, target: lb.LabelSet, params: Params, cfg: ViTConfig
) -> tuple[float, Params]:
    """BCE loss and its exact gradients with respect to every parameter."""
    check_params(params, cfg)
    scores, cache = _forward_cached(image, params, cfg)
    if not np.all(np.isfinite(scores)):
        raise NonFinite("forward produced non-finite scores")
    y = _target_vector(target)
    loss = bce_loss(scores, target)
    grads: Params = {}

    # Loss -> logits. The clamp zeroes the gradient of a saturated branch.
    n = float(lb.NUM_LABELS)
    dscores = (-y * (scores > CLAMP) / np.maximum(scores, CLAMP)
               + (1.0 - y) * (1.0 - scores > CLAMP) / np.maximum(1.0 - scores, CLAMP)) / n
    dlogits = dscores * scores * (1.0 - scores)

    nf = cache["nf"]
    grads["head_w"] = np.outer(nf[0], dlogits)
    grads["head_b"] = dlogits.copy()
    dnf = np.zeros_like(nf)
    dnf[0] = params["head_w"] @ dlogits
    dx, dg, db = _layer_norm_backward(dnf, cache["xhatf"], cache["invf"], params["final_ln_g"])
    grads["final_ln_g"] = dg
    grads["final_ln_b"] = db

    for i in range(cfg.num_layers - 1, -1, -1):
        lp = layer_params_view(params, i)
        block = cache["blocks"][i]
        # MLP branch.
        dm = dx
        grads[f"L{i}.fc2_w"] = block["g"].T @ dm
        grads[f"L{i}.fc2_b"] = dm.sum(axis=0)
        dgact = dm @ lp["fc2_w"].T
        du = dgact * _gelu_grad(block["u"])
        grads[f"L{i}.fc1_w"] = block["n2"].T @ du
        grads[f"L{i}.fc1_b"] = du.sum(axis=0)
        dn2 = du @ lp["fc1_w"].T
        dx_mid, dg2, db2 = _layer_norm_backward(dn2, block["xhat2"], block["inv2"], lp["ln2_g"])
        grads[f"L{i}.ln2_g"] = dg2
        grads[f"L{i}.ln2_b"] = db2
        dx = dx + dx_mid  # residual join at x_mid
        # Attention branch.
        da = dx
        dn1, att_grads = _attention_backward(da, block["att"], lp, cfg.num_heads)
        for key, value in att_grads.items():
            grads[f"L{i}.{key}"] = value
        dx_in, dg1, db1 = _layer_norm_backward(dn1, block["xhat1"], block["inv1"], lp["ln1_g"])
        grads[f"L{i}.ln1_g"] = dg1
        grads[f"L{i}.ln1_b"] = db1
        dx = dx + dx_in  # residual join at x_in

    grads["pos_embed"] = dx.copy()
    grads["cls_token"] = dx[0].copy()
    dtok = dx[1:]
    grads["patch_proj_w"] = cache["patches"].T @ dtok
    grads["patch_proj_b"] = dtok.sum(axis=0)
    return loss, grads


def backward(image: np.ndarray, target: lb.LabelSet, params: Params, cfg: ViTConfig) -> Params:
    """Gradients of the BCE loss with respect to all parameters."""
    _, grads = loss_and_grads(image, target, params, cfg)
    return grads


def save_checkpoint(path: str, params: Params, cfg: ViTConfig) -> None:
    """Versioned binary checkpoint: magic, JSON header, raw float64 buffers."""
    check_params(params, cfg)
    names = param_names(cfg)
    header = {
        "config": asdict(cfg),
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in names:
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[Params, ViTConfig]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise SchemaMismatch(f"{path}: not an endokit checkpoint")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        cfg = ViTConfig(**header["config"])
        shapes = param_shapes(cfg)
        params: Params = {}
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in shapes or shapes[name] != shape:
                raise SchemaMismatch(f"{path}: unexpected tensor {name} {shape}")
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise SchemaMismatch(f"{path}: truncated tensor data for {name}")
            params[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise SchemaMismatch(f"{path}: trailing bytes after tensor data")
    check_params(params, cfg)
    return params, cfg
