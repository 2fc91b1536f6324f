"""Triple-attention transformer for next-step creep prediction.

The network embeds a creep/time history, runs it through a stack of
padding-masked self-attention encoder layers, summarizes the sequence
with hybrid pooling (masked mean + learned attention + last valid
token), and fuses that context with a three-path feature encoder
(direct MLP, per-feature attention, cross-sample batch attention)
before a two-layer prediction head emits the next creep value.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ConfigError, MaskError, ShapeError, Tensor

FEATURE_NAMES = ("density", "fc", "E")


@dataclass
class TataConfig:
    """Architecture hyperparameters.

    Defaults reproduce the tuned full-size configuration; `d_ff` is pinned
    to 4*d_model, and `hidden_dim` / `d_intermediate` default to d_model
    and d_model // 2 when not given.
    """

    d_model: int = 192
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int | None = None
    dropout: float = 0.057
    hidden_dim: int | None = None
    feat_embed_dim: int = 16
    feat_heads: int = 4
    batch_heads: int = 4
    d_intermediate: int | None = None
    target_len: int = 1
    input_dim: int = 3
    max_seq_len: int = 160

    def __post_init__(self):
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model
        if self.hidden_dim is None:
            self.hidden_dim = self.d_model
        if self.d_intermediate is None:
            self.d_intermediate = max(1, self.d_model // 2)
        extents = {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "hidden_dim": self.hidden_dim,
            "feat_embed_dim": self.feat_embed_dim,
            "feat_heads": self.feat_heads,
            "batch_heads": self.batch_heads,
            "d_intermediate": self.d_intermediate,
            "target_len": self.target_len,
            "input_dim": self.input_dim,
            "max_seq_len": self.max_seq_len,
        }
        for name, value in extents.items():
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.d_ff != 4 * self.d_model:
            raise ConfigError(f"d_ff must equal 4*d_model, got {self.d_ff}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.feat_embed_dim % self.feat_heads != 0:
            raise ConfigError("feat_embed_dim must be divisible by feat_heads")
        if self.feat_embed_dim % self.batch_heads != 0:
            raise ConfigError("feat_embed_dim must be divisible by batch_heads")
        if not 0.0 <= self.dropout <= 0.3:
            raise ConfigError(f"dropout must be in [0, 0.3], got {self.dropout}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TataConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TataConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class AblationSpec:
    """Structural on/off switches for the architecture's removable parts."""

    mean_pool: bool = True
    attn_pool: bool = True
    last_pool: bool = True
    feature_attention: bool = True
    batch_attention: bool = True

    def __post_init__(self):
        if not (self.mean_pool or self.attn_pool or self.last_pool):
            raise ConfigError("at least one pooling method must stay enabled")

    @property
    def n_pools(self) -> int:
        return int(self.mean_pool) + int(self.attn_pool) + int(self.last_pool)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AblationSpec":
        return cls(**d)


@dataclass
class BatchInput:
    """One forward batch: padded histories, features, and validity info.

    pad_mask[i, t] == 0 exactly for t < lengths[i], 1 for padding. Creep
    values are expected normalized (x/alpha), times as ln(1+day) and
    features z-scored; see the data pipeline.
    """

    creep_hist: np.ndarray
    time_hist: np.ndarray
    features: np.ndarray
    pad_mask: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        for name in ("creep_hist", "time_hist", "features", "pad_mask"):
            arr = np.asarray(getattr(self, name))
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float64)
            setattr(self, name, arr)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        b, t = self.creep_hist.shape
        if self.time_hist.shape != (b, t) or self.pad_mask.shape != (b, t):
            raise ShapeError(
                f"batch arrays disagree: creep {self.creep_hist.shape}, "
                f"time {self.time_hist.shape}, mask {self.pad_mask.shape}"
            )
        if self.features.shape != (b, len(FEATURE_NAMES)):
            raise ShapeError(f"features must be [B, 3], got {self.features.shape}")
        if np.any(self.lengths < 1) or np.any(self.lengths > t):
            raise ValueError(f"lengths must lie in [1, {t}]")
        expected = (np.arange(t)[None, :] >= self.lengths[:, None]).astype(self.pad_mask.dtype)
        if not np.array_equal(self.pad_mask, expected):
            raise ValueError("pad_mask inconsistent with lengths")

    @property
    def batch_size(self) -> int:
        return self.creep_hist.shape[0]

    @property
    def seq_len(self) -> int:
        return self.creep_hist.shape[1]

    @classmethod
    def from_samples(cls, samples, dtype=np.float64) -> "BatchInput":
        """Pad a list of normalized TrainingSamples into one batch."""
        if not samples:
            raise ValueError("cannot build a batch from zero samples")
        lengths = np.array([len(s.creep_prefix) for s in samples], dtype=np.int64)
        b, t = len(samples), int(lengths.max())
        creep = np.zeros((b, t), dtype=dtype)
        time = np.zeros((b, t), dtype=dtype)
        feats = np.zeros((b, len(FEATURE_NAMES)), dtype=dtype)
        for i, s in enumerate(samples):
            creep[i, : lengths[i]] = s.creep_prefix
            time[i, : lengths[i]] = s.time_prefix
            feats[i] = s.features
        mask = (np.arange(t)[None, :] >= lengths[:, None]).astype(dtype)
        return cls(creep, time, feats, mask, lengths)


def positional_encoding(seq_len: int, d_model: int, max_seq_len: int | None = None,
                        one_based: bool = False) -> np.ndarray:
    """Sinusoidal table [seq_len, d_model]; even dims sine, odd dims cosine.

    Positions are 0-based by default; pass one_based=True for 1..T indexing.
    """
    if max_seq_len is not None and seq_len > max_seq_len:
        raise ShapeError(f"sequence length {seq_len} exceeds max {max_seq_len}")
    pos = np.arange(seq_len, dtype=np.float64)[:, None] + (1.0 if one_based else 0.0)
    even = np.arange(0, d_model, 2, dtype=np.float64)
    denom = np.power(10000.0, even / d_model)
    pe = np.zeros((seq_len, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos / denom)
    pe[:, 1::2] = np.cos(pos / denom[: d_model // 2])
    return pe


def build_attention_mask(lengths, batch_size: int, seq_len: int) -> np.ndarray:
    """3-d mask [B, T, T]: entry (i, j, k) is 1 iff key k is padding for row i."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (batch_size,):
        raise ShapeError(f"expected {batch_size} lengths, got {lengths.shape}")
    if np.any(lengths < 1) or np.any(lengths > seq_len):
        raise ValueError(f"lengths must lie in [1, {seq_len}]")
    key_invalid = (np.arange(seq_len)[None, :] >= lengths[:, None]).astype(np.float64)
    return np.broadcast_to(key_invalid[:, None, :], (batch_size, seq_len, seq_len)).copy()


@dataclass(frozen=True)
class ParamSpec:
    shape: tuple[int, ...]
    fan_in: int | None = None  # None => constant fill below
    fill: float | None = None


def param_specs(config: TataConfig, ablation: AblationSpec | None = None) -> dict[str, ParamSpec]:
    """Name -> shape/init table for every learnable tensor implied by the config."""
    ab = ablation or AblationSpec()
    d, hid = config.d_model, config.hidden_dim
    fdim, ndim_in = config.feat_embed_dim, config.input_dim
    specs: dict[str, ParamSpec] = {}

    def aff(prefix, n_out, n_in, w="W", b="b"):
        specs[f"{prefix}.{w}"] = ParamSpec((n_out, n_in), n_in)
        specs[f"{prefix}.{b}"] = ParamSpec((n_out,), n_in)

    def lnorm(prefix, dim):
        specs[f"{prefix}.gamma"] = ParamSpec((dim,), fill=1.0)
        specs[f"{prefix}.beta"] = ParamSpec((dim,), fill=0.0)

    def mha(prefix, dim):
        for name in ("Wq", "Wk", "Wv", "Wo"):
            specs[f"{prefix}.{name}"] = ParamSpec((dim, dim), dim)

    aff("embed.creep", d, 1)
    aff("embed.time", d, 1)
    for layer in range(config.n_layers):
        mha(f"enc{layer}.attn", d)
        lnorm(f"enc{layer}.ln1", d)
        aff(f"enc{layer}.ffn", config.d_ff, d, w="W1", b="b1")
        aff(f"enc{layer}.ffn", d, config.d_ff, w="W2", b="b2")
        lnorm(f"enc{layer}.ln2", d)

    aff("feat.main", 2 * hid, ndim_in, w="W1", b="b1")
    lnorm("feat.main.ln1", 2 * hid)
    aff("feat.main", hid, 2 * hid, w="W2", b="b2")
    lnorm("feat.main.ln2", hid)
    combined = hid
    if ab.feature_attention:
        for i in range(ndim_in):
            aff(f"feat.proj{i}", fdim, 1)
        mha("feat.mha", fdim)
        lnorm("feat.ln", fdim)
        combined += ndim_in * fdim
    if ab.batch_attention:
        aff("batch.proj", fdim, ndim_in)
        mha("batch.mha", fdim)
        lnorm("batch.ln", fdim)
        combined += fdim
    aff("integrate", hid, combined)
    lnorm("integrate.ln", hid)

    if ab.attn_pool:
        specs["pool.attn.W"] = ParamSpec((1, d), d)
    specs["pool.hyb.W"] = ParamSpec((d, ab.n_pools * d), ab.n_pools * d)
    specs["comb.W"] = ParamSpec((d, d + hid), d + hid)
    lnorm("final_ln", d)
    aff("pred", config.d_intermediate, d, w="W1", b="b1")
    aff("pred", config.target_len, config.d_intermediate, w="W2", b="b2")
    return specs


def count_params(config: TataConfig, ablation: AblationSpec | None = None) -> int:
    """Exact number of scalar learnables for a config (and optional ablation)."""
    return sum(int(np.prod(s.shape)) for s in param_specs(config, ablation).values())


class TataModel:
    """Instantiated parameter set plus the forward pass.

    Parameters live in an ordered name -> Tensor dict; weights draw from
    uniform(+-sqrt(1/fan_in)), norm scales start at gamma=1 / beta=0.
    """

    def __init__(self, config: TataConfig, ablation: AblationSpec | None = None,
                 seed: int = 0, dtype=np.float64):
        self.config = config
        self.ablation = ablation or AblationSpec()
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        for name, spec in param_specs(config, self.ablation).items():
            if spec.fill is not None:
                data = np.full(spec.shape, spec.fill, dtype=self.dtype)
            else:
                bound = math.sqrt(1.0 / spec.fan_in)
                data = self._rng.uniform(-bound, bound, size=spec.shape).astype(self.dtype)
            self.params[name] = Tensor(data, requires_grad=True)
        self._pe_cache: dict[int, np.ndarray] = {}

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, arr in state.items():
            if arr.shape != self.params[name].data.shape:
                raise ShapeError(
                    f"{name}: checkpoint shape {arr.shape} != model {self.params[name].data.shape}"
                )
            self.params[name].data = arr.astype(self.dtype).copy()

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    # -- building blocks ----------------------------------------------------

    def embed_sequence(self, creep_hist: np.ndarray, time_hist: np.ndarray) -> Tensor:
        """Sum of scalar-affine creep and time embeddings, [B, T, d_model]."""
        creep = np.asarray(creep_hist, dtype=self.dtype)
        time = np.asarray(time_hist, dtype=self.dtype)
        if creep.shape != time.shape or creep.ndim != 2:
            raise ShapeError(f"history shapes disagree: {creep.shape} vs {time.shape}")
        b, t = creep.shape
        e_creep = T.affine(Tensor(creep.reshape(b, t, 1)),
                           self._p("embed.creep.W"), self._p("embed.creep.b"))
        e_time = T.affine(Tensor(time.reshape(b, t, 1)),
                          self._p("embed.time.W"), self._p("embed.time.b"))
        return e_creep + e_time

    def _positional(self, seq_len: int) -> np.ndarray:
        if seq_len not in self._pe_cache:
            pe = positional_encoding(seq_len, self.config.d_model, self.config.max_seq_len)
            self._pe_cache[seq_len] = pe.astype(self.dtype)
        return self._pe_cache[seq_len]

    def _mha(self, x: Tensor, prefix: str, n_heads: int, mask: np.ndarray | None) -> Tensor:
        """Multi-head scaled dot-product attention over axis 1 of [B, S, dim]."""
        b, s, dim = x.shape
        dk = dim // n_heads

        def split_heads(t):
            return T.transpose(T.reshape(t, (b, s, n_heads, dk)), (0, 2, 1, 3))

        # 1/sqrt(d_k) folded into Q: cheaper than scaling the T x T score grid.
        q = split_heads(T.linear(x, self._p(f"{prefix}.Wq")) * (1.0 / math.sqrt(dk)))
        k = split_heads(T.linear(x, self._p(f"{prefix}.Wk")))
        v = split_heads(T.linear(x, self._p(f"{prefix}.Wv")))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2)))
        if mask is None:
            mask = np.zeros((1, 1, 1, s), dtype=self.dtype)
        probs = T.masked_softmax(scores, mask)
        ctx = T.matmul(probs, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, s, dim))
        out = T.linear(ctx, self._p(f"{prefix}.Wo"))
        self._last_attn_probs = probs.data
        return out

    def self_attention(self, x: Tensor, attn_mask: np.ndarray, layer: int) -> Tensor:
        """Bare multi-head attention for one encoder layer (no residual/norm).

        attn_mask is the [B, T, T] padding mask; broadcast across heads.
        """
        mask4 = attn_mask[:, None, :, :]
        return self._mha(x, f"enc{layer}.attn", self.config.n_heads, mask4)

    def encoder_layer(self, x: Tensor, attn_mask: np.ndarray, layer: int,
                      training: bool = False) -> Tensor:
        """Post-norm encoder block: attention sublayer then FFN sublayer."""
        attn = self.self_attention(x, attn_mask, layer)
        x1 = T.layer_norm(x + attn, self._p(f"enc{layer}.ln1.gamma"),
                          self._p(f"enc{layer}.ln1.beta"))
        z = T.relu(T.affine(x1, self._p(f"enc{layer}.ffn.W1"), self._p(f"enc{layer}.ffn.b1")))
        z = T.affine(z, self._p(f"enc{layer}.ffn.W2"), self._p(f"enc{layer}.ffn.b2"))
        z = T.dropout(z, self.config.dropout, training, self._rng)
        return T.layer_norm(x1 + z, self._p(f"enc{layer}.ln2.gamma"),
                            self._p(f"enc{layer}.ln2.beta"))

    def encode_features(self, features: np.ndarray, training: bool = False) -> Tensor:
        """Three-path feature encoder, [B, 3] -> [B, hidden_dim]."""
        f_np = np.asarray(features, dtype=self.dtype)
        if f_np.ndim != 2 or f_np.shape[1] != self.config.input_dim:
            raise ShapeError(f"features must be [B, {self.config.input_dim}], got {f_np.shape}")
        b = f_np.shape[0]
        if b == 0:
            raise ValueError("encode_features needs a non-empty batch")
        f = Tensor(f_np)

        z = T.relu(T.affine(f, self._p("feat.main.W1"), self._p("feat.main.b1")))
        z = T.layer_norm(z, self._p("feat.main.ln1.gamma"), self._p("feat.main.ln1.beta"))
        z = T.relu(T.affine(z, self._p("feat.main.W2"), self._p("feat.main.b2")))
        f_main = T.layer_norm(z, self._p("feat.main.ln2.gamma"), self._p("feat.main.ln2.beta"))
        parts = [f_main]

        fdim = self.config.feat_embed_dim
        if self.ablation.feature_attention:
            tokens = [
                T.reshape(
                    T.affine(Tensor(f_np[:, i : i + 1]),
                             self._p(f"feat.proj{i}.W"), self._p(f"feat.proj{i}.b")),
                    (b, 1, fdim),
                )
                for i in range(self.config.input_dim)
            ]
            fproj = T.concat(tokens, axis=1)  # [B, input_dim, fdim]
            attn = self._mha(fproj, "feat.mha", self.config.feat_heads, mask=None)
            f_feat = T.layer_norm(attn + fproj, self._p("feat.ln.gamma"), self._p("feat.ln.beta"))
            parts.append(T.reshape(f_feat, (b, self.config.input_dim * fdim)))

        if self.ablation.batch_attention:
            fproj = T.affine(f, self._p("batch.proj.W"), self._p("batch.proj.b"))
            seq = T.reshape(fproj, (1, b, fdim))  # samples become the sequence axis
            attn = self._mha(seq, "batch.mha", self.config.batch_heads, mask=None)
            f_batch = T.layer_norm(attn + seq, self._p("batch.ln.gamma"), self._p("batch.ln.beta"))
            parts.append(T.reshape(f_batch, (b, fdim)))

        combined = T.concat(parts, axis=-1)
        z = T.affine(combined, self._p("integrate.W"), self._p("integrate.b"))
        z = T.layer_norm(z, self._p("integrate.ln.gamma"), self._p("integrate.ln.beta"))
        return T.relu(z)

    def hybrid_pool(self, enc: Tensor, pad_mask: np.ndarray, lengths: np.ndarray,
                    return_parts: bool = False):
        """Fuse enabled pooled summaries through tanh(W_hyb [. ⊕ . ⊕ .])."""
        lengths = np.asarray(lengths, dtype=np.int64)
        if np.any(lengths < 1):
            raise MaskError("hybrid_pool: every row needs at least one valid token")
        b, t, _ = enc.shape
        valid = (1.0 - np.asarray(pad_mask)).astype(self.dtype)
        parts, names = [], []
        alpha = None
        if self.ablation.mean_pool:
            total = T.tensor_sum(enc * Tensor(valid[:, :, None]), axis=1)
            c_mean = total * Tensor((1.0 / lengths).astype(self.dtype).reshape(b, 1))
            parts.append(c_mean)
            names.append("mean")
        if self.ablation.attn_pool:
            scores = T.reshape(T.linear(enc, self._p("pool.attn.W")), (b, t))
            alpha = T.masked_softmax(scores, np.asarray(pad_mask, dtype=self.dtype))
            c_attn = T.tensor_sum(enc * T.reshape(alpha, (b, t, 1)), axis=1)
            parts.append(c_attn)
            names.append("attn")
        if self.ablation.last_pool:
            parts.append(T.take_per_batch(enc, lengths - 1))
            names.append("last")
        pooled = T.concat(parts, axis=-1)
        hybrid = T.tanh(T.linear(pooled, self._p("pool.hyb.W")))
        if return_parts:
            return hybrid, dict(zip(names, parts)), alpha
        return hybrid

    def forward(self, batch: BatchInput, training: bool = False) -> Tensor:
        """Predict the next normalized creep value, [B, target_len]."""
        b, t = batch.batch_size, batch.seq_len
        x = self.embed_sequence(batch.creep_hist, batch.time_hist)
        x = x + Tensor(self._positional(t)[None, :, :])
        attn_mask = build_attention_mask(batch.lengths, b, t)
        for layer in range(self.config.n_layers):
            x = self.encoder_layer(x, attn_mask, layer, training)
        context = self.hybrid_pool(x, batch.pad_mask, batch.lengths)
        feats = self.encode_features(batch.features, training)
        h = T.tanh(T.linear(T.concat([context, feats], axis=-1), self._p("comb.W")))
        h = T.layer_norm(h, self._p("final_ln.gamma"), self._p("final_ln.beta"))
        z = T.affine(h, self._p("pred.W1"), self._p("pred.b1"))
        z = T.relu(T.dropout(z, self.config.dropout, training, self._rng))
        return T.affine(z, self._p("pred.W2"), self._p("pred.b2"))

    def predict(self, batch: BatchInput) -> np.ndarray:
        """Eval-mode forward without graph construction."""
        with T.no_grad():
            return self.forward(batch, training=False).data.copy()
