"""Forward-pass FLOPs accounting per architecture component.

Counting convention (documented because published totals for this
architecture are not independently derivable and only component shares
are meaningful):

* one multiply-add = 2 FLOPs, so an affine map costs 2*n_in*n_out + n_out
  per row (the trailing term is the bias add);
* softmax = 5 FLOPs per element, layer norm = 8, elementwise
  activation/add/multiply = 1;
* counts are for a single sample (batch of one) at sequence length T.
"""

from __future__ import annotations

from .model import AblationSpec, TataConfig

COMPONENT_ORDER = (
    "feature_encoder",
    "embeddings",
    "positional_encoding",
    "encoder_layers",
    "pooling",
    "feature_integration",
    "predictor",
)


def affine_flops(n_in: int, n_out: int, rows: int = 1) -> int:
    """2*n_in*n_out multiply-add FLOPs plus the bias add, per row."""
    return rows * (2 * n_in * n_out + n_out)


def _linear_flops(n_in: int, n_out: int, rows: int = 1) -> int:
    return rows * 2 * n_in * n_out


def _layer_norm_flops(dim: int, rows: int = 1) -> int:
    return rows * 8 * dim


def _mha_flops(seq: int, dim: int, n_heads: int, masked: bool) -> int:
    """Self-attention over `seq` tokens of width `dim` (projections included)."""
    total = 3 * _linear_flops(dim, dim, seq)        # Q, K, V
    total += 2 * seq * seq * dim                    # scores QK^T (all heads)
    total += n_heads * seq * seq                    # 1/sqrt(d_k) scaling
    if masked:
        total += n_heads * seq * seq                # mask addition
    total += 5 * n_heads * seq * seq                # softmax
    total += 2 * seq * seq * dim                    # probs @ V
    total += _linear_flops(dim, dim, seq)           # output projection
    return total


def count_flops(config: TataConfig, seq_len: int,
                ablation: AblationSpec | None = None) -> dict[str, int]:
    """Per-component forward FLOPs table; components sum to `total`."""
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    ab = ablation or AblationSpec()
    d, hid, t = config.d_model, config.hidden_dim, seq_len
    fdim, n_in = config.feat_embed_dim, config.input_dim

    embeddings = 2 * affine_flops(1, d, t) + t * d  # two scalar embeddings + sum

    positional = 2 * t * d  # sin/cos generation + addition to the embedding

    per_layer = _mha_flops(t, d, config.n_heads, masked=True)
    per_layer += t * d + _layer_norm_flops(d, t)                    # attn residual + LN
    per_layer += affine_flops(d, config.d_ff, t) + t * config.d_ff  # FFN in + ReLU
    per_layer += affine_flops(config.d_ff, d, t)
    per_layer += t * d + _layer_norm_flops(d, t)                    # FFN residual + LN
    encoder_layers = config.n_layers * per_layer

    feature_encoder = (
        affine_flops(n_in, 2 * hid) + 2 * hid + _layer_norm_flops(2 * hid)
        + affine_flops(2 * hid, hid) + hid + _layer_norm_flops(hid)
    )
    combined = hid
    if ab.feature_attention:
        feature_encoder += n_in * affine_flops(1, fdim)
        feature_encoder += _mha_flops(n_in, fdim, config.feat_heads, masked=False)
        feature_encoder += n_in * fdim + _layer_norm_flops(fdim, n_in)  # residual + LN
        combined += n_in * fdim
    if ab.batch_attention:
        feature_encoder += affine_flops(n_in, fdim)
        feature_encoder += _mha_flops(1, fdim, config.batch_heads, masked=False)
        feature_encoder += fdim + _layer_norm_flops(fdim)
        combined += fdim
    feature_encoder += affine_flops(combined, hid) + _layer_norm_flops(hid) + hid

    pooling = 0
    if ab.mean_pool:
        pooling += 2 * t * d + d        # mask multiply, summation, divide
    if ab.attn_pool:
        pooling += _linear_flops(d, 1, t) + 5 * t + 2 * t * d  # scores, softmax, weighted sum
    pooling += _linear_flops(ab.n_pools * d, d) + d            # W_hyb + tanh

    feature_integration = _linear_flops(d + hid, d) + d + _layer_norm_flops(d)

    predictor = (
        affine_flops(d, config.d_intermediate) + config.d_intermediate
        + affine_flops(config.d_intermediate, config.target_len)
    )

    table = {
        "feature_encoder": feature_encoder,
        "embeddings": embeddings,
        "positional_encoding": positional,
        "encoder_layers": encoder_layers,
        "pooling": pooling,
        "feature_integration": feature_integration,
        "predictor": predictor,
    }
    table["total"] = sum(table[name] for name in COMPONENT_ORDER)
    return table


def flops_shares(table: dict[str, int]) -> dict[str, float]:
    """Component percentages of the total."""
    total = table["total"]
    return {name: 100.0 * table[name] / total for name in COMPONENT_ORDER}


def format_flops_table(table: dict[str, int]) -> str:
    shares = flops_shares(table)
    lines = [f"{'component':<22}{'flops':>16}  {'share':>7}"]
    for name in COMPONENT_ORDER:
        lines.append(f"{name:<22}{table[name]:>16,}  {shares[name]:>6.2f}%")
    lines.append(f"{'total':<22}{table['total']:>16,}  100.00%")
    return "\n".join(lines)
