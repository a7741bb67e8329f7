"""Input branches: global self-attention encoder, modal projections, box codes."""

from __future__ import annotations

import numpy as np

from ..core import ops
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError


def global_encode(global_map, attn_w=None, attn_b=None, fc_w=None, fc_b=None, activation=True):
    """Self-attended global descriptor.

    ``global_map`` is ``(..., H, W, D_g)``.  Each position is scored by the
    1x1 projection ``attn_w`` (``D_g x 1``), the scores are softmax-normalised
    over all ``H*W`` positions, the map is re-weighted residually
    (``G + G * mask``), averaged over space and passed through the FC.
    With ``attn_w=None`` the attention step is skipped (plain ``G_f``).

    Returns ``(descriptor, mask)``; ``mask`` is ``(..., H*W, 1)`` or None.
    """
    g = as_tensor(global_map)
    if g.ndim < 3:
        raise ShapeError(f"global map must be (..., H, W, D), got {g.shape}")
    *lead, h, w, d = g.shape
    if fc_w is not None and as_tensor(fc_w).shape[0] != d:
        raise ShapeError(f"global FC expects width {as_tensor(fc_w).shape[0]}, map has {d}")
    flat = ops.reshape(g, (*lead, h * w, d))
    mask = None
    if attn_w is not None:
        scores = ops.affine(flat, attn_w, attn_b)  # (..., HW, 1)
        mask = ops.softmax(scores, axis=-2)
        flat = ops.add(flat, ops.broadcast_multiply(flat, mask))
    pooled = ops.mean(flat, axis=-2)
    out = ops.affine(pooled, fc_w, fc_b)
    if activation:
        out = ops.leaky_relu(out)
    return out, mask


def modal_encode(rows, w, b) -> Tensor:
    """Row-wise ``LeakyReLU(rows @ w + b)`` for region features or text embeddings."""
    rows = as_tensor(rows)
    if rows.shape[-1] != as_tensor(w).shape[0]:
        raise ShapeError(f"rows have width {rows.shape[-1]}, projection expects {as_tensor(w).shape[0]}")
    return ops.leaky_relu(ops.affine(rows, w, b))


def positional_encode(bboxes, w, b) -> Tensor:
    """Row-wise ``LeakyReLU(box @ w + b)``; boxes are normalised ``(x1, y1, x2, y2)``."""
    boxes = as_tensor(bboxes)
    if boxes.shape[-1] != 4:
        raise ShapeError(f"boxes must have 4 coordinates, got {boxes.shape}")
    if boxes.data.size and (boxes.data.min() < 0.0 or boxes.data.max() > 1.0):
        raise ValueError("box coordinates must lie in [0, 1]")
    return ops.leaky_relu(ops.affine(boxes, w, b))


def assemble_nodes(regions=None, texts=None, positions=None, pos_width: int | None = None) -> Tensor:
    """Stack region then text rows and append each row's positional code.

    ``positions`` must have one row per stacked modal row.  When it is None
    and ``pos_width`` is given, zero codes of that width are appended.
    """
    parts = [as_tensor(x) for x in (regions, texts) if x is not None]
    if not parts:
        raise ShapeError("assemble_nodes needs at least one node source")
    modal = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-2)
    if positions is None:
        if pos_width is None:
            return modal
        positions = Tensor(np.zeros((*modal.shape[:-1], pos_width)))
    positions = as_tensor(positions)
    if positions.shape[:-1] != modal.shape[:-1]:
        raise ShapeError(f"{modal.shape[-2]} modal rows but positional codes have shape {positions.shape}")
    return ops.concat([modal, positions], axis=-1)
