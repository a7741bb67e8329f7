"""Multi-modal reasoning: learned affinity and residual graph convolutions."""

from __future__ import annotations

from ..core import ops
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError

AFFINITY_MODES = ("raw", "row-softmax")


def affinity(nodes, phi_w, phi_b, gamma_w, gamma_b, normalize: str = "raw") -> Tensor:
    """``R[i, j] = phi(v_i) . gamma(v_j)`` with affine ``phi``/``gamma`` (no activation)."""
    if normalize not in AFFINITY_MODES:
        raise ValueError(f"unknown affinity mode {normalize!r}")
    nodes = as_tensor(nodes)
    if nodes.shape[-1] != as_tensor(phi_w).shape[0] or nodes.shape[-1] != as_tensor(gamma_w).shape[0]:
        raise ShapeError(f"node width {nodes.shape[-1]} does not match the affinity projections")
    r = ops.matmul(ops.affine(nodes, phi_w, phi_b), ops.transpose(ops.affine(nodes, gamma_w, gamma_b)))
    if normalize == "row-softmax":
        r = ops.softmax(r, axis=-1)
    return r


def gcn_layer(nodes, r, w_g, w_r, activation: bool = True) -> Tensor:
    """``W_r (R V W_g) + V``, optionally followed by Leaky ReLU."""
    nodes = as_tensor(nodes)
    k = nodes.shape[-2]
    if as_tensor(r).shape[-2:] != (k, k) or as_tensor(w_r).shape != (k, k):
        raise ShapeError(f"R {as_tensor(r).shape} / W_r {as_tensor(w_r).shape} do not match {k} nodes")
    message = ops.matmul(ops.matmul(r, nodes), w_g)
    out = ops.add(ops.matmul(w_r, message), nodes)
    return ops.leaky_relu(out) if activation else out


def layer_params(params, layer: int, shared_from: int | None = None):
    """Pull one layer's tensors out of a name -> Tensor mapping."""
    a = layer if shared_from is None else shared_from
    return (
        params[f"gcn.{a}.phi.w"],
        params[f"gcn.{a}.phi.b"],
        params[f"gcn.{a}.gamma.w"],
        params.get(f"gcn.{a}.gamma.b"),
        params[f"gcn.{layer}.w_g"],
        params[f"gcn.{layer}.w_r"],
    )


def mmr_forward(
    nodes,
    params,
    layers: int,
    normalize: str = "raw",
    shared_affinity: bool = False,
    activation: str = "all-but-last",
    trace: dict | None = None,
) -> Tensor:
    """Run ``layers`` residual GCN layers.

    By default each layer rebuilds its affinity from the current nodes with
    its own projections; ``shared_affinity`` builds R once from the input
    nodes with layer 0's projections and reuses it.  ``activation`` is one of
    ``"all-but-last"``, ``"all"`` or ``"none"``.
    """
    if activation not in ("all-but-last", "all", "none"):
        raise ValueError(f"unknown activation schedule {activation!r}")
    v = as_tensor(nodes)
    r = None
    for layer in range(layers):
        phi_w, phi_b, gamma_w, gamma_b, w_g, w_r = layer_params(
            params, layer, shared_from=0 if shared_affinity else None
        )
        if r is None or not shared_affinity:
            r = affinity(v, phi_w, phi_b, gamma_w, gamma_b, normalize)
        if trace is not None:
            trace.setdefault("affinity", []).append(r)
        act = activation == "all" or (activation == "all-but-last" and layer < layers - 1)
        v = gcn_layer(v, r, w_g, w_r, activation=act)
    return v
