from .encoders import assemble_nodes, global_encode, modal_encode, positional_encode
from .graph import affinity, gcn_layer, mmr_forward
from .head import cross_entropy_loss, fuse_classify, node_project
from .network import FULL, MMRNetwork, VariantSpec, batch_forward_probs, build_variant

__all__ = [
    "FULL",
    "MMRNetwork",
    "VariantSpec",
    "affinity",
    "assemble_nodes",
    "batch_forward_probs",
    "build_variant",
    "cross_entropy_loss",
    "fuse_classify",
    "gcn_layer",
    "global_encode",
    "mmr_forward",
    "modal_encode",
    "node_project",
    "positional_encode",
]
