"""Model wiring for the full architecture and its ablation variants."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core.params import LEAKY_GAIN, ParameterStore, seeded_init
from ..core.tensor import Tensor
from ..data.batch import Batch
from ..dims import Dims
from ..exceptions import ConfigError
from .encoders import assemble_nodes, global_encode, modal_encode, positional_encode
from .graph import AFFINITY_MODES, mmr_forward
from .head import PROJECTIONS, cross_entropy_loss, fuse_classify, node_project

GLOBAL_MODES = ("attended", "raw", "off")
DESCRIPTORS = ("probs", "logits")


@dataclass(frozen=True)
class VariantSpec:
    """Which branches feed the fused vector.

    The default is the complete model: attended global branch, region and
    text nodes with positional codes, graph reasoning, mean pooling.
    """

    use_global: str = "attended"
    use_local: bool = True
    use_text: bool = True
    use_bboxes: bool = True
    use_mmr: bool = True
    projection: str = "avg"
    descriptor: str = "probs"
    name: str | None = None

    def __post_init__(self):
        if self.use_global not in GLOBAL_MODES:
            raise ConfigError(f"use_global must be one of {GLOBAL_MODES}, got {self.use_global!r}")
        if self.projection not in PROJECTIONS:
            raise ConfigError(f"projection must be one of {PROJECTIONS}, got {self.projection!r}")
        if self.descriptor not in DESCRIPTORS:
            raise ConfigError(f"descriptor must be one of {DESCRIPTORS}, got {self.descriptor!r}")
        has_nodes = self.use_local or self.use_text
        if self.use_mmr and not has_nodes:
            raise ConfigError("use_mmr requires use_local or use_text")
        if self.use_bboxes and not has_nodes:
            raise ConfigError("use_bboxes requires at least one node source")
        if not has_nodes and self.use_global == "off":
            raise ConfigError("variant has no input branch")

    @property
    def has_nodes(self) -> bool:
        return self.use_local or self.use_text

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        parts = {"attended": ["G_fa"], "raw": ["G_f"], "off": []}[self.use_global]
        parts += ["V_f"] * self.use_local + ["T_f"] * self.use_text + ["bboxes"] * self.use_bboxes
        tag = " + ".join(parts)
        if self.has_nodes:
            tag += " (MMR)" if self.use_mmr else " (no MMR)"
        return tag

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "VariantSpec":
        unknown = set(record) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown variant field(s): {sorted(unknown)}")
        return cls(**record)


FULL = VariantSpec()


class MMRNetwork:
    """Parameter layout and forward pass for one :class:`VariantSpec`.

    Parameters live outside the network in a :class:`ParameterStore`; the
    forward pass takes a ``name -> Tensor`` mapping so the same code runs on
    a tape (training, gradient checks) or on constants (inference).
    """

    def __init__(
        self,
        spec: VariantSpec,
        dims: Dims,
        num_classes: int,
        affinity: str = "raw",
        shared_affinity: bool = False,
        gcn_activation: str = "all-but-last",
        dropout: float = 0.3,
    ):
        if affinity not in AFFINITY_MODES:
            raise ConfigError(f"affinity must be one of {AFFINITY_MODES}, got {affinity!r}")
        if not 0.0 <= dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {dropout}")
        if num_classes < 2:
            raise ConfigError("need at least two classes")
        self.spec = spec
        self.dims = dims
        self.num_classes = num_classes
        self.affinity = affinity
        self.shared_affinity = shared_affinity
        self.gcn_activation = gcn_activation
        self.dropout = dropout

    @property
    def k(self) -> int:
        return self.dims.n * self.spec.use_local + self.dims.m * self.spec.use_text

    @property
    def fused_width(self) -> int:
        width = self.dims.d_out if self.spec.use_global != "off" else 0
        return width + (self.dims.d_node if self.spec.has_nodes else 0)

    def layout(self) -> dict[str, tuple[tuple[int, ...], int | None, float]]:
        """``name -> (shape, fan_in, gain)``; biases have ``fan_in=None``."""
        d, s = self.dims, self.spec
        out: dict[str, tuple[tuple[int, ...], int | None, float]] = {}

        def dense(prefix, fan_in, width, gain, bias=True):
            out[f"{prefix}.w"] = ((fan_in, width), fan_in, gain)
            if bias:
                out[f"{prefix}.b"] = ((width,), None, 0.0)

        # A bias feeding straight into a softmax shifts every logit of the
        # normalised group by the same amount, so it cannot change the output
        # and its gradient is identically zero.  Such biases are left out.
        if s.use_global == "attended":
            dense("global.attn", d.d_g, 1, 1.0, bias=False)
        if s.use_global != "off":
            dense("global.fc", d.d_g, d.d_out, LEAKY_GAIN)
        if s.use_local:
            dense("local.fc", d.d_r, d.d_p, LEAKY_GAIN)
        if s.use_text:
            dense("text.fc", d.d_t, d.d_p, LEAKY_GAIN)
        if s.use_bboxes:
            dense("pos.fc", 4, d.b, LEAKY_GAIN)
        if s.use_mmr:
            for layer in range(d.layers):
                if layer == 0 or not self.shared_affinity:
                    dense(f"gcn.{layer}.phi", d.d_node, d.d_node, 1.0)
                    dense(f"gcn.{layer}.gamma", d.d_node, d.d_node, 1.0, bias=self.affinity == "raw")
                act = self.gcn_activation == "all" or (
                    self.gcn_activation == "all-but-last" and layer < d.layers - 1
                )
                out[f"gcn.{layer}.w_g"] = ((d.d_node, d.d_node), d.d_node, LEAKY_GAIN if act else 1.0)
                out[f"gcn.{layer}.w_r"] = ((self.k, self.k), self.k, 1.0)
        if s.projection == "attention" and s.has_nodes:
            dense("head.attn", d.d_node, 1, 1.0, bias=False)
        dense("head.fc", self.fused_width, self.num_classes, 1.0)
        return out

    def init_params(self, rng: np.random.Generator) -> ParameterStore:
        store = ParameterStore()
        for name, (shape, fan_in, gain) in self.layout().items():
            store[name] = np.zeros(shape) if fan_in is None else seeded_init(shape, fan_in, rng, gain)
        return store

    def forward(self, params, batch: Batch, train: bool = False, rng=None, trace: dict | None = None):
        """Return ``(probs, logits)`` tensors of shape ``N x C``."""
        d, s = self.dims, self.spec
        parts: list[Tensor] = []
        if s.use_global != "off":
            attended = s.use_global == "attended"
            g, mask = global_encode(
                batch.global_maps,
                params["global.attn.w"] if attended else None,
                None,
                params["global.fc.w"],
                params["global.fc.b"],
            )
            if trace is not None:
                trace["attn_mask"] = mask
            parts.append(g)
        if s.has_nodes:
            regions = modal_encode(batch.regions, params["local.fc.w"], params["local.fc.b"]) if s.use_local else None
            texts = modal_encode(batch.texts, params["text.fc.w"], params["text.fc.b"]) if s.use_text else None
            codes = None
            if s.use_bboxes:
                boxes = [x for x, on in ((batch.region_bboxes, s.use_local), (batch.text_bboxes, s.use_text)) if on]
                codes = positional_encode(np.concatenate(boxes, axis=-2), params["pos.fc.w"], params["pos.fc.b"])
            nodes = assemble_nodes(regions, texts, codes, pos_width=d.b)
            if s.use_mmr:
                nodes = mmr_forward(
                    nodes,
                    params,
                    d.layers,
                    normalize=self.affinity,
                    shared_affinity=self.shared_affinity,
                    activation=self.gcn_activation,
                    trace=trace,
                )
            if trace is not None:
                trace["nodes"] = nodes
            pooled = node_project(
                nodes,
                s.projection,
                params.get("head.attn.w"),
                params.get("head.attn.b"),
            )
            parts.append(pooled)
        return fuse_classify(parts, params["head.fc.w"], params["head.fc.b"], self.dropout, train, rng)

    def loss(self, params, batch: Batch, train: bool = False, rng=None) -> Tensor:
        probs, _ = self.forward(params, batch, train=train, rng=rng)
        return cross_entropy_loss(probs, batch.labels)

    def descriptors(self, params, batch: Batch) -> np.ndarray:
        probs, logits = self.forward(params, batch, train=False)
        return (probs if self.spec.descriptor == "probs" else logits).numpy()


def build_variant(spec: VariantSpec, dims: Dims, num_classes: int, **options) -> MMRNetwork:
    return MMRNetwork(spec, dims, num_classes, **options)


def batch_forward_probs(network: MMRNetwork, params: ParameterStore, batch: Batch, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode ``(probs, logits)`` as arrays, computed in chunks."""
    consts = params.as_constants()
    probs, logits = [], []
    for start in range(0, len(batch), chunk):
        part = batch.take(np.arange(start, min(start + chunk, len(batch))))
        p, z = network.forward(consts, part, train=False)
        probs.append(p.numpy())
        logits.append(z.numpy())
    if not probs:
        empty = np.zeros((0, network.num_classes))
        return empty, empty
    return np.concatenate(probs), np.concatenate(logits)


__all__ = ["FULL", "MMRNetwork", "VariantSpec", "batch_forward_probs", "build_variant"]
