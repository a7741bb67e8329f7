"""Model/data dimension records and the two built-in profiles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .exceptions import ConfigError


@dataclass(frozen=True)
class Dims:
    """Every extent the data loader and the network agree on.

    ``h, w, d_g``: global feature map; ``d_r``: region feature width;
    ``d_t``: text embedding width; ``n, m``: padded region/text counts;
    ``d_p``: modal projection width; ``b``: positional code width;
    ``d_out``: global branch output width; ``layers``: GCN depth.
    """

    h: int
    w: int
    d_g: int
    d_r: int
    d_t: int
    n: int
    m: int
    d_p: int
    b: int
    d_out: int
    layers: int
    d_node: int | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "d_node" and v is None:
                continue
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"dims.{f.name} must be a positive integer, got {v!r}")
        if self.d_node is None:
            object.__setattr__(self, "d_node", self.d_p + self.b)
        elif self.d_node != self.d_p + self.b:
            raise ConfigError(
                f"dims inconsistent: d_p + b = {self.d_p} + {self.b} != d_node = {self.d_node}"
            )

    @property
    def k(self) -> int:
        return self.n + self.m

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **overrides) -> "Dims":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown dims field(s): {sorted(unknown)}")
        if "d_node" not in overrides:
            overrides["d_node"] = None
        return replace(self, **overrides)


FULL_SCALE = Dims(h=7, w=7, d_g=2048, d_r=2048, d_t=300, n=36, m=15, d_p=1920, b=128, d_out=2048, layers=8)
DESK = Dims(h=3, w=3, d_g=32, d_r=16, d_t=12, n=6, m=4, d_p=24, b=8, d_out=32, layers=2)
PROFILES = {"paper": FULL_SCALE, "desk": DESK}


def resolve_dims(profile: str = "desk", **overrides) -> Dims:
    try:
        base = PROFILES[profile]
    except KeyError:
        raise ConfigError(f"unknown dims profile {profile!r}; expected one of {sorted(PROFILES)}") from None
    return base.with_overrides(**overrides) if overrides else base
