"""Architecture hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

DEFAULT_CHANNELS = (32, 64, 128, 256, 256)


class ConfigError(ValueError):
    """Inconsistent architecture hyperparameters."""


@dataclass(frozen=True)
class SCMSAConfig:
    """Channel windows of shifted-channel attention.

    Head ``m`` (0-based) reads channels ``[m*d, m*d + w)``.  The windows must
    tile ``[0, c_prime)`` exactly; ``d < w`` gives overlapping heads and
    ``d == w`` degenerates to regular multi-head attention.
    """

    c_prime: int
    w: int
    d: int
    m_heads: int

    def __post_init__(self):
        if self.c_prime < 1 or self.w < 1 or self.d < 1 or self.m_heads < 1:
            raise ConfigError(f"non-positive SC-MSA setting: {self}")
        if self.d > self.w:
            raise ConfigError(f"shift interval d={self.d} exceeds split width w={self.w}")
        if (self.m_heads - 1) * self.d + self.w != self.c_prime:
            raise ConfigError(
                f"windows do not tile channels: ({self.m_heads}-1)*{self.d}+{self.w} != {self.c_prime}"
            )

    @classmethod
    def from_psi(cls, c_prime: int, psi: int) -> "SCMSAConfig":
        """``w = C'/psi``, ``d = w/2``, ``M = 2*psi - 1``."""
        if psi < 2:
            raise ConfigError(f"reduction ratio psi must be >= 2, got {psi}")
        if c_prime % psi or (c_prime // psi) % 2:
            raise ConfigError(f"C'={c_prime} must be divisible by 2*psi={2 * psi}")
        w = c_prime // psi
        return cls(c_prime=c_prime, w=w, d=w // 2, m_heads=2 * psi - 1)

    @classmethod
    def disjoint(cls, c_prime: int, w: int) -> "SCMSAConfig":
        """Regular MSA layout: ``d = w``, ``M = C'/w``."""
        if c_prime % w:
            raise ConfigError(f"C'={c_prime} not divisible by w={w}")
        return cls(c_prime=c_prime, w=w, d=w, m_heads=c_prime // w)

    @property
    def shifted(self) -> bool:
        return self.d < self.w

    @property
    def overlap(self) -> int:
        return self.w - self.d

    @property
    def concat_width(self) -> int:
        return self.m_heads * self.w

    def window_starts(self) -> list[int]:
        return [m * self.d for m in range(self.m_heads)]


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple = DEFAULT_CHANNELS
    head_channels: int = 16
    k: int = 20
    psi: int = 4
    r: int = 4
    head_norm: str = "batch"
    encoder_norm: str = "layer"
    attn_scale: bool = False
    dtype: str = "float32"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    ln_eps: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        ch = self.channels
        if not ch:
            raise ConfigError("need at least one encoder")
        if any(b < a for a, b in zip(ch, ch[1:])):
            raise ConfigError(f"channels must be non-decreasing, got {ch}")
        for c in ch:
            SCMSAConfig.from_psi(c, self.psi)
        if ch[-1] % self.r:
            raise ConfigError(f"last width {ch[-1]} not divisible by r={self.r}")
        if self.head_channels < 1 or self.k < 1 or self.r < 1:
            raise ConfigError("head_channels, k and r must be positive")
        if self.head_norm != "batch":
            raise ConfigError(f"unsupported head norm {self.head_norm!r}")
        if self.encoder_norm not in ("layer", "batch"):
            raise ConfigError(f"unsupported encoder norm {self.encoder_norm!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported precision {self.dtype!r}")

    @property
    def L(self) -> int:
        return len(self.channels)

    def scmsa(self, layer: int) -> SCMSAConfig:
        return SCMSAConfig.from_psi(self.channels[layer], self.psi)

    def encoder_io(self):
        """``(C_in, C')`` per encoder."""
        ins = (self.head_channels,) + self.channels[:-1]
        return list(zip(ins, self.channels))

    def replace(self, **kw) -> "ModelConfig":
        d = asdict(self)
        d.update(kw)
        return ModelConfig(**d)

    @classmethod
    def with_encoders(cls, L: int, **kw) -> "ModelConfig":
        """Default widths truncated, or extended with 256, to ``L`` encoders."""
        ch = DEFAULT_CHANNELS[:L] if L <= len(DEFAULT_CHANNELS) else (
            DEFAULT_CHANNELS + (DEFAULT_CHANNELS[-1],) * (L - len(DEFAULT_CHANNELS)))
        return cls(channels=ch, **kw)

    def to_text(self) -> str:
        """``key=value`` lines in field order."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition("=")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            default = getattr(cls, key, None) if key != "channels" else DEFAULT_CHANNELS
            if key == "channels":
                kw[key] = tuple(int(x) for x in val.split(","))
            elif isinstance(default, bool):
                kw[key] = val == "True"
            elif isinstance(default, int):
                kw[key] = int(val)
            elif isinstance(default, float):
                kw[key] = float(val)
            else:
                kw[key] = val
        return cls(**kw)


TINY_GRADCHECK = dict(channels=(8, 16), head_channels=4, k=3, psi=2, r=2, dtype="float64")
