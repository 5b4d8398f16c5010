"""The upsampling transformer: config, parameters, blocks and forward pass."""
from .blocks import (
    local_context,
    positional_fusion,
    relative_positions,
    sc_msa,
    shuffle,
    transformer_encoder,
    unshuffle,
)
from .config import DEFAULT_CHANNELS, TINY_GRADCHECK, ConfigError, ModelConfig, SCMSAConfig
from .network import PUTransformer, forward
from .params import ModelParams, ParamView, buffer_shapes, init_params, param_count, param_shapes

__all__ = [
    "DEFAULT_CHANNELS", "TINY_GRADCHECK", "ConfigError", "ModelConfig", "ModelParams",
    "PUTransformer", "ParamView", "SCMSAConfig", "buffer_shapes", "forward", "init_params",
    "local_context", "param_count", "param_shapes", "positional_fusion", "relative_positions",
    "sc_msa", "shuffle", "transformer_encoder", "unshuffle",
]
