"""Named model configurations for the five compared models and a loss variant."""
from __future__ import annotations

from .layers import ConfigError
from .network import ModelConfig

_NO_SLOSS = (0.0, 0.0, 0.0)
_SLOSS = (1e3, 1e3, 1e3)

PRESETS = {
    # image-domain cascade only: five blocks of five layers
    "d5c5": dict(m_blocks=0, n_blocks=5, layers_per_block=5, loss_alpha=(), loss_beta=(0.0,) * 4),
    "model1": dict(m_blocks=1, n_blocks=4, layers_per_block=5, loss_alpha=(0.0,), loss_beta=_NO_SLOSS),
    "model2": dict(m_blocks=1, n_blocks=4, layers_per_block=5, loss_alpha=(0.1,), loss_beta=_NO_SLOSS),
    "model3": dict(m_blocks=1, n_blocks=4, layers_per_block=5, loss_alpha=(0.0,), loss_beta=_SLOSS),
    "dimension": dict(m_blocks=1, n_blocks=4, layers_per_block=5, loss_alpha=(0.1,), loss_beta=_SLOSS),
    "dimension-sloss2": dict(m_blocks=1, n_blocks=4, layers_per_block=5, loss_alpha=(0.0,),
                             loss_beta=(1e5, 1e4, 1e3)),
}

# desk-scale sizing: 16 filters, three layers per block
DESK = dict(filters=16, layers_per_block=3)


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset(name: str, desk: bool = False, **overrides) -> ModelConfig:
    """Resolve ``name`` to a :class:`ModelConfig`; ``overrides`` replace fields.

    ``desk=True`` shrinks the network to 16 filters and three layers per
    block while keeping the block structure and loss weights.
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    fields = dict(PRESETS[key])
    if desk:
        fields.update(DESK)
    fields.update(overrides)
    return ModelConfig(**fields)
