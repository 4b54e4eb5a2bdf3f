"""Python front end to the cisfa C++ core.

Array arguments are numpy arrays. Losses return their gradients alongside the value.
"""

import json

from ._core import (
    Error,
    assd,
    dice_score,
    gan_d_loss,
    gan_g_loss,
    global_nce,
    patch_nce,
    patch_weight_map,
    run_cli,
    soft_dice_loss,
    synth_dataset,
)
from . import _core

__all__ = [
    "Error",
    "assd",
    "config",
    "dice_score",
    "gan_d_loss",
    "gan_g_loss",
    "global_nce",
    "patch_nce",
    "patch_weight_map",
    "run_cli",
    "soft_dice_loss",
    "synth_dataset",
]


def config(scale="desk", **overrides):
    """Resolved training configuration as a dict; keyword overrides use the config keys."""
    return json.loads(_core.config_json(scale, json.dumps(overrides)))
