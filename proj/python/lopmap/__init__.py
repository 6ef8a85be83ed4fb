"""Layout-object-position fields and topometric maps.

The heavy lifting is in the ``_lopmap`` extension; this package adds a few
conveniences on top.
"""

import configparser

from ._lopmap import (
    Config,
    LopmapError,
    astar,
    build_cloud,
    build_map,
    check_cloud,
    compass_relation,
    config_keys,
    eval_region,
    gen_scene,
    infer,
    load_map,
    localize,
    plan,
    read_cloud,
    train,
    update_map,
)

__all__ = [
    "Config",
    "LopmapError",
    "astar",
    "build_cloud",
    "build_map",
    "check_cloud",
    "compass_relation",
    "config_keys",
    "eval_region",
    "gen_scene",
    "infer",
    "load_map",
    "localize",
    "override",
    "plan",
    "read_cloud",
    "train",
    "update_map",
]


def override(config, **sections):
    """Copy of ``config`` with keys replaced, e.g. ``override(c, train={"epochs": 2})``."""
    ini = configparser.ConfigParser(interpolation=None)
    ini.read_string(config.to_ini())
    for section, values in sections.items():
        if not ini.has_section(section):
            ini.add_section(section)
        for key, value in values.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            ini.set(section, key, str(value))
    lines = []
    for section in ini.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in ini.items(section))
    return Config.parse("\n".join(lines) + "\n")
