"""Bundled fixture designs."""
from importlib import resources
from pathlib import Path


def toy_design() -> Path:
    """Directory of the toy I2C design (spec.md, seed.jsonl, signals.txt, config.toml)."""
    return Path(str(resources.files("coverassert.data").joinpath("toy_i2c")))
