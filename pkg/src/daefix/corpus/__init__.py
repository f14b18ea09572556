"""Bundled example systems, one .dae file per system."""

from importlib import resources

from ..dsl import parse_dae
from ..model import DaeSystem


def names() -> tuple:
    files = resources.files(__package__)
    return tuple(sorted(p.name[:-4] for p in files.iterdir()
                        if p.name.endswith(".dae")))


def source(name: str) -> str:
    return resources.files(__package__).joinpath(name + ".dae").read_text()


def load(name: str) -> DaeSystem:
    return parse_dae(source(name))
