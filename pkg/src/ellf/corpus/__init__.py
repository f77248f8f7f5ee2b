"""Bundled dialect programs used by the round-trip acceptance suite."""

from importlib import resources


def corpus_programs() -> dict[str, str]:
    """Name -> source text for every bundled corpus program."""
    out = {}
    for entry in resources.files(__package__).iterdir():
        if entry.name.endswith(".s") and not entry.name.startswith("hazard"):
            out[entry.name[:-2]] = entry.read_text()
    return dict(sorted(out.items()))


def hazard_program() -> str:
    """The deliberate merged-suffix fixture; fails strict lifting."""
    return resources.files(__package__).joinpath("hazard_pointer_straddle.s").read_text()
