"""Assembly programs shipped with the toolchain."""

from importlib.resources import files


def source(name: str) -> str:
    return files(__name__).joinpath(f"{name}.scry-asm").read_text()


def names() -> list[str]:
    return sorted(p.name.removesuffix(".scry-asm")
                  for p in files(__name__).iterdir() if p.name.endswith(".scry-asm"))
