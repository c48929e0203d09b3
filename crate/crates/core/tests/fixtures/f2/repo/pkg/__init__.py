from pkg.core import Engine, run

__all__ = ["Engine", "run"]
