"""Path helpers used by the job runner."""
import os

ALIASES = {
    "home": "/home/runner",
    "tmp": "/tmp",
}


def normalize(p):
    """Collapse duplicate separators and strip a trailing slash."""
    while "//" in p:
        p = p.replace("//", "/")
    if len(p) > 1 and p.endswith("/"):
        p = p[:-1]
    return p


def resolve_alias(name):
    return ALIASES.get(name, name)


def resolve_path(base, p):
    """Resolve ``p`` against ``base``; absolute paths are returned unchanged."""
    p = resolve_alias(p)
    if os.path.isabs(p):
        return normalize(base + "/" + p)
    return normalize(os.path.join(base, p))
