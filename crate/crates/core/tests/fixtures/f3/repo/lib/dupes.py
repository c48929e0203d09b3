import sys

if sys.platform == "win32":
    def path_sep():
        return "\\"
else:
    def path_sep():
        return "/"


def join(*parts):
    return path_sep().join(parts)


def join(*parts):
    return "/".join(p.strip("/") for p in parts)


def outer():
    def inner():
        return join("a", "b")

    def inner():
        return join("c", "d")

    return inner()
