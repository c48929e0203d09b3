def clamp(value, low, high):
    return max(low, min(high, value))


def log(*parts):
    print(" ".join(str(p) for p in parts))


def run(cmd):
    log("running", cmd)
    return 0
