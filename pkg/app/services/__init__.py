__all__ = [
    "adversary", "algorithms", "analysis", "engine", "exceptions",
    "harness", "metrics", "rng", "verification",
]
