"""Shared setup for the experiment scripts: build or reuse the desk-scale fixture."""
from pathlib import Path

from ajpq.evaluator import ClassificationProbe, load_dataset
from ajpq.fixtures import FixtureSpec, make_fixtures
from ajpq.ir import load_model


def load_fixture(directory: str, seed: int = 0):
    d = Path(directory)
    if not (d / "mininet.model").exists():
        print(f"building fixture in {d} (trains the mini-net, about a minute)")
        make_fixtures(FixtureSpec(seed=seed), d)
    net = load_model(d / "mininet.model")
    val = load_dataset(d / "val.dataset")
    return net, val, ClassificationProbe(val)
