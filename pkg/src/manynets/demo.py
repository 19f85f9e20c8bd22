"""Generate the bundled demo dataset: a synthetic household contact sample.

Run ``python -m manynets.demo --out demo`` to (re)create the files.  The
sample is simulated from fixed coefficients so every CLI subcommand works out
of the box without any survey data.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .io import save_sample
from .model import Modifier, ModelSpec, StatTerm, model_spec, save_model, term
from .networks import Network, NetworkAttributes, NetworkSample, NodeAttributes
from .rng import substream
from .sampling import FREE, exact_sample

DEMO_TAXONOMY = ("Child", "Adult", "Senior")
DEMO_SEED = 20240601


def demo_model() -> ModelSpec:
    """Full mixing cells over the 3-group taxonomy plus size and weekend terms."""
    cells = []
    for i, a in enumerate(DEMO_TAXONOMY):
        for b in DEMO_TAXONOMY[i:]:
            cells.append(term(StatTerm.mix("group", [a], [b])))
    extras = [
        term(StatTerm.edges(), Modifier.logn()),
        term(StatTerm.edges(), Modifier.flag("weekend")),
    ]
    return model_spec(cells + extras)


DEMO_THETA = {
    "mix.group.Child~Child": 1.6,
    "mix.group.Adult~Child": 2.1,
    "mix.group.Child~Senior": 0.8,
    "mix.group.Adult~Adult": 1.9,
    "mix.group.Adult~Senior": 1.2,
    "mix.group.Senior~Senior": 1.5,
    "edges.logn": -1.1,
    "edges.weekend": 0.35,
}


def build_demo_sample(households: int = 80, seed: int = DEMO_SEED) -> NetworkSample:
    rng = substream(seed, "demo")
    model = demo_model()
    theta = np.array([DEMO_THETA[lbl] for lbl in model.labels])
    nets = []
    for h in range(households):
        n = int(rng.integers(2, 9))
        n_children = int(rng.binomial(n - 1, 0.35))
        n_seniors = int(rng.binomial(n - n_children - 1, 0.2)) if n - n_children > 1 else 0
        groups = (
            ["Adult"] * (n - n_children - n_seniors)
            + ["Child"] * n_children
            + ["Senior"] * n_seniors
        )
        genders = [("F" if rng.random() < 0.5 else "M") for _ in range(n)]
        nodes = tuple(NodeAttributes(group=g, gender=s) for g, s in zip(groups, genders))
        attrs = NetworkAttributes(
            id=f"h{h:03d}",
            n_s=n,
            weekend=bool(rng.random() < 2 / 7),
            brussels=bool(rng.random() < 0.1),
            log_pop_density=float(np.round(rng.normal(6.0, 1.0), 3)),
            child_absent=n_children == 0,
        )
        template = Network(n, 0, nodes, attrs)
        nets.append(exact_sample(model, template, theta, FREE, 1, rng=rng)[0])
    return NetworkSample(tuple(nets), DEMO_TAXONOMY)


DEMO_TESTS = {
    "omnibus": [
        {"label": "any size effect", "terms": ["edges.logn"]},
        {
            "label": "any within-group mixing",
            "terms": [
                "mix.group.Child~Child",
                "mix.group.Adult~Adult",
                "mix.group.Senior~Senior",
            ],
        },
    ],
    "contrasts": [
        {
            "label": "Adult-Child vs Adult-Adult",
            "weights": {"mix.group.Adult~Child": 1.0, "mix.group.Adult~Adult": -1.0},
        },
        {
            "label": "Child-Child exceeds Child-Senior (one-tailed)",
            "weights": {"mix.group.Child~Child": 1.0, "mix.group.Child~Senior": -1.0},
            "tail": "upper",
        },
    ],
}

DEMO_SCENARIO = {
    "S_grid": [2, 4, 8],
    "n": 8,
    "m": 20,
    "conditional": True,
    "theta_h1": {"match.gender": 1.1},
    "test_term": "match.gender",
    "alpha": 0.05,
    "replicates": 60,
    "seed": 1404,
    "fit_method": "exact",
}


def write_demo(outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_sample(build_demo_sample(), out / "sample.jsonl")
    save_model(demo_model(), out / "model.json")
    (out / "tests.json").write_text(json.dumps(DEMO_TESTS, indent=2) + "\n")
    (out / "scenario.json").write_text(json.dumps(DEMO_SCENARIO, indent=2) + "\n")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo")
    args = parser.parse_args()
    write_demo(args.out)
    print(f"wrote demo files to {args.out}/")
