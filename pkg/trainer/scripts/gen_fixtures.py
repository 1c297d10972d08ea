"""Generate test fixtures for the trainer from the primary package.

Writes JSONL files under test/fixtures/:
  param_contract.jsonl - 20 architectures with the cost model's parameter
                         count (the 1% boundary contract)
  shapes.jsonl         - 200 architectures for the shape-soundness sweep
                         (full hyperparameter ranges; resampled above 300
                         nodes to bound CI runtime - the property checked
                         is per-architecture, not distributional)

Run from the repo root:  python trainer/scripts/gen_fixtures.py
"""

import json
from pathlib import Path

from nago import costs
from nago.analytics import sample_uniform_theta
from nago.errors import BudgetError
from nago.rng import derive_seed, generator
from nago.space import GeneratorHyperparams, sample_architecture

OUT = Path(__file__).parent.parent / "test" / "fixtures"


def contract_cases(count=20, seed=2024):
    rng = generator(derive_seed(seed, "contract"))
    cases = []
    i = 0
    while len(cases) < count:
        theta = sample_uniform_theta("hnag" if i % 3 else "rnag", rng)
        if isinstance(theta, GeneratorHyperparams) and i % 2:
            # exercise every merge/op kind in the contract set
            theta = GeneratorHyperparams(
                theta.theta_top, theta.theta_mid, theta.theta_bottom,
                theta_m=(0.4, 0.3, 0.3), theta_op=(0.2,) * 5,
            )
        budget = int(rng.integers(30_000, 300_000))
        try:
            ir = sample_architecture(theta, int(rng.integers(0, 2**31)), budget)
        except BudgetError:
            i += 1
            continue
        if len(ir.nodes) > 200:
            i += 1
            continue
        cases.append({
            "name": f"contract-{len(cases)}",
            "ir": json.loads(ir.to_json()),
            "expected_params": costs.count_params(ir),
        })
        i += 1
    return cases


def shape_cases(count=200, seed=77, max_nodes=300):
    rng = generator(derive_seed(seed, "shapes"))
    cases = []
    i = 0
    while len(cases) < count:
        theta = sample_uniform_theta("hnag" if i % 4 else "rnag", rng)
        if isinstance(theta, GeneratorHyperparams) and i % 2:
            theta = GeneratorHyperparams(
                theta.theta_top, theta.theta_mid, theta.theta_bottom,
                theta_m=(1 / 3, 1 / 3, 1 / 3), theta_op=(0.2,) * 5,
            )
        try:
            ir = sample_architecture(theta, int(rng.integers(0, 2**31)), 40_000)
        except BudgetError:
            i += 1
            continue
        i += 1
        if len(ir.nodes) > max_nodes:
            continue
        cases.append({"name": f"shape-{len(cases)}", "ir": json.loads(ir.to_json())})
    return cases


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "param_contract.jsonl", "w") as fh:
        for case in contract_cases():
            fh.write(json.dumps(case, sort_keys=True) + "\n")
    with open(OUT / "shapes.jsonl", "w") as fh:
        for case in shape_cases():
            fh.write(json.dumps(case, sort_keys=True) + "\n")
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
