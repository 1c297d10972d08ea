"""End-to-end bridge -> external trainer integration.

Skipped unless the TypeScript worker has been built
(`cd trainer && npm install && npm run build`).
"""

from pathlib import Path

import pytest

from nago.evalbridge import EvalRequest, WorkerEvaluator
from nago.rng import generator
from nago.space import make_search_space

WORKER_JS = Path(__file__).parent.parent / "trainer" / "dist" / "worker.js"

pytestmark = pytest.mark.skipif(not WORKER_JS.exists(), reason="trainer worker not built")


def test_generator_request_round_trip():
    ev = WorkerEvaluator(f"node {WORKER_JS}", timeout_floor=300.0)
    try:
        space = make_search_space("hnag", "graph")
        theta = space.theta_dict(space.sample_uniform(generator(0)))
        requests = [
            EvalRequest(id=f"int{i}", theta=theta, budget=1.0, dataset="tiny16",
                        seed=i, param_budget=60_000)
            for i in range(2)
        ]
        responses = ev.evaluate_batch(requests)
        assert [r.id for r in responses] == ["int0", "int1"]
        for r in responses:
            assert r.status == "ok", r.message
            assert 0.0 <= r.objectives["val_error"] <= 1.0
            assert r.objectives["memory_mb"] > 0
    finally:
        ev.close()
