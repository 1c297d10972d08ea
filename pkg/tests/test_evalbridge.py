"""Evaluation bridge: protocol round-trips, builtin/proxy determinism,
and worker lifecycle including fault injection."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from nago.errors import ParameterDomainError, ProtocolError
from nago.evalbridge import (
    BENCHMARKS,
    BuiltinEvaluator,
    EvalRequest,
    EvalResponse,
    ProxyEvaluator,
    default_param_budget,
    make_evaluator,
    proxy_pseudo_error,
    resolution_for,
    spawn_worker,
)
from nago.rng import generator
from nago.space import make_search_space

ECHO = f"{sys.executable} {Path(__file__).parent / 'echo_worker.py'}"


def req(i="r0", theta=None, budget=30.0, seed=0):
    return EvalRequest(id=i, theta=theta or {"x0": 0.5}, budget=budget, seed=seed)


class TestProtocolRoundTrip:
    def test_request_identity(self):
        r = EvalRequest(id="a1", theta={"space": "hnag", "N_t": 5}, budget=60.0,
                        dataset="cifar10", seed=9, param_budget=123)
        assert EvalRequest.from_json_line(r.to_json_line()) == r

    def test_response_identity(self):
        r = EvalResponse(id="a1", objectives={"val_error": 0.25, "memory_mb": 3.5})
        assert EvalResponse.from_json_line(r.to_json_line()) == r

    def test_failed_response_identity(self):
        r = EvalResponse(id="a1", objectives={}, status="failed", message="boom")
        assert EvalResponse.from_json_line(r.to_json_line()) == r

    def test_wrong_type_rejected(self):
        with pytest.raises(ProtocolError):
            EvalResponse.from_json_line(json.dumps({"type": "request", "id": "x"}))

    def test_non_finite_objective_rejected(self):
        with pytest.raises(ProtocolError):
            EvalResponse(id="x", objectives={"val_error": float("inf")})

    def test_request_requires_payload(self):
        with pytest.raises(ParameterDomainError):
            EvalRequest(id="x", theta=None, budget=10.0)


class TestDatasetDefaults:
    def test_resolutions(self):
        assert resolution_for("cifar10") == 32
        assert resolution_for("mit67") == 224
        assert resolution_for("unknown-tag") == 32

    def test_param_budgets(self):
        assert default_param_budget("cifar10") == 4_000_000
        assert default_param_budget("imagenet") == 6_000_000


class TestBuiltin:
    def test_optimum_at_max_budget_is_exactly_zero(self):
        bench = BENCHMARKS["sphere-mf"]
        ev = BuiltinEvaluator(bench)
        theta = {f"x{i}": v for i, v in enumerate(bench.optimum)}
        resp = ev.evaluate(req(theta=theta, budget=bench.max_budget))
        assert resp.objectives["val_error"] == 0.0

    def test_noise_decays_with_budget(self):
        bench = BENCHMARKS["sphere-mf"]
        theta = {f"x{i}": 0.5 for i in range(bench.dimension)}
        lo = [abs(BuiltinEvaluator(bench).evaluate(req(i=f"a{s}", theta=theta, budget=30, seed=s)).objectives["val_error"]
                  - bench.noiseless(np.full(bench.dimension, 0.5))["val_error"]) for s in range(40)]
        hi = [abs(BuiltinEvaluator(bench).evaluate(req(i=f"b{s}", theta=theta, budget=120, seed=s)).objectives["val_error"]
                  - bench.noiseless(np.full(bench.dimension, 0.5))["val_error"]) for s in range(40)]
        assert np.mean(hi) < np.mean(lo)

    def test_deterministic_per_request(self):
        ev = make_evaluator("builtin:sphere-mf")
        theta = {f"x{i}": 0.3 for i in range(4)}
        a = ev.evaluate(req(theta=theta, seed=5))
        b = ev.evaluate(req(theta=theta, seed=5))
        assert a == b

    def test_toy_pareto_values(self):
        ev = make_evaluator("builtin:toy-pareto")
        resp = ev.evaluate(req(theta={"x0": 0.25}, budget=120))
        assert resp.objectives["f1"] == pytest.approx(0.0625)
        assert resp.objectives["f2"] == pytest.approx(0.5625)

    def test_unknown_benchmark(self):
        with pytest.raises(ParameterDomainError):
            make_evaluator("builtin:nope")


class TestProxy:
    def _theta(self, seed=0):
        sp = make_search_space("hnag", "graph")
        return sp.theta_dict(sp.sample_uniform(generator(seed)))

    def test_deterministic(self):
        ev = ProxyEvaluator()
        r = EvalRequest(id="p", theta=self._theta(), budget=60, seed=3)
        assert ev.evaluate(r) == ev.evaluate(r)

    def test_returns_all_objectives(self):
        ev = ProxyEvaluator()
        resp = ev.evaluate(EvalRequest(id="p", theta=self._theta(), budget=60, seed=1))
        assert resp.status == "ok"
        assert set(resp.objectives) == {"val_error", "memory_mb", "train_time_s"}
        assert 0.0 <= resp.objectives["val_error"] <= 1.0

    def test_memory_spread_over_random_thetas(self):
        # qualitative expressiveness: the sampled generators should span a
        # wide memory range (max/min well above 3x)
        ev = ProxyEvaluator()
        mems = []
        for s in range(40):
            resp = ev.evaluate(EvalRequest(id=f"p{s}", theta=self._theta(s), budget=60, seed=s))
            mems.append(resp.objectives["memory_mb"])
        assert max(mems) / min(mems) > 3.0

    def test_pseudo_error_is_finite_and_bounded(self):
        from nago.space import sample_architecture, theta_from_flat

        for s in range(5):
            ir = sample_architecture(theta_from_flat(self._theta(s)), s, 4_000_000)
            err = proxy_pseudo_error(ir, 32)
            assert 0.05 <= err <= 0.95


class TestWorker:
    def test_handshake_and_roundtrip(self):
        h = spawn_worker(ECHO, timeout_floor=10.0)
        try:
            resp = h.call(req(i="w1"))
            assert resp.status == "ok"
            assert resp.id == "w1"
        finally:
            h.close()

    def test_hundred_requests_keep_id_pairing(self):
        h = spawn_worker(ECHO + " --shuffle", timeout_floor=10.0)
        try:
            requests = [req(i=f"q{i}") for i in range(100)]
            responses = h.call_many(requests)
            assert [r.id for r in responses] == [f"q{i}" for i in range(100)]
            assert all(r.status == "ok" for r in responses)
        finally:
            h.close()
        # canned objectives are a pure function of the id
        plain = spawn_worker(ECHO, timeout_floor=10.0)
        try:
            assert plain.call(req(i="q7")).objectives == responses[7].objectives
        finally:
            plain.close()

    def test_concurrent_batch(self):
        h = spawn_worker(ECHO, timeout_floor=10.0)
        try:
            responses = h.call_many([req(i=f"c{i}") for i in range(8)])
            assert sorted(r.id for r in responses) == sorted(f"c{i}" for i in range(8))
        finally:
            h.close()

    def test_worker_death_surfaces_failure(self):
        h = spawn_worker(ECHO + " --die-after 2", timeout_floor=2.0)
        try:
            responses = h.call_many([req(i=f"d{i}") for i in range(5)])
            assert sum(r.status == "ok" for r in responses) == 2
            assert sum(r.status == "failed" for r in responses) == 3
        finally:
            h.close()

    def test_timeout_policy(self):
        h = spawn_worker(ECHO + " --delay 5", timeout_floor=0.5)
        try:
            resp = h.call(req(i="slow"))
            assert resp.status == "failed"
            assert "timeout" in resp.message
        finally:
            h.close()

    def test_version_mismatch(self):
        bad = f"{sys.executable} -c \"import sys,json; sys.stdin.readline(); print(json.dumps({{'type':'hello','protocol':'nago-eval/999'}}), flush=True)\""
        with pytest.raises(ProtocolError):
            spawn_worker(bad, timeout_floor=2.0)


class TestMakeEvaluator:
    def test_specs(self):
        assert isinstance(make_evaluator("proxy"), ProxyEvaluator)
        assert isinstance(make_evaluator("builtin:sphere-mf"), BuiltinEvaluator)
        with pytest.raises(ParameterDomainError):
            make_evaluator("magic")

    def test_worker_env_fallback(self, monkeypatch):
        monkeypatch.delenv("NAGO_WORKER", raising=False)
        with pytest.raises(ParameterDomainError):
            make_evaluator("worker")
