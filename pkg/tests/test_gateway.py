import json
import threading

import pytest

from eventforge.gateway import (
    CacheCorruptionError,
    Gateway,
    GatewayError,
    GatewayRequest,
    JudgeParseError,
    MockTransport,
    TransientError,
)
from eventforge.graph import parse_caption_to_graph


class FlakyTransport:
    """Fails with TransientError a fixed number of times, then succeeds."""

    def __init__(self, failures, response="ok"):
        self.failures = failures
        self.response = response
        self.calls = 0

    def __call__(self, req):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientError(f"injected failure {self.calls}")
        return self.response


def no_sleep(_):
    pass


def test_idempotency_key_deterministic():
    a = GatewayRequest(task="caption", prompt="hello").idempotency_key
    b = GatewayRequest(task="caption", prompt="hello").idempotency_key
    c = GatewayRequest(task="caption", prompt="other").idempotency_key
    assert a == b and a != c


def test_request_rejects_unknown_task():
    with pytest.raises(ValueError):
        GatewayRequest(task="summarize", prompt="x")


def test_mock_graph_parse_returns_grammar_valid_document():
    prompt = (
        "Derive the scene facts below into the line grammar.\n"
        "Move(subject=car, motion=forward, place=lane_center)\n"
        "car.color=white\n"
        "this line is prose and must be dropped\n"
        "rel(car, spatial, scene)\n"
        "scene.car_count=2\n"
    )
    gw = Gateway(transport=MockTransport())
    reply = gw.complete(GatewayRequest(task="graph_parse", prompt=prompt))
    graph = parse_caption_to_graph(reply, "rgb")  # must parse cleanly
    assert "car" in graph.entities
    assert len(graph.edges) == 1
    assert "prose" not in reply


def test_mock_is_deterministic_across_instances():
    req = GatewayRequest(task="caption", prompt="car.color=white\nnoise line")
    assert Gateway(transport=MockTransport()).complete(req) == \
        Gateway(transport=MockTransport()).complete(req)


def test_cache_serves_repeats_without_upstream_calls(tmp_path):
    transport = MockTransport()
    gw = Gateway(transport=transport, cache_dir=str(tmp_path))
    req = GatewayRequest(task="caption", prompt="car.color=red")
    first = gw.complete(req)
    second = gw.complete(req)
    assert first == second
    assert transport.calls == 1
    assert gw.upstream_calls == 1
    # a fresh gateway over the same directory reads the published response
    transport2 = MockTransport()
    gw2 = Gateway(transport=transport2, cache_dir=str(tmp_path))
    assert gw2.complete(req) == first
    assert transport2.calls == 0


def test_cache_write_once_and_checksum(tmp_path):
    gw = Gateway(transport=MockTransport(), cache_dir=str(tmp_path))
    req = GatewayRequest(task="caption", prompt="car.color=red")
    gw.complete(req)
    path = tmp_path / "cache" / "caption" / f"{req.idempotency_key}.json"
    original = path.read_text()
    gw.complete(req)
    assert path.read_text() == original
    envelope = json.loads(original)
    envelope["response"] = envelope["response"] + " tampered"
    path.write_text(json.dumps(envelope))
    gw2 = Gateway(transport=MockTransport(), cache_dir=str(tmp_path))
    with pytest.raises(CacheCorruptionError):
        gw2.complete(req)


def test_three_transient_failures_then_success_logs_three_retries():
    transport = FlakyTransport(failures=3)
    gw = Gateway(transport=transport, sleep=no_sleep)
    reply = gw.complete(GatewayRequest(task="caption", prompt="x"))
    assert reply == "ok"
    assert gw.retries == 3
    assert transport.calls == 4


def test_retries_exhausted_surface_gateway_error():
    gw = Gateway(transport=FlakyTransport(failures=10), sleep=no_sleep)
    with pytest.raises(GatewayError, match="gave up"):
        gw.complete(GatewayRequest(task="caption", prompt="x"))


def test_backoff_is_exponential():
    sleeps = []
    gw = Gateway(transport=FlakyTransport(failures=3), sleep=sleeps.append,
                 backoff_base=1.0)
    gw.complete(GatewayRequest(task="caption", prompt="x"))
    assert sleeps == [1.0, 2.0, 4.0]


def test_judge_exact_match_scores_five():
    gw = Gateway(transport=MockTransport())
    scores = gw.judge("What color is the car?", "white", "white")
    assert (scores.ci, scores.do_, scores.cu) == (5, 5, 5)
    assert scores.ave == 5.0


def test_judge_empty_candidate_scores_zero():
    gw = Gateway(transport=MockTransport())
    scores = gw.judge("What color is the car?", "white", "")
    assert (scores.ci, scores.do_, scores.cu, scores.ave) == (0, 0, 0, 0.0)


def test_judge_partial_overlap_between_bounds():
    gw = Gateway(transport=MockTransport())
    scores = gw.judge("Describe.", "a white car moving forward", "a red car")
    assert 0 < scores.ci < 5


def test_judge_malformed_reply_preserves_raw():
    gw = Gateway(transport=MockTransport(malformed=True))
    with pytest.raises(JudgeParseError) as err:
        gw.judge("q?", "ref", "cand")
    assert "top marks" in err.value.raw


def test_judge_rejects_empty_inputs():
    gw = Gateway(transport=MockTransport())
    with pytest.raises(ValueError):
        gw.judge("", "ref", "cand")


def test_concurrent_identical_requests_coalesce(tmp_path):
    entered = threading.Event()
    release = threading.Event()
    calls = []

    def slow_transport(req):
        calls.append(req.idempotency_key)
        entered.set()
        release.wait(timeout=5)
        return "done"

    gw = Gateway(transport=slow_transport, cache_dir=str(tmp_path))
    req = GatewayRequest(task="caption", prompt="shared")
    results = []

    def worker():
        results.append(gw.complete(req))

    t1 = threading.Thread(target=worker)
    t2 = threading.Thread(target=worker)
    t1.start()
    entered.wait(timeout=5)
    t2.start()
    release.set()
    t1.join()
    t2.join()
    assert results == ["done", "done"]
    assert len(calls) == 1  # second request served from the published cache
