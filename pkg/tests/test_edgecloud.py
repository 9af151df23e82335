import socket
import threading

import pytest

from foresight_planner.core import Decision
from foresight_planner.edgecloud import (
    GuidanceService,
    InProcessTransport,
    LoopConfig,
    SocketTransport,
    Termination,
    TransportError,
    parse_address,
    run_edge_loop,
    serve,
)
from foresight_planner.edgecloud import wire
from foresight_planner.edgecloud.edge import _obs_message
from foresight_planner.foresight import OracleForesight
from foresight_planner.gridworld import (
    ExpertPolicy,
    GoalImagePolicy,
    NoOpPolicy,
    RandomPolicy,
    load_suite,
    observe,
    simulate_subtask,
)

TASK = "put the red block in the blue box, then put the blue ball in the blue box"


def service():
    return GuidanceService(foresight=OracleForesight(), seed=0)


def obs_frame(scene, sid, k=0):
    return _obs_message(sid, observe(scene, k))


def test_hello_then_obs_gives_first_subtask(simple_scene):
    svc = service()
    assert svc.handle(wire.Hello(5, TASK))[0] == wire.Hello(5, TASK)
    reply, _, _ = svc.handle(obs_frame(simple_scene, 5))
    assert isinstance(reply, wire.Guide)
    assert (reply.decision, reply.text, reply.plan_step) == (Decision.ADVANCE, "put the red block in the blue box", 0)
    assert reply.goal_image.shape == observe(simple_scene).head.shape


def test_foresight_flag_off_sends_no_image(simple_scene):
    svc = service()
    svc.handle(wire.Hello(5, TASK, flags=0))
    assert svc.handle(obs_frame(simple_scene, 5))[0].goal_image is None


def test_unknown_session(simple_scene):
    reply, _, _ = service().handle(obs_frame(simple_scene, 77))
    assert isinstance(reply, wire.Err) and reply.code == wire.ErrorCode.UNKNOWN_SESSION


def test_session_state_error_closes_session(simple_scene):
    svc = service()
    svc.handle(wire.Hello(1, "put the red block in the blue box"))
    done = simulate_subtask(simple_scene, "put the red block in the blue box")
    assert svc.handle(obs_frame(done, 1))[0].decision is Decision.DONE
    reply, _, _ = svc.handle(obs_frame(done, 1, 1))
    assert isinstance(reply, wire.Err) and reply.code == wire.ErrorCode.SESSION_STATE
    assert 1 not in svc.sessions


def test_malformed_frame_answered_with_err():
    svc = service()
    reply = wire.decode(svc.handle_frame(b"FAKT" + bytes(20)))
    assert isinstance(reply, wire.Err) and reply.code == wire.ErrorCode.BAD_MAGIC


def test_stage_timings_fit_in_total(simple_scene):
    svc = service()
    transport = InProcessTransport(svc)
    run_edge_loop(simple_scene, TASK, GoalImagePolicy(), transport)
    assert svc.timings
    for t in svc.timings:
        assert t.decode_ms + t.plan_ms + t.foresee_ms + t.encode_ms <= t.total_ms


def test_goal_policy_with_oracle_reaches_done(simple_scene):
    result = run_edge_loop(simple_scene, TASK, GoalImagePolicy(), InProcessTransport(service()))
    assert result.termination is Termination.DONE
    ball = result.final_scene.object("ball").cell
    red = result.final_scene.object("red").cell
    assert {ball, red} <= result.final_scene.region("box").cells


def test_noop_policy_unrecoverable_after_retry_cap(simple_scene):
    result = run_edge_loop(simple_scene, TASK, NoOpPolicy(), InProcessTransport(service()))
    assert result.termination is Termination.UNRECOVERABLE
    decisions = [p.decision for p in result.trace]
    assert decisions == [Decision.ADVANCE] + [Decision.CONTINUE] * 5 + [Decision.UNRECOVERABLE]


def test_chunk_budget(simple_scene):
    config = LoopConfig(max_chunks_per_subtask=2, guidance_every_chunk=False)
    result = run_edge_loop(simple_scene, TASK, RandomPolicy(seed=1), InProcessTransport(service()), config)
    assert result.termination is Termination.CHUNK_BUDGET
    assert result.chunks == 2


def test_guidance_only_on_idle_chunks(simple_scene):
    config = LoopConfig(guidance_every_chunk=False)
    result = run_edge_loop(simple_scene, TASK, ExpertPolicy(), InProcessTransport(service()), config)
    assert result.done
    assert len(result.trace) < result.chunks + 1


def test_chunks_never_older_than_latest_guidance(simple_scene):
    result = run_edge_loop(simple_scene, TASK, GoalImagePolicy(), InProcessTransport(service()))
    step_of_chunk = {}
    for rec in result.steps:
        step_of_chunk.setdefault(rec.chunk_index, rec.plan_step)
    steps = [p.plan_step for p in result.trace if p.decision.carries_subtask]
    # chunk i runs right after guidance i
    assert [step_of_chunk[i] for i in sorted(step_of_chunk)] == steps[: len(step_of_chunk)]
    assert steps == sorted(steps)


def test_ablation_switches_change_policy_inputs(simple_scene):
    seen = []

    class Spy(NoOpPolicy):
        def act(self, observation, subtask_text):
            seen.append((observation.goal.data == observation.head.data, subtask_text))
            return super().act(observation, subtask_text)

    config = LoopConfig(foresight_enabled=False, planner_text_enabled=False)
    run_edge_loop(simple_scene, TASK, Spy(), InProcessTransport(service()), config)
    assert seen and all(same and text == TASK for same, text in seen)


def test_socket_and_inprocess_frames_identical(simple_scene):
    tee_a, tee_b = [], []
    run_edge_loop(simple_scene, TASK, GoalImagePolicy(), InProcessTransport(service(), tee=tee_a))
    with serve(("127.0.0.1", 0), foresight=OracleForesight(), seed=0) as handle:
        transport = SocketTransport(handle.address, tee=tee_b)
        run_edge_loop(simple_scene, TASK, GoalImagePolicy(), transport)
        transport.close()
    assert tee_a == tee_b
    assert len(tee_a) > 4


def test_two_interleaved_socket_sessions(suite_dir):
    suite = {s.name: s for s in load_suite(suite_dir)}
    specs = [suite["comp_two_objects"], suite["drawer_stow"]]
    results = {}
    with serve(("127.0.0.1", 0), foresight=OracleForesight()) as handle:
        def client(i, spec):
            transport = SocketTransport(handle.address)
            results[i] = run_edge_loop(spec.scene, spec.task, GoalImagePolicy(), transport, session_id=100 + i)
            transport.close()

        threads = [threading.Thread(target=client, args=(i, s)) for i, s in enumerate(specs)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    for i, spec in enumerate(specs):
        res = results[i]
        assert res.done
        texts = {p.subtask_text for p in res.trace} - {""}
        assert texts == set(spec.subtasks)


def test_transport_failure_after_one_retry(simple_scene):
    # nothing listens on this port once the probe socket closes
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    address = probe.getsockname()
    probe.close()
    result = run_edge_loop(simple_scene, TASK, NoOpPolicy(), SocketTransport(address, timeout=1.0))
    assert result.termination is Termination.TRANSPORT_FAILURE


def test_transient_failure_is_retried(simple_scene):
    class Flaky(InProcessTransport):
        calls = 0

        def request(self, msg):
            Flaky.calls += 1
            if Flaky.calls == 3:
                raise TransportError("blip")
            return super().request(msg)

    result = run_edge_loop(simple_scene, TASK, GoalImagePolicy(), Flaky(service()))
    assert result.done


def test_parse_address():
    assert parse_address("127.0.0.1:7447") == ("127.0.0.1", 7447)
    for bad in ("nope", ":80", "host:x", "host:70000"):
        with pytest.raises(ValueError):
            parse_address(bad)
