"""Migration transparency: running a request sequence entirely on one session
must be indistinguishable from splitting it at any point across an
export/transfer/import into a fresh session."""

import struct

from hypothesis import given, settings
from hypothesis import strategies as st

from girp import fixtures, wire
from girp.reflect import hash_module
from girp.session import Session, SessionSnapshot

N = 256  # elements per buffer in generated workloads
MODULES = {
    "multiply": fixtures.multiply_kernel(),
    "fma": fixtures.fma_kernel(),
    "fill": fixtures.fill_kernel(),
}
BUFFER_IDS = (1, 2, 3)


def gen_requests(draw) -> list:
    """A random but always-valid request sequence over the fixture corpus."""
    rng = draw(st.randoms(use_true_random=False))
    requests = []
    pipelines = []  # (pipeline_id, two-buffer kernel?)
    next_pid = 1
    for bid in BUFFER_IDS:
        requests.append(wire.AllocBuffer(bid, N * 4))
    for _ in range(draw(st.integers(3, 12))):
        kind = rng.choice(["load", "write", "dispatch", "read"])
        if kind == "load":
            module = MODULES[rng.choice(sorted(MODULES))]
            requests.append(wire.LoadModule(hash_module(module), module))
            requests.append(wire.CreatePipeline(hash_module(module), "main"))
            two = module != MODULES["fill"]
            pipelines.append((next_pid, two))
            next_pid += 1
        elif kind == "write":
            words = [rng.getrandbits(32) for _ in range(rng.randrange(1, N + 1))]
            offset = rng.randrange(0, N + 1 - len(words)) * 4
            requests.append(wire.WriteBuffer(rng.choice(BUFFER_IDS), offset,
                                             struct.pack(f"<{len(words)}I", *words)))
        elif kind == "dispatch" and pipelines:
            pid, two = rng.choice(pipelines)
            groups = (rng.choice([1, 2, 4]), 1, 1)  # ≤ 256 invocations
            if two:
                a, b = rng.sample(BUFFER_IDS, 2)
                bindings = ((0, 0, a), (0, 1, b))
            else:
                bindings = ((0, 0, rng.choice(BUFFER_IDS)),)
            requests.append(wire.Dispatch(pid, groups, bindings))
        elif kind == "read":
            requests.append(wire.ReadBuffer(rng.choice(BUFFER_IDS), 0, N * 4))
    return requests


def run_all(session: Session, requests) -> list:
    out = []
    for request in requests:
        response = session.handle(request)
        assert not isinstance(response, wire.Error), response
        out.append(response)
    return out


def final_state(session: Session) -> list:
    return [session.handle(wire.ReadBuffer(bid, 0, N * 4)).data
            for bid in BUFFER_IDS]


@settings(max_examples=120, deadline=None)
@given(st.data())
def test_split_run_equals_straight_run(data):
    requests = gen_requests(data.draw)
    split = data.draw(st.integers(0, len(requests)))

    straight = Session(session_id=bytes(16))
    responses_straight = run_all(straight, requests)

    a = Session(session_id=bytes(16))
    responses_a = run_all(a, requests[:split])
    snapshot_bytes = a.export_session().to_bytes()
    b = Session()
    b.import_session(SessionSnapshot.from_bytes(snapshot_bytes))
    responses_b = run_all(b, requests[split:])

    assert final_state(b) == final_state(straight)
    # data-bearing responses match too (timing in DispatchAck may differ)
    for x, y in zip(responses_a + responses_b, responses_straight):
        if isinstance(x, wire.BufferData):
            assert x == y

    # the source keeps serving after export: migration never destroys it
    if split >= len(BUFFER_IDS):  # its buffers were allocated pre-split
        assert all(isinstance(s, bytes) for s in final_state(a))
