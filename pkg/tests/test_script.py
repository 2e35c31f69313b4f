import struct

import pytest

from girp import errors, fixtures
from girp.script import SessionTarget, run_script
from girp.session import Session

SCRIPT = """
# in-place multiply over the fixture inputs
load mul.spv
pipeline @last main
alloc 1 {size}
alloc 2 {size}
write 1 0 a.bin
write 2 0 b.bin
dispatch @last 1024 1 1 0:0:1 0:1:2
read 2 0 {size}
"""


@pytest.fixture
def script_dir(tmp_path):
    a, b = fixtures.multiply_inputs()
    (tmp_path / "mul.spv").write_bytes(fixtures.multiply_kernel())
    (tmp_path / "a.bin").write_bytes(bytes(a))
    (tmp_path / "b.bin").write_bytes(bytes(b))
    return tmp_path


def test_script_full_cycle_matches_oracle(script_dir):
    size = fixtures.MULTIPLY_ELEMENTS * 4
    reads = run_script(SCRIPT.format(size=size), SessionTarget(Session()),
                       base_dir=script_dir)
    assert list(reads.values()) == [fixtures.multiply_expected()]


def test_read_redirection_writes_file(script_dir, tmp_path):
    size = fixtures.MULTIPLY_ELEMENTS * 4
    script = SCRIPT.format(size=size).replace(
        f"read 2 0 {size}", f"read 2 0 {size} > out.bin")
    run_script(script, SessionTarget(Session()), base_dir=script_dir)
    assert (script_dir / "out.bin").read_bytes() == fixtures.multiply_expected()


def test_explicit_hash_and_pipeline_id(script_dir):
    module = fixtures.multiply_kernel()
    from girp.reflect import hash_module

    script = SCRIPT.format(size=fixtures.MULTIPLY_ELEMENTS * 4).replace(
        "pipeline @last main", f"pipeline {hash_module(module).hex()} main")
    script = script.replace("dispatch @last 1024 1 1", "dispatch 1 1 1 1")
    reads = run_script(script, SessionTarget(Session()), base_dir=script_dir)
    (data,) = reads.values()
    assert data[:16] == fixtures.multiply_expected()[:16]


def test_sleep_and_comments_are_inert(script_dir):
    script = "# nothing\nsleep 1\n"
    assert run_script(script, SessionTarget(Session()), base_dir=script_dir) == {}


def test_pipeline_before_load_rejected(script_dir):
    with pytest.raises(errors.GirpError):
        run_script("pipeline @last main\n", SessionTarget(Session()),
                   base_dir=script_dir)


def test_server_error_surfaces(script_dir):
    with pytest.raises(errors.GirpError):
        run_script("read 5 0 4\n", SessionTarget(Session()), base_dir=script_dir)
