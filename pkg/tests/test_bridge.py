import sys

import pytest

from adcloud import algos, binstream
from adcloud.errors import ChildExited, RemoteError, SpawnError


def spawn_algo(name, *extra):
    return binstream.spawn_bridge(sys.executable, ["-m", "adcloud.algos", name, *extra])


def test_identity_child_echoes_records():
    recs = [("topic", i, bytes([i])) for i in range(5)]
    with spawn_algo("identity") as chan:
        assert chan.transform(recs) == recs


def test_empty_partition_through_child():
    with spawn_algo("identity") as chan:
        assert chan.transform([]) == []


def test_child_exiting_immediately_raises_child_exited():
    with spawn_algo("exit0") as chan:
        chan.send_partition([("a", 1, b"")])
        with pytest.raises(ChildExited):
            chan.receive_partition()


def test_rotate_child_matches_in_process_oracle():
    recs = [("t", i, b"p" * i, float(i)) for i in range(20)]
    expected = [algos.rotate_record(r) for r in recs]
    with spawn_algo("rotate") as chan:
        assert chan.transform(recs) == expected


def test_byteflip_child_matches_in_process_oracle():
    recs = [("t", i, bytes([7, 8, 9])) for i in range(10)]
    expected = [algos.byteflip_record(r) for r in recs]
    with spawn_algo("byteflip") as chan:
        assert chan.transform(recs) == expected
    assert expected[0][2][0] == 7 ^ 0xFF
    assert expected[1][2][0] == 7


def test_error_frame_from_child():
    with spawn_algo("error") as chan:
        chan.send_partition([])
        with pytest.raises(RemoteError, match="synthetic"):
            chan.receive_partition()


def test_missing_executable_is_spawn_error():
    with pytest.raises(SpawnError):
        binstream.spawn_bridge("/nonexistent/binary")


def test_large_partition_does_not_deadlock():
    # Both pipe directions fill well past the kernel buffer size.
    recs = [("t", i, b"\xab" * 4096) for i in range(600)]
    with spawn_algo("identity") as chan:
        assert chan.transform(recs) == recs
