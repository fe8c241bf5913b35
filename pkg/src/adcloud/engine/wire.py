"""Driver/worker messages: one frame per message over a loopback socket.

A message is a binstream record whose first field is a JSON header and whose
remaining fields are raw byte blobs (partition payloads), so the control
plane stays debuggable while data rides along without re-encoding.
"""

from __future__ import annotations

import json
from typing import BinaryIO, Sequence

from .. import binstream
from ..binstream import Frame, FrameKind


def send_msg(wfile: BinaryIO, header: dict, blobs: Sequence[bytes] = ()) -> None:
    record = (json.dumps(header, separators=(",", ":")), *blobs)
    binstream.write_frame(wfile, Frame(FrameKind.DATA, binstream.encode_record(record)))
    wfile.flush()


def recv_msg(rfile: BinaryIO) -> tuple[dict, list[bytes]]:
    frame = binstream.read_frame(rfile)
    record, _ = binstream.decode_record(frame.payload)
    return json.loads(record[0]), list(record[1:])
