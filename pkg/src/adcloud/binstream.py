"""Binary record codec, partition streams, and the child-process bridge.

Wire format (bit-exact, little-endian throughout):

* field  = tag byte + u32 payload length + payload
           tags: 0x00 Bytes, 0x01 Utf8, 0x02 Int64, 0x03 Float64
           Int64/Float64 payloads are exactly 8 bytes (two's complement /
           IEEE-754 binary64).
* record = u32 field count + concatenated field encodings, order preserved.
* frame  = kind byte (0x01 DATA, 0x02 END, 0x03 ERROR) + u32 payload length
           + payload. END carries no payload and terminates a stream
           direction; ERROR carries a UTF-8 message.

A partition on the wire is one DATA frame per record followed by END. The
bridge speaks this partition stream over a child's stdin/stdout.

Records are plain Python tuples; field types map 1:1 onto wire tags
(``bytes``/``str``/``int``/``float``), so round-trips preserve both values
and types.
"""

from __future__ import annotations

import io
import struct
import subprocess
import threading
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterable, Iterator, Sequence

from .errors import (
    BridgeProtocolError,
    ChildExited,
    CodecError,
    InvalidUtf8,
    RemoteError,
    SinkIoError,
    SpawnError,
    TruncatedField,
    TruncatedFrame,
    TruncatedRecord,
    UnknownFrameKind,
    UnknownTag,
)

Field = bytes | str | int | float
Record = tuple  # tuple[Field, ...]

TAG_BYTES = 0x00
TAG_UTF8 = 0x01
TAG_INT64 = 0x02
TAG_FLOAT64 = 0x03

_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")

_U32_MAX = 0xFFFFFFFF


class FrameKind(IntEnum):
    DATA = 0x01
    END = 0x02
    ERROR = 0x03


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    payload: bytes = b""


# --- field codec --------------------------------------------------------------


def encode_field(value: Field) -> bytes:
    """Encode one field as tag + u32 length + payload."""
    if isinstance(value, bool):
        # bool is an int subclass; pin it to the Int64 tag explicitly.
        value = int(value)
    if isinstance(value, bytes):
        tag, payload = TAG_BYTES, value
    elif isinstance(value, str):
        tag, payload = TAG_UTF8, value.encode("utf-8")
    elif isinstance(value, int):
        try:
            payload = _I64.pack(value)
        except struct.error:
            raise CodecError(f"integer {value} outside signed 64-bit range") from None
        tag = TAG_INT64
    elif isinstance(value, float):
        tag, payload = TAG_FLOAT64, _F64.pack(value)
    else:
        raise CodecError(f"unsupported field type {type(value).__name__}")
    if len(payload) > _U32_MAX:
        raise CodecError("field payload exceeds u32 length prefix")
    return bytes([tag]) + _U32.pack(len(payload)) + payload


def decode_field(buf: bytes, offset: int = 0) -> tuple[Field, int]:
    """Decode one field starting at ``offset``; returns (value, bytes consumed)."""
    if len(buf) - offset < 5:
        raise TruncatedField("field header needs 5 bytes")
    tag = buf[offset]
    (length,) = _U32.unpack_from(buf, offset + 1)
    start = offset + 5
    if len(buf) - start < length:
        raise TruncatedField(
            f"field declares {length} payload bytes, only {len(buf) - start} present"
        )
    payload = bytes(buf[start : start + length])
    if tag == TAG_BYTES:
        value: Field = payload
    elif tag == TAG_UTF8:
        try:
            value = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(str(exc)) from None
    elif tag == TAG_INT64:
        if length != 8:
            raise CodecError(f"int64 payload must be 8 bytes, got {length}")
        (value,) = _I64.unpack(payload)
    elif tag == TAG_FLOAT64:
        if length != 8:
            raise CodecError(f"float64 payload must be 8 bytes, got {length}")
        (value,) = _F64.unpack(payload)
    else:
        raise UnknownTag(f"unknown field tag 0x{tag:02X}")
    return value, 5 + length


# --- record codec -------------------------------------------------------------


def encode_record(record: Sequence[Field]) -> bytes:
    """Encode a record as u32 field count + field encodings in order."""
    parts = [_U32.pack(len(record))]
    for value in record:
        parts.append(encode_field(value))
    return b"".join(parts)


def decode_record(buf: bytes, offset: int = 0) -> tuple[Record, int]:
    """Decode one record starting at ``offset``; returns (record, bytes consumed)."""
    if len(buf) - offset < 4:
        raise TruncatedRecord("record header needs 4 bytes")
    (count,) = _U32.unpack_from(buf, offset)
    pos = offset + 4
    fields = []
    for i in range(count):
        if pos == len(buf):
            raise TruncatedRecord(f"record declares {count} fields, stream ends after {i}")
        value, consumed = decode_field(buf, pos)
        fields.append(value)
        pos += consumed
    return tuple(fields), pos - offset


# --- frame codec --------------------------------------------------------------


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > _U32_MAX:
        raise CodecError("frame payload exceeds u32 length prefix")
    return bytes([frame.kind]) + _U32.pack(len(frame.payload)) + frame.payload


def write_frame(sink: BinaryIO, frame: Frame) -> None:
    try:
        sink.write(encode_frame(frame))
    except OSError as exc:
        raise SinkIoError(str(exc)) from exc


def read_frame(source: BinaryIO) -> Frame:
    """Read exactly one frame; raises TruncatedFrame on EOF (even at byte 0)."""
    header = _read_exact(source, 5, "frame header")
    kind_byte = header[0]
    (length,) = _U32.unpack_from(header, 1)
    payload = _read_exact(source, length, "frame payload") if length else b""
    try:
        kind = FrameKind(kind_byte)
    except ValueError:
        raise UnknownFrameKind(f"unknown frame kind 0x{kind_byte:02X}") from None
    return Frame(kind, payload)


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = source.read(remaining)
        if not chunk:
            raise TruncatedFrame(f"EOF while reading {what} ({remaining} of {n} bytes missing)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


# --- partition streams --------------------------------------------------------


def serialize_partition(records: Iterable[Sequence[Field]], sink: BinaryIO) -> None:
    """Emit one DATA frame per record, then END."""
    for record in records:
        write_frame(sink, Frame(FrameKind.DATA, encode_record(record)))
    write_frame(sink, Frame(FrameKind.END))


def serialize_partition_bytes(records: Iterable[Sequence[Field]]) -> bytes:
    out = io.BytesIO()
    serialize_partition(records, out)
    return out.getvalue()


def iter_partition(source: BinaryIO) -> Iterator[Record]:
    """Yield records until the END frame; ERROR frames raise RemoteError.

    Reading stops exactly at END, so concatenated partition streams can be
    consumed one call at a time.
    """
    while True:
        frame = read_frame(source)
        if frame.kind == FrameKind.END:
            return
        if frame.kind == FrameKind.ERROR:
            raise RemoteError(frame.payload.decode("utf-8", errors="replace"))
        record, consumed = decode_record(frame.payload)
        if consumed != len(frame.payload):
            raise CodecError(
                f"DATA frame has {len(frame.payload) - consumed} trailing bytes after record"
            )
        yield record


def deserialize_partition(source: BinaryIO) -> list[Record]:
    return list(iter_partition(source))


def deserialize_partition_bytes(buf: bytes) -> list[Record]:
    return deserialize_partition(io.BytesIO(buf))


# --- process bridge -----------------------------------------------------------


class BridgeChannel:
    """One child process reached through partition streams on stdin/stdout.

    Single-writer, single-reader per direction: one logical task owns the
    channel. ``transform`` pumps a whole partition through the child, using a
    background writer thread so neither pipe direction can deadlock on a full
    kernel buffer.
    """

    def __init__(self, proc: subprocess.Popen):
        self._proc = proc
        self._writer: threading.Thread | None = None
        self._write_error: Exception | None = None

    @property
    def pid(self) -> int:
        return self._proc.pid

    def send_partition(self, records: Sequence[Record]) -> None:
        """Start streaming ``records`` to the child in the background."""
        if self._writer is not None:
            raise BridgeProtocolError("send_partition already in progress")

        def pump():
            try:
                serialize_partition(records, self._proc.stdin)
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (OSError, ValueError) as exc:  # broken pipe: child died
                self._write_error = exc

        self._writer = threading.Thread(target=pump, name="bridge-writer", daemon=True)
        self._writer.start()

    def receive_partition(self) -> list[Record]:
        """Read the child's full output partition; raises ChildExited if it died."""
        try:
            records = deserialize_partition(self._proc.stdout)
        except TruncatedFrame as exc:
            code = self._reap()
            raise ChildExited(code, f"child died mid-stream (exit {code}): {exc}") from None
        if self._writer is not None:
            self._writer.join()
        code = self._reap()
        if code != 0:
            raise ChildExited(code)
        return records

    def transform(self, records: Sequence[Record]) -> list[Record]:
        self.send_partition(records)
        return self.receive_partition()

    def _reap(self) -> int:
        if self._writer is not None:
            self._writer.join()
        try:
            self._proc.stdin.close()
        except (OSError, ValueError):
            pass
        code = self._proc.wait()
        self._proc.stdout.close()
        return code

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except (OSError, ValueError):
                pass

    def __enter__(self) -> "BridgeChannel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def spawn_bridge(
    executable: str,
    args: Sequence[str] = (),
    env: dict[str, str] | None = None,
) -> BridgeChannel:
    """Launch a bridge-speaking child with piped stdin/stdout."""
    cmd = [str(executable), *args]
    try:
        proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env=env,
        )
    except OSError as exc:
        raise SpawnError(f"cannot launch {cmd[0]}: {exc}") from exc
    return BridgeChannel(proc)
