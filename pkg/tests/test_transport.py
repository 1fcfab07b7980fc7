import struct
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdml.coordinator import Coordinator
from fdml.transport import (
    CoordinatorServer,
    DecodeError,
    ErrorReply,
    InProcessCarrier,
    PullGrant,
    PullReject,
    PullRequest,
    PushAck,
    PushRequest,
    SocketCarrier,
    TransportError,
    decode,
    encode,
    fetch_status,
)

MESSAGES = [
    PushRequest(0, 1, (5, 9), (0.25, -1.5)),
    PushRequest(65535, 2**40, (), ()),
    PushAck(0),
    PushAck(2**40),
    PullRequest(3, 7, (0, 1, 2)),
    PullRequest(0, 1, ()),
    PullGrant(7, (1.5, -2.25, 0.0)),
    PullGrant(1, ()),
    PullReject(9, 1),
    ErrorReply(2, "sample id out of range"),
    ErrorReply(1, ""),
    ErrorReply(3, "non-ascii éα"),
]


class TestEncodeDecode:
    @pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
    def test_roundtrip(self, msg):
        assert decode(encode(msg)) == msg

    def test_push_ack_exact_bytes(self):
        # [DERIVED] layout by hand: u32 len=9, tag=2, u64 iteration=0
        assert encode(PushAck(0)) == bytes([9, 0, 0, 0, 2] + [0] * 8)

    def test_pull_reject_exact_bytes(self):
        # [DERIVED] u32 len=17, tag=5, u64 iteration, u64 slowest
        frame = encode(PullReject(3, 1))
        assert frame[:5] == bytes([17, 0, 0, 0, 5])
        assert struct.unpack("<QQ", frame[5:]) == (3, 1)

    def test_push_request_layout_by_hand(self):
        # [DERIVED] independent byte-level reader for the push frame
        frame = encode(PushRequest(2, 10, (7,), (1.5,)))
        total = struct.unpack_from("<I", frame, 0)[0]
        assert total == len(frame) - 4
        assert frame[4] == 1
        worker, iteration, n = struct.unpack_from("<HQI", frame, 5)
        assert (worker, iteration, n) == (2, 10, 1)
        sid, val = struct.unpack_from("<Qd", frame, 19)
        assert (sid, val) == (7, 1.5)

    def test_float_values_survive_exactly(self):
        vals = (1e-300, -0.0, 2.0**-1074, 1.7976931348623157e308)
        msg = PullGrant(1, vals)
        assert decode(encode(msg)).sums == vals

    def test_count_mismatch_rejected_on_encode(self):
        with pytest.raises(ValueError):
            encode(PushRequest(0, 1, (1, 2), (0.5,)))

    def test_non_message_rejected(self):
        with pytest.raises(ValueError):
            encode("hello")


class TestDecodeErrors:
    def test_short_frame(self):
        with pytest.raises(DecodeError):
            decode(b"\x01\x00")

    def test_unknown_tag(self):
        frame = struct.pack("<IB", 1, 99)
        with pytest.raises(DecodeError, match="tag"):
            decode(frame)

    def test_length_mismatch(self):
        frame = bytearray(encode(PushAck(1)))
        frame[0] += 1
        with pytest.raises(DecodeError, match="length"):
            decode(bytes(frame))

    def test_truncated_payload(self):
        frame = struct.pack("<IB", 5, 2) + b"\x00\x00\x00\x00"  # claims 4 payload bytes of 8
        with pytest.raises(DecodeError):
            decode(frame)

    def test_trailing_bytes(self):
        good = encode(PushAck(1))
        padded = struct.pack("<I", len(good) - 4 + 2) + good[4:] + b"\x00\x00"
        with pytest.raises(DecodeError, match="trailing"):
            decode(padded)

    def test_bad_utf8_detail(self):
        body = struct.pack("<HI", 1, 2) + b"\xff\xfe"
        frame = struct.pack("<IB", len(body) + 1, 6) + body
        with pytest.raises(DecodeError, match="UTF-8"):
            decode(frame)

    @settings(max_examples=300)
    @given(st.binary(max_size=64))
    def test_fuzz_never_crashes(self, blob):
        try:
            decode(blob)
        except DecodeError:
            pass


class TestCarriers:
    def test_inprocess_carrier_dispatch(self):
        coord = Coordinator(4, 1, 0)
        carrier = InProcessCarrier(coord)
        reply = carrier.request(PushRequest(0, 1, (0, 1), (0.5, -0.5)))
        assert reply == PushAck(1)
        grant = carrier.request(PullRequest(0, 1, (0, 1)))
        assert isinstance(grant, PullGrant)
        assert grant.sums == (0.5, -0.5)
        carrier.close()

    def test_socket_carrier_end_to_end(self):
        coord = Coordinator(4, 2, 8)
        server = CoordinatorServer(coord)
        try:
            a = SocketCarrier(server.host, server.port)
            b = SocketCarrier(server.host, server.port)
            assert a.request(PushRequest(0, 1, (2,), (1.25,))) == PushAck(1)
            assert b.request(PushRequest(1, 1, (2,), (0.75,))) == PushAck(1)
            grant = a.request(PullRequest(0, 1, (2,)))
            assert grant == PullGrant(1, (2.0,))
            a.close()
            b.close()
        finally:
            server.stop()

    def test_socket_carrier_concurrent_workers(self):
        coord = Coordinator(100, 4, 100)
        server = CoordinatorServer(coord)
        errors = []

        def work(j):
            try:
                c = SocketCarrier(server.host, server.port)
                for t in range(1, 21):
                    assert c.request(PushRequest(j, t, (j,), (float(t),))) == PushAck(t)
                    r = c.request(PullRequest(j, t, (j,)))
                    assert isinstance(r, (PullGrant, PullReject))
                c.close()
            except Exception as e:  # noqa: BLE001
                errors.append(e)

        threads = [threading.Thread(target=work, args=(j,)) for j in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        server.stop()
        assert not errors
        assert coord.progress == {0: 20, 1: 20, 2: 20, 3: 20}

    def test_server_drops_malformed_connection(self):
        import socket as socketlib

        coord = Coordinator(4, 1, 0)
        server = CoordinatorServer(coord)
        try:
            with socketlib.create_connection((server.host, server.port)) as sock:
                sock.sendall(struct.pack("<IB", 1, 250))  # unknown tag
                assert sock.recv(64) == b""  # connection closed, no reply
            # a fresh, well-formed connection still works
            c = SocketCarrier(server.host, server.port)
            assert c.request(PushAck(1)) == ErrorReply(3, "unexpected message PushAck")
            c.close()
        finally:
            server.stop()

    def test_status_listener(self):
        coord = Coordinator(4, 2, 3)
        server = CoordinatorServer(coord)
        try:
            coord.handle_push(0, 5, [(0, 1.0)])
            text = fetch_status(server.host, server.status_port)
        finally:
            server.stop()
        fields = dict(line.split("=") for line in text.strip().splitlines())
        assert fields["t_min"] == "0"
        assert fields["worker.0.iteration"] == "5"
        assert fields["worker.1.iteration"] == "0"
        assert fields["tau"] == "3"

    def test_unreachable_coordinator(self):
        with pytest.raises(TransportError):
            SocketCarrier("127.0.0.1", 1, connect_retries=2, retry_delay=0.01)
