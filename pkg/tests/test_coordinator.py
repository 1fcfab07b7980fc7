import threading

import numpy as np
import pytest

from fdml.coordinator import Coordinator, QueryError
from fdml.transport import (
    ERR_BAD_SAMPLE,
    ERR_BAD_WORKER,
    ErrorReply,
    PullGrant,
    PullReject,
    PushAck,
)


class TestPush:
    def test_push_writes_cells_and_acks(self):
        c = Coordinator(3, 2, 0)
        reply = c.handle_push(0, 1, [(0, 0.5), (2, -1.0)])
        assert reply == PushAck(1)
        np.testing.assert_allclose(c.row(0), [0.5, 0.0])
        np.testing.assert_allclose(c.row(2), [-1.0, 0.0])

    def test_last_writer_wins(self):
        c = Coordinator(2, 1, 0)
        c.handle_push(0, 1, [(0, 1.0)])
        c.handle_push(0, 2, [(0, 7.0)])
        assert c.row(0)[0] == 7.0

    def test_progress_advances_monotonically(self):
        c = Coordinator(2, 1, 0)
        c.handle_push(0, 3, [(0, 1.0)])
        c.handle_push(0, 2, [(0, 1.0)])  # late push never rolls the clock back
        assert c.progress[0] == 3

    def test_unknown_worker(self):
        c = Coordinator(2, 1, 0)
        reply = c.handle_push(5, 1, [(0, 1.0)])
        assert isinstance(reply, ErrorReply)
        assert reply.code == ERR_BAD_WORKER

    def test_bad_sample_id_rejected_before_any_write(self):
        c = Coordinator(2, 1, 0)
        reply = c.handle_push(0, 1, [(0, 5.0), (9, 1.0)])
        assert isinstance(reply, ErrorReply)
        assert reply.code == ERR_BAD_SAMPLE
        assert c.row(0)[0] == 0.0  # nothing was applied
        assert c.progress[0] == 0


class TestPullAdmission:
    def test_grant_sums_in_party_order(self):
        c = Coordinator(2, 3, 10)
        c.handle_push(0, 1, [(0, 1.0)])
        c.handle_push(1, 1, [(0, 2.0)])
        c.handle_push(2, 1, [(0, 4.0)])
        grant = c.handle_pull(0, 1, [0, 1])
        assert grant == PullGrant(1, (7.0, 0.0))

    def test_zero_matrix_before_any_push(self):
        # un-pushed parties contribute zero to the sum
        c = Coordinator(2, 2, 10)
        c.handle_push(0, 1, [(1, 3.0)])
        grant = c.handle_pull(0, 1, [1])
        assert grant.sums == (3.0,)

    def test_reject_when_too_far_ahead(self):
        c = Coordinator(2, 2, 1)
        c.handle_push(0, 3, [(0, 1.0)])  # worker 1 still at 0
        reply = c.handle_pull(0, 3, [0])
        assert reply == PullReject(3, 0)
        assert c.rejections[0] == 1

    def test_boundary_is_inclusive(self):
        # t - t_min == tau is still admitted
        c = Coordinator(2, 2, 2)
        c.handle_push(0, 3, [(0, 1.0)])
        c.handle_push(1, 1, [(0, 1.0)])
        assert isinstance(c.handle_pull(0, 3, [0]), PullGrant)
        c2 = Coordinator(2, 2, 2)
        c2.handle_push(0, 4, [(0, 1.0)])
        c2.handle_push(1, 1, [(0, 1.0)])
        assert isinstance(c2.handle_pull(0, 4, [0]), PullReject)

    def test_tau_zero_lockstep(self):
        c = Coordinator(2, 2, 0)
        c.handle_push(0, 1, [(0, 1.0)])
        assert isinstance(c.handle_pull(0, 1, [0]), PullReject)
        c.handle_push(1, 1, [(0, 1.0)])
        assert isinstance(c.handle_pull(0, 1, [0]), PullGrant)

    def test_reject_carries_slowest_clock(self):
        c = Coordinator(2, 3, 1)
        c.handle_push(0, 9, [(0, 1.0)])
        c.handle_push(1, 4, [(0, 1.0)])
        reply = c.handle_pull(0, 9, [0])
        assert reply == PullReject(9, 0)  # worker 2 never pushed

    def test_pull_validates_ids_and_worker(self):
        c = Coordinator(2, 1, 0)
        assert c.handle_pull(3, 1, [0]).code == ERR_BAD_WORKER
        assert c.handle_pull(0, 1, [17]).code == ERR_BAD_SAMPLE

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            Coordinator(2, 1, -1)


class TestOperatorSurface:
    def test_slowest_iteration(self):
        c = Coordinator(2, 2, 0)
        c.handle_push(0, 5, [(0, 1.0)])
        assert c.slowest_iteration() == 0
        c.handle_push(1, 2, [(0, 1.0)])
        assert c.slowest_iteration() == 2

    def test_slowest_with_no_workers(self):
        c = Coordinator(2, 0, 0)
        c.progress = {}
        with pytest.raises(QueryError):
            c.slowest_iteration()

    def test_status_text_fields(self):
        c = Coordinator(2, 2, 4)
        c.handle_push(0, 7, [(0, 1.0)])
        c.handle_push(0, 8, [(0, 1.0)])
        c.handle_pull(0, 8, [0])  # rejected, worker 1 at 0
        text = c.status_text()
        fields = dict(line.split("=") for line in text.strip().splitlines())
        assert fields == {
            "t_min": "0",
            "worker.0.iteration": "8",
            "worker.1.iteration": "0",
            "worker.0.rejections": "1",
            "worker.1.rejections": "0",
            "tau": "4",
        }

    def test_row_returns_a_copy(self):
        c = Coordinator(2, 1, 0)
        row = c.row(0)
        row[0] = 99.0
        assert c.row(0)[0] == 0.0


def test_concurrent_pushes_are_serialized():
    c = Coordinator(1000, 8, 1000)

    def work(j):
        for t in range(1, 51):
            assert c.handle_push(j, t, [(i, float(j)) for i in range(j, 1000, 8)]) == PushAck(t)
            c.handle_pull(j, t, list(range(0, 1000, 97)))

    threads = [threading.Thread(target=work, args=(j,)) for j in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert c.progress == {j: 50 for j in range(8)}
    for j in range(8):
        np.testing.assert_allclose(c.matrix[j::8, j], float(j))
