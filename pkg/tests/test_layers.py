"""GRU cell, stacked/bidirectional runners, and additive attention."""

import numpy as np
import pytest

from dialogan.autodiff import Parameter, RandomStream, ShapeError, Tensor
from dialogan.layers import (
    AttentionParams,
    EmbeddingParams,
    GruLayerParams,
    LinearParams,
    StackedRnnParams,
    attend,
    gru_step,
    run_rnn,
)

from helpers import finite_difference_check


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_oracle(cell, x, h):
    """Plain-numpy GRU evaluation, independent of the graph machinery."""
    wz, uz, bz = (p.data for p in cell.update)
    wr, ur, br = (p.data for p in cell.reset)
    wc, uc, bc = (p.data for p in cell.candidate)
    z = _sigmoid(x @ wz + h @ uz + bz)
    r = _sigmoid(x @ wr + h @ ur + br)
    cand = np.tanh(x @ wc + (r * h) @ uc + bc)
    return z * h + (1.0 - z) * cand


def attend_oracle(params, q, memory):
    """Hand-rolled additive attention: softmax scores, weighted sum."""
    qp = q @ params.query_proj.data
    logits = np.concatenate(
        [np.tanh(qp + m @ params.memory_proj.data) @ params.score_vec.data for m in memory],
        axis=-1)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    w = e / e.sum(axis=-1, keepdims=True)
    ctx = sum(w[:, j : j + 1] * memory[j] for j in range(len(memory)))
    return ctx, w


class TestGruStep:
    def test_all_zero_everything_gives_zero_state(self):
        cell = GruLayerParams("g", 3, 4, RandomStream(0))
        for p in cell.params():
            p.value.data[...] = 0.0
        out = gru_step(cell, Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_output_shape_matches_state(self):
        rng = RandomStream(1)
        cell = GruLayerParams("g", 5, 7, rng)
        out = gru_step(cell, Tensor(np.ones((3, 5))), Tensor(np.ones((3, 7))))
        assert out.shape == (3, 7)

    def test_matches_numpy_oracle(self):
        rng = RandomStream(2)
        cell = GruLayerParams("g", 4, 6, rng)
        nprng = np.random.default_rng(2)
        x, h = nprng.normal(size=(3, 4)), nprng.normal(size=(3, 6))
        out = gru_step(cell, Tensor(x), Tensor(h))
        np.testing.assert_allclose(out.data, gru_oracle(cell, x, h), rtol=1e-12)

    def test_dim_mismatch_rejected(self):
        cell = GruLayerParams("g", 4, 6, RandomStream(3))
        with pytest.raises(ShapeError, match="gru_step"):
            gru_step(cell, Tensor(np.zeros((2, 5))), Tensor(np.zeros((2, 6))))

    def test_gradients_match_finite_differences(self):
        rng = RandomStream(4)
        cell = GruLayerParams("g", 3, 4, rng)
        nprng = np.random.default_rng(4)
        x = Tensor(nprng.normal(size=(2, 3)))
        h = Tensor(nprng.normal(size=(2, 4)))

        def loss(_):
            return gru_step(cell, x, h).sum()

        finite_difference_check(loss, cell.params(), nprng)


class TestRunRnn:
    def test_length_one_states_equal_final(self):
        rnn = StackedRnnParams("r", 3, 4, 2, RandomStream(5))
        states, final = run_rnn(rnn, [Tensor(np.ones((2, 3)))])
        assert len(states) == 1
        np.testing.assert_array_equal(states[0].data, final.data)

    def test_bidirectional_step_dim_doubles(self):
        rnn = StackedRnnParams("r", 3, 4, 2, RandomStream(6), bidirectional=True)
        seq = [Tensor(np.ones((2, 3))) for _ in range(5)]
        states, final = run_rnn(rnn, seq)
        assert all(s.shape == (2, 8) for s in states)
        assert final.shape == (2, 8)

    def test_empty_sequence_rejected(self):
        rnn = StackedRnnParams("r", 3, 4, 1, RandomStream(7))
        with pytest.raises(ShapeError, match="nonempty"):
            run_rnn(rnn, [])

    def test_forward_matches_oracle_unroll(self):
        rnn = StackedRnnParams("r", 3, 4, 2, RandomStream(8))
        nprng = np.random.default_rng(8)
        seq_np = [nprng.normal(size=(2, 3)) for _ in range(4)]
        states, final = run_rnn(rnn, [Tensor(s) for s in seq_np])
        h0 = np.zeros((2, 4))
        layer_in = seq_np
        for (cell,) in rnn.layers:
            h = h0
            outs = []
            for x in layer_in:
                h = gru_oracle(cell, x, h)
                outs.append(h)
            layer_in = outs
        for got, want in zip(states, layer_in):
            np.testing.assert_allclose(got.data, want, rtol=1e-12)
        np.testing.assert_allclose(final.data, layer_in[-1], rtol=1e-12)

    def test_prefix_property_forward(self):
        rnn = StackedRnnParams("r", 2, 3, 2, RandomStream(9))
        nprng = np.random.default_rng(9)
        seq = [Tensor(nprng.normal(size=(1, 2))) for _ in range(6)]
        full, _ = run_rnn(rnn, seq)
        part, _ = run_rnn(rnn, seq[:4])
        for a, b in zip(part, full[:4]):
            np.testing.assert_allclose(a.data, b.data, rtol=1e-12)

    def test_bidirectional_halves_swap_and_reverse_with_tied_cells(self):
        rnn = StackedRnnParams("r", 3, 4, 1, RandomStream(10), bidirectional=True)
        fw, bw = rnn.layers[0]
        for pf, pb in zip(fw.params(), bw.params()):
            pb.value.data[...] = pf.value.data
        nprng = np.random.default_rng(10)
        seq = [Tensor(nprng.normal(size=(2, 3))) for _ in range(5)]
        states, _ = run_rnn(rnn, seq)
        rev_states, _ = run_rnn(rnn, seq[::-1])
        for t in range(5):
            a = states[t].data
            b = rev_states[4 - t].data
            np.testing.assert_allclose(a[:, :4], b[:, 4:], rtol=1e-12)
            np.testing.assert_allclose(a[:, 4:], b[:, :4], rtol=1e-12)

    def test_bidirectional_matches_per_direction_oracle(self):
        rnn = StackedRnnParams("r", 3, 4, 1, RandomStream(11), bidirectional=True)
        nprng = np.random.default_rng(11)
        seq_np = [nprng.normal(size=(2, 3)) for _ in range(4)]
        states, final = run_rnn(rnn, [Tensor(s) for s in seq_np])
        fw, bw = rnn.layers[0]
        h = np.zeros((2, 4))
        fw_states = []
        for x in seq_np:
            h = gru_oracle(fw, x, h)
            fw_states.append(h)
        h = np.zeros((2, 4))
        bw_states = []
        for x in seq_np[::-1]:
            h = gru_oracle(bw, x, h)
            bw_states.append(h)
        bw_states = bw_states[::-1]
        for t in range(4):
            np.testing.assert_allclose(states[t].data, np.concatenate([fw_states[t], bw_states[t]], axis=-1), rtol=1e-12)
        np.testing.assert_allclose(final.data, np.concatenate([fw_states[-1], bw_states[0]], axis=-1), rtol=1e-12)

    def test_mask_holds_state_at_padded_steps(self):
        rnn = StackedRnnParams("r", 3, 4, 1, RandomStream(12))
        nprng = np.random.default_rng(12)
        seq = [Tensor(nprng.normal(size=(2, 3))) for _ in range(3)]
        masks = [Tensor(np.ones((2, 1))), Tensor(np.array([[1.0], [0.0]])), Tensor(np.zeros((2, 1)))]
        states, final = run_rnn(rnn, seq, masks=masks)
        np.testing.assert_array_equal(states[1].data[1], states[0].data[1])
        np.testing.assert_array_equal(states[2].data, states[1].data)
        np.testing.assert_array_equal(final.data, states[1].data)

    def test_initial_state_is_respected(self):
        rnn = StackedRnnParams("r", 3, 4, 2, RandomStream(13))
        nprng = np.random.default_rng(13)
        h0 = [Tensor(nprng.normal(size=(1, 4))) for _ in range(2)]
        x = nprng.normal(size=(1, 3))
        states, _ = run_rnn(rnn, [Tensor(x)], h0=h0)
        want = gru_oracle(rnn.layers[1][0], gru_oracle(rnn.layers[0][0], x, h0[0].data), h0[1].data)
        np.testing.assert_allclose(states[0].data, want, rtol=1e-12)

    def test_gradients_through_three_step_unroll(self):
        rnn = StackedRnnParams("r", 2, 3, 2, RandomStream(14), bidirectional=True)
        nprng = np.random.default_rng(14)
        seq = [Tensor(nprng.normal(size=(2, 2))) for _ in range(3)]

        def loss(_):
            states, final = run_rnn(rnn, seq)
            total = final.sum()
            for s in states:
                total = total + (s * s).mean()
            return total

        finite_difference_check(loss, rnn.params(), nprng, samples_per_param=3)


class TestAttend:
    def test_single_slot_weight_one(self):
        att = AttentionParams("a", 4, 3, 5, RandomStream(15))
        nprng = np.random.default_rng(15)
        q = Tensor(nprng.normal(size=(2, 4)))
        m = Tensor(nprng.normal(size=(2, 3)))
        ctx, w = attend(att, q, [m])
        np.testing.assert_allclose(w.data, np.ones((2, 1)))
        np.testing.assert_allclose(ctx.data, m.data)

    def test_identical_slots_uniform_weights(self):
        att = AttentionParams("a", 4, 3, 5, RandomStream(16))
        nprng = np.random.default_rng(16)
        q = Tensor(nprng.normal(size=(2, 4)))
        m = Tensor(nprng.normal(size=(2, 3)))
        ctx, w = attend(att, q, [m, m, m, m])
        np.testing.assert_allclose(w.data, np.full((2, 4), 0.25), rtol=1e-12)
        np.testing.assert_allclose(ctx.data, m.data, rtol=1e-12)

    def test_three_slot_case_matches_oracle(self):
        att = AttentionParams("a", 4, 3, 5, RandomStream(17))
        nprng = np.random.default_rng(17)
        q = nprng.normal(size=(2, 4))
        mem = [nprng.normal(size=(2, 3)) for _ in range(3)]
        ctx, w = attend(att, Tensor(q), [Tensor(m) for m in mem])
        want_ctx, want_w = attend_oracle(att, q, mem)
        np.testing.assert_allclose(ctx.data, want_ctx, atol=1e-9)
        np.testing.assert_allclose(w.data, want_w, atol=1e-9)

    def test_weights_nonnegative_sum_to_one(self):
        nprng = np.random.default_rng(18)
        for trial in range(10):
            att = AttentionParams("a", 3, 2, 4, RandomStream(100 + trial))
            q = Tensor(nprng.normal(size=(3, 3)) * 5)
            mem = [Tensor(nprng.normal(size=(3, 2)) * 5) for _ in range(6)]
            _, w = attend(att, q, mem)
            assert (w.data >= 0).all()
            np.testing.assert_allclose(w.data.sum(axis=-1), np.ones(3), atol=1e-9)

    def test_mask_zeroes_padded_slots(self):
        att = AttentionParams("a", 3, 2, 4, RandomStream(19))
        nprng = np.random.default_rng(19)
        q = Tensor(nprng.normal(size=(2, 3)))
        mem = [Tensor(nprng.normal(size=(2, 2))) for _ in range(4)]
        mask = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
        _, w = attend(att, q, mem, memory_mask=mask)
        np.testing.assert_allclose(w.data[0, 2:], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(w.data.sum(axis=-1), np.ones(2), atol=1e-9)

    def test_empty_memory_rejected(self):
        att = AttentionParams("a", 3, 2, 4, RandomStream(20))
        with pytest.raises(ShapeError, match="nonempty"):
            attend(att, Tensor(np.zeros((1, 3))), [])

    def test_gradients_match_finite_differences(self):
        att = AttentionParams("a", 3, 2, 4, RandomStream(21))
        nprng = np.random.default_rng(21)
        q = Tensor(nprng.normal(size=(2, 3)))
        mem = [Tensor(nprng.normal(size=(2, 2))) for _ in range(3)]

        def loss(_):
            ctx, w = attend(att, q, mem)
            return (ctx * ctx).sum() + (w * Tensor(np.arange(6.0).reshape(2, 3))).sum()

        finite_difference_check(loss, att.params(), nprng)


class TestLinearEmbedding:
    def test_linear_apply(self):
        lin = LinearParams("l", 3, 2, RandomStream(22))
        nprng = np.random.default_rng(22)
        x = nprng.normal(size=(4, 3))
        out = lin.apply(Tensor(x))
        np.testing.assert_allclose(out.data, x @ lin.weight.data + lin.bias.data, rtol=1e-12)

    def test_embedding_lookup_rows(self):
        emb = EmbeddingParams("e", 10, 4, RandomStream(23))
        ids = np.array([[1, 2], [9, 0]])
        out = emb.lookup(ids)
        np.testing.assert_array_equal(out.data, emb.table.data[ids])
