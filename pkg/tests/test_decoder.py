import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_model
from eventseq.autodiff import ShapeError, Tape, Tensor, backward, ops
from eventseq.autodiff.gradcheck import numeric_gradient, relative_error
from eventseq.corpus import Mention, Sentence
from eventseq.decoder import (DecoderState, TeacherForcing, attention_weights, context_vector,
                              decode_step, make_memory, trace_mask)
from eventseq.model import ModelConfig, bag_loss, generation_loss


def memory_for(model, tokens=(3, 4, 5)):
    enc, H = model.encode([list(tokens)], np.zeros(1, dtype=np.int64))
    return make_memory(H, model.decoder, enc.valid)


def random_state(model, rng, batch=1):
    return Tensor(rng.normal(size=(batch, model.decoder.state_dim)))


# -- attention ------------------------------------------------------------------

def test_attention_normalized_and_argmax_of_scores(model):
    rng = np.random.default_rng(0)
    mem = memory_for(model, (3, 4, 5, 6))
    s = random_state(model, rng, 4)
    a = attention_weights(s, mem).data
    np.testing.assert_allclose(a.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    raw = (mem.H.data @ model.decoder.W_a.data @ s.data[..., None])[..., 0]
    assert (a.argmax(axis=1) == raw.argmax(axis=1)).all()


def test_zero_attention_matrix_gives_uniform(model):
    model.decoder.W_a.assign(np.zeros_like(model.decoder.W_a.data))
    mem = memory_for(model, (3, 4, 5, 6))
    a = attention_weights(random_state(model, np.random.default_rng(1)), mem).data
    np.testing.assert_allclose(a, np.full((1, 6), 1 / 6), rtol=0, atol=1e-15)


def test_attention_dimension_mismatch(model):
    mem = memory_for(model)
    with pytest.raises(ShapeError):
        attention_weights(Tensor(np.zeros((1, model.decoder.state_dim + 1))), mem)


def test_scaling_scores_keeps_predicted_mask(model):
    rng = np.random.default_rng(2)
    s = random_state(model, rng, 5)
    mem = memory_for(model, (3, 4, 5, 6, 3))
    before = trace_mask(attention_weights(s, mem), np.zeros(5, int), TeacherForcing(0.0))[0]
    model.decoder.W_a.assign(model.decoder.W_a.data * 7.5)
    after = trace_mask(attention_weights(s, memory_for(model, (3, 4, 5, 6, 3))), np.zeros(5, int),
                       TeacherForcing(0.0))[0]
    np.testing.assert_array_equal(before, after)


# -- trace mask ------------------------------------------------------------------

def _alpha(rng, batch=6, rows=5):
    return ops.softmax(Tensor(rng.normal(size=(batch, rows))))


def test_rho_one_always_gold():
    rng = np.random.default_rng(0)
    tf = TeacherForcing(1.0, np.random.default_rng(1))
    gold = np.array([0, 1, 2, 3, 4, 0])
    for _ in range(20):
        mask, alpha = trace_mask(_alpha(rng), gold, tf)
        assert (mask.argmax(axis=1) == gold).all()
        np.testing.assert_array_equal(alpha.data, mask)
    assert tf.argmax_calls == 0 and tf.predicted_picks == 0


def test_rho_zero_always_argmax():
    rng = np.random.default_rng(0)
    tf = TeacherForcing(0.0, np.random.default_rng(1))
    for _ in range(20):
        a = _alpha(rng)
        mask, _ = trace_mask(a, np.zeros(6, int), tf)
        assert (mask.argmax(axis=1) == a.data.argmax(axis=1)).all()
    assert tf.gold_picks == 0


def test_gold_pick_frequency_matches_rho():
    # binomial(10000, 0.8) has standard deviation 40, so [7800, 8200] is a 5-sigma band
    tf = TeacherForcing(0.8, np.random.default_rng(2024))
    a = Tensor(np.tile([[0.7, 0.2, 0.1]], (100, 1)))
    for _ in range(100):
        trace_mask(a, np.full(100, 2), tf)
    freq = tf.gold_picks / (tf.gold_picks + tf.predicted_picks)
    assert 0.78 <= freq <= 0.82


def test_mask_is_one_hot_and_product_mode():
    rng = np.random.default_rng(5)
    a = _alpha(rng)
    mask, alpha = trace_mask(a, np.array([1, 1, 1, 1, 1, 1]), TeacherForcing(0.5, rng))
    assert (mask.sum(axis=1) == 1).all() and set(np.unique(mask)) <= {0.0, 1.0}
    np.testing.assert_array_equal(alpha.data, mask)
    _, prod = trace_mask(a, np.ones(6, int), TeacherForcing(1.0), mode="product")
    np.testing.assert_array_equal(prod.data[:, 1], a.data[:, 1])
    assert (np.count_nonzero(prod.data, axis=1) == 1).all()


def test_gold_index_out_of_range():
    with pytest.raises(IndexError):
        trace_mask(_alpha(np.random.default_rng(0)), np.full(6, 5), TeacherForcing(1.0))


def test_inference_mode_ignores_rho():
    a = _alpha(np.random.default_rng(3))
    mask, _ = trace_mask(a, None, None)
    assert (mask.argmax(axis=1) == a.data.argmax(axis=1)).all()


def test_rho_must_be_probability():
    with pytest.raises(ValueError):
        TeacherForcing(1.5)


# -- context ------------------------------------------------------------------------

def test_context_one_hot_zero_and_linear():
    rng = np.random.default_rng(0)
    H = Tensor(rng.normal(size=(2, 4, 3)))
    onehot = np.zeros((2, 4))
    onehot[:, 2] = 1
    np.testing.assert_array_equal(context_vector(Tensor(onehot), H).data, H.data[:, 2])
    np.testing.assert_array_equal(context_vector(Tensor(np.zeros((2, 4))), H).data, np.zeros((2, 3)))
    a, b = rng.random((2, 4)), rng.random((2, 4))
    np.testing.assert_allclose(context_vector(Tensor(a + b), H).data,
                               context_vector(Tensor(a), H).data + context_vector(Tensor(b), H).data,
                               rtol=1e-12, atol=1e-14)
    with pytest.raises(ShapeError):
        context_vector(Tensor(np.zeros((2, 5))), H)


# -- decode step -------------------------------------------------------------------

def test_decode_step_distribution(model):
    mem = memory_for(model)
    state = DecoderState.initial(1, model.decoder)
    bos = np.array([model.schema.bos_id])
    step = decode_step(state, bos, mem, model.decoder)
    assert step.logits.shape == (1, model.schema.num_labels)
    assert abs(step.probs.data.sum() - 1) < 1e-12
    again = decode_step(state, bos, mem, model.decoder)
    np.testing.assert_array_equal(step.probs.data, again.probs.data)
    with pytest.raises(IndexError):
        decode_step(state, np.array([model.schema.num_labels]), mem, model.decoder)


# -- losses -------------------------------------------------------------------------

def test_bag_loss_single_step_toy():
    # labels {A, EOS}; target bag {A}
    o = Tensor(np.array([[[2.0, -2.0]]]))
    loss = bag_loss(o, np.ones((1, 1)), np.array([[1.0, 0.0]])).item()
    sig = 1 / (1 + math.exp(-2.0))
    assert sig == pytest.approx(0.8808, abs=5e-5)
    assert loss == pytest.approx(-math.log(sig), rel=1e-12)
    assert loss == pytest.approx(0.1269, abs=5e-5)


def test_generation_loss_near_zero_for_confident_gold():
    labels = np.array([[2, 0, 1]])
    logits = np.full((1, 3, 3), -30.0)
    logits[0, np.arange(3), labels[0]] = 30.0
    assert generation_loss(ops.softmax(Tensor(logits)), labels, np.ones((1, 3))).item() < 1e-6


def _sentences():
    return [Sentence(("a", "b", "c", "d"), (Mention(1, 3, "A"),)),
            Sentence(("c", "a"), ()),
            Sentence(("d", "b", "a"), (Mention(0, 1, "A"), Mention(2, 3, "A")))]


def test_loss_identity_and_nonnegative(model):
    batch = model.make_batch(_sentences())
    losses = model.compute_losses(batch, TeacherForcing(0.7, np.random.default_rng(0)))
    f = losses.as_floats()
    assert min(f["gen"], f["att"], f["bol"]) >= 0
    assert f["J"] == f["gen"] + 1.0 * f["att"] + 0.1 * f["bol"]


def test_zero_weights_leave_generation_loss():
    m = tiny_model(config=ModelConfig(4, 3, 3, 2, alpha_loss=0.0, beta_loss=0.0))
    losses = m.compute_losses(m.make_batch(_sentences()))
    assert losses.J == losses.gen.item()


def test_empty_batch(model):
    with pytest.raises(ValueError):
        model.make_batch([])


def test_batch_losses_match_single_sentences(model):
    sents = _sentences()
    together = model.compute_losses(model.make_batch(sents)).as_floats()
    alone = [model.compute_losses(model.make_batch([s])).as_floats() for s in sents]
    for k in ("gen", "att", "bol"):
        assert together[k] == pytest.approx(sum(a[k] for a in alone), rel=1e-10)


def _barrier_case(model, seed):
    rng = np.random.default_rng(seed)
    sents = []
    for _ in range(3):
        n = int(rng.integers(2, 6))
        toks = tuple(str(x) for x in rng.choice(list("abcd"), size=n))
        k = int(rng.integers(0, 2))
        sents.append(Sentence(toks, (Mention(n - 1, n, "A"),) if k else ()))
    return model.make_batch(sents), rng


@pytest.mark.parametrize("mode", ["select", "product"])
def test_attention_matrix_learns_only_from_attention_loss(mode):
    for seed in range(4):
        m = tiny_model(seed=seed, config=ModelConfig(4, 3, 3, 2, mask_mode=mode, alpha_loss=0.7))
        batch, rng = _barrier_case(m, seed)
        state = rng.bit_generator.state
        with Tape() as tape:
            losses = m.compute_losses(batch, TeacherForcing(0.5, rng))
            full = m.backward(losses)
        rng.bit_generator.state = state
        with Tape() as tape:
            losses = m.compute_losses(batch, TeacherForcing(0.5, rng))
            att_only = backward(losses.att, tape, accumulate=False)
        m.zero_grad()
        np.testing.assert_allclose(full[m.decoder.W_a], 0.7 * att_only[m.decoder.W_a], rtol=1e-12, atol=0)


def full_model_errors(model, batch):
    def J():
        losses = model.compute_losses(batch, TeacherForcing(1.0))
        return ops.add(ops.add(losses.gen, ops.mul(losses.att, model.config.alpha_loss)),
                       ops.mul(losses.bol, model.config.beta_loss))

    with Tape():
        grads = model.backward(model.compute_losses(batch, TeacherForcing(1.0)))
    model.zero_grad()
    return {p.name: relative_error(grads.get(p, np.zeros_like(p.data)), numeric_gradient(J, p))
            for p in model.parameters()}


def test_full_model_gradients_three_tokens_two_labels():
    m = tiny_model(types=("A", "B"), tokens=("x", "y", "z"), seed=4)
    batch = m.make_batch([Sentence(("x", "y", "z"), (Mention(0, 1, "A"), Mention(1, 3, "B")))])
    errors = full_model_errors(m, batch)
    assert max(errors.values()) < 1e-3, errors


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_mask_one_hot_property(seed, rho):
    rng = np.random.default_rng(seed)
    a = _alpha(rng, batch=4, rows=7)
    mask, alpha = trace_mask(a, rng.integers(0, 7, size=4), TeacherForcing(rho, rng))
    assert (np.count_nonzero(mask, axis=1) == 1).all()
    assert (alpha.data.max(axis=1) == 1.0).all()
