import math

import numpy as np
import pytest

from mtreecode import codec, dataset
from mtreecode.errors import DivergenceDetected, PositionOutOfRange, ShapeMismatch
from mtreecode.model import (
    PARAM_NAMES, Seq2Code, TokenVocab, TrainConfig, _decode_answer, _lstm, attend,
    attention_weights, backward, encode_problem, forward, generate, init_params,
    make_batch, mse_loss, number_repr, predict_answer, train,
)
from mtreecode.synthetic import write_corpus

TINY = TrainConfig(embed_dim=8, hidden=4, ffn=(7, 5), seed=0)


def tiny_params(n_words=12, n_codes=6, cfg=TINY):
    return init_params(n_words, n_codes, cfg)


def zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


# encoder -----------------------------------------------------------------------

def test_encoder_shape():
    H = encode_problem(tiny_params(), [3])
    assert H.shape == (1, 8)


def test_direction_symmetry():
    params = tiny_params()
    for k in ("Wx", "Wh", "b"):
        params["bw_" + k] = params["fw_" + k].copy()
    ids = [3, 5, 7, 2, 9]
    H = encode_problem(params, ids)
    R = encode_problem(params, ids[::-1])
    d = 4
    np.testing.assert_allclose(H[:, :d], R[::-1, d:], atol=1e-14)


def test_zero_weights_give_zero_states():
    H = encode_problem(zeros_like(tiny_params()), [1, 2, 3])
    assert np.all(H == 0)


def test_single_step_by_hand():
    # d=2, one input dimension; gates ordered i, f, g, o
    Wx = np.array([[0.5, -0.5, 1.0, 0.0, 0.2, 0.1, 0.3, -0.3]])
    Wh = np.zeros((2, 8))
    b = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.1])
    x = np.array([[[2.0]]])
    hs, _ = _lstm(x, Wx, Wh, b)
    sig = lambda v: 1 / (1 + math.exp(-v))
    i = [sig(1.0), sig(-1.0)]
    g = [math.tanh(0.4), math.tanh(0.2)]
    o = [sig(0.7), sig(-0.5)]
    c = [i[0] * g[0], i[1] * g[1]]
    want = [o[0] * math.tanh(c[0]), o[1] * math.tanh(c[1])]
    np.testing.assert_allclose(hs[0, 0], want, rtol=1e-14)


def test_padding_does_not_change_states():
    params = tiny_params()
    short = [4, 5, 6]
    b = make_batch([short, short + [7, 8]], [[0], [0]])
    out, cache = forward(params, b)
    alone = make_batch([short], [[0]])
    out1, cache1 = forward(params, alone)
    np.testing.assert_allclose(cache["H"][0, :3], cache1["H"][0], atol=1e-14)
    np.testing.assert_allclose(out[0], out1[0], atol=1e-14)


# number representation and attention ---------------------------------------------------

def test_number_repr():
    H = np.arange(12.0).reshape(4, 3)
    assert number_repr(H, [0]).tolist() == [[0.0, 1.0, 2.0]]
    assert number_repr(H, []).shape == (0, 3)
    with pytest.raises(PositionOutOfRange):
        number_repr(H, [1, 1])
    with pytest.raises(PositionOutOfRange):
        number_repr(H, [4])
    with pytest.raises(PositionOutOfRange):
        make_batch([[1, 2]], [[0, 2]])


def test_attention_singleton():
    params = tiny_params()
    H = np.random.default_rng(0).normal(size=(1, 8))
    assert attention_weights(H, H[0], params).tolist() == [1.0]
    np.testing.assert_allclose(attend(H, H[0], params), H[0])


def test_attention_uniform_when_scores_equal():
    params = tiny_params()
    params["att_U"] = np.zeros_like(params["att_U"])
    H = np.random.default_rng(1).normal(size=(5, 8))
    np.testing.assert_allclose(attend(H, H[2], params), H.mean(0), atol=1e-15)


def test_attention_is_a_distribution():
    rng = np.random.default_rng(2)
    params = tiny_params()
    for _ in range(200):
        n = rng.integers(1, 20)
        H = rng.normal(size=(n, 8)) * 3
        a = attention_weights(H, H[rng.integers(n)], params)
        assert np.all(a >= 0) and abs(a.sum() - 1) <= 1e-12


# generator ----------------------------------------------------------------------

def test_generator_zero_weights_output_bias():
    params = zeros_like(tiny_params())
    params["B3"] = np.arange(6.0)
    out = generate(np.random.default_rng(3).normal(size=16), params)
    assert out.tolist() == list(range(6))


def test_generator_by_hand():
    params = {
        "W1": np.array([[1.0, -1.0], [2.0, 0.5]]), "B1": np.array([0.0, -1.0]),
        "W2": np.array([[1.0, 0.0], [-1.0, 1.0]]), "B2": np.array([0.5, 0.0]),
        "W3": np.array([[2.0, 1.0], [0.0, -1.0]]), "B3": np.array([0.1, 0.2]),
    }
    z = np.array([1.0, 2.0])
    # h1 = relu([1+4, -1+1-1]) = [5, 0]; h2 = relu([5+0.5, 0]) = [5.5, 0]
    # out = [11 + 0.1, 5.5 + 0.2]
    np.testing.assert_allclose(generate(z, params), [11.1, 5.7])


def test_batch_forward_matches_single_problem_views():
    params = tiny_params()
    ids, q = [3, 4, 5, 6, 7], [1, 3]
    out, _ = forward(params, make_batch([ids, [2, 2]], [q, [0]]))
    H = encode_problem(params, ids)
    for row, e in zip(out[:2], number_repr(H, q)):
        z = np.concatenate([attend(H, e, params), e])
        np.testing.assert_allclose(row, generate(z, params), atol=1e-13)


def test_output_width():
    out, _ = forward(tiny_params(n_codes=9), make_batch([[1, 2, 3]], [[0, 2]]))
    assert out.shape == (2, 9)


# loss --------------------------------------------------------------------------

def test_loss_examples():
    c = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert mse_loss(c, c) == 0
    assert mse_loss([[0.0, 0.0]], [[1.0, 0.0]]) == 0.5
    p = np.random.default_rng(4).normal(size=(3, 5))
    t = np.random.default_rng(5).normal(size=(3, 5))
    assert mse_loss(t + 2 * (p - t), t) == pytest.approx(4 * mse_loss(p, t))
    with pytest.raises(ShapeMismatch):
        mse_loss(np.zeros((2, 3)), np.zeros((2, 4)))


# gradients -----------------------------------------------------------------------

def _fd_instance(activation):
    rng = np.random.default_rng(6)
    params = tiny_params()
    ids = [[1, 4, 5, 6, 2], [3, 7, 8]]
    pos = [[0, 2, 4], [1]]
    targets = [rng.integers(0, 3, size=(3, 6)), rng.integers(0, 3, size=(1, 6))]
    return params, make_batch(ids, pos, targets)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_finite_differences(activation):
    params, b = _fd_instance(activation)
    out, cache = forward(params, b, activation)
    grads, _ = backward(params, b, out, cache)
    eps = 1e-4
    for name in PARAM_NAMES:
        p = params[name]
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = mse_loss(forward(params, b, activation)[0], b.targets)
            p[idx] = old - eps
            down = mse_loss(forward(params, b, activation)[0], b.targets)
            p[idx] = old
            num[idx] = (up - down) / (2 * eps)
        err = np.linalg.norm(grads[name] - num) / max(np.linalg.norm(grads[name]) + np.linalg.norm(num), 1e-12)
        assert err <= 1e-4, (name, err)


def test_hidden_seam_gradient():
    params, b = _fd_instance("relu")
    out, cache = forward(params, b)
    H = cache["H"]
    out2, cache2 = forward(params, b, hidden=H)
    np.testing.assert_array_equal(out, out2)
    grads, dH = backward(params, b, out2, cache2)
    assert dH.shape == H.shape and "emb" not in grads


# training -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "syn50.jsonl"
    write_corpus(path, 50, seed=11)
    problems, _ = dataset.read_corpus(path)
    return problems, dataset.make_supervision(problems).vocab


SMALL = dict(embed_dim=16, hidden=16, ffn=(32, 32), batch_size=10, log_timing=False)


def test_zero_learning_rate_keeps_parameters(corpus):
    problems, vocab = corpus
    for opt in ("sgd", "momentum", "adam"):
        cfg = TrainConfig(lr=0.0, epochs=2, optimizer=opt, **SMALL)
        start = Seq2Code.create(problems, vocab, cfg)
        before = {k: v.copy() for k, v in start.params.items()}
        model, _ = train(problems, vocab, cfg, model=start)
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(model.params[k], before[k])


def test_training_is_deterministic(corpus):
    problems, vocab = corpus
    cfg = TrainConfig(epochs=3, seed=7, **SMALL)
    m1, log1 = train(problems, vocab, cfg, dev=problems[:10])
    m2, log2 = train(problems, vocab, cfg, dev=problems[:10])
    assert log1 == log2
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_loss_trend_is_non_increasing(corpus):
    problems, vocab = corpus
    cfg = TrainConfig(epochs=40, lr=0.002, embed_dim=32, hidden=64, ffn=(128, 64), batch_size=10, log_timing=False)
    _, log = train(problems, vocab, cfg)
    losses = [r["loss"] for r in log]
    assert losses[-1] < losses[0]
    for prev, cur in zip(losses[10:], losses[11:]):
        assert cur <= prev * 1.05


def test_divergence_detected(corpus):
    problems, vocab = corpus
    cfg = TrainConfig(epochs=1, **SMALL)
    model = Seq2Code.create(problems, vocab, cfg)
    model.params["B3"][:] = np.nan
    with pytest.raises(DivergenceDetected):
        train(problems, vocab, cfg, model=model)


def test_early_stop_callback(corpus):
    problems, vocab = corpus
    cfg = TrainConfig(epochs=5, **SMALL)
    _, log = train(problems, vocab, cfg, on_epoch=lambda m, r: r["epoch"] < 2)
    assert len(log) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    assert TrainConfig(hidden=64).attention_dim == 64


# inference ---------------------------------------------------------------------

def test_zero_prediction_is_empty_tree(corpus):
    problems, vocab = corpus
    model = Seq2Code.create(problems, vocab, TrainConfig(**SMALL))
    p = problems[0]
    answer, diag = _decode_answer(np.zeros((p.m, len(vocab))), model, p)
    assert answer is None and diag["error"] == "EmptyTree"


def test_gold_vectors_give_gold_answer(corpus):
    problems, vocab = corpus
    model = Seq2Code.create(problems, vocab, TrainConfig(**SMALL))
    for p in problems:
        gold = codec.vectorize(p.codes, vocab).astype(float)
        answer, diag = _decode_answer(gold + 0.3, model, p)
        assert dataset.answers_match(answer, p.answer) and diag["error"] is None


def test_predict_never_raises(corpus):
    problems, vocab = corpus
    model = Seq2Code.create(problems, vocab, TrainConfig(**SMALL))
    for p in problems[:10]:
        answer, diag = predict_answer(model, p)
        assert answer is None or isinstance(answer, float)
        assert len(diag["codes"]) == p.m


def test_checkpoint_roundtrip(corpus, tmp_path):
    problems, vocab = corpus
    model, _ = train(problems, vocab, TrainConfig(epochs=1, **SMALL))
    model.save(tmp_path / "m.npz")
    back = Seq2Code.load(tmp_path / "m.npz")
    assert back.config == model.config and back.codes == vocab
    for a, b in zip(model.predict_vectors(problems[:5]), back.predict_vectors(problems[:5])):
        np.testing.assert_array_equal(a, b)


def test_token_vocab_unknown_words():
    v = TokenVocab.build([["a", "b", "a", "NUM_2"]], max_words=1)
    assert v.words[-1] == "a" and "b" not in v.words
    assert v.ids(["b", "NUM_2"]) == [1, v.index["NUM_2"]]
