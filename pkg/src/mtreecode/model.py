"""Sequence-to-code model in plain numpy.

A bidirectional LSTM encodes the masked problem; each value occurrence takes
the encoder state at its mask position, attends over all states with an
additive score ``U . tanh(W [e_i; h_t])``, and a three-layer feed-forward
generator maps ``[context; e_i]`` to a real vector over the code vocabulary.
Training minimizes, summed over value occurrences, the mean squared error
over code dimensions. Gradients are derived by hand (no autodiff).
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import codec
from .dataset import Problem, answers_match
from .errors import DivergenceDetected, MTreeError, PositionOutOfRange, ShapeMismatch
from .mtree import eval_mtree

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PAD, UNK = "<pad>", "<unk>"
MAX_MASKS = 32


@dataclass
class TrainConfig:
    embed_dim: int = 128
    hidden: int = 512
    attn_dim: Optional[int] = None  # defaults to hidden
    ffn: tuple = (2048, 1024)
    lr: float = 0.002
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    clip_norm: float = 5.0
    optimizer: str = "adam"  # adam | momentum | sgd
    momentum: float = 0.9
    activation: str = "relu"  # relu | tanh
    max_words: int = 2500
    log_timing: bool = True

    def __post_init__(self):
        self.ffn = tuple(self.ffn)
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning rate, batch size and epochs must be nonnegative")
        if self.optimizer not in ("adam", "momentum", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def attention_dim(self):
        return self.attn_dim or self.hidden


# --------------------------------------------------------------------------
# token vocabulary

class TokenVocab:
    def __init__(self, words: Sequence[str]):
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def build(cls, token_lists, max_words=2500):
        counts = Counter(t for toks in token_lists for t in toks if not t.startswith("NUM_"))
        frequent = sorted(counts, key=lambda w: (-counts[w], w))[:max_words]
        return cls([PAD, UNK] + [f"NUM_{i}" for i in range(MAX_MASKS)] + frequent)

    def ids(self, tokens) -> List[int]:
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def __len__(self):
        return len(self.words)


# --------------------------------------------------------------------------
# parameters

PARAM_NAMES = (
    "emb",
    "fw_Wx", "fw_Wh", "fw_b",
    "bw_Wx", "bw_Wh", "bw_b",
    "att_W", "att_U",
    "W1", "B1", "W2", "B2", "W3", "B3",
)


def init_params(n_words, n_codes, cfg: TrainConfig, rng=None) -> Dict[str, np.ndarray]:
    """Uniform in +-1/sqrt(fan_in) for every tensor."""
    rng = rng or np.random.default_rng(cfg.seed)
    de, d, da = cfg.embed_dim, cfg.hidden, cfg.attention_dim
    h1, h2 = cfg.ffn
    shapes = {
        "emb": ((n_words, de), de),
        "fw_Wx": ((de, 4 * d), de), "fw_Wh": ((d, 4 * d), d), "fw_b": ((4 * d,), d),
        "bw_Wx": ((de, 4 * d), de), "bw_Wh": ((d, 4 * d), d), "bw_b": ((4 * d,), d),
        "att_W": ((4 * d, da), 4 * d), "att_U": ((da,), da),
        "W1": ((4 * d, h1), 4 * d), "B1": ((h1,), 4 * d),
        "W2": ((h1, h2), h1), "B2": ((h2,), h1),
        "W3": ((h2, n_codes), h2), "B3": ((n_codes,), h2),
    }
    params = {}
    for name in PARAM_NAMES:
        shape, fan_in = shapes[name]
        bound = 1.0 / math.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(x, kind):
    return np.maximum(x, 0.0) if kind == "relu" else np.tanh(x)


def _act_grad(x, y, kind):
    return (x > 0).astype(x.dtype) if kind == "relu" else 1.0 - y * y


# --------------------------------------------------------------------------
# forward pieces

def _lstm(x, Wx, Wh, b, mask=None, reverse=False):
    """Run one direction over (B, T, de); returns hidden states and a cache."""
    B, T, _ = x.shape
    d = Wh.shape[0]
    h = np.zeros((B, d))
    c = np.zeros((B, d))
    hs = np.zeros((B, T, d))
    cache = []
    xw = x @ Wx + b
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = xw[:, t] + h @ Wh
        i = _sigmoid(z[:, :d])
        f = _sigmoid(z[:, d:2 * d])
        g = np.tanh(z[:, 2 * d:3 * d])
        o = _sigmoid(z[:, 3 * d:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if mask is not None:
            m = mask[:, t:t + 1]
            h_new = h_new * m
            c_new = c_new * m
        cache.append((t, h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        hs[:, t] = h
    return hs, cache


def _lstm_backward(dhs, x, Wx, Wh, cache, mask=None):
    B, T, _ = x.shape
    d = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, d))
    dc_next = np.zeros((B, d))
    dz = np.zeros((B, T, 4 * d))
    for t, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
        dh = dhs[:, t] + dh_next
        dc = dc_next
        if mask is not None:
            m = mask[:, t:t + 1]
            dh = dh * m
            dc = dc * m
        dc = dc + dh * o * (1.0 - tc * tc)
        dzt = dz[:, t]
        dzt[:, :d] = dc * g * i * (1.0 - i)
        dzt[:, d:2 * d] = dc * c_prev * f * (1.0 - f)
        dzt[:, 2 * d:3 * d] = dc * i * (1.0 - g * g)
        dzt[:, 3 * d:] = dh * tc * o * (1.0 - o)
        dWh += h_prev.T @ dzt
        dh_next = dzt @ Wh.T
        dc_next = dc * f
    flat = dz.reshape(B * T, 4 * d)
    dWx += x.reshape(B * T, -1).T @ flat
    db = flat.sum(0)
    dx = (flat @ Wx.T).reshape(x.shape)
    return dx, dWx, dWh, db


@dataclass
class Batch:
    ids: np.ndarray  # (B, T) token ids, 0-padded
    mask: np.ndarray  # (B, T) 1.0 on real tokens
    pos: np.ndarray  # (B, M) value positions, 0-padded
    nmask: np.ndarray  # (B, M) 1.0 on real values
    targets: Optional[np.ndarray] = None  # (N, l) rows for the real values, batch order

    @property
    def n_values(self):
        return int(self.nmask.sum())


def make_batch(id_lists, positions, targets=None) -> Batch:
    B = len(id_lists)
    T = max(len(x) for x in id_lists)
    M = max((len(q) for q in positions), default=0)
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    pos = np.zeros((B, max(M, 1)), dtype=np.int64)
    nmask = np.zeros((B, max(M, 1)))
    for b, (x, q) in enumerate(zip(id_lists, positions)):
        ids[b, : len(x)] = x
        mask[b, : len(x)] = 1.0
        for i, qi in enumerate(q):
            if not 0 <= qi < len(x):
                raise PositionOutOfRange(f"position {qi} outside a sequence of length {len(x)}")
        if len(set(q)) != len(q):
            raise PositionOutOfRange(f"repeated value positions {list(q)}")
        pos[b, : len(q)] = q
        nmask[b, : len(q)] = 1.0
    if targets is not None:
        targets = np.concatenate([np.asarray(t, dtype=float) for t in targets], axis=0)
    return Batch(ids, mask, pos, nmask, targets)


def forward(params, batch: Batch, activation="relu", hidden=None):
    """Predicted code vectors (N, l) for every real value in the batch.

    ``hidden`` may supply precomputed encoder states (B, T, 2d) in place of
    the recurrent encoder.
    """
    cache = {}
    x = params["emb"][batch.ids]
    if hidden is None:
        hf, cf = _lstm(x, params["fw_Wx"], params["fw_Wh"], params["fw_b"])
        hb, cb = _lstm(x, params["bw_Wx"], params["bw_Wh"], params["bw_b"], batch.mask, reverse=True)
        H = np.concatenate([hf, hb], axis=-1)
        cache.update(x=x, cf=cf, cb=cb)
    else:
        H = hidden
    B, T, d2 = H.shape
    bidx = np.arange(B)[:, None]
    e = H[bidx, batch.pos]  # (B, M, 2d)
    W = params["att_W"]
    A = e @ W[:d2]
    Ht = H @ W[d2:]
    S = np.tanh(A[:, :, None, :] + Ht[:, None, :, :])  # (B, M, T, da)
    score = S @ params["att_U"]
    score = np.where(batch.mask[:, None, :] > 0, score, -np.inf)
    score = score - score.max(axis=-1, keepdims=True)
    alpha = np.exp(score)
    alpha /= alpha.sum(axis=-1, keepdims=True)
    E = alpha @ H  # (B, M, 2d)
    sel = batch.nmask.reshape(-1) > 0
    z = np.concatenate([E, e], axis=-1).reshape(-1, 2 * d2)[sel]
    a1 = z @ params["W1"] + params["B1"]
    h1 = _act(a1, activation)
    a2 = h1 @ params["W2"] + params["B2"]
    h2 = _act(a2, activation)
    out = h2 @ params["W3"] + params["B3"]
    cache.update(H=H, e=e, S=S, alpha=alpha, sel=sel, z=z, a1=a1, h1=h1, a2=a2, h2=h2, activation=activation)
    return out, cache


def mse_loss(pred, target) -> float:
    """Sum over value occurrences of the mean squared error over code dimensions."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        return 0.0
    return float(((pred - target) ** 2).sum() / pred.shape[-1])


def backward(params, batch: Batch, out, cache):
    """Gradients of :func:`mse_loss` (against ``batch.targets``) for every parameter."""
    act = cache["activation"]
    grads = {}
    l = out.shape[1]
    dout = 2.0 / l * (out - batch.targets)
    grads["W3"] = cache["h2"].T @ dout
    grads["B3"] = dout.sum(0)
    da2 = (dout @ params["W3"].T) * _act_grad(cache["a2"], cache["h2"], act)
    grads["W2"] = cache["h1"].T @ da2
    grads["B2"] = da2.sum(0)
    da1 = (da2 @ params["W2"].T) * _act_grad(cache["a1"], cache["h1"], act)
    grads["W1"] = cache["z"].T @ da1
    grads["B1"] = da1.sum(0)
    dz_sel = da1 @ params["W1"].T

    H, e, S, alpha = cache["H"], cache["e"], cache["S"], cache["alpha"]
    B, T, d2 = H.shape
    M = e.shape[1]
    dz = np.zeros((B * M, 2 * d2))
    dz[cache["sel"]] = dz_sel
    dz = dz.reshape(B, M, 2 * d2)
    dE, de = dz[..., :d2], dz[..., d2:].copy()

    dH = np.einsum("bmt,bmd->btd", alpha, dE)
    dalpha = np.einsum("bmd,btd->bmt", dE, H)
    dscore = alpha * (dalpha - (alpha * dalpha).sum(-1, keepdims=True))
    U = params["att_U"]
    grads["att_U"] = np.einsum("bmt,bmta->a", dscore, S)
    dpre = dscore[..., None] * U * (1.0 - S * S)
    dA = dpre.sum(2)
    dHt = dpre.sum(1)
    W = params["att_W"]
    grads["att_W"] = np.concatenate([
        e.reshape(-1, d2).T @ dA.reshape(-1, dA.shape[-1]),
        H.reshape(-1, d2).T @ dHt.reshape(-1, dHt.shape[-1]),
    ])
    de += dA @ W[:d2].T
    dH += dHt @ W[d2:].T
    bidx = np.repeat(np.arange(B), M)
    np.add.at(dH, (bidx, batch.pos.reshape(-1)), (de * batch.nmask[..., None]).reshape(-1, d2))

    if "x" not in cache:
        return grads, dH
    d = d2 // 2
    x = cache["x"]
    dxf, grads["fw_Wx"], grads["fw_Wh"], grads["fw_b"] = _lstm_backward(
        dH[..., :d], x, params["fw_Wx"], params["fw_Wh"], cache["cf"])
    dxb, grads["bw_Wx"], grads["bw_Wh"], grads["bw_b"] = _lstm_backward(
        dH[..., d:], x, params["bw_Wx"], params["bw_Wh"], cache["cb"], batch.mask)
    demb = np.zeros_like(params["emb"])
    np.add.at(demb, batch.ids.reshape(-1), (dxf + dxb).reshape(-1, x.shape[-1]))
    grads["emb"] = demb
    return grads, None


# --------------------------------------------------------------------------
# single-problem views of the forward pass

def encode_problem(params, ids) -> np.ndarray:
    """Encoder states (n, 2d): forward and backward LSTM states side by side."""
    b = make_batch([list(ids)], [[]])
    x = params["emb"][b.ids]
    hf, _ = _lstm(x, params["fw_Wx"], params["fw_Wh"], params["fw_b"])
    hb, _ = _lstm(x, params["bw_Wx"], params["bw_Wh"], params["bw_b"], b.mask, reverse=True)
    return np.concatenate([hf, hb], axis=-1)[0]


def number_repr(H, positions) -> np.ndarray:
    H = np.asarray(H)
    positions = list(positions)
    if len(set(positions)) != len(positions):
        raise PositionOutOfRange(f"repeated value positions {positions}")
    for q in positions:
        if not 0 <= q < len(H):
            raise PositionOutOfRange(f"position {q} outside a sequence of length {len(H)}")
    return H[positions] if positions else np.zeros((0, H.shape[1]))


def attention_weights(H, e, params) -> np.ndarray:
    d2 = H.shape[1]
    W = params["att_W"]
    score = np.tanh((e @ W[:d2])[None, :] + H @ W[d2:]) @ params["att_U"]
    score = score - score.max()
    a = np.exp(score)
    return a / a.sum()


def attend(H, e, params) -> np.ndarray:
    """Context vector: attention-weighted sum of encoder states."""
    return attention_weights(H, e, params) @ H


def generate(z, params, activation="relu") -> np.ndarray:
    h1 = _act(z @ params["W1"] + params["B1"], activation)
    h2 = _act(h1 @ params["W2"] + params["B2"], activation)
    return h2 @ params["W3"] + params["B3"]


# --------------------------------------------------------------------------
# optimizers

class Optimizer:
    def __init__(self, cfg: TrainConfig, params):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()} if cfg.optimizer == "adam" else None

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        if cfg.clip_norm:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
        for k, g in grads.items():
            if cfg.optimizer == "sgd":
                params[k] -= cfg.lr * g
            elif cfg.optimizer == "momentum":
                self.m[k] = cfg.momentum * self.m[k] + g
                params[k] -= cfg.lr * self.m[k]
            else:
                b1, b2 = 0.9, 0.999
                self.m[k] = b1 * self.m[k] + (1 - b1) * g
                self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
                mhat = self.m[k] / (1 - b1 ** self.t)
                vhat = self.v[k] / (1 - b2 ** self.t)
                params[k] -= cfg.lr * mhat / (np.sqrt(vhat) + 1e-8)


# --------------------------------------------------------------------------
# the model

@dataclass
class Seq2Code:
    config: TrainConfig
    words: TokenVocab
    codes: codec.CodeVocab
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, problems, code_vocab, config: TrainConfig):
        words = TokenVocab.build((p.tokens for p in problems), config.max_words)
        params = init_params(len(words), len(code_vocab), config)
        return cls(config, words, code_vocab, params)

    def batch(self, problems, with_targets=True) -> Batch:
        targets = None
        if with_targets:
            targets = [codec.vectorize(p.codes, self.codes) for p in problems]
        return make_batch([self.words.ids(p.tokens) for p in problems],
                          [p.positions for p in problems], targets)

    def predict_vectors(self, problems) -> List[np.ndarray]:
        """Real-valued code vectors, one (m, l) array per problem."""
        if not problems:
            return []
        b = self.batch(problems, with_targets=False)
        out, _ = forward(self.params, b, self.config.activation)
        splits = np.cumsum([len(p.positions) for p in problems])[:-1]
        return np.split(out, splits)

    def predict_answer(self, problem: Problem):
        return predict_answer(self, problem)

    # checkpoints: numpy .npz (little-endian, row-major) plus a JSON header
    def save(self, path):
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "words": self.words.words,
            "codes": list(self.codes.codes),
        }
        np.savez(path, __meta__=np.array(json.dumps(meta, ensure_ascii=False)),
                 **{k: v.astype("<f8") for k, v in self.params.items()})

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            params = {k: z[k].astype(float) for k in PARAM_NAMES}
        cfg = meta["config"]
        cfg["ffn"] = tuple(cfg["ffn"])
        return cls(TrainConfig(**cfg), TokenVocab(meta["words"]), codec.CodeVocab(tuple(meta["codes"])), params)


def _decode_answer(vectors, model: Seq2Code, problem: Problem):
    counts = codec.round_counts(vectors)
    diag = {"codes": codec.vectors_to_codesets(counts, model.codes), "error": None}
    try:
        tree = codec.decode(diag["codes"], problem.value_pairs())
        answer = eval_mtree(tree)
        diag["mtree"] = tree.serialize()
    except MTreeError as exc:
        diag["error"] = type(exc).__name__
        return None, diag
    return answer, diag


def predict_answer(model: Seq2Code, problem: Problem):
    """``(answer or None, diagnostics)``; decoding failures are reported, never raised."""
    return _decode_answer(model.predict_vectors([problem])[0], model, problem)


def answer_accuracy(model: Seq2Code, problems, batch_size=256) -> float:
    if not problems:
        return 0.0
    correct = 0
    for k in range(0, len(problems), batch_size):
        chunk = problems[k:k + batch_size]
        for p, vec in zip(chunk, model.predict_vectors(chunk)):
            answer, _ = _decode_answer(vec, model, p)
            correct += answer is not None and answers_match(answer, p.answer)
    return correct / len(problems)


def _batches(problems, batch_size, rng):
    """Shuffle, then group similar lengths inside windows of 50 batches."""
    order = list(rng.permutation(len(problems)))
    window = batch_size * 50
    batches = []
    for k in range(0, len(order), window):
        chunk = sorted(order[k:k + window], key=lambda i: len(problems[i].tokens))
        batches.extend(chunk[j:j + batch_size] for j in range(0, len(chunk), batch_size))
    rng.shuffle(batches)
    return batches


def train(train_problems, code_vocab, config: TrainConfig, dev=None, model=None, on_epoch=None):
    """Minibatch training; returns ``(model, log)`` with one log record per epoch.

    The log's ``seconds`` field is wall time; every other field is a
    deterministic function of the data and ``config.seed``.
    """
    model = model or Seq2Code.create(train_problems, code_vocab, config)
    opt = Optimizer(config, model.params)
    rng = np.random.default_rng(config.seed + 1)
    history = []
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        total = 0.0
        for idx in _batches(train_problems, config.batch_size, rng):
            b = model.batch([train_problems[i] for i in idx])
            out, cache = forward(model.params, b, config.activation)
            batch_loss = mse_loss(out, b.targets)
            if not math.isfinite(batch_loss):
                raise DivergenceDetected(f"loss became {batch_loss} in epoch {epoch}")
            grads, _ = backward(model.params, b, out, cache)
            opt.step(model.params, grads)
            total += batch_loss
        rec = {"epoch": epoch, "loss": total}
        rec["dev_accuracy"] = answer_accuracy(model, dev) if dev else None
        if config.log_timing:
            rec["seconds"] = round(time.perf_counter() - start, 3)
        history.append(rec)
        log.info("epoch %d loss %.6f dev %s", epoch, total, rec["dev_accuracy"])
        if on_epoch is not None and on_epoch(model, rec) is False:
            break
    return model, history
