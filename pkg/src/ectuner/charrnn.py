"""Character-level recurrent language model over the DNA alphabet.

A stack of vanilla tanh recurrences

    s_t^l = tanh(U_l x_t^l + W_l s_{t-1}^l + b_l)

(where x^0 is the one-hot input character and x^l = s^{l-1} above) feeds a
softmax over {A, C, G, T}.  Training is truncated backpropagation through
time with plain SGD and global gradient-norm clipping.  'N' characters
contribute a zero input vector and are excluded from the loss.  All math is
float64 numpy; given a seed, training is bit-reproducible.

Model file format (little-endian):

    magic    4s  = b"ATHR"
    version  u32 = 1
    layers   u32
    hidden   u32
    vocab    u32 = 4
    weights  f64 C-order: per layer U, W, b; then V, c
    sha256 digest (32 bytes) of everything before it
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng, shuffled, spawn_rng
from .ngram import PerplexityReport
from .seqio import ReadSet, sample_reads

MAGIC = b"ATHR"
VERSION = 1
VOCAB = "ACGT"
VOCAB_SIZE = 4
_CHAR_ID = {c: i for i, c in enumerate(VOCAB)}
_CHAR_ID["N"] = 4  # masked: zero input, no loss


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class PerplexityUndefinedError(ValueError):
    pass


@dataclass
class TrainConfig:
    layers: int = 2
    hidden: int = 32
    epochs: int = 10
    minibatch: int = 200
    learning_rate: float = 2e-3
    unroll: int = 50
    clip_norm: float = 5.0
    train_frac: float = 0.90
    val_frac: float = 0.05


class RnnLm:
    def __init__(self, Us, Ws, bs, V, c) -> None:
        self.Us = Us
        self.Ws = Ws
        self.bs = bs
        self.V = V
        self.c = c

    @property
    def n_layers(self) -> int:
        return len(self.Us)

    @property
    def hidden(self) -> int:
        return self.Ws[0].shape[0]

    @classmethod
    def init(cls, layers: int = 2, hidden: int = 32, seed: int = 0) -> "RnnLm":
        """Uniform init in [-r, r] with r = sqrt(1/fan_in), per matrix."""
        if layers < 1:
            raise TrainingError(f"need at least one layer, got {layers}")
        rng = make_rng(seed)

        def uniform(rows: int, cols: int) -> np.ndarray:
            r = math.sqrt(1.0 / cols)
            return (rng.random((rows, cols)) * 2.0 - 1.0) * r

        Us, Ws, bs = [], [], []
        for l in range(layers):
            fan_in = VOCAB_SIZE if l == 0 else hidden
            Us.append(uniform(hidden, fan_in))
            Ws.append(uniform(hidden, hidden))
            bs.append(np.zeros(hidden))
        V = uniform(VOCAB_SIZE, hidden)
        c = np.zeros(VOCAB_SIZE)
        return cls(Us, Ws, bs, V, c)

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in range(self.n_layers):
            out += [self.Us[l], self.Ws[l], self.bs[l]]
        out += [self.V, self.c]
        return out

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.params(), values):
            p[...] = v

    def zero_states(self, batch: int) -> list[np.ndarray]:
        return [np.zeros((batch, self.hidden)) for _ in range(self.n_layers)]

    def score_reads(self, readset: ReadSet, threads: int = 1) -> PerplexityReport:
        return perplexity(self, readset)

    # -- persistence ------------------------------------------------------

    def save(self, path: str) -> None:
        buf = bytearray()
        buf += MAGIC
        buf += struct.pack("<IIII", VERSION, self.n_layers, self.hidden, VOCAB_SIZE)
        for p in self.params():
            buf += np.ascontiguousarray(p, dtype="<f8").tobytes()
        digest = hashlib.sha256(bytes(buf)).digest()
        with open(path, "wb") as fh:
            fh.write(bytes(buf))
            fh.write(digest)

    @classmethod
    def load(cls, path: str) -> "RnnLm":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 20 or blob[:4] != MAGIC:
            raise ModelFormatError(f"{path}: not an RNN model file")
        payload, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(payload).digest() != digest:
            raise ModelFormatError(f"{path}: checksum mismatch (corrupt or truncated)")
        version, layers, hidden, vocab = struct.unpack_from("<IIII", payload, 4)
        if version != VERSION:
            raise ModelFormatError(f"{path}: unsupported version {version}")
        if vocab != VOCAB_SIZE:
            raise ModelFormatError(f"{path}: unsupported vocabulary size {vocab}")
        model = cls.init(layers, hidden, seed=0)
        off = 20
        for p in model.params():
            n = p.size * 8
            if off + n > len(payload):
                raise ModelFormatError(f"{path}: truncated weight block")
            p[...] = np.frombuffer(payload[off : off + n], dtype="<f8").reshape(p.shape)
            off += n
        if off != len(payload):
            raise ModelFormatError(f"{path}: trailing bytes after weights")
        return model


def encode(seq: str) -> np.ndarray:
    try:
        return np.array([_CHAR_ID[c] for c in seq], dtype=np.int64)
    except KeyError:
        bad = sorted(set(seq) - set(_CHAR_ID))
        raise ValueError(f"sequence contains characters outside ACGTN: {bad}") from None


def _one_hot(ids: np.ndarray) -> np.ndarray:
    """(B,) int ids -> (B, 4); id 4 ('N') maps to the zero vector."""
    x = np.zeros((ids.shape[0], VOCAB_SIZE))
    valid = ids < VOCAB_SIZE
    x[np.nonzero(valid)[0], ids[valid]] = 1.0
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_chunk(model: RnnLm, x_ids: np.ndarray, states: list[np.ndarray]):
    """Run the stack over a (T, B) id chunk.

    Returns per-step probabilities (T, B, 4), per-layer state sequences
    (lists of (T, B, H)), and the final states.
    """
    T, B = x_ids.shape
    L, H = model.n_layers, model.hidden
    s_seq = [np.empty((T, B, H)) for _ in range(L)]
    probs = np.empty((T, B, VOCAB_SIZE))
    cur = [s.copy() for s in states]
    for t in range(T):
        inp = _one_hot(x_ids[t])
        for l in range(L):
            a = inp @ model.Us[l].T + cur[l] @ model.Ws[l].T + model.bs[l]
            cur[l] = np.tanh(a)
            s_seq[l][t] = cur[l]
            inp = cur[l]
        probs[t] = _softmax(inp @ model.V.T + model.c)
    return probs, s_seq, cur


def _backward_chunk(model, x_ids, targets, mask, states, probs, s_seq, loss_scale):
    """Gradients of (loss_scale * summed masked CE) for one chunk."""
    T, B = x_ids.shape
    L = model.n_layers
    gUs = [np.zeros_like(u) for u in model.Us]
    gWs = [np.zeros_like(w) for w in model.Ws]
    gbs = [np.zeros_like(b) for b in model.bs]
    gV = np.zeros_like(model.V)
    gc = np.zeros_like(model.c)
    dnext = [np.zeros((B, model.hidden)) for _ in range(L)]
    rows = np.arange(B)
    for t in reversed(range(T)):
        dy = probs[t].copy()
        tgt = np.where(mask[t], targets[t], 0)
        dy[rows, tgt] -= 1.0
        dy *= (mask[t] * loss_scale)[:, None]
        top = s_seq[L - 1][t]
        gV += dy.T @ top
        gc += dy.sum(axis=0)
        dabove = dy @ model.V
        for l in reversed(range(L)):
            s_t = s_seq[l][t]
            s_prev = s_seq[l][t - 1] if t > 0 else states[l]
            draw = (dabove + dnext[l]) * (1.0 - s_t * s_t)
            inp = _one_hot(x_ids[t]) if l == 0 else s_seq[l - 1][t]
            gUs[l] += draw.T @ inp
            gWs[l] += draw.T @ s_prev
            gbs[l] += draw.sum(axis=0)
            dnext[l] = draw @ model.Ws[l]
            dabove = draw @ model.Us[l]
    grads: list[np.ndarray] = []
    for l in range(L):
        grads += [gUs[l], gWs[l], gbs[l]]
    grads += [gV, gc]
    return grads


def _clip(grads: list[np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale


def _batch_arrays(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad encoded reads to a (T, B) input/target pair with a loss mask."""
    B = len(seqs)
    T = max(len(s) for s in seqs) - 1
    x = np.full((T, B), 4, dtype=np.int64)
    y = np.full((T, B), 4, dtype=np.int64)
    mask = np.zeros((T, B))
    for b, s in enumerate(seqs):
        n = len(s) - 1
        if n <= 0:
            continue
        x[:n, b] = s[:-1]
        y[:n, b] = s[1:]
        mask[:n, b] = (s[1:] < VOCAB_SIZE).astype(float)
    return x, y, mask


def _masked_ce(probs: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    tgt = np.where(mask > 0, targets, 0)
    p = np.take_along_axis(probs, tgt[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        nll = -np.log(np.maximum(p, 1e-300))
    return float((nll * mask).sum())


def _run_batch(model, seqs, config, update: bool):
    """One pass over a batch of encoded reads; optionally apply SGD steps.

    Returns (summed masked CE, masked count). States carry across unroll
    chunks within the batch and reset between batches.
    """
    x, y, mask = _batch_arrays(seqs)
    T, B = x.shape
    states = model.zero_states(B)
    loss_sum = 0.0
    count = 0.0
    for start in range(0, T, config.unroll):
        end = min(start + config.unroll, T)
        xs, ys, ms = x[start:end], y[start:end], mask[start:end]
        n = float(ms.sum())
        probs, s_seq, new_states = _forward_chunk(model, xs, states)
        loss_sum += _masked_ce(probs, ys, ms)
        count += n
        if update and n > 0:
            grads = _backward_chunk(
                model, xs, ys, ms, states, probs, s_seq, loss_scale=1.0 / n
            )
            _clip(grads, config.clip_norm)
            for p, g in zip(model.params(), grads):
                p -= config.learning_rate * g
        states = new_states
    return loss_sum, count


def train(
    readset: ReadSet, config: TrainConfig | None = None, seed: int = 0
) -> tuple[RnnLm, list[dict]]:
    """Train on a 90/5/5 read split; returns the best-validation parameters.

    The per-epoch history carries mean train and validation loss (nats per
    character).
    """
    config = config or TrainConfig()
    reads = [r for r in readset if len(r.sequence) >= 2]
    if not reads:
        raise TrainingError("no reads of length >= 2 to train on")
    order = shuffled(spawn_rng(seed, 0), len(reads))
    n_train = int(len(reads) * config.train_frac)
    n_val = int(len(reads) * config.val_frac)
    train_reads = [reads[i] for i in order[:n_train]]
    val_reads = [reads[i] for i in order[n_train : n_train + n_val]]
    if len(train_reads) < config.minibatch:
        raise TrainingError(
            f"training split has {len(train_reads)} reads; "
            f"minibatch of {config.minibatch} cannot be filled"
        )
    encoded = [encode(r.sequence) for r in train_reads]
    val_encoded = [encode(r.sequence) for r in val_reads]

    model = RnnLm.init(config.layers, config.hidden, seed=seed)
    epoch_rng = spawn_rng(seed, 1)
    best: list[np.ndarray] | None = None
    best_val = math.inf
    history: list[dict] = []
    for epoch in range(config.epochs):
        perm = shuffled(epoch_rng, len(encoded))
        loss_sum = 0.0
        count = 0.0
        for start in range(0, len(perm), config.minibatch):
            batch = [encoded[i] for i in perm[start : start + config.minibatch]]
            ls, n = _run_batch(model, batch, config, update=True)
            loss_sum += ls
            count += n
        train_loss = loss_sum / count if count else math.nan
        if val_encoded:
            vl, vn = _run_batch(model, val_encoded, config, update=False)
            val_loss = vl / vn if vn else math.nan
        else:
            val_loss = train_loss
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss}
        )
        if val_loss < best_val:
            best_val = val_loss
            best = model.copy_params()
    if best is not None:
        model.set_params(best)
    return model, history


def forward(model: RnnLm, seq: str) -> np.ndarray:
    """Next-character probabilities after each position of ``seq``.

    Row t is the distribution of the character following ``seq[:t+1]``.
    Characters must be in ACGT.
    """
    if not seq:
        raise ValueError("empty sequence")
    ids = encode(seq)
    if (ids >= VOCAB_SIZE).any():
        raise ValueError("forward() requires characters in ACGT only")
    probs, _, _ = _forward_chunk(model, ids[:, None], model.zero_states(1))
    return probs[:, 0, :]


def perplexity(
    model: RnnLm,
    readset: ReadSet,
    sample_n: int | None = None,
    seed: int = 0,
    batch: int = 256,
) -> PerplexityReport:
    """exp(mean cross-entropy) over next-character predictions.

    When ``sample_n`` is given, scores a uniform without-replacement sample.
    Positions whose target character is 'N' are excluded and tallied.
    """
    if sample_n is not None:
        readset = sample_reads(readset, sample_n, seed)
    per_read: list[float] = []
    scored = 0
    skipped = 0
    chunk: list[np.ndarray] = []

    def flush() -> None:
        nonlocal scored, skipped
        if not chunk:
            return
        x, y, mask = _batch_arrays(chunk)
        probs, _, _ = _forward_chunk(model, x, model.zero_states(len(chunk)))
        tgt = np.where(mask > 0, y, 0)
        p = np.take_along_axis(probs, tgt[..., None], axis=-1)[..., 0]
        nll = np.where(mask > 0, -np.log(np.maximum(p, 1e-300)), 0.0)
        for b, s in enumerate(chunk):
            per_read.append(math.fsum(nll[: len(s) - 1, b]))
        scored += int(mask.sum())
        skipped += int(sum((s[1:] >= VOCAB_SIZE).sum() for s in chunk))
        chunk.clear()

    for r in readset:
        if len(r.sequence) < 2:
            continue
        chunk.append(encode(r.sequence))
        if len(chunk) >= batch:
            flush()
    flush()
    if scored == 0:
        raise PerplexityUndefinedError("no scoreable character transitions")
    total = math.fsum(per_read)
    return PerplexityReport(
        avg_perplexity=math.exp(total / scored),
        scored_words=scored,
        skipped_words=skipped,
        sum_neg_log_prob=total,
    )


def gradient_check(model: RnnLm, seq: str, eps: float = 1e-5) -> float:
    """Max relative gap between BPTT and central-difference gradients.

    Uses the full-sequence mean CE loss on a batch of one.
    """
    ids = encode(seq)
    if len(ids) < 2:
        raise ValueError("need at least two characters")
    x = ids[:-1][:, None]
    y = ids[1:][:, None]
    mask = (y < VOCAB_SIZE).astype(float)
    n = float(mask.sum())
    if n == 0:
        raise ValueError("no scoreable transitions")
    states = model.zero_states(1)

    def loss() -> float:
        probs, _, _ = _forward_chunk(model, x, states)
        return _masked_ce(probs, y, mask) / n

    probs, s_seq, _ = _forward_chunk(model, x, states)
    analytic = _backward_chunk(model, x, y, mask, states, probs, s_seq, 1.0 / n)
    worst = 0.0
    for p, g in zip(model.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss()
            flat[i] = orig - eps
            lo = loss()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
