"""Toy autoregressive policy with exact log-probabilities and gradients.

The hidden state for the next token combines two position-weighted sums
over the previous ``window`` tokens with a log-count-weighted bag of prompt
embeddings:

    a_t = sum_k A[k] * E[c_{t-k}]
    g_t = sum_k B[k] * F[c_{t-k}]
    p   = sum_v (log(1 + count_v) - m_v) P[v]
    h_t = a_t + (1 + g_t) * p
    logits_t = U h_t + b

The gate ``g_t`` lets the recent context decide which parts of the prompt
summary matter for the next token. The optional offset ``m`` (usually the
mean log-count over the training prompts) removes the part of the bag that
every prompt shares, so that ``p`` mostly carries what sets a prompt apart.

Only tokens in ``emit_ids`` can be generated; the others get probability 0.

Every forward pass goes through ``_hidden`` and ``_logits``, which work
row by row with a fixed summation order. A row therefore gets the same bits
whether it is computed alone, inside a sampling batch, or teacher-forced.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"LUNGRISK-POLICY\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyShape:
    vocab_size: int
    embed_dim: int = 16
    window: int = 32
    pad_id: int = 0
    eos_id: int = 1
    emit_ids: Optional[tuple[int, ...]] = None
    prompt_offset: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.vocab_size < 2 or self.embed_dim < 1 or self.window < 1:
            raise ValueError("invalid policy dimensions")
        if self.prompt_offset is not None:
            offset = tuple(float(x) for x in self.prompt_offset)
            if len(offset) != self.vocab_size or not all(np.isfinite(offset)):
                raise ValueError("prompt_offset needs one finite value per vocabulary token")
            object.__setattr__(self, "prompt_offset", offset)
        if self.emit_ids is not None:
            emit = tuple(sorted(set(int(i) for i in self.emit_ids)))
            if emit[0] < 0 or emit[-1] >= self.vocab_size:
                raise ValueError("emit ids out of range")
            object.__setattr__(self, "emit_ids", emit)

    @property
    def emit(self) -> np.ndarray:
        if self.emit_ids is None:
            return np.arange(self.vocab_size)
        return np.asarray(self.emit_ids)

    @property
    def sizes(self) -> dict[str, tuple[int, ...]]:
        V, d, W = self.vocab_size, self.embed_dim, self.window
        return {
            "embed": (V, d),
            "prompt_embed": (V, d),
            "position": (W, d),
            "gate_embed": (V, d),
            "gate_position": (W, d),
            "out_proj": (V, d),
            "out_bias": (V,),
        }

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.sizes.values())


class PolicyParams:
    """Immutable parameter snapshot backed by one flat float64 vector."""

    def __init__(self, shape: PolicyShape, vector):
        vector = np.array(vector, dtype=np.float64)
        if vector.shape != (shape.n_params,):
            raise ValueError(f"expected {shape.n_params} parameters, got {vector.shape}")
        if not np.all(np.isfinite(vector)):
            raise FloatingPointError("parameters must be finite")
        vector.setflags(write=False)
        self.shape = shape
        self.vector = vector
        offset = 0
        for name, dims in shape.sizes.items():
            n = int(np.prod(dims))
            setattr(self, name, vector[offset:offset + n].reshape(dims))
            offset += n

    @classmethod
    def zeros(cls, shape: PolicyShape) -> "PolicyParams":
        return cls(shape, np.zeros(shape.n_params))

    @classmethod
    def random(cls, shape: PolicyShape, rng: np.random.Generator, scale: float = 0.1) -> "PolicyParams":
        return cls(shape, rng.normal(0.0, scale, shape.n_params))

    def replace(self, vector) -> "PolicyParams":
        return PolicyParams(self.shape, vector)

    def __eq__(self, other):
        return (isinstance(other, PolicyParams) and self.shape == other.shape
                and np.array_equal(self.vector, other.vector))

    def save(self, path) -> None:
        header = asdict(self.shape)
        for key in ("emit_ids", "prompt_offset"):
            header[key] = None if header[key] is None else list(header[key])
        header.update(version=CHECKPOINT_VERSION, n_params=self.shape.n_params, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(self.vector.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PolicyParams":
        raw = Path(path).read_bytes()
        if not raw.startswith(CHECKPOINT_MAGIC):
            raise ValueError(f"{path} is not a policy checkpoint")
        rest = raw[len(CHECKPOINT_MAGIC):]
        line, _, body = rest.partition(b"\n")
        header = json.loads(line)
        if header.pop("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        n = header.pop("n_params")
        header.pop("dtype")
        for key in ("emit_ids", "prompt_offset"):
            if header.get(key) is not None:
                header[key] = tuple(header[key])
        shape = PolicyShape(**header)
        if n != shape.n_params or len(body) != 8 * n:
            raise ValueError("checkpoint dimensions do not match its header")
        return cls(shape, np.frombuffer(body, dtype="<f8"))


@dataclass(frozen=True)
class Completion:
    prompt_tokens: tuple[int, ...]
    output_tokens: tuple[int, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self):
        if len(self.output_tokens) != len(self.logprobs):
            raise ValueError("one log-probability per output token")


# --------------------------------------------------------------------------
# deterministic forward pieces


def prompt_weights(vocab_size: int, prompt: Sequence[int]) -> np.ndarray:
    """log(1 + count) of every vocabulary token in the prompt."""
    return np.log1p(np.bincount(np.asarray(prompt, dtype=np.int64), minlength=vocab_size))


def prompt_offset(vocab_size: int, prompts: Sequence[Sequence[int]]) -> tuple[float, ...]:
    """Mean bag weights over ``prompts``, for use as ``PolicyShape.prompt_offset``."""
    if len(prompts) == 0:
        return (0.0,) * vocab_size
    return tuple(np.mean([prompt_weights(vocab_size, p) for p in prompts], axis=0).tolist())


def prompt_features(shape: PolicyShape, prompt: Sequence[int]) -> np.ndarray:
    w = prompt_weights(shape.vocab_size, prompt)
    if shape.prompt_offset is not None:
        w = w - np.asarray(shape.prompt_offset)
    return w


def prompt_vector(params: PolicyParams, prompt: Sequence[int]) -> np.ndarray:
    return prompt_features(params.shape, prompt) @ params.prompt_embed


def _window_sum(table: np.ndarray, weights: np.ndarray, ctx: np.ndarray) -> np.ndarray:
    out = np.zeros((ctx.shape[0], table.shape[1]))
    for k in range(ctx.shape[1]):
        out += weights[k] * table[ctx[:, k]]
    return out


def _hidden_parts(params: PolicyParams, ctx: np.ndarray, pvec: np.ndarray):
    pvec = np.broadcast_to(pvec, (ctx.shape[0], pvec.shape[-1]))
    a = _window_sum(params.embed, params.position, ctx)
    g = _window_sum(params.gate_embed, params.gate_position, ctx)
    return a + (1.0 + g) * pvec, g, pvec


def _hidden(params: PolicyParams, ctx: np.ndarray, pvec: np.ndarray) -> np.ndarray:
    return _hidden_parts(params, ctx, pvec)[0]


def _logits(params: PolicyParams, h: np.ndarray) -> np.ndarray:
    emit = params.shape.emit
    U = params.out_proj[emit]
    z = np.repeat(params.out_bias[emit][None, :], h.shape[0], axis=0)
    for j in range(h.shape[1]):
        z += h[:, j:j + 1] * U[:, j]
    return z


def _log_softmax(z: np.ndarray) -> np.ndarray:
    y = z - z.max(axis=1, keepdims=True)
    return y - np.log(np.exp(y).sum(axis=1, keepdims=True))


def _check_ids(params: PolicyParams, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= params.shape.vocab_size):
        raise ValueError("token id outside the vocabulary")
    return ids


def contexts(shape: PolicyShape, prompt: Sequence[int], output: Sequence[int]) -> np.ndarray:
    """Window (most recent first) preceding each output position."""
    W = shape.window
    full = np.concatenate([np.full(W, shape.pad_id), np.asarray(prompt, np.int64),
                           np.asarray(output, np.int64)]).astype(np.int64)
    P, T = len(prompt), len(output)
    pos = W + P + np.arange(T)[:, None] - 1 - np.arange(W)[None, :]
    return full[pos]


def next_token_dist(params: PolicyParams, prompt: Sequence[int], prefix: Sequence[int] = ()) -> np.ndarray:
    """Probability of every vocabulary token after ``prompt + prefix``."""
    prompt = _check_ids(params, prompt)
    prefix = _check_ids(params, prefix)
    ctx = contexts(params.shape, prompt, np.r_[prefix, 0].astype(np.int64))[-1:]
    h = _hidden(params, ctx, prompt_vector(params, prompt)[None, :])
    p = np.exp(_log_softmax(_logits(params, h)))[0]
    out = np.zeros(params.shape.vocab_size)
    out[params.shape.emit] = p
    return out


def sequence_logprobs(params: PolicyParams, prompt: Sequence[int], output: Sequence[int]) -> np.ndarray:
    """Teacher-forced log-probability of each output token."""
    prompt = _check_ids(params, prompt)
    output = _check_ids(params, output)
    if output.size == 0:
        return np.zeros(0)
    col = _emit_columns(params.shape, output)
    h = _hidden(params, contexts(params.shape, prompt, output), prompt_vector(params, prompt)[None, :])
    logp = _log_softmax(_logits(params, h))
    return logp[np.arange(output.size), col]


def _emit_columns(shape: PolicyShape, tokens: np.ndarray) -> np.ndarray:
    if shape.emit_ids is None:
        return tokens
    lookup = np.full(shape.vocab_size, -1)
    lookup[shape.emit] = np.arange(shape.emit.size)
    col = lookup[tokens]
    if np.any(col < 0):
        raise ValueError("target token cannot be emitted by this policy")
    return col


# --------------------------------------------------------------------------
# sampling


def sample_batch(params: PolicyParams, prompts: Sequence[Sequence[int]], max_len: int,
                 temperature: float, rngs: Sequence[np.random.Generator] | None = None) -> list[Completion]:
    """Sample one completion per prompt.

    Each row draws its uniforms from its own generator up front, so a row's
    result does not depend on which other rows share the batch.
    ``temperature == 0`` decodes greedily (lowest id wins ties).
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    shape = params.shape
    B, W = len(prompts), shape.window
    prompts = [_check_ids(params, p) for p in prompts]
    greedy = temperature == 0
    if not greedy:
        if rngs is None or len(rngs) != B:
            raise ValueError("one generator per prompt is required when sampling")
        uniforms = np.stack([g.random(max_len) for g in rngs]) if B else np.zeros((0, max_len))
    pvec = np.stack([prompt_vector(params, p) for p in prompts]) if B else np.zeros((0, shape.embed_dim))
    window = np.stack([contexts(shape, p, [0])[0] for p in prompts]) if B else np.zeros((0, W), np.int64)
    emit = shape.emit
    outputs: list[list[int]] = [[] for _ in range(B)]
    logps: list[list[float]] = [[] for _ in range(B)]
    active = np.arange(B)
    for step in range(max_len):
        if active.size == 0:
            break
        h = _hidden(params, window[active], pvec[active])
        z = _logits(params, h)
        logp = _log_softmax(z)
        if greedy:
            col = np.argmax(z, axis=1)
        else:
            q = np.exp(_log_softmax(z / temperature))
            cdf = np.cumsum(q, axis=1)
            u = uniforms[active, step] * cdf[:, -1]
            col = np.minimum((cdf <= u[:, None]).sum(axis=1), emit.size - 1)
        tok = emit[col]
        still = []
        for r, row in enumerate(active):
            outputs[row].append(int(tok[r]))
            logps[row].append(float(logp[r, col[r]]))
            if tok[r] != shape.eos_id:
                still.append(r)
        window[active] = np.concatenate([tok[:, None], window[active][:, :-1]], axis=1)
        active = active[np.asarray(still, dtype=np.int64)]
    return [Completion(tuple(int(t) for t in p), tuple(o), tuple(lp))
            for p, o, lp in zip(prompts, outputs, logps)]


def sample_completion(params: PolicyParams, prompt: Sequence[int], max_len: int, temperature: float,
                      rng: np.random.Generator | None = None) -> Completion:
    return sample_batch(params, [prompt], max_len, temperature, None if rng is None else [rng])[0]


# --------------------------------------------------------------------------
# gradients


@dataclass
class TokenBatch:
    """Flattened teacher-forced view of several (prompt, output) pairs."""

    ctx: np.ndarray
    cols: np.ndarray
    seq: np.ndarray
    starts: np.ndarray
    prompt_freq: np.ndarray  # (S, V) prompt bag features
    prompts: list

    @classmethod
    def build(cls, shape: PolicyShape, pairs: Sequence[tuple[Sequence[int], Sequence[int]]]) -> "TokenBatch":
        ctxs, cols, seq, starts = [], [], [], []
        freq = np.zeros((len(pairs), shape.vocab_size))
        n = 0
        for i, (prompt, output) in enumerate(pairs):
            prompt = np.asarray(prompt, np.int64)
            output = np.asarray(output, np.int64)
            if output.size == 0:
                raise ValueError("empty output sequence")
            ctxs.append(contexts(shape, prompt, output))
            cols.append(_emit_columns(shape, output))
            seq.append(np.full(output.size, i))
            starts.append(n)
            n += output.size
            freq[i] = prompt_features(shape, prompt)
        return cls(np.concatenate(ctxs), np.concatenate(cols), np.concatenate(seq),
                   np.asarray(starts), freq, [np.asarray(p, np.int64) for p, _ in pairs])

    @property
    def n_tokens(self) -> int:
        return self.cols.size


def batch_logprobs(params: PolicyParams, batch: TokenBatch) -> np.ndarray:
    return forward(params, batch).logp


@dataclass
class ForwardCache:
    h: np.ndarray
    gate: np.ndarray
    pvec: np.ndarray
    logp_all: np.ndarray
    logp: np.ndarray


def forward(params: PolicyParams, batch: TokenBatch) -> ForwardCache:
    pvec = np.stack([prompt_vector(params, p) for p in batch.prompts])
    h, gate, row_pvec = _hidden_parts(params, batch.ctx, pvec[batch.seq])
    logp_all = _log_softmax(_logits(params, h))
    return ForwardCache(h, gate, row_pvec, logp_all, logp_all[np.arange(batch.n_tokens), batch.cols])


def _window_grads(table, weights, ctx, dout, d_table, d_weights) -> None:
    """Accumulate gradients of ``_window_sum`` given its output gradient."""
    V, d = table.shape
    for lo in range(0, ctx.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, ctx.shape[0])
        c, g = ctx[lo:hi], dout[lo:hi]
        d_weights += np.einsum("nd,nkd->kd", g, table[c])
        contrib = g[:, None, :] * weights[None, :, :]
        cells = (c[..., None] * d + np.arange(d)).ravel()
        d_table += np.bincount(cells, weights=contrib.ravel(), minlength=V * d).reshape(V, d)


def backward(params: PolicyParams, batch: TokenBatch, cache: ForwardCache, weights) -> np.ndarray:
    """Gradient of ``sum_t weights_t * log p_t`` as a flat vector."""
    shape = params.shape
    V, d = shape.vocab_size, shape.embed_dim
    emit = shape.emit
    weights = np.asarray(weights, dtype=np.float64)
    rows = np.arange(batch.n_tokens)
    dz = -weights[:, None] * np.exp(cache.logp_all)
    dz[rows, batch.cols] += weights
    grads = {name: np.zeros(dims) for name, dims in shape.sizes.items()}
    grads["out_proj"][emit] = dz.T @ cache.h
    grads["out_bias"][emit] = dz.sum(axis=0)
    dh = dz @ params.out_proj[emit]

    _window_grads(params.embed, params.position, batch.ctx, dh, grads["embed"], grads["position"])
    _window_grads(params.gate_embed, params.gate_position, batch.ctx, dh * cache.pvec,
                  grads["gate_embed"], grads["gate_position"])
    dp = np.add.reduceat(dh * (1.0 + cache.gate), batch.starts, axis=0)
    grads["prompt_embed"] = batch.prompt_freq.T @ dp
    return np.concatenate([grads[name].ravel() for name in shape.sizes])


_CHUNK = 8192


def weighted_logprob_grad(params: PolicyParams, batch: TokenBatch, weights
                          ) -> tuple[np.ndarray, float, np.ndarray]:
    """Log-probs, ``sum_t w_t log p_t`` and its exact gradient."""
    cache = forward(params, batch)
    weights = np.asarray(weights, dtype=np.float64)
    return cache.logp, float(weights @ cache.logp), backward(params, batch, cache, weights)


# --------------------------------------------------------------------------
# optimisers


def apply_gradient(params: PolicyParams, gradient, step_size: float) -> PolicyParams:
    """Plain descent step ``theta - step_size * gradient``."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.vector.shape:
        raise ValueError("gradient has the wrong dimension")
    if not np.all(np.isfinite(gradient)):
        raise FloatingPointError("non-finite gradient; update skipped")
    return params.replace(params.vector - step_size * gradient)


class SGD:
    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr, self.momentum = lr, momentum
        self.velocity = None

    def step(self, params: PolicyParams, gradient) -> PolicyParams:
        gradient = np.asarray(gradient, dtype=np.float64)
        if not np.all(np.isfinite(gradient)):
            raise FloatingPointError("non-finite gradient; update skipped")
        if self.momentum:
            if self.velocity is None:
                self.velocity = np.zeros_like(gradient)
            self.velocity = self.momentum * self.velocity + gradient
            gradient = self.velocity
        return apply_gradient(params, gradient, self.lr)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: PolicyParams, gradient) -> PolicyParams:
        gradient = np.asarray(gradient, dtype=np.float64)
        if not np.all(np.isfinite(gradient)):
            raise FloatingPointError("non-finite gradient; update skipped")
        if self.m is None:
            self.m = np.zeros_like(gradient)
            self.v = np.zeros_like(gradient)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * gradient
        self.v = self.beta2 * self.v + (1 - self.beta2) * gradient**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return apply_gradient(params, m_hat / (np.sqrt(v_hat) + self.eps), self.lr)


def make_optimizer(name: str, lr: float, momentum: float = 0.0):
    if name == "sgd":
        return SGD(lr, momentum)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")
