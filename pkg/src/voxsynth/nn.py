"""Minimal feed-forward neural machinery on float64 numpy.

Dense layers with {relu, leaky_relu(0.2), tanh, linear, blocks} activations,
manual backprop, Adam with optional global-norm gradient clipping,
Gumbel-softmax sampling, the WGAN gradient penalty (value and its parameter
gradient via double backprop), and a central-difference gradient checker.

The "blocks" activation is a structured output head: the layer's output is
split into consecutive (kind, width) blocks where kind is "tanh" or
"softmax"; softmax blocks are normalized per block at the layer's
temperature, and per-forward additive noise (Gumbel) can be injected into
their preactivations.  This is the device generators use to emit
[alpha, mode indicators, one-hot] rows.

Everything is float64 and seeded through Philox streams, so training
trajectories are bit-identical across runs on one thread.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError, NumericalDivergence, ShapeError
from .rng import gumbel, spawn

LEAKY_SLOPE = 0.2

_ACTIVATION_CODES = {"relu": 0, "leaky_relu": 1, "tanh": 2, "linear": 3, "blocks": 4}
_BLOCK_CODES = {"tanh": 0, "softmax": 1}


# ---------------------------------------------------------------------------
# Network structure
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    W: np.ndarray                 # (d_in, d_out)
    b: np.ndarray                 # (d_out,)
    activation: str
    blocks: tuple | None = None   # for "blocks": ((kind, width), ...)
    tau: float = 1.0              # softmax temperature within blocks

    def __post_init__(self):
        if self.activation not in _ACTIVATION_CODES:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.activation == "blocks":
            if self.blocks is None:
                raise ShapeError("blocks activation requires a block structure")
            if sum(w for _, w in self.blocks) != self.W.shape[1]:
                raise ShapeError("block widths must sum to the layer width")


class Mlp:
    """An ordered stack of dense layers; mutated only by its training loop."""

    def __init__(self, layers: list[Layer]):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.W.shape[1] != nxt.W.shape[0]:
                raise ShapeError(
                    f"layer dims do not chain: {prev.W.shape} -> {nxt.W.shape}"
                )
        self.layers = layers

    @classmethod
    def create(cls, dims: list[int], activations: list, seed: int,
               blocks: tuple | None = None, tau: float = 1.0) -> "Mlp":
        """Glorot-uniform weights, zero biases.  ``activations`` has one entry
        per layer; the optional ``blocks`` structure applies to the final
        layer when its activation is "blocks"."""
        if len(activations) != len(dims) - 1:
            raise ShapeError("need one activation per layer")
        layers = []
        for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            rng = spawn(seed, "init", str(i))
            limit = np.sqrt(6.0 / (d_in + d_out))
            W = rng.uniform(-limit, limit, size=(d_in, d_out))
            act = activations[i]
            layers.append(Layer(
                W=W, b=np.zeros(d_out), activation=act,
                blocks=blocks if act == "blocks" else None,
                tau=tau if act == "blocks" else 1.0,
            ))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def parameter_count(self) -> int:
        return sum(l.W.size + l.b.size for l in self.layers)

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.W.copy(), l.b.copy(), l.activation, l.blocks, l.tau)
                    for l in self.layers])


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def _act(z: np.ndarray, layer: Layer) -> np.ndarray:
    kind = layer.activation
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, z, LEAKY_SLOPE * z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    # blocks
    out = np.empty_like(z)
    pos = 0
    for kind_b, width in layer.blocks:
        sub = z[:, pos:pos + width]
        if kind_b == "tanh":
            out[:, pos:pos + width] = np.tanh(sub)
        else:
            out[:, pos:pos + width] = _softmax(sub / layer.tau)
        pos += width
    return out


def _act_grad(z: np.ndarray, a: np.ndarray, g: np.ndarray, layer: Layer) -> np.ndarray:
    """dL/dz given dL/da for elementwise or blockwise activations."""
    kind = layer.activation
    if kind == "relu":
        return g * (z > 0.0)
    if kind == "leaky_relu":
        return g * np.where(z >= 0.0, 1.0, LEAKY_SLOPE)
    if kind == "tanh":
        return g * (1.0 - a * a)
    if kind == "linear":
        return g
    out = np.empty_like(g)
    pos = 0
    for kind_b, width in layer.blocks:
        ga = g[:, pos:pos + width]
        ya = a[:, pos:pos + width]
        if kind_b == "tanh":
            out[:, pos:pos + width] = ga * (1.0 - ya * ya)
        else:
            dot = np.sum(ya * ga, axis=1, keepdims=True)
            out[:, pos:pos + width] = (ya * ga - ya * dot) / layer.tau
        pos += width
    return out


def _act_prime(z: np.ndarray, layer: Layer) -> np.ndarray:
    """Elementwise sigma'(z); only defined for non-block activations."""
    kind = layer.activation
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, 1.0, LEAKY_SLOPE)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "linear":
        return np.ones_like(z)
    raise ShapeError("block activations have no elementwise derivative")


def _act_second(z: np.ndarray, layer: Layer) -> np.ndarray:
    """Elementwise sigma''(z) (zero a.e. for piecewise-linear activations)."""
    kind = layer.activation
    if kind in ("relu", "leaky_relu", "linear"):
        return np.zeros_like(z)
    if kind == "tanh":
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    raise ShapeError("block activations have no elementwise derivative")


def _softmax(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    """All retained layer states from one forward pass."""

    x: np.ndarray
    zs: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.acts[-1]


def forward(net: Mlp, batch: np.ndarray, head_noise: np.ndarray | None = None) -> ForwardCache:
    """Run the network, retaining every layer's preactivation and activation.

    ``head_noise`` is added to the final layer's preactivation (used to
    inject Gumbel noise into softmax blocks); pass zeros elsewhere.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match input dim {net.input_dim}")
    cache = ForwardCache(x=x)
    a = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = a @ layer.W + layer.b
        if i == last and head_noise is not None:
            z = z + head_noise
        a = _act(z, layer)
        cache.zs.append(z)
        cache.acts.append(a)
    if not np.all(np.isfinite(a)):
        raise NumericalDivergence("non-finite activations in forward pass")
    return cache


def backward(net: Mlp, cache: ForwardCache, grad_out: np.ndarray,
             grad_preact_out: np.ndarray | None = None):
    """Backprop dL/d(output) to parameter gradients and dL/d(input).

    ``grad_preact_out`` optionally adds a gradient taken directly w.r.t.
    the final layer's preactivation (used for cross-entropy terms computed
    on raw logits while the activated output feeds another loss path).
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.output.shape:
        raise ShapeError(f"grad shape {g.shape} != output shape {cache.output.shape}")
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = _act_grad(cache.zs[i], cache.acts[i], g, layer)
        if i == len(net.layers) - 1 and grad_preact_out is not None:
            delta = delta + grad_preact_out
        a_prev = cache.acts[i - 1] if i > 0 else cache.x
        grads[i] = (a_prev.T @ delta, delta.sum(axis=0))
        g = delta @ layer.W.T
    return grads, g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def init(cls, net: Mlp, lr: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for layer in net.layers:
            state.m.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
            state.v.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
        return state


def clip_gradients(grads: list, clip_norm: float) -> list:
    """Scale all gradients so their global L2 norm is at most ``clip_norm``."""
    total = 0.0
    for dW, db in grads:
        total += float(np.sum(dW * dW)) + float(np.sum(db * db))
    norm = np.sqrt(total)
    if norm <= clip_norm or norm == 0.0:
        return grads
    scale = clip_norm / norm
    return [(dW * scale, db * scale) for dW, db in grads]


def adam_step(net: Mlp, grads: list, state: AdamState,
              clip_norm: float | None = None) -> None:
    """One Adam update in place; raises NumericalDivergence on NaN gradients."""
    for dW, db in grads:
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            raise NumericalDivergence("non-finite gradient")
    if clip_norm is not None:
        grads = clip_gradients(grads, clip_norm)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for layer, (dW, db), mom, sec in zip(net.layers, grads, state.m, state.v):
        for param, grad, m, v in ((layer.W, dW, mom[0], sec[0]),
                                  (layer.b, db, mom[1], sec[1])):
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            param -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            if not np.all(np.isfinite(param)):
                raise NumericalDivergence("non-finite parameter after update")


def backward_step(net: Mlp, cache: ForwardCache, loss_grad: np.ndarray,
                  state: AdamState, clip_norm: float | None = None) -> Mlp:
    """backward + adam_step in one call; returns the (mutated) network."""
    grads, _ = backward(net, cache, loss_grad)
    adam_step(net, grads, state, clip_norm=clip_norm)
    return net


# ---------------------------------------------------------------------------
# Gumbel-softmax
# ---------------------------------------------------------------------------

def gumbel_softmax(logits, tau: float, seed: int = 0, hard: bool = False,
                   noise: np.ndarray | None = None) -> np.ndarray:
    """softmax((logits + Gumbel noise) / tau), optionally discretized.

    With ``hard`` the result is the exact one-hot argmax of the soft sample
    (straight-through convention: gradients are taken through the soft
    values).  Pass ``noise`` explicitly to pin the perturbation (zeros
    reduce the operation to a plain tempered softmax).
    """
    if tau <= 0.0:
        raise ValueError("tau must be > 0")
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if noise is None:
        noise = gumbel(spawn(seed, "gumbel"), z.shape)
    y = _softmax((z + noise) / tau)
    if hard:
        onehot = np.zeros_like(y)
        onehot[np.arange(len(y)), np.argmax(y, axis=1)] = 1.0
        y = onehot
    return y[0] if np.ndim(logits) == 1 else y


# ---------------------------------------------------------------------------
# WGAN gradient penalty
# ---------------------------------------------------------------------------

def input_gradient(net: Mlp, batch: np.ndarray):
    """Per-row gradient of the scalar network output w.r.t. its input.

    Requires a width-1 output and elementwise activations.  Returns
    (cache, per-layer v tensors, input gradient G) so callers can reuse the
    intermediates for double backprop.
    """
    if net.output_dim != 1:
        raise ShapeError("input_gradient requires a scalar-output network")
    cache = forward(net, batch)
    L = len(net.layers)
    vs = [None] * L
    g = None
    for i in range(L - 1, -1, -1):
        layer = net.layers[i]
        if i == L - 1:
            vs[i] = _act_prime(cache.zs[i], layer)
        else:
            vs[i] = _act_prime(cache.zs[i], layer) * g
        g = vs[i] @ layer.W.T
    return cache, vs, g


def _interpolates(real: np.ndarray, fake: np.ndarray, seed: int) -> np.ndarray:
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ShapeError(f"batch shapes differ: {real.shape} vs {fake.shape}")
    u = spawn(seed, "gp").random((real.shape[0], 1))
    return u * real + (1.0 - u) * fake


def gradient_penalty(critic: Mlp, real_batch, fake_batch, seed: int = 0) -> float:
    """Mean over interpolates of (||grad_x critic(x_hat)||_2 - 1)^2."""
    x_hat = _interpolates(real_batch, fake_batch, seed)
    _, _, G = input_gradient(critic, x_hat)
    r = np.sqrt(np.sum(G * G, axis=1))
    return float(np.mean((r - 1.0) ** 2))


def gradient_penalty_grads(critic: Mlp, real_batch, fake_batch, seed: int = 0):
    """Gradient penalty and its parameter gradients (double backprop).

    The penalty depends on the critic's input gradient, so its parameter
    gradient needs adjoints through both the forward pass and the
    input-gradient pass; activation second derivatives enter for smooth
    activations (they vanish a.e. for relu/leaky_relu).
    """
    x_hat = _interpolates(real_batch, fake_batch, seed)
    cache, vs, G = input_gradient(critic, x_hat)
    n = x_hat.shape[0]
    L = len(critic.layers)

    r = np.sqrt(np.sum(G * G, axis=1))
    penalty = float(np.mean((r - 1.0) ** 2))

    # Adjoint of G: d/dG of mean((r - 1)^2); rows with r = 0 get 0.
    safe_r = np.where(r > 0.0, r, 1.0)
    coef = np.where(r > 0.0, 2.0 * (r - 1.0) / safe_r / n, 0.0)
    bar_g = coef[:, None] * G

    grads_W = [np.zeros_like(layer.W) for layer in critic.layers]
    grads_b = [np.zeros_like(layer.b) for layer in critic.layers]
    inject = [None] * L

    # Upward sweep through the input-gradient recursion g_{i-1} = v_i W_i^T,
    # accumulating adjoints of each v_i and the sigma''(z_i) injections.
    for i in range(L):
        layer = critic.layers[i]
        bar_v = bar_g @ layer.W
        grads_W[i] += bar_g.T @ vs[i]
        second = _act_second(cache.zs[i], layer)
        if i == L - 1:
            inject[i] = second * bar_v            # v_L = sigma'(z_L)
        else:
            g_up = vs[i + 1] @ critic.layers[i + 1].W.T
            inject[i] = second * g_up * bar_v     # v_i = sigma'(z_i) * g_up
            bar_g = _act_prime(cache.zs[i], layer) * bar_v

    # Downward sweep through the primal pass with the injected adjoints.
    bar_a = np.zeros_like(cache.acts[-1])
    for i in range(L - 1, -1, -1):
        layer = critic.layers[i]
        bar_z = inject[i] + _act_prime(cache.zs[i], layer) * bar_a
        a_prev = cache.acts[i - 1] if i > 0 else cache.x
        grads_W[i] += a_prev.T @ bar_z
        grads_b[i] += bar_z.sum(axis=0)
        bar_a = bar_z @ layer.W.T

    return penalty, list(zip(grads_W, grads_b))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(net: Mlp, batch: np.ndarray, loss_fn, eps: float = 1e-5,
               n_sample: int = 200, seed: int = 0,
               kink_margin: float | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(output) -> (scalar, dL/doutput)``.  A random subsample of at
    least ``n_sample`` parameters is probed (all of them when the net is
    small).  For relu/leaky layers, parameters feeding a unit whose
    preactivation sits within ``kink_margin`` (default 10 * eps) of the kink
    on some row are excluded, since finite differences straddle the kink
    there.
    """
    if net.parameter_count > 10_000:
        raise ShapeError("grad_check is limited to nets with <= 1e4 parameters")
    if kink_margin is None:
        kink_margin = 10.0 * eps

    cache = forward(net, batch)
    _, grad_out = loss_fn(cache.output)
    grads, _ = backward(net, cache, grad_out)

    # Units too close to a relu/leaky kink on any row are skipped.
    unit_ok = []
    for z, layer in zip(cache.zs, net.layers):
        if layer.activation in ("relu", "leaky_relu"):
            unit_ok.append(np.min(np.abs(z), axis=0) >= kink_margin)
        else:
            unit_ok.append(np.ones(z.shape[1], dtype=bool))

    entries = []  # (layer, is_bias, flat index)
    for li, layer in enumerate(net.layers):
        for j in range(layer.W.shape[1]):
            if not unit_ok[li][j]:
                continue
            entries.extend((li, False, i * layer.W.shape[1] + j)
                           for i in range(layer.W.shape[0]))
            entries.append((li, True, j))

    rng = spawn(seed, "gradcheck")
    if len(entries) > n_sample:
        pick = rng.choice(len(entries), size=n_sample, replace=False)
        entries = [entries[i] for i in sorted(pick)]

    worst = 0.0
    for li, is_bias, flat in entries:
        layer = net.layers[li]
        param = layer.b if is_bias else layer.W
        view = param.reshape(-1)
        orig = view[flat]

        view[flat] = orig + eps
        plus, _ = loss_fn(forward(net, batch).output)
        view[flat] = orig - eps
        minus, _ = loss_fn(forward(net, batch).output)
        view[flat] = orig

        numeric = (plus - minus) / (2.0 * eps)
        analytic = (grads[li][1] if is_bias else grads[li][0]).reshape(-1)[flat]
        denom = max(abs(numeric) + abs(analytic), 1e-10)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# ---------------------------------------------------------------------------
# Weight serialization (magic "VXNN1", little-endian float64)
# ---------------------------------------------------------------------------

_MAGIC = b"VXNN1"
_FORMAT_VERSION = 1


def save_weights(net: Mlp) -> bytes:
    """Serialize to the versioned VXNN1 blob.

    Layout (all little-endian): magic, u8 version, u32 layer count, then per
    layer: u32 d_in, u32 d_out, u8 activation code, f64 tau, u32 block count
    followed by (u8 kind, u32 width) pairs, then the weight matrix row-major
    and the bias vector as f64.
    """
    out = [_MAGIC, struct.pack("<BI", _FORMAT_VERSION, len(net.layers))]
    for layer in net.layers:
        d_in, d_out = layer.W.shape
        out.append(struct.pack("<IIBd", d_in, d_out,
                               _ACTIVATION_CODES[layer.activation], layer.tau))
        blocks = layer.blocks or ()
        out.append(struct.pack("<I", len(blocks)))
        for kind, width in blocks:
            out.append(struct.pack("<BI", _BLOCK_CODES[kind], width))
        out.append(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    return b"".join(out)


def load_weights(blob: bytes) -> Mlp:
    """Inverse of :func:`save_weights`; raises ModelFormatError on corruption."""
    try:
        if blob[:5] != _MAGIC:
            raise ModelFormatError(f"bad magic {blob[:5]!r}, expected {_MAGIC!r}")
        version, n_layers = struct.unpack_from("<BI", blob, 5)
        if version != _FORMAT_VERSION:
            raise ModelFormatError(f"unsupported weight format version {version}")
        pos = 5 + 5
        code_to_act = {v: k for k, v in _ACTIVATION_CODES.items()}
        code_to_block = {v: k for k, v in _BLOCK_CODES.items()}
        layers = []
        for _ in range(n_layers):
            d_in, d_out, act_code, tau = struct.unpack_from("<IIBd", blob, pos)
            pos += 4 + 4 + 1 + 8
            (n_blocks,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            blocks = []
            for _ in range(n_blocks):
                kind_code, width = struct.unpack_from("<BI", blob, pos)
                pos += 5
                blocks.append((code_to_block[kind_code], width))
            W = np.frombuffer(blob, dtype="<f8", count=d_in * d_out, offset=pos)
            pos += 8 * d_in * d_out
            b = np.frombuffer(blob, dtype="<f8", count=d_out, offset=pos)
            pos += 8 * d_out
            layers.append(Layer(
                W=W.reshape(d_in, d_out).copy(), b=b.copy(),
                activation=code_to_act[act_code],
                blocks=tuple(blocks) if blocks else None, tau=tau,
            ))
        return Mlp(layers)
    except (struct.error, ValueError, KeyError, IndexError) as exc:
        raise ModelFormatError(f"truncated or corrupt weight blob: {exc}") from None
