"""The three tabular synthesizers: TVAE, CTGAN, and CopulaGAN.

All three train on the codec-encoded representation (mode-specific
normalization + one-hot blocks).  TVAE is a plain VAE over encoded rows.
CTGAN is a conditional WGAN-GP: the generator receives a condition one-hot
alongside its noise, conditions are drawn by training-by-sampling
(log-frequency over categories), real rows are picked to match the drawn
condition, the critic scores pac-grouped rows, and the generator loss adds
a cross-entropy term forcing the conditioned category.  CopulaGAN is the
CTGAN path run on Gaussian-copula-transformed continuous columns.

Hyperparameter defaults (epochs 300, batch 60, pac 10, 128-d noise,
(256, 256) hidden layers, Adam lr 2e-4/betas (0.5, 0.9) for GAN parts and
lr 1e-3/betas (0.9, 0.999) for the VAE) are engineering choices: the
evaluation they reproduce published no training budget.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditionUnsatisfiable,
    ModelFormatError,
    NumericalDivergence,
    SchemaMismatch,
)
from .nn import (
    AdamState,
    Mlp,
    adam_step,
    backward,
    forward,
    gradient_penalty_grads,
    save_weights,
    load_weights,
)
from .rng import derive_seed, gumbel, spawn
from .tabular import CONTINUOUS, Table
from .transforms import TableCodec, schema_to_dict

logger = logging.getLogger(__name__)

KINDS = ("tvae", "ctgan", "copulagan")
GUMBEL_TAU = 0.2


@dataclass(frozen=True)
class GeneratorConfig:
    """Training configuration shared by all generator kinds."""

    kind: str
    epochs: int = 300
    batch_size: int = 60
    embedding_dim: int = 128
    hidden: tuple = (256, 256)
    pac: int = 10
    gp_weight: float = 10.0
    max_modes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size % self.pac != 0:
            raise ValueError("batch_size must be a multiple of pac")
        if min(self.embedding_dim, self.pac, *self.hidden) < 1:
            raise ValueError("all dimensions must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "epochs": self.epochs, "batch_size": self.batch_size,
            "embedding_dim": self.embedding_dim, "hidden": list(self.hidden),
            "pac": self.pac, "gp_weight": self.gp_weight,
            "max_modes": self.max_modes, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class ConditionInfo:
    """Discrete-column layout for the conditional machinery.

    ``spans`` maps each discrete column to its one-hot slice in the encoded
    row; ``cond_offsets`` to its slice in the condition vector.  Category
    draw probabilities follow the log-frequency scheme
    p(c) = log(1 + count_c) / sum_c' log(1 + count_c').
    """

    columns: list[str]
    categories: dict[str, tuple]
    spans: dict[str, tuple[int, int]]
    cond_offsets: dict[str, int]
    counts: dict[str, list[int]]
    cond_dim: int

    @classmethod
    def from_codec(cls, codec: TableCodec, table: Table) -> "ConditionInfo":
        columns, cats, spans, offsets, counts = [], {}, {}, {}, {}
        pos = 0
        cond_pos = 0
        for cc in codec.columns:
            if cc.kind != CONTINUOUS:
                columns.append(cc.name)
                cats[cc.name] = tuple(cc.categories)
                spans[cc.name] = (pos, pos + cc.width)
                offsets[cc.name] = cond_pos
                values = table.column(cc.name).tolist()
                counts[cc.name] = [sum(1 for v in values if v == c)
                                   for c in cc.categories]
                cond_pos += cc.width
            pos += cc.width
        return cls(columns=columns, categories=cats, spans=spans,
                   cond_offsets=offsets, counts=counts, cond_dim=cond_pos)

    def log_freq_probs(self, column: str) -> np.ndarray:
        raw = np.log1p(np.asarray(self.counts[column], dtype=np.float64))
        return raw / raw.sum()

    def original_probs(self, column: str) -> np.ndarray:
        raw = np.asarray(self.counts[column], dtype=np.float64)
        return raw / raw.sum()

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "categories": {k: list(v) for k, v in self.categories.items()},
            "spans": {k: list(v) for k, v in self.spans.items()},
            "cond_offsets": dict(self.cond_offsets),
            "counts": {k: list(v) for k, v in self.counts.items()},
            "cond_dim": self.cond_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionInfo":
        return cls(
            columns=list(d["columns"]),
            categories={k: tuple(v) for k, v in d["categories"].items()},
            spans={k: tuple(v) for k, v in d["spans"].items()},
            cond_offsets=dict(d["cond_offsets"]),
            counts={k: list(v) for k, v in d["counts"].items()},
            cond_dim=int(d["cond_dim"]),
        )


def sample_conditions(info: ConditionInfo, n: int, rng: np.random.Generator,
                      log_freq: bool = True):
    """Training-by-sampling: draw (column, category) pairs and cond vectors.

    The column is picked uniformly among discrete columns; the category by
    the log-frequency scheme (or original frequencies when ``log_freq`` is
    False, used for unconditional sampling).
    """
    cols = rng.integers(0, len(info.columns), size=n)
    vec = np.zeros((n, info.cond_dim))
    chosen = []
    for i, ci in enumerate(cols):
        name = info.columns[ci]
        probs = info.log_freq_probs(name) if log_freq else info.original_probs(name)
        cat_idx = int(np.searchsorted(np.cumsum(probs), rng.random()))
        cat_idx = min(cat_idx, len(probs) - 1)
        vec[i, info.cond_offsets[name] + cat_idx] = 1.0
        chosen.append((name, cat_idx))
    return chosen, vec


def schema_fingerprint(schema) -> str:
    blob = json.dumps(schema_to_dict(schema), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class GeneratorModel:
    """A fitted synthesizer: codec + network weights + training config."""

    kind: str
    config: GeneratorConfig
    codec: TableCodec
    nets: dict[str, Mlp]
    condition: ConditionInfo
    loss_trace: list = field(default_factory=list)
    fingerprint: str = ""

    def verify_schema(self, schema) -> None:
        if schema_fingerprint(schema) != self.fingerprint:
            raise SchemaMismatch("table schema does not match the fitted model")

    def continuous_blocks(self):
        """(name, alpha position, mode span) per continuous column."""
        out = []
        pos = 0
        for cc in self.codec.columns:
            if cc.kind == CONTINUOUS:
                out.append((cc.name, pos, (pos + 1, pos + cc.width)))
            pos += cc.width
        return out


def output_blocks(codec: TableCodec):
    """Generator head structure: tanh for alphas, softmax per one-hot block."""
    blocks = []
    for cc in codec.columns:
        if cc.kind == CONTINUOUS:
            blocks.append(("tanh", 1))
            blocks.append(("softmax", cc.width - 1))
        else:
            blocks.append(("softmax", cc.width))
    return tuple(blocks)


def _softmax_rows(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _block_spans(blocks):
    spans = []
    pos = 0
    for kind, width in blocks:
        spans.append((kind, pos, pos + width))
        pos += width
    return spans


def _gumbel_head_noise(blocks, shape_rows: int, width: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Gumbel noise on softmax-block positions, zeros on tanh positions."""
    noise = np.zeros((shape_rows, width))
    for kind, a, b in _block_spans(blocks):
        if kind == "softmax":
            noise[:, a:b] = gumbel(rng, (shape_rows, b - a)) * GUMBEL_TAU
    return noise


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def fit_generator(table: Table, config: GeneratorConfig) -> GeneratorModel:
    """Fit one synthesizer on (the modeling view of) a table.

    The group-id column is excluded from modeling.  Training is fully
    deterministic given ``config.seed``.
    """
    if table.n_rows == 0:
        raise SchemaMismatch("cannot fit a generator on an empty table")
    view = table.drop_group()
    use_copula = config.kind == "copulagan"
    codec = TableCodec.fit(view, max_modes=config.max_modes,
                           seed=derive_seed(config.seed, config.kind, "codec"),
                           use_copula=use_copula)
    if config.kind in ("ctgan", "copulagan"):
        if not view.schema.discrete_columns:
            raise SchemaMismatch(f"{config.kind} requires at least one discrete column")
    info = ConditionInfo.from_codec(codec, view)
    encoded = codec.encode(view, seed=derive_seed(config.seed, config.kind, "encode"))

    if config.kind == "tvae":
        nets, trace = _fit_tvae(encoded, codec, config)
    else:
        nets, trace = _fit_ctgan(encoded, codec, info, config)

    return GeneratorModel(
        kind=config.kind, config=config, codec=codec, nets=nets,
        condition=info, loss_trace=trace,
        fingerprint=schema_fingerprint(view.schema),
    )


def _recon_grad_and_loss(raw: np.ndarray, target: np.ndarray, blocks) -> tuple:
    """TVAE reconstruction: squared error on alpha, CE on one-hot blocks.

    Returns (loss_sum_over_rows_and_dims, d loss / d raw) where the loss is
    the per-batch SUM (callers divide by batch size).
    """
    grad = np.zeros_like(raw)
    loss = 0.0
    for kind, a, b in _block_spans(blocks):
        z = raw[:, a:b]
        t = target[:, a:b]
        if kind == "tanh":
            y = np.tanh(z)
            diff = y - t
            loss += float(np.sum(diff * diff))
            grad[:, a:b] = 2.0 * diff * (1.0 - y * y)
        else:
            p = _softmax_rows(z)
            loss += float(-np.sum(t * np.log(np.maximum(p, 1e-12))))
            grad[:, a:b] = p - t
    return loss, grad


def _fit_tvae(encoded: np.ndarray, codec: TableCodec, config: GeneratorConfig):
    n, width = encoded.shape
    blocks = output_blocks(codec)
    emb = config.embedding_dim
    enc_dims = [width, *config.hidden, 2 * emb]
    dec_dims = [emb, *config.hidden, width]
    enc = Mlp.create(enc_dims, ["relu"] * len(config.hidden) + ["linear"],
                     seed=derive_seed(config.seed, "tvae", "encoder"))
    dec = Mlp.create(dec_dims, ["relu"] * len(config.hidden) + ["linear"],
                     seed=derive_seed(config.seed, "tvae", "decoder"))
    st_enc = AdamState.init(enc, lr=1e-3, beta1=0.9, beta2=0.999)
    st_dec = AdamState.init(dec, lr=1e-3, beta1=0.9, beta2=0.999)

    rng_data = spawn(config.seed, "tvae", "data")
    rng_eps = spawn(config.seed, "tvae", "reparam")
    steps = max(1, n // config.batch_size)
    trace = []
    for epoch in range(config.epochs):
        order = rng_data.permutation(n)
        ep_recon = ep_kl = 0.0
        for step in range(steps):
            idx = order[step * config.batch_size:(step + 1) * config.batch_size]
            batch = encoded[idx]
            eps = rng_eps.normal(size=(len(idx), emb))
            try:
                recon, kl = _tvae_step(enc, dec, st_enc, st_dec, batch, eps, blocks)
            except NumericalDivergence as exc:
                raise NumericalDivergence(str(exc), epoch=epoch, step=step) from None
            ep_recon += recon
            ep_kl += kl
        trace.append({"epoch": epoch, "recon": ep_recon / steps, "kl": ep_kl / steps})
    return {"encoder": enc, "decoder": dec}, trace


def _tvae_loss_grads(enc: Mlp, dec: Mlp, batch: np.ndarray, eps: np.ndarray,
                     blocks):
    """Batch-mean ELBO terms and their gradients for fixed reparam noise.

    Returns (recon, kl, enc_grads, dec_grads); the optimized loss is
    recon + kl (KL weight 1).
    """
    B = batch.shape[0]
    emb = eps.shape[1]
    enc_cache = forward(enc, batch)
    mu = enc_cache.output[:, :emb]
    logvar = np.clip(enc_cache.output[:, emb:], -15.0, 15.0)
    std = np.exp(0.5 * logvar)
    z = mu + std * eps

    dec_cache = forward(dec, z)
    recon_sum, grad_raw = _recon_grad_and_loss(dec_cache.output, batch, blocks)
    recon = recon_sum / B
    kl = float(-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar))) / B

    dec_grads, dz = backward(dec, dec_cache, grad_raw / B)
    # Reparameterization + KL gradients on (mu, logvar).
    dmu = dz + mu / B
    dlogvar = dz * eps * std * 0.5 - 0.5 * (1.0 - np.exp(logvar)) / B
    enc_grads, _ = backward(enc, enc_cache, np.concatenate([dmu, dlogvar], axis=1))
    return recon, kl, enc_grads, dec_grads


def _tvae_step(enc: Mlp, dec: Mlp, st_enc: AdamState, st_dec: AdamState,
               batch: np.ndarray, eps: np.ndarray, blocks):
    """One ELBO gradient step; returns (recon loss, KL) for the batch mean."""
    recon, kl, enc_grads, dec_grads = _tvae_loss_grads(enc, dec, batch, eps, blocks)
    adam_step(dec, dec_grads, st_dec)
    adam_step(enc, enc_grads, st_enc)
    return recon, kl


def _fit_ctgan(encoded: np.ndarray, codec: TableCodec, info: ConditionInfo,
               config: GeneratorConfig):
    n, width = encoded.shape
    blocks = output_blocks(codec)
    pac = config.pac
    cond_dim = info.cond_dim
    gen_dims = [config.embedding_dim + cond_dim, *config.hidden, width]
    gen = Mlp.create(gen_dims, ["relu"] * len(config.hidden) + ["blocks"],
                     seed=derive_seed(config.seed, config.kind, "generator"),
                     blocks=blocks, tau=GUMBEL_TAU)
    critic_in = pac * (width + cond_dim)
    critic_dims = [critic_in, *config.hidden, 1]
    critic = Mlp.create(critic_dims, ["leaky_relu"] * len(config.hidden) + ["linear"],
                        seed=derive_seed(config.seed, config.kind, "critic"))
    assert critic.input_dim == pac * (width + cond_dim)  # pac grouping contract

    st_gen = AdamState.init(gen, lr=2e-4, beta1=0.5, beta2=0.9)
    st_critic = AdamState.init(critic, lr=2e-4, beta1=0.5, beta2=0.9)

    rng_z = spawn(config.seed, config.kind, "latent")
    rng_cond = spawn(config.seed, config.kind, "conditions")
    rng_rows = spawn(config.seed, config.kind, "rows")
    rng_gum = spawn(config.seed, config.kind, "gumbel")

    # Row indices per (column, category) for condition-matched real sampling.
    members = {
        (name, ci): np.flatnonzero(encoded[:, info.spans[name][0] + ci] == 1.0)
        for name in info.columns
        for ci in range(len(info.categories[name]))
    }

    B = config.batch_size
    steps = max(1, n // B)
    n_packs = B // pac
    trace = []
    gstep = 0
    for epoch in range(config.epochs):
        ep_c = ep_g = 0.0
        for step in range(steps):
            try:
                # --- critic update ---
                chosen, cond = sample_conditions(info, B, rng_cond)
                real_idx = np.array([
                    rng_rows.choice(members[(name, ci)]) for name, ci in chosen
                ])
                real_rows = encoded[real_idx]
                z = rng_z.normal(size=(B, config.embedding_dim))
                noise = _gumbel_head_noise(blocks, B, width, rng_gum)
                fake_rows = forward(gen, np.concatenate([z, cond], axis=1),
                                    head_noise=noise).output

                real_packs = np.concatenate([real_rows, cond], axis=1)
                real_packs = real_packs.reshape(n_packs, -1)
                fake_packs = np.concatenate([fake_rows, cond], axis=1)
                fake_packs = fake_packs.reshape(n_packs, -1)

                c_fake = forward(critic, fake_packs)
                c_real = forward(critic, real_packs)
                w_loss = float(np.mean(c_fake.output) - np.mean(c_real.output))
                g_fake, _ = backward(critic, c_fake,
                                     np.full((n_packs, 1), 1.0 / n_packs))
                g_real, _ = backward(critic, c_real,
                                     np.full((n_packs, 1), -1.0 / n_packs))
                gp, g_gp = gradient_penalty_grads(
                    critic, real_packs, fake_packs,
                    seed=derive_seed(config.seed, config.kind, "gp", str(gstep)))
                lam = config.gp_weight
                total = [
                    (a[0] + b[0] + lam * c[0], a[1] + b[1] + lam * c[1])
                    for a, b, c in zip(g_fake, g_real, g_gp)
                ]
                adam_step(critic, total, st_critic)
                ep_c += w_loss + lam * gp

                # --- generator update ---
                chosen, cond = sample_conditions(info, B, rng_cond)
                z = rng_z.normal(size=(B, config.embedding_dim))
                noise = _gumbel_head_noise(blocks, B, width, rng_gum)
                gen_cache = forward(gen, np.concatenate([z, cond], axis=1),
                                    head_noise=noise)
                fake_rows = gen_cache.output
                fake_packs = np.concatenate([fake_rows, cond], axis=1)
                fake_packs = fake_packs.reshape(n_packs, -1)
                c_out = forward(critic, fake_packs)
                adv = float(-np.mean(c_out.output))
                _, d_packs = backward(critic, c_out,
                                      np.full((n_packs, 1), -1.0 / n_packs))
                d_rows = d_packs.reshape(B, width + cond_dim)[:, :width]

                ce, d_logits = _condition_ce(gen_cache.zs[-1], info, chosen)
                gen_grads, _ = backward(gen, gen_cache, d_rows,
                                        grad_preact_out=d_logits)
                adam_step(gen, gen_grads, st_gen)
                ep_g += adv + ce
                gstep += 1
            except NumericalDivergence as exc:
                raise NumericalDivergence(str(exc), epoch=epoch, step=step) from None
        trace.append({"epoch": epoch, "critic": ep_c / steps, "generator": ep_g / steps})
    return {"generator": gen, "critic": critic}, trace


def _condition_ce(raw: np.ndarray, info: ConditionInfo, chosen) -> tuple:
    """Cross-entropy pushing the conditioned category, on raw logits.

    Returns (mean CE, gradient w.r.t. the generator's final preactivation).
    """
    B = raw.shape[0]
    grad = np.zeros_like(raw)
    loss = 0.0
    for i, (name, ci) in enumerate(chosen):
        a, b = info.spans[name]
        logits = raw[i, a:b]
        p = np.exp(logits - logits.max())
        p /= p.sum()
        loss += -np.log(max(p[ci], 1e-12))
        onehot = np.zeros_like(p)
        onehot[ci] = 1.0
        grad[i, a:b] = (p - onehot) / B
    return loss / B, grad


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample(model: GeneratorModel, n: int, condition: tuple | None = None,
           seed: int = 0) -> Table:
    """Draw ``n`` schema-conforming rows, optionally fixing one category.

    CTGAN/CopulaGAN conditioning feeds the condition vector to the
    generator (rejection-free); the conditioned category is overwritten as
    a final guard and any overwrite is logged.  TVAE has no condition
    input and honors conditions by rejection sampling with a retry cap of
    200 rounds.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if condition is not None:
        name, category = condition
        if name not in model.condition.columns:
            raise SchemaMismatch(f"unknown discrete column {name!r}")
        if category not in model.condition.categories[name]:
            raise SchemaMismatch(f"unknown category {category!r} for column {name!r}")

    if model.kind == "tvae":
        matrix = _sample_tvae(model, n, condition, seed)
    else:
        matrix = _sample_ctgan(model, n, condition, seed)
    return model.codec.decode(matrix)


def _decode_head(soft: np.ndarray, blocks) -> np.ndarray:
    """Discretize a soft generator output: exact unit vectors per block."""
    out = np.zeros_like(soft)
    for kind, a, b in _block_spans(blocks):
        if kind == "tanh":
            out[:, a:b] = soft[:, a:b]
        else:
            hot = np.argmax(soft[:, a:b], axis=1)
            out[np.arange(len(soft)), a + hot] = 1.0
    return out


def _sample_ctgan(model: GeneratorModel, n: int, condition, seed: int) -> np.ndarray:
    config = model.config
    info = model.condition
    blocks = output_blocks(model.codec)
    width = model.codec.width
    gen = model.nets["generator"]
    rng_z = spawn(seed, "sample", "latent")
    rng_cond = spawn(seed, "sample", "conditions")
    rng_gum = spawn(seed, "sample", "gumbel")

    rows = []
    remaining = n
    overwrites = 0
    while remaining > 0:
        b = min(remaining, config.batch_size)
        if condition is None:
            _, cond = sample_conditions(info, b, rng_cond, log_freq=False)
        else:
            name, category = condition
            ci = info.categories[name].index(category)
            cond = np.zeros((b, info.cond_dim))
            cond[:, info.cond_offsets[name] + ci] = 1.0
        z = rng_z.normal(size=(b, config.embedding_dim))
        noise = _gumbel_head_noise(blocks, b, width, rng_gum)
        soft = forward(gen, np.concatenate([z, cond], axis=1),
                       head_noise=noise).output
        hard = _decode_head(soft, blocks)
        if condition is not None:
            name, category = condition
            a, bb = info.spans[name]
            ci = info.categories[name].index(category)
            wrong = hard[:, a + ci] != 1.0
            if np.any(wrong):
                overwrites += int(np.sum(wrong))
                hard[:, a:bb] = 0.0
                hard[:, a + ci] = 1.0
        rows.append(hard)
        remaining -= b
    if overwrites:
        logger.info("conditional overwrite guard corrected %d/%d rows", overwrites, n)
    return np.vstack(rows)[:n]


def _sample_tvae(model: GeneratorModel, n: int, condition, seed: int) -> np.ndarray:
    config = model.config
    blocks = output_blocks(model.codec)
    dec = model.nets["decoder"]
    rng_z = spawn(seed, "sample", "latent")
    rng_cat = spawn(seed, "sample", "categories")

    def generate(b: int) -> np.ndarray:
        z = rng_z.normal(size=(b, config.embedding_dim))
        raw = forward(dec, z).output
        out = np.zeros_like(raw)
        for kind, a, bb in _block_spans(blocks):
            if kind == "tanh":
                out[:, a:bb] = np.tanh(raw[:, a:bb])
            else:
                p = _softmax_rows(raw[:, a:bb])
                u = rng_cat.random((b, 1))
                pick = (np.cumsum(p, axis=1) < u).sum(axis=1)
                pick = np.minimum(pick, bb - a - 1)
                out[np.arange(b), a + pick] = 1.0
        return out

    if condition is None:
        return generate(n)

    name, category = condition
    a, bb = model.condition.spans[name]
    ci = model.condition.categories[name].index(category)
    kept = []
    have = 0
    for _ in range(200):  # documented retry cap
        batch = generate(max(64, 2 * (n - have)))
        match = batch[batch[:, a + ci] == 1.0]
        if len(match):
            kept.append(match)
            have += len(match)
        if have >= n:
            return np.vstack(kept)[:n]
    raise ConditionUnsatisfiable(
        f"could not draw {n} rows with {name}={category!r} within the retry cap"
    )


# ---------------------------------------------------------------------------
# Persistence: magic "VXGEN1" + JSON header + VXNN1 weight blobs
# ---------------------------------------------------------------------------

_MAGIC = b"VXGEN1"
_VERSION = 1


def _pack_container(magic: bytes, header: dict, blobs: dict[str, bytes]) -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    out = [magic, struct.pack("<BI", _VERSION, len(head)), head,
           struct.pack("<I", len(blobs))]
    for name in sorted(blobs):
        enc = name.encode()
        out.append(struct.pack("<I", len(enc)))
        out.append(enc)
        out.append(struct.pack("<I", len(blobs[name])))
        out.append(blobs[name])
    return b"".join(out)


def _unpack_container(blob: bytes, magic: bytes) -> tuple[dict, dict]:
    try:
        if blob[:len(magic)] != magic:
            raise ModelFormatError(
                f"bad magic {blob[:len(magic)]!r}, expected {magic!r}")
        pos = len(magic)
        version, hlen = struct.unpack_from("<BI", blob, pos)
        if version != _VERSION:
            raise ModelFormatError(f"unsupported container version {version}")
        pos += 5
        header = json.loads(blob[pos:pos + hlen].decode())
        pos += hlen
        (n_blobs,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        blobs = {}
        for _ in range(n_blobs):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + nlen].decode()
            pos += nlen
            (blen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            raw = blob[pos:pos + blen]
            if len(raw) != blen:
                raise ModelFormatError("truncated weight blob")
            blobs[name] = raw
            pos += blen
        return header, blobs
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from None


def save_model(model: GeneratorModel, path) -> None:
    header = {
        "kind": model.kind,
        "config": model.config.to_dict(),
        "codec": model.codec.to_dict(),
        "condition": model.condition.to_dict(),
        "loss_trace": model.loss_trace,
        "fingerprint": model.fingerprint,
    }
    blobs = {name: save_weights(net) for name, net in model.nets.items()}
    with open(path, "wb") as fh:
        fh.write(_pack_container(_MAGIC, header, blobs))


def load_model(path) -> GeneratorModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, blobs = _unpack_container(blob, _MAGIC)
    return GeneratorModel(
        kind=header["kind"],
        config=GeneratorConfig.from_dict(header["config"]),
        codec=TableCodec.from_dict(header["codec"]),
        nets={name: load_weights(raw) for name, raw in blobs.items()},
        condition=ConditionInfo.from_dict(header["condition"]),
        loss_trace=header["loss_trace"],
        fingerprint=header["fingerprint"],
    )
