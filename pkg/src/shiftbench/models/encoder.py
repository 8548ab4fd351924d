"""Miniature contrastive dual encoder (paired image/text embedding model).

The text side is a bag of token embeddings followed by an affine map; the
image side is the same feed-forward trunk the classifiers use. Both emit
unit-norm embeddings, and similarity is scaled by a learnable temperature
(log-parameter clamped to [e^-2, e^5]). The gradient path reaches
individual token embeddings, which the prompt search relies on.
"""

from __future__ import annotations

import re

import numpy as np

from .. import grad as G
from ..data import Image
from ..errors import NonFiniteError
from ..rng import substream
from .nets import TrainConfig, params_digest, pooled_flat

_TOKEN_RE = re.compile(r"[a-z0-9]+")

LOG_TAU_MIN, LOG_TAU_MAX = -2.0, 5.0


class Tokenizer:
    """Lowercase tokenizer splitting on whitespace and punctuation.

    Fixed vocabulary; unknown tokens map to <unk> (id 0). Deterministic.
    """

    UNK = "<unk>"

    def __init__(self, vocab: list[str]):
        if not vocab or vocab[0] != self.UNK:
            raise ValueError("vocab must start with the <unk> token")
        self.vocab = list(vocab)
        self._index = {tok: i for i, tok in enumerate(self.vocab)}

    @classmethod
    def from_corpus(cls, texts) -> "Tokenizer":
        seen = set()
        for t in texts:
            seen.update(cls.split(t))
        return cls([cls.UNK] + sorted(seen))

    @staticmethod
    def split(text: str) -> list[str]:
        return _TOKEN_RE.findall(text.lower())

    def encode(self, text: str) -> list[int]:
        ids = [self._index.get(tok, 0) for tok in self.split(text)]
        return ids or [0]

    def decode(self, ids) -> str:
        return " ".join(self.vocab[i] for i in ids)

    def __len__(self) -> int:
        return len(self.vocab)


class DualEncoder:
    """Image and text encoders sharing an embedding space of dimension d."""

    def __init__(self, params: dict[str, np.ndarray], tokenizer: Tokenizer,
                 input_hwc: tuple[int, int, int], pool: int = 1):
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.tokenizer = tokenizer
        self.input_hwc = tuple(input_hwc)
        self.pool = pool
        self.n_trunk = sum(1 for k in self.params if k.startswith("iw"))

    @property
    def embed_dim(self) -> int:
        return self.params["tw"].shape[1]

    @property
    def temperature(self) -> float:
        return float(np.exp(np.clip(self.params["log_tau"], LOG_TAU_MIN, LOG_TAU_MAX)))

    @property
    def snapshot_id(self) -> str:
        return params_digest(self.params)

    # -- graph builders (work on Vars or ndarrays alike) --

    def _temperature_node(self, params):
        return G.exp(G.clip(params["log_tau"], LOG_TAU_MIN, LOG_TAU_MAX))

    def image_embed_node(self, x, params=None):
        """(1, d) unit-norm embedding node for one (c, h, w) image tensor."""
        p = params if params is not None else self.params
        z = pooled_flat(x, self.input_hwc, self.pool)
        for i in range(self.n_trunk):
            z = G.affine(z, p[f"iw{i}"], p[f"ib{i}"])
            if i < self.n_trunk - 1:
                z = G.relu(z)
        return G.l2_normalize(z)

    def text_embed_node(self, token_ids, params=None, overrides=None):
        """(1, d) unit-norm embedding node for one token-id sequence.

        `overrides` maps a token position to a replacement embedding row
        (Var or array); used by the prompt search to differentiate w.r.t.
        a single slot.
        """
        p = params if params is not None else self.params
        rows = []
        for pos, tid in enumerate(token_ids):
            if overrides is not None and pos in overrides:
                rows.append(overrides[pos])
            else:
                rows.append(G.take_rows(p["emb"], [tid]))
        stacked = rows[0] if len(rows) == 1 else G.row_stack(
            [G.reshape(r, (-1,)) for r in rows])
        bag = G.reshape(G.mean(stacked, axis=0), (1, -1))
        return G.l2_normalize(G.affine(bag, p["tw"], p["tb"]))

    # -- plain inference --

    def embed_image(self, image: Image) -> np.ndarray:
        return np.asarray(self.image_embed_node(image.data))[0]

    def embed_text(self, text: str) -> np.ndarray:
        return np.asarray(self.text_embed_node(self.tokenizer.encode(text)))[0]

    def batch_image_rows(self, images) -> np.ndarray:
        return np.stack([np.asarray(pooled_flat(im.data, self.input_hwc, self.pool))[0]
                         for im in images])


def batch_loss_node(encoder: DualEncoder, image_rows, token_id_lists, params):
    """Symmetric in-batch contrastive loss node for pre-flattened images."""
    z = image_rows
    for i in range(encoder.n_trunk):
        z = G.affine(z, params[f"iw{i}"], params[f"ib{i}"])
        if i < encoder.n_trunk - 1:
            z = G.relu(z)
    img = G.l2_normalize(z)
    txt_rows = []
    for ids in token_id_lists:
        txt_rows.append(G.reshape(encoder.text_embed_node(ids, params), (-1,)))
    txt = G.row_stack(txt_rows)
    tau = encoder._temperature_node(params)
    sims = G.mul(G.matmul(img, G.transpose(txt)), tau)
    b = len(token_id_lists)
    diag = np.arange(b)
    loss = G.mul(G.add(G.cross_entropy(sims, diag),
                       G.cross_entropy(G.transpose(sims), diag)), 0.5)
    return loss, sims


def contrastive_batch_loss(encoder: DualEncoder, images, captions) -> float:
    """Mean of the two in-batch cross-entropy directions (diagnostic)."""
    rows = encoder.batch_image_rows(images)
    ids = [encoder.tokenizer.encode(c) for c in captions]
    loss, _ = batch_loss_node(encoder, rows, ids, encoder.params)
    return float(G.value_of(loss))


def init_dual_encoder(tokenizer: Tokenizer, input_hwc, config: TrainConfig,
                      hidden=(64,), pool: int = 1) -> DualEncoder:
    rng = substream(config.seed, "encoder-init")
    h, w, c = input_hwc
    d_in = (h // pool) * (w // pool) * c
    d = config.embed_dim
    dims = [d_in] + list(hidden) + [d]
    params = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"iw{i}"] = rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b))
        params[f"ib{i}"] = np.zeros(b)
    e_dim = d
    params["emb"] = rng.normal(0.0, 0.5, size=(len(tokenizer), e_dim))
    params["tw"] = rng.normal(0.0, np.sqrt(1.0 / e_dim), size=(e_dim, d))
    params["tb"] = np.zeros(d)
    params["log_tau"] = np.array(np.log(config.temperature_init))
    return DualEncoder(params, tokenizer, input_hwc, pool=pool)


def train_dual_encoder(pairs, config: TrainConfig | None = None,
                       hidden=(64,), pool: int = 1) -> DualEncoder:
    """Contrastively train the dual encoder on (Image, caption) pairs.

    Adam updates, seeded shuffling; in-batch similarity targets are the
    diagonal pairing. Rejects batches smaller than 2 (the contrastive
    loss is undefined there).
    """
    config = config or TrainConfig(epochs=30, learning_rate=0.01)
    if config.batch_size < 2:
        raise ValueError("contrastive training needs batch size >= 2")
    if len(pairs) < 2:
        raise ValueError("contrastive training needs at least 2 pairs")
    tokenizer = Tokenizer.from_corpus([cap for _, cap in pairs])
    img0 = pairs[0][0]
    hwc = (img0.height, img0.width, img0.channels)
    enc = init_dual_encoder(tokenizer, hwc, config, hidden=hidden, pool=pool)

    rows = enc.batch_image_rows([im for im, _ in pairs])
    ids = [tokenizer.encode(cap) for _, cap in pairs]
    order_rng = substream(config.seed, "encoder-shuffle")
    m = {k: np.zeros_like(v) for k, v in enc.params.items()}
    v = {k: np.zeros_like(p) for k, p in enc.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(pairs))
        for start in range(0, len(pairs), config.batch_size):
            idx = perm[start:start + config.batch_size]
            if len(idx) < 2:
                continue  # trailing singleton carries no contrastive signal
            pvars = {k: G.Var(p) for k, p in enc.params.items()}
            loss, _ = batch_loss_node(enc, rows[idx], [ids[i] for i in idx], pvars)
            if not np.isfinite(loss.value):
                raise NonFiniteError(f"non-finite contrastive loss at epoch {epoch}")
            G.backward(loss)
            t += 1
            for k, pv in pvars.items():
                g = pv.grad if pv.grad is not None else np.zeros_like(enc.params[k])
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** t)
                vhat = v[k] / (1 - beta2 ** t)
                enc.params[k] = enc.params[k] - config.learning_rate * mhat / (np.sqrt(vhat) + eps)
    return enc


def retrieval_accuracy(encoder: DualEncoder, pairs) -> float:
    """Fraction of images whose best in-batch caption matches their own.

    Captions repeat in class-name corpora, so matches are judged by
    caption content rather than pair index.
    """
    captions = [cap for _, cap in pairs]
    imgs = np.stack([encoder.embed_image(im) for im, _ in pairs])
    txts = np.stack([encoder.embed_text(cap) for cap in captions])
    best = np.argmax(imgs @ txts.T, axis=1)
    return float(np.mean([captions[b] == captions[i] for i, b in enumerate(best)]))
