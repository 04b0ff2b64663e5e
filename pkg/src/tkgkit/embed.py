"""Translational embedding with self-adversarial negative sampling.

The model scores a triple by the norm of e_s + e_p - e_o; lower is more
plausible.  Training minimizes

    L = -log sig(margin - phi(pos)) - sum_i w_i log sig(phi(neg_i) - margin)

where the negative weights w_i are a softmax over temperature * (margin -
phi(neg_i)), by default treated as constants when differentiating.  All
gradients are written out by hand and applied with a from-scratch Adam;
numpy is the only dependency.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import DataError, StaticTriple

NORMS = ("l1", "l2")
NEGATIVE_MODES = ("per_batch", "per_positive")


class NumericError(Exception):
    """Training hit a non-finite loss."""


@dataclass
class TrainConfig:
    dimension: int = 100
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 500
    negative_samples: int = 500
    # per_batch: negative_samples is the per-batch total, shared out as
    # ceil(total / batch positives) per positive; per_positive: used directly
    negative_mode: str = "per_batch"
    margin: float = 1.0
    temperature: float = 0.5
    norm: str = "l1"
    seed: int = 0
    initializer: str = "xavier_uniform"
    adversarial: bool = True
    detach_weights: bool = True

    def negatives_per_positive(self, batch_positives: int) -> int:
        if self.negative_mode == "per_positive":
            return self.negative_samples
        return -(-self.negative_samples // batch_positives)

    def validate(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negative_samples < 1:
            raise ValueError("negative_samples must be >= 1")
        if self.negative_mode not in NEGATIVE_MODES:
            raise ValueError(f"negative_mode must be one of {NEGATIVE_MODES}")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if self.initializer != "xavier_uniform":
            raise ValueError("only the xavier_uniform initializer is supported")


@dataclass
class EmbeddingModel:
    entity: np.ndarray
    predicate: np.ndarray
    norm: str = "l1"

    @property
    def dimension(self) -> int:
        return self.entity.shape[1]

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_predicates(self) -> int:
        return self.predicate.shape[0]

    def score(self, s, p, o) -> np.ndarray | float:
        """Norm of e_s + e_p - e_o; lower means more plausible."""
        phi, _ = _phi_delta(self.entity, self.predicate, s, p, o, self.norm)
        return phi

    def score_objects(self, s: int, p: int) -> np.ndarray:
        """Scores of (s, p, e) for every candidate entity e."""
        delta = (self.entity[s] + self.predicate[p])[None, :] - self.entity
        return _norm_of(delta, self.norm)

    def score_subjects(self, p: int, o: int) -> np.ndarray:
        """Scores of (e, p, o) for every candidate entity e."""
        delta = self.entity + (self.predicate[p] - self.entity[o])[None, :]
        return _norm_of(delta, self.norm)

    def score_predicates(self, s: int, o: int) -> np.ndarray:
        """Scores of (s, p, o) for every candidate predicate p."""
        delta = self.predicate + (self.entity[s] - self.entity[o])[None, :]
        return _norm_of(delta, self.norm)

    def assert_finite(self) -> None:
        if not (np.isfinite(self.entity).all() and np.isfinite(self.predicate).all()):
            raise NumericError("model contains non-finite values")


# ---------------------------------------------------------------------------
# scoring internals
# ---------------------------------------------------------------------------

def _norm_of(delta: np.ndarray, norm: str) -> np.ndarray:
    if norm == "l1":
        return np.abs(delta).sum(axis=-1)
    return np.sqrt(np.square(delta).sum(axis=-1))


def _phi_delta(entity, predicate, s, p, o, norm):
    delta = entity[s] + predicate[p] - entity[o]
    return _norm_of(delta, norm), delta


def _dphi(delta: np.ndarray, phi: np.ndarray, norm: str) -> np.ndarray:
    """Derivative of the score w.r.t. delta; zero vector at delta = 0."""
    if norm == "l1":
        return np.sign(delta)
    denom = np.where(phi == 0.0, 1.0, phi)
    return delta / denom[..., None]


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


def adversarial_weights(phi_neg: np.ndarray, margin: float, temperature: float) -> np.ndarray:
    """Softmax over temperature * (margin - score), per row of negatives."""
    z = temperature * (margin - phi_neg)
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def _neg_ids(pos: np.ndarray, neg_entities: np.ndarray, corrupt_object: np.ndarray):
    s = pos[:, 0][:, None]
    o = pos[:, 2][:, None]
    s_neg = np.where(corrupt_object, s, neg_entities)
    o_neg = np.where(corrupt_object, neg_entities, o)
    return s_neg, o_neg


def batch_loss(
    entity: np.ndarray,
    predicate: np.ndarray,
    pos: np.ndarray,
    neg_entities: np.ndarray,
    corrupt_object: np.ndarray,
    cfg: TrainConfig,
    weights: np.ndarray | None = None,
) -> float:
    """Mean self-adversarial loss of a batch.

    ``pos`` is (B, 3); ``neg_entities`` and ``corrupt_object`` are (B, K)
    replacement entities and which side they replace.  Passing ``weights``
    fixes the negative weights as constants (useful for checking gradients
    of the detached loss by finite differences).
    """
    phi_pos, _ = _phi_delta(entity, predicate, pos[:, 0], pos[:, 1], pos[:, 2], cfg.norm)
    s_neg, o_neg = _neg_ids(pos, neg_entities, corrupt_object)
    p_neg = pos[:, 1][:, None]
    phi_neg, _ = _phi_delta(entity, predicate, s_neg, p_neg, o_neg, cfg.norm)
    w = _resolve_weights(phi_neg, cfg, weights)
    per_pos = -_log_sigmoid(cfg.margin - phi_pos) - (
        w * _log_sigmoid(phi_neg - cfg.margin)
    ).sum(axis=1)
    return float(per_pos.mean())


def _resolve_weights(phi_neg, cfg: TrainConfig, weights):
    if weights is not None:
        return weights
    if cfg.adversarial:
        return adversarial_weights(phi_neg, cfg.margin, cfg.temperature)
    return np.full_like(phi_neg, 1.0 / phi_neg.shape[1])


def batch_gradients(
    entity: np.ndarray,
    predicate: np.ndarray,
    pos: np.ndarray,
    neg_entities: np.ndarray,
    corrupt_object: np.ndarray,
    cfg: TrainConfig,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus dense gradients for the entity and predicate matrices.

    When ``weights`` is None and ``cfg.detach_weights`` is False, the
    gradient includes the softmax term from the weights' dependence on the
    negative scores; otherwise the weights are constants.
    """
    B = pos.shape[0]
    s, p, o = pos[:, 0], pos[:, 1], pos[:, 2]
    phi_pos, delta_pos = _phi_delta(entity, predicate, s, p, o, cfg.norm)
    s_neg, o_neg = _neg_ids(pos, neg_entities, corrupt_object)
    p_neg = np.broadcast_to(p[:, None], neg_entities.shape)
    phi_neg, delta_neg = _phi_delta(entity, predicate, s_neg, p_neg, o_neg, cfg.norm)
    w = _resolve_weights(phi_neg, cfg, weights)

    g_neg = _log_sigmoid(phi_neg - cfg.margin)
    per_pos = -_log_sigmoid(cfg.margin - phi_pos) - (w * g_neg).sum(axis=1)
    loss = float(per_pos.mean())

    coef_pos = _sigmoid(phi_pos - cfg.margin) / B
    coef_neg = -w * _sigmoid(cfg.margin - phi_neg) / B
    if weights is None and cfg.adversarial and not cfg.detach_weights:
        g_bar = (w * g_neg).sum(axis=1, keepdims=True)
        coef_neg += cfg.temperature * w * (g_neg - g_bar) / B

    d_entity = np.zeros_like(entity)
    d_predicate = np.zeros_like(predicate)

    dp_pos = coef_pos[:, None] * _dphi(delta_pos, phi_pos, cfg.norm)
    np.add.at(d_entity, s, dp_pos)
    np.add.at(d_entity, o, -dp_pos)
    np.add.at(d_predicate, p, dp_pos)

    dp_neg = coef_neg[..., None] * _dphi(delta_neg, phi_neg, cfg.norm)
    dim = entity.shape[1]
    flat = dp_neg.reshape(-1, dim)
    np.add.at(d_entity, s_neg.ravel(), flat)
    np.add.at(d_entity, o_neg.ravel(), -flat)
    np.add.at(d_predicate, p_neg.ravel(), flat)
    return loss, d_entity, d_predicate


# ---------------------------------------------------------------------------
# sampling, optimizer, training loop
# ---------------------------------------------------------------------------

def negative_sample(
    triple: StaticTriple, n: int, num_entities: int, rng: np.random.Generator
) -> list[StaticTriple]:
    """Corrupt one side of ``triple`` n times, uniformly over entities.

    A draw reproducing the positive is redrawn once and then kept, so false
    negatives remain possible (and with a single entity, unavoidable).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for _ in range(n):
        corrupt_object = bool(rng.integers(0, 2))
        ent = int(rng.integers(0, num_entities))
        original = triple.o if corrupt_object else triple.s
        if ent == original:
            ent = int(rng.integers(0, num_entities))
        if corrupt_object:
            out.append(StaticTriple(triple.s, triple.p, ent))
        else:
            out.append(StaticTriple(ent, triple.p, triple.o))
    return out


def _draw_negatives(pos: np.ndarray, k: int, num_entities: int, rng: np.random.Generator):
    B = pos.shape[0]
    corrupt_object = rng.integers(0, 2, size=(B, k)).astype(bool)
    ents = rng.integers(0, num_entities, size=(B, k))
    original = np.where(corrupt_object, pos[:, 2][:, None], pos[:, 0][:, None])
    clash = ents == original
    if clash.any():
        ents = np.where(clash, rng.integers(0, num_entities, size=(B, k)), ents)
    return ents, corrupt_object


class Adam:
    """Standard Adam over a fixed list of dense parameter arrays."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def xavier_uniform(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (dim + dim))
    return rng.uniform(-bound, bound, size=(rows, dim))


def train(
    triples,
    num_entities: int,
    num_predicates: int,
    cfg: TrainConfig,
    history: list[float] | None = None,
) -> EmbeddingModel:
    """Train embeddings on (s, p, o) triples; deterministic for a seed.

    ``history``, when given, collects the mean loss of each epoch.
    """
    cfg.validate()
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n = arr.shape[0]
    if n == 0:
        raise DataError("training set is empty")
    if arr[:, [0, 2]].max() >= num_entities or arr.min() < 0:
        raise ValueError("entity id out of range in training triples")
    if arr[:, 1].max() >= num_predicates:
        raise ValueError("predicate id out of range in training triples")

    rng = np.random.default_rng(cfg.seed)
    entity = xavier_uniform(rng, num_entities, cfg.dimension)
    predicate = xavier_uniform(rng, num_predicates, cfg.dimension)
    opt = Adam([entity, predicate], cfg.learning_rate)

    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = arr[order[start:start + cfg.batch_size]]
            k = cfg.negatives_per_positive(batch.shape[0])
            negs, corrupt_object = _draw_negatives(batch, k, num_entities, rng)
            loss, d_ent, d_pred = batch_gradients(
                entity, predicate, batch, negs, corrupt_object, cfg
            )
            if not math.isfinite(loss):
                culprit = _first_non_finite(entity, predicate, batch, cfg)
                raise NumericError(
                    f"non-finite loss at step {step} (epoch {epoch});"
                    f" first affected triple {culprit}"
                )
            opt.step([d_ent, d_pred])
            step += 1
            epoch_loss += loss * batch.shape[0]
        if history is not None:
            history.append(epoch_loss / n)
    return EmbeddingModel(entity=entity, predicate=predicate, norm=cfg.norm)


def _first_non_finite(entity, predicate, batch, cfg: TrainConfig) -> tuple:
    phi, _ = _phi_delta(entity, predicate, batch[:, 0], batch[:, 1], batch[:, 2], cfg.norm)
    bad = np.flatnonzero(~np.isfinite(phi))
    row = batch[bad[0]] if bad.size else batch[0]
    return tuple(int(x) for x in row)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def save_model(model: EmbeddingModel, out_dir: str | Path, extra_meta: dict | None = None) -> None:
    # plain .npy files keep checkpoints byte-identical across reruns
    # (zip containers would embed timestamps)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "entity.npy", model.entity)
    np.save(out / "predicate.npy", model.predicate)
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "norm": model.norm,
        "dimension": model.dimension,
        "num_entities": model.num_entities,
        "num_predicates": model.num_predicates,
    }
    if extra_meta:
        meta.update(extra_meta)
    (out / "model.meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(model_dir: str | Path) -> EmbeddingModel:
    root = Path(model_dir)
    try:
        meta = json.loads((root / "model.meta.json").read_text(encoding="utf-8"))
        entity = np.load(root / "entity.npy")
        predicate = np.load(root / "predicate.npy")
    except OSError as exc:
        raise DataError(f"cannot read model from {root}: {exc}") from exc
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {meta.get('format_version')!r}")
    return EmbeddingModel(entity=entity, predicate=predicate, norm=meta["norm"])


def export_embeddings(
    model: EmbeddingModel,
    entity_labels: tuple[str, ...],
    predicate_labels: tuple[str, ...],
    out_dir: str | Path,
) -> None:
    """Write label<TAB>v1..vd rows for entities and predicates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, labels, matrix in (
        ("entity_embeddings.tsv", entity_labels, model.entity),
        ("predicate_embeddings.tsv", predicate_labels, model.predicate),
    ):
        with open(out / name, "w", encoding="utf-8") as fh:
            for label, row in zip(labels, matrix):
                fh.write(label + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
