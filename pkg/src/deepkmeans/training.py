"""Deep k-Means training loop, annealing schedule and the KM / AE-KM / DKM pipelines."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    SOFTMAX,
    SQUARED_EUCLIDEAN,
    ClusterModel,
    assign_clusters,
    dkm_loss_and_gradients,
    kmeans,
)
from .errors import ConfigError, NumericError
from .nn import (
    DEFAULT_HIDDEN,
    AdamState,
    DenseNetwork,
    adam_step,
    backward,
    build_network,
    encode,
    forward,
    l2_penalty,
    reconstruction_loss,
)

log = logging.getLogger(__name__)

DKM_A, DKM_P, AE_KM, KM = "dkm_a", "dkm_p", "ae_km", "km"
VARIANTS = (DKM_A, DKM_P, AE_KM, KM)

# independent random streams derived from a run seed
_NET_STREAM, _REPS_STREAM, _KMEANS_STREAM = 1, 2, 3


def stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, purpose])


@dataclass
class AnnealingSchedule:
    terms: list[float]
    epochs_per_term: int = 5

    def __post_init__(self):
        if not self.terms:
            raise ValueError("schedule needs at least one alpha term")
        if self.epochs_per_term < 1:
            raise ValueError("epochs_per_term must be positive")
        if any(t <= 0 for t in self.terms):
            raise ValueError("alpha terms must be positive")
        if any(b <= a for a, b in zip(self.terms, self.terms[1:])):
            raise ValueError("alpha terms must be strictly increasing")

    @property
    def total_epochs(self) -> int:
        return len(self.terms) * self.epochs_per_term


def build_annealing_sequence(n_terms: int = 40, alpha_start: float = 0.1, epochs_per_term: int = 5) -> AnnealingSchedule:
    """alpha_{n+1} = 2^(1/ln(n)^2) * alpha_n.

    ln(1) = 0 makes the first step undefined, so alpha_2 reuses the n=2
    factor: alpha_2 = alpha_1 * 2^(1/ln(2)^2).
    """
    if n_terms < 1:
        raise ValueError("n_terms must be at least 1")
    terms = [float(alpha_start)]
    for n in range(1, n_terms):
        terms.append(terms[-1] * 2.0 ** (1.0 / math.log(max(n, 2)) ** 2))
    return AnnealingSchedule(terms, epochs_per_term)


def constant_schedule(alpha: float = 1000.0, epochs: int = 100) -> AnnealingSchedule:
    return AnnealingSchedule([float(alpha)], epochs)


@dataclass
class TrainPlan:
    variant: str = DKM_A
    lam: float = 0.1
    batch_size: int = 256
    pretrain_epochs: int = 0
    schedule: AnnealingSchedule = field(default_factory=build_annealing_sequence)
    seed: int = 0
    weight_decay: float = 0.0
    learning_rate: float = 0.001

    def validate(self) -> "TrainPlan":
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {VARIANTS}, got {self.variant!r}")
        if self.lam < 0:
            raise ConfigError("lambda", "must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be positive")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs", "must be nonnegative")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be nonnegative")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate", "must be nonnegative")
        if self.variant == DKM_P:
            if self.pretrain_epochs == 0:
                raise ConfigError("pretrain_epochs", "dkm_p needs pretraining")
            if len(self.schedule.terms) != 1:
                raise ConfigError("schedule", "dkm_p uses a constant alpha")
        if self.variant == DKM_A:
            if self.pretrain_epochs != 0:
                raise ConfigError("pretrain_epochs", "dkm_a does not pretrain")
            if len(self.schedule.terms) < 2:
                raise ConfigError("schedule", "dkm_a needs an annealing schedule of two or more terms")
        if self.variant == AE_KM and self.pretrain_epochs == 0:
            raise ConfigError("pretrain_epochs", "ae_km needs pretraining")
        return self

    @classmethod
    def dkm_a(cls, lam: float = 0.1, seed: int = 0, **kw) -> "TrainPlan":
        return cls(DKM_A, lam, pretrain_epochs=0, schedule=build_annealing_sequence(), seed=seed, **kw).validate()

    @classmethod
    def dkm_p(cls, lam: float = 1.0, seed: int = 0, **kw) -> "TrainPlan":
        kw.setdefault("pretrain_epochs", 50)
        return cls(DKM_P, lam, schedule=constant_schedule(1000.0, 100), seed=seed, **kw).validate()


@dataclass
class EpochStats:
    epoch: int
    alpha: float
    total: float
    reconstruction: float
    clustering: float


@dataclass
class RunRecord:
    seed: int
    variant: str
    trace: list[EpochStats]
    pretrain_trace: list[float]
    representatives: np.ndarray
    assignment: np.ndarray
    embeddings: np.ndarray
    net: DenseNetwork | None
    duration: float = 0.0


def minibatch_stream(n_samples: int, batch_size: int, epoch_index: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n_samples)`` cut into batches; the last may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    perm = np.random.default_rng([seed, 0, epoch_index]).permutation(n_samples)
    return [perm[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def pretrain(net: DenseNetwork, X: np.ndarray, plan: TrainPlan, epochs: int | None = None,
             epoch_offset: int = 0, state: AdamState | None = None) -> tuple[DenseNetwork, list[float]]:
    """Train the autoencoder on reconstruction error alone, in place."""
    epochs = plan.pretrain_epochs if epochs is None else epochs
    state = state or AdamState(learning_rate=plan.learning_rate)
    X = np.asarray(X, dtype=np.float64)
    trace = []
    for e in range(epochs):
        epoch = epoch_offset + e
        acc = 0.0
        for b, idx in enumerate(minibatch_stream(len(X), plan.batch_size, epoch, plan.seed)):
            batch = X[idx]
            H, A, cache = forward(net, batch)
            loss, grad_A = reconstruction_loss(batch, A)
            grads = backward(net, cache, np.zeros_like(H), grad_A)
            if plan.weight_decay:
                penalty, pen = l2_penalty(net, plan.weight_decay)
                loss += penalty
                grads = grads + pen
            _step(net, grads, state, None, epoch, b)
            acc += loss * len(idx)
        trace.append(acc / len(X))
        log.debug("pretrain epoch %d loss %.6g", epoch, trace[-1])
    return net, trace


def _step(net, grads, state, reps, epoch, batch_index):
    try:
        adam_step(net, grads, state, reps)
    except NumericError as exc:
        raise NumericError(f"epoch {epoch}, batch {batch_index}: {exc}") from exc


def init_representatives(variant: str, n_clusters: int, rng: np.random.Generator,
                         embeddings: np.ndarray | None = None, embedding_dim: int | None = None) -> np.ndarray:
    if variant == DKM_A:
        if embedding_dim is None:
            raise ValueError("embedding_dim required for random initialization")
        return rng.uniform(-1.0, 1.0, size=(n_clusters, embedding_dim))
    if embeddings is None:
        raise ValueError(f"{variant} initializes representatives from pretrained embeddings")
    return kmeans(embeddings, n_clusters, rng).representatives


def train(net: DenseNetwork, model: ClusterModel, X: np.ndarray, plan: TrainPlan,
          epoch_offset: int | None = None, state: AdamState | None = None) -> RunRecord:
    """Joint minibatch Adam updates of the network and representatives over the
    alpha schedule; ``net`` and ``model`` are updated in place."""
    X = np.asarray(X, dtype=np.float64)
    epoch = plan.pretrain_epochs if epoch_offset is None else epoch_offset
    state = state or AdamState(learning_rate=plan.learning_rate)
    R = model.representatives
    trace = []
    start = time.perf_counter()
    for alpha in plan.schedule.terms:
        for _ in range(plan.schedule.epochs_per_term):
            sums = np.zeros(3)
            for b, idx in enumerate(minibatch_stream(len(X), plan.batch_size, epoch, plan.seed)):
                _, diag, grads = dkm_loss_and_gradients(X[idx], net, model, alpha, plan.lam, plan.weight_decay)
                _step(net, grads, state, R, epoch, b)
                sums += len(idx) * np.array([diag["total"], diag["reconstruction"], diag["clustering"]])
            sums /= len(X)
            trace.append(EpochStats(epoch, alpha, *map(float, sums)))
            log.debug("epoch %d alpha %.4g loss %.6g", epoch, alpha, sums[0])
            epoch += 1
    H = encode(net, X)
    return RunRecord(
        seed=plan.seed, variant=plan.variant, trace=trace, pretrain_trace=[],
        representatives=R.copy(), assignment=assign_clusters(H, R, model.distance_kind),
        embeddings=H, net=net, duration=time.perf_counter() - start,
    )


def pretrained_network(X: np.ndarray, embedding_dim: int, plan: TrainPlan,
                       hidden: tuple[int, ...] = DEFAULT_HIDDEN) -> tuple[DenseNetwork, list[float]]:
    """Seeded network, pretrained for ``plan.pretrain_epochs`` (possibly zero)."""
    net = build_network(X.shape[1], embedding_dim, stream(plan.seed, _NET_STREAM), hidden)
    if plan.pretrain_epochs:
        return pretrain(net, X, plan)
    return net, []


def run_variant(X: np.ndarray, n_clusters: int, plan: TrainPlan, hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                embedding_dim: int | None = None, distance_kind: str = SQUARED_EUCLIDEAN,
                membership_kind: str = SOFTMAX, pretrained: tuple[DenseNetwork, list[float]] | None = None) -> RunRecord:
    """Run one seeded experiment for any of the four variants.

    Pretraining depends only on (seed, data, architecture, pretrain settings),
    so variants that share a seed share their pretrained network. Pass
    ``pretrained=(net, trace)`` from :func:`pretrained_network` to reuse it;
    the network is copied, never modified.
    """
    plan.validate()
    X = np.asarray(X, dtype=np.float64)
    start = time.perf_counter()
    if plan.variant == KM:
        res = kmeans(X, n_clusters, stream(plan.seed, _KMEANS_STREAM))
        return RunRecord(plan.seed, KM, [], [], res.representatives, res.assignment, X, None,
                         time.perf_counter() - start)

    p = embedding_dim or n_clusters
    if pretrained is not None and plan.pretrain_epochs:
        net, pre_trace = pretrained[0].copy(), list(pretrained[1])
    else:
        net, pre_trace = pretrained_network(X, p, plan, hidden)

    if plan.variant == DKM_A:
        R = init_representatives(DKM_A, n_clusters, stream(plan.seed, _REPS_STREAM), embedding_dim=p)
    else:
        R = init_representatives(plan.variant, n_clusters, stream(plan.seed, _KMEANS_STREAM), embeddings=encode(net, X))
    if plan.variant == AE_KM:
        H = encode(net, X)
        return RunRecord(plan.seed, AE_KM, [], pre_trace, R, assign_clusters(H, R), H, net,
                         time.perf_counter() - start)

    model = ClusterModel(R, distance_kind, membership_kind)
    record = train(net, model, X, plan)
    record.pretrain_trace = pre_trace
    record.duration = time.perf_counter() - start
    return record
