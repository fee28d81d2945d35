"""End-to-end training: Adam on embedding tables with early stopping.

One epoch is a full shuffled pass over the training pairs. After each epoch
the model is scored on the validation part (NDCG@K for stopping) and
hypersphere diagnostics (alignment, per-entity uniformity, kernel variance)
are computed on a fixed seeded probe sample so curves stay comparable across
epochs without the O(N^2) cost of all-pairs statistics.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoders, losses
from .data import SplitDataset, epoch_batches
from .evaluation import evaluate
from .hypersphere import EmbeddingTable, init_xavier, l2_normalize
from .losses import LossWeights

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

OBJECTIVES = ("rau", "directau", "bpr")
ENCODERS = ("mf", "lightgcn")

PROBE_LIMIT = 2048
DIRECTAU_WEIGHTS = LossWeights(alpha=0.0, beta=0.0, gamma_user=0.5, gamma_item=0.5)


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "rau"
    encoder: str = "mf"
    weights: LossWeights = field(default_factory=LossWeights)
    dim: int = 64
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    weight_decay: float = 1e-6
    seed: int = 0
    eval_k_for_stopping: int = 20
    num_layers: int = 2
    fixed_epochs: bool = False
    bpr_full_history_rejection: bool = False

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        # lr == 0 is allowed: it freezes the tables, useful for no-op smoke runs
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")

    def effective_weights(self) -> LossWeights | None:
        """Loss weights after objective resolution.

        The directau objective pins alpha = beta = 0 and gamma = (0.5, 0.5);
        bpr uses no hypersphere weights at all.
        """
        if self.objective == "rau":
            return self.weights
        if self.objective == "directau":
            return DIRECTAU_WEIGHTS
        return None

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "encoder": self.encoder,
            "alpha": self.weights.alpha,
            "beta": self.weights.beta,
            "gamma_user": self.weights.gamma_user,
            "gamma_item": self.weights.gamma_item,
            "dim": self.dim,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "eval_k_for_stopping": self.eval_k_for_stopping,
            "num_layers": self.num_layers,
            "fixed_epochs": self.fixed_epochs,
            "bpr_full_history_rejection": self.bpr_full_history_rejection,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        payload = dict(payload)
        weights = LossWeights(
            alpha=float(payload.pop("alpha", 0.0)),
            beta=float(payload.pop("beta", 0.0)),
            gamma_user=float(payload.pop("gamma_user", 0.5)),
            gamma_item=float(payload.pop("gamma_item", 0.5)),
        )
        known = {f: payload[f] for f in (
            "objective", "encoder", "dim", "lr", "batch_size", "max_epochs", "patience",
            "weight_decay", "seed", "eval_k_for_stopping", "num_layers", "fixed_epochs",
            "bpr_full_history_rejection",
        ) if f in payload}
        return cls(weights=weights, **known)


@dataclass(eq=False)
class AdamState:
    """Per-parameter Adam moments plus the shared step counter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, mutating params and state in place.

    Weight decay is decoupled: params shrink by (1 - lr * weight_decay)
    before the moment update. Raises on non-finite gradients.
    """
    if params.shape != grads.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient; aborting the update")
    if weight_decay:
        params *= 1.0 - lr * weight_decay
    state.step_count += 1
    state.first_moment *= ADAM_BETA1
    state.first_moment += (1.0 - ADAM_BETA1) * grads
    state.second_moment *= ADAM_BETA2
    state.second_moment += (1.0 - ADAM_BETA2) * np.square(grads)
    correction1 = 1.0 - ADAM_BETA1 ** state.step_count
    correction2 = 1.0 - ADAM_BETA2 ** state.step_count
    m_hat = state.first_moment / correction1
    v_hat = state.second_moment / correction2
    params -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state


@dataclass(frozen=True)
class EpochDiagnostics:
    epoch: int
    align: float
    uniform_user: float
    uniform_item: float
    kernel_variance_user: float
    kernel_variance_item: float
    wall_time_s: float


@dataclass
class TrainReport:
    best_epoch: int
    epochs_run: int
    diagnostics: list[EpochDiagnostics]
    val_history: list[dict]
    best_val: dict | None
    total_time_s: float

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "diagnostics": [vars(d) for d in self.diagnostics],
            "val_history": self.val_history,
            "best_val": self.best_val,
            "total_time_s": self.total_time_s,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


class TrainState:
    """Mutable model state threaded through the epoch loop."""

    def __init__(self, split: SplitDataset, cfg: TrainConfig):
        self.cfg = cfg
        root = np.random.SeedSequence(cfg.seed)
        user_seed, item_seed, probe_seed, shuffle_root, negative_root = (
            int(s) for s in root.generate_state(5)
        )
        self.user_table = init_xavier(split.num_users, cfg.dim, user_seed)
        self.item_table = init_xavier(split.num_items, cfg.dim, item_seed)
        self.user_adam = AdamState.like(self.user_table.values)
        self.item_adam = AdamState.like(self.item_table.values)
        self.shuffle_root = shuffle_root
        self.negative_root = negative_root
        self.adjacency = (
            encoders.build_norm_adjacency(split.train) if cfg.encoder == "lightgcn" else None
        )
        self.graph_cfg = encoders.GraphEncoderConfig(num_layers=cfg.num_layers)

        probe_rng = np.random.default_rng(probe_seed)
        n_pairs = split.train.num_interactions
        pair_pick = probe_rng.permutation(n_pairs)[:min(PROBE_LIMIT, n_pairs)]
        probe_pairs = split.train.interactions[np.sort(pair_pick)]
        self.probe_pair_users = probe_pairs[:, 0].copy()
        self.probe_pair_items = probe_pairs[:, 1].copy()
        self.probe_users = np.sort(
            probe_rng.permutation(split.num_users)[:min(PROBE_LIMIT, split.num_users)]
        )
        self.probe_items = np.sort(
            probe_rng.permutation(split.num_items)[:min(PROBE_LIMIT, split.num_items)]
        )

    def encode_batch(self, user_ids: np.ndarray, item_ids: np.ndarray):
        if self.adjacency is None:
            return (
                encoders.mf_encode(self.user_table, user_ids),
                encoders.mf_encode(self.item_table, item_ids),
            )
        return encoders.lightgcn_encode(
            self.user_table, self.item_table, self.adjacency, self.graph_cfg, user_ids, item_ids
        )

    def encode_all(self) -> tuple[np.ndarray, np.ndarray]:
        if self.adjacency is None:
            return self.user_table.values, self.item_table.values
        return encoders.lightgcn_propagate(
            self.user_table, self.item_table, self.adjacency, self.graph_cfg
        )

    def backward_to_tables(self, user_ids, item_ids, grad_users, grad_items):
        if self.adjacency is None:
            return (
                encoders.scatter_rows(grad_users, user_ids, self.user_table.rows),
                encoders.scatter_rows(grad_items, item_ids, self.item_table.rows),
            )
        return encoders.lightgcn_backward(
            self.adjacency, self.graph_cfg, user_ids, item_ids, grad_users, grad_items
        )

    def apply_gradients(self, user_grad: np.ndarray, item_grad: np.ndarray) -> None:
        adam_step(self.user_table.values, user_grad, self.user_adam,
                  self.cfg.lr, self.cfg.weight_decay)
        adam_step(self.item_table.values, item_grad, self.item_adam,
                  self.cfg.lr, self.cfg.weight_decay)

    def snapshot(self) -> tuple[EmbeddingTable, EmbeddingTable]:
        return self.user_table.copy(), self.item_table.copy()


def _sample_negatives(batch_items: np.ndarray, split: SplitDataset, user_ids: np.ndarray,
                      rng: np.random.Generator, full_history: bool) -> np.ndarray:
    num_items = split.num_items
    negatives = np.empty_like(batch_items)
    for idx in range(batch_items.shape[0]):
        if full_history:
            history = split.train.items_for_user(int(user_ids[idx]))
            while True:
                neg = int(rng.integers(num_items))
                pos = int(np.searchsorted(history, neg))
                if pos >= history.size or history[pos] != neg:
                    break
        else:
            positive = int(batch_items[idx])
            while True:
                neg = int(rng.integers(num_items))
                if neg != positive:
                    break
        negatives[idx] = neg
    return negatives


def _bpr_step(state: TrainState, split: SplitDataset, batch, rng) -> None:
    cfg = state.cfg
    negatives = _sample_negatives(batch.item_indices, split, batch.user_indices, rng,
                                  cfg.bpr_full_history_rejection)
    if state.adjacency is None:
        user_vecs = encoders.mf_encode(state.user_table, batch.user_indices)
        pos_vecs = encoders.mf_encode(state.item_table, batch.item_indices)
        neg_vecs = encoders.mf_encode(state.item_table, negatives)
    else:
        all_users, all_items = state.encode_all()
        user_vecs = all_users[batch.user_indices]
        pos_vecs = all_items[batch.item_indices]
        neg_vecs = all_items[negatives]
    _, grad_u, grad_p, grad_n = losses.bpr_loss_and_gradient(user_vecs, pos_vecs, neg_vecs)
    if state.adjacency is None:
        user_grad = encoders.scatter_rows(grad_u, batch.user_indices, state.user_table.rows)
        item_grad = encoders.scatter_rows(grad_p, batch.item_indices, state.item_table.rows)
        item_grad += encoders.scatter_rows(grad_n, negatives, state.item_table.rows)
    else:
        item_ids = np.concatenate([batch.item_indices, negatives])
        item_grads = np.concatenate([grad_p, grad_n])
        user_grad, item_grad = encoders.lightgcn_backward(
            state.adjacency, state.graph_cfg, batch.user_indices, item_ids, grad_u, item_grads
        )
    state.apply_gradients(user_grad, item_grad)


def _probe_diagnostics(state: TrainState, epoch: int, wall_time_s: float) -> EpochDiagnostics:
    all_users, all_items = state.encode_all()
    pair_users = l2_normalize(all_users[state.probe_pair_users])
    pair_items = l2_normalize(all_items[state.probe_pair_items])
    probe_users = l2_normalize(all_users[state.probe_users])
    probe_items = l2_normalize(all_items[state.probe_items])
    return EpochDiagnostics(
        epoch=epoch,
        align=losses.align_loss(pair_users, pair_items),
        uniform_user=losses.uniform_part(probe_users),
        uniform_item=losses.uniform_part(probe_items),
        kernel_variance_user=losses.kernel_variance(probe_users),
        kernel_variance_item=losses.kernel_variance(probe_items),
        wall_time_s=wall_time_s,
    )


def train_epoch(split: SplitDataset, state: TrainState, cfg: TrainConfig,
                epoch_index: int) -> EpochDiagnostics:
    """Run one full pass over the training pairs and return probe diagnostics.

    epoch_index is 1-based and seeds both the batch shuffle and (for the
    ranking objective) the per-epoch negative draws.
    """
    started = time.perf_counter()
    weights = cfg.effective_weights()
    negative_rng = np.random.default_rng([state.negative_root, epoch_index])
    for batch in epoch_batches(split.train, cfg.batch_size, [state.shuffle_root, epoch_index]):
        if weights is None:
            _bpr_step(state, split, batch, negative_rng)
            continue
        user_vecs, item_vecs = state.encode_batch(batch.user_indices, batch.item_indices)
        _, grad_users, grad_items = losses.rau_loss_and_gradient(user_vecs, item_vecs, weights)
        user_grad, item_grad = state.backward_to_tables(
            batch.user_indices, batch.item_indices, grad_users, grad_items
        )
        state.apply_gradients(user_grad, item_grad)
    return _probe_diagnostics(state, epoch_index, time.perf_counter() - started)


def fit(split: SplitDataset, cfg: TrainConfig) -> tuple[TrainReport, EmbeddingTable, EmbeddingTable]:
    """Train until max_epochs or until validation NDCG@K stops improving.

    "Stops improving" means no new best value for `patience` consecutive
    validation evaluations (run once per epoch). Returns the report plus the
    best-epoch tables; with fixed_epochs the validation part is ignored and
    the final tables are returned.
    """
    if not cfg.fixed_epochs and split.validation.num_interactions == 0:
        raise ValueError(
            "validation split is empty so early stopping is impossible; "
            "set fixed_epochs=True (CLI: --fixed-epochs) to train for max_epochs"
        )
    started = time.perf_counter()
    state = TrainState(split, cfg)
    score_mode = "dot" if cfg.objective == "bpr" else "cosine"
    stopping_k = cfg.eval_k_for_stopping

    diagnostics: list[EpochDiagnostics] = []
    val_history: list[dict] = []
    best_val: dict | None = None
    best_metric = -np.inf
    best_epoch = 0
    best_tables = state.snapshot()
    epochs_without_improvement = 0
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        diagnostics.append(train_epoch(split, state, cfg, epoch))
        epochs_run = epoch
        if cfg.fixed_epochs:
            continue
        all_users, all_items = state.encode_all()
        report = evaluate(split, all_users, all_items, ks=(stopping_k,),
                          part="validation", score_mode=score_mode)
        entry = {
            "epoch": epoch,
            f"recall@{stopping_k}": report.recall[stopping_k],
            f"ndcg@{stopping_k}": report.ndcg[stopping_k],
        }
        val_history.append(entry)
        metric = report.ndcg[stopping_k]
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_val = entry
            best_tables = state.snapshot()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= cfg.patience:
                break

    if cfg.fixed_epochs:
        best_epoch = epochs_run
        best_tables = state.snapshot()

    report = TrainReport(
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        diagnostics=diagnostics,
        val_history=val_history,
        best_val=best_val,
        total_time_s=time.perf_counter() - started,
    )
    return report, best_tables[0], best_tables[1]


def write_diagnostics_csv(report: TrainReport, path, stopping_k: int) -> None:
    """One CSV row per epoch: probe diagnostics plus validation metrics.

    Wall-clock timings stay in the JSON report only, so identical seeded runs
    produce byte-identical CSVs.
    """
    columns = [
        "epoch", "align", "uniform_user", "uniform_item",
        "kernel_variance_user", "kernel_variance_item",
        f"val_recall@{stopping_k}", f"val_ndcg@{stopping_k}",
    ]
    val_by_epoch = {entry["epoch"]: entry for entry in report.val_history}
    lines = [",".join(columns)]
    for diag in report.diagnostics:
        entry = val_by_epoch.get(diag.epoch)
        row = [
            str(diag.epoch),
            repr(diag.align),
            repr(diag.uniform_user),
            repr(diag.uniform_item),
            repr(diag.kernel_variance_user),
            repr(diag.kernel_variance_item),
            repr(entry[f"recall@{stopping_k}"]) if entry else "",
            repr(entry[f"ndcg@{stopping_k}"]) if entry else "",
        ]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
