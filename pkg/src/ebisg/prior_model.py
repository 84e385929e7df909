"""Feedforward networks mapping name embeddings to race distributions.

Implements a small ReLU MLP with a 6-way softmax head, trained with
count-weighted soft-label cross-entropy and adaptive-moment updates.
Everything is seeded and single-threaded per model so identical inputs
produce identical weights.
"""

from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._binio import Cursor
from .embedding import Provider, get_embedding
from .errors import ConfigError, DataError, FormatError, TrainingError
from .races import N_RACES, RACES, one_hot
from .tables import NameTable, VoterRecord, fullname_string, normalize_name

WEIGHTS_MAGIC = b"EMLP"
WEIGHTS_VERSION = 1
ACTIVATION = "relu"

# Adam constants; recorded in model metadata via TrainingConfig.
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer plan: input -> hidden ReLU layers (with dropout) -> 6-way softmax."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if len(self.hidden_layers) < 1:
            raise ConfigError("architecture needs at least one hidden layer")
        if any(w < 1 for w in self.hidden_layers):
            raise ConfigError(f"hidden widths must be >= 1, got {self.hidden_layers}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) shapes of all weight matrices, output layer last."""
        dims = [self.input_dim, *self.hidden_layers, N_RACES]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass
class MlpWeights:
    """Parameters plus the stamps that make a weights file self-describing."""

    arch: MlpArchitecture
    weights: list[np.ndarray]  # per layer, shape (out, in)
    biases: list[np.ndarray]  # per layer, shape (out,)
    race_order: tuple[str, ...] = RACES
    provenance: str = ""  # embedding provider the model was trained against
    train_seed: int = 0

    def copy(self) -> "MlpWeights":
        return MlpWeights(
            arch=self.arch,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            race_order=self.race_order,
            provenance=self.provenance,
            train_seed=self.train_seed,
        )


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    validation_fraction: float = 0.2
    seed: int = 0
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    patience: int = 5

    def __post_init__(self):
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError(f"validation fraction must be in (0,1), got {self.validation_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch size and epochs must be >= 1")


@dataclass
class TrainReport:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    final_validation_loss: float
    n_train: int
    n_val: int
    wall_time_s: float


def init_weights(
    arch: MlpArchitecture,
    seed: int,
    provenance: str = "",
) -> MlpWeights:
    """Uniform fan-in initialization: W ~ U(+-1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_dim, in_dim in arch.layer_dims:
        bound = 1.0 / np.sqrt(in_dim)
        weights.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return MlpWeights(arch=arch, weights=weights, biases=biases, provenance=provenance, train_seed=seed)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(
    model: MlpWeights,
    X: np.ndarray,
    training: bool,
    dropout_seed: int,
    want_cache: bool,
):
    """Batched forward pass; caches activations and dropout masks for backprop."""
    p = model.arch.dropout_rate
    rng = np.random.default_rng(dropout_seed) if (training and p > 0.0) else None
    acts = [X]
    masks: list[Optional[np.ndarray]] = []
    h = X
    n_layers = len(model.weights)
    for li in range(n_layers - 1):
        z = h @ model.weights[li].T + model.biases[li]
        h = np.maximum(z, 0.0)
        if rng is not None:
            mask = (rng.random(h.shape) >= p) / (1.0 - p)  # inverted dropout
            h = h * mask
        else:
            mask = None
        if want_cache:
            acts.append(h)
            masks.append(mask)
    logits = h @ model.weights[-1].T + model.biases[-1]
    probs = _softmax(logits)
    if want_cache:
        return probs, acts, masks
    return probs


def forward(
    model: MlpWeights,
    x: np.ndarray,
    training: bool = False,
    dropout_seed: int = 0,
) -> np.ndarray:
    """Race distribution for one embedding vector.

    Dropout fires only when ``training`` is set; inference is deterministic
    and independent of ``dropout_seed``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.arch.input_dim,):
        raise ConfigError(
            f"input has dimension {x.shape}, model expects ({model.arch.input_dim},)"
        )
    probs = _forward_batch(model, x[None, :], training, dropout_seed, want_cache=False)
    return probs[0]


def loss(pred: np.ndarray, target: np.ndarray, weight: float) -> float:
    """Count-weighted soft-label cross-entropy: weight * sum(-target * log pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    hot = target > 0.0
    return float(weight) * float(-(target[hot] * np.log(pred[hot])).sum())


def _batch_loss(probs: np.ndarray, T: np.ndarray, W: np.ndarray) -> float:
    """Weighted mean cross-entropy over a batch.

    A probability of exactly 0 on a positive-target class yields an
    infinite loss, which the training loop treats as divergence.
    """
    with np.errstate(divide="ignore"):
        logp = np.where(T > 0.0, np.log(probs), 0.0)
    per_example = -(T * logp).sum(axis=1)
    return float((W * per_example).sum() / W.sum())


def loss_and_gradients(
    model: MlpWeights,
    X: np.ndarray,
    T: np.ndarray,
    W: np.ndarray,
    training: bool = False,
    dropout_seed: int = 0,
):
    """Weighted-mean loss over (X, T, W) and its gradients w.r.t. every parameter."""
    probs, acts, masks = _forward_batch(model, X, training, dropout_seed, want_cache=True)
    total_w = W.sum()
    loss_val = _batch_loss(probs, T, W)
    # d(loss)/d(logits): softmax + cross-entropy collapses to (p - t), scaled
    # by each example's share of the batch weight.
    delta = (probs - T) * (W / total_w)[:, None]
    grads_w = [np.empty_like(w) for w in model.weights]
    grads_b = [np.empty_like(b) for b in model.biases]
    n_layers = len(model.weights)
    for li in range(n_layers - 1, -1, -1):
        grads_w[li] = delta.T @ acts[li]
        grads_b[li] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ model.weights[li]
            if masks[li - 1] is not None:
                delta = delta * masks[li - 1]
            delta = delta * (acts[li] > 0.0)
    return loss_val, grads_w, grads_b


# --- training -------------------------------------------------------------


Dataset = Sequence[tuple[np.ndarray, np.ndarray, float]]


def _dataset_arrays(dataset: Dataset):
    if len(dataset) == 0:
        raise DataError("training dataset is empty")
    X = np.asarray([row[0] for row in dataset], dtype=np.float64)
    T = np.asarray([row[1] for row in dataset], dtype=np.float64)
    W = np.asarray([row[2] for row in dataset], dtype=np.float64)
    if X.ndim != 2:
        raise DataError("embeddings must share one dimension")
    if T.shape != (len(dataset), N_RACES):
        raise DataError(f"targets must be ({len(dataset)}, {N_RACES}), got {T.shape}")
    if np.any(T < 0) or not np.all(np.isfinite(T)):
        raise DataError("targets must be non-negative and finite")
    if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("every target must sum to 1")
    if np.any(W < 0) or not np.all(np.isfinite(W)):
        raise DataError("weights must be non-negative and finite")
    if W.sum() <= 0:
        raise DataError("total example weight is zero")
    return X, T, W


def _dropout_seed(master: int, epoch: int, batch: int) -> int:
    return int(np.random.SeedSequence([master, epoch, batch]).generate_state(1)[0])


def _snap_f32(model: MlpWeights) -> MlpWeights:
    """Quantize parameters to float32 values so save/load round-trips exactly."""
    out = model.copy()
    out.weights = [w.astype(np.float32).astype(np.float64) for w in out.weights]
    out.biases = [b.astype(np.float32).astype(np.float64) for b in out.biases]
    return out


def train(
    dataset: Dataset,
    arch: MlpArchitecture,
    cfg: TrainingConfig,
    provenance: str = "",
) -> tuple[MlpWeights, TrainReport]:
    """Train with mini-batch adaptive-moment updates and early stopping.

    The split is a seeded shuffle whose first (1 - validation_fraction)
    goes to training; the run is fully determined by (dataset, arch, cfg).
    Returns the weights from the best validation epoch, quantized to file
    precision so persistence is lossless.
    """
    t0 = time.perf_counter()
    X, T, W = _dataset_arrays(dataset)
    if X.shape[1] != arch.input_dim:
        raise ConfigError(f"dataset dim {X.shape[1]} != architecture input_dim {arch.input_dim}")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(X))
    n_val = int(round(len(X) * cfg.validation_fraction))
    n_train = len(X) - n_val
    if n_train < 1:
        n_train, n_val = len(X), 0
    train_idx, val_idx = order[:n_train], order[n_train:]
    Xt, Tt, Wt = X[train_idx], T[train_idx], W[train_idx]
    if n_val:
        Xv, Tv, Wv = X[val_idx], T[val_idx], W[val_idx]
    else:
        Xv, Tv, Wv = Xt, Tt, Wt  # degenerate datasets validate on themselves

    model = init_weights(arch, seed=cfg.seed, provenance=provenance)
    mw = [np.zeros_like(w) for w in model.weights]
    vw = [np.zeros_like(w) for w in model.weights]
    mb = [np.zeros_like(b) for b in model.biases]
    vb = [np.zeros_like(b) for b in model.biases]
    step = 0

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_model = model.copy()
    stale = 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_train)
        epoch_loss = 0.0
        epoch_weight = 0.0
        for bi, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            seed = _dropout_seed(cfg.seed, epoch, bi)
            loss_val, gw, gb = loss_and_gradients(
                model, Xt[idx], Tt[idx], Wt[idx], training=True, dropout_seed=seed
            )
            if not np.isfinite(loss_val):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            bw = float(Wt[idx].sum())
            epoch_loss += loss_val * bw
            epoch_weight += bw
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for li in range(len(model.weights)):
                mw[li] = cfg.beta1 * mw[li] + (1 - cfg.beta1) * gw[li]
                vw[li] = cfg.beta2 * vw[li] + (1 - cfg.beta2) * gw[li] ** 2
                model.weights[li] -= cfg.learning_rate * (mw[li] / bc1) / (np.sqrt(vw[li] / bc2) + cfg.eps)
                mb[li] = cfg.beta1 * mb[li] + (1 - cfg.beta1) * gb[li]
                vb[li] = cfg.beta2 * vb[li] + (1 - cfg.beta2) * gb[li] ** 2
                model.biases[li] -= cfg.learning_rate * (mb[li] / bc1) / (np.sqrt(vb[li] / bc2) + cfg.eps)
        train_losses.append(epoch_loss / epoch_weight)
        val_probs = _forward_batch(model, Xv, training=False, dropout_seed=0, want_cache=False)
        vloss = _batch_loss(val_probs, Tv, Wv)
        if not np.isfinite(vloss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        val_losses.append(vloss)
        if vloss < best_val:
            best_val = vloss
            best_epoch = epoch
            best_model = model.copy()
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break

    best_model.train_seed = cfg.seed
    report = TrainReport(
        train_loss=train_losses,
        val_loss=val_losses,
        best_epoch=best_epoch,
        final_validation_loss=float(best_val),
        n_train=n_train,
        n_val=n_val if n_val else n_train,
        wall_time_s=time.perf_counter() - t0,
    )
    return _snap_f32(best_model), report


# --- hyperparameter search --------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Random-search space over architecture and optimizer settings."""

    n_layers: tuple[int, ...] = (1, 2, 3)
    widths: tuple[int, ...] = (64, 128, 256, 512, 1024)
    dropout: tuple[float, float] = (0.0, 0.5)
    learning_rate: tuple[float, float] = (1e-5, 1e-2)  # sampled log-uniform
    batch_sizes: tuple[int, ...] = (32, 64, 128, 256)
    epochs: int = 30
    patience: int = 5
    validation_fraction: float = 0.2


@dataclass
class TrialResult:
    index: int
    arch: MlpArchitecture
    cfg: TrainingConfig
    val_loss: float
    status: str  # "ok" | "failed"
    error: str = ""


def hyperparameter_search(
    dataset: Dataset,
    search_space: SearchSpace,
    trials: int = 50,
    seed: int = 0,
    jobs: int = 1,
    provenance: str = "",
) -> tuple[MlpArchitecture, TrainingConfig, list[TrialResult]]:
    """Seeded random search ranked by validation cross-entropy.

    Trial configurations are all sampled up front from the master seed, so
    the outcome does not depend on how many workers run the training.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    X0 = np.asarray(dataset[0][0], dtype=np.float64)
    input_dim = X0.shape[0]
    rng = np.random.default_rng(seed)
    space = search_space
    plans: list[tuple[MlpArchitecture, TrainingConfig]] = []
    for t in range(trials):
        n_layers = int(rng.choice(space.n_layers))
        widths = tuple(int(rng.choice(space.widths)) for _ in range(n_layers))
        dropout = float(rng.uniform(*space.dropout))
        lr = float(np.exp(rng.uniform(np.log(space.learning_rate[0]), np.log(space.learning_rate[1]))))
        batch = int(rng.choice(space.batch_sizes))
        trial_seed = int(rng.integers(0, 2**31 - 1))
        arch = MlpArchitecture(input_dim=input_dim, hidden_layers=widths, dropout_rate=dropout)
        cfg = TrainingConfig(
            learning_rate=lr,
            batch_size=batch,
            epochs=space.epochs,
            validation_fraction=space.validation_fraction,
            seed=trial_seed,
            patience=space.patience,
        )
        plans.append((arch, cfg))

    def run(t: int) -> TrialResult:
        arch, cfg = plans[t]
        try:
            _, report = train(dataset, arch, cfg, provenance=provenance)
            return TrialResult(t, arch, cfg, report.final_validation_loss, "ok")
        except TrainingError as exc:
            return TrialResult(t, arch, cfg, float("inf"), "failed", str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(t) for t in range(trials)]

    leaderboard = sorted(results, key=lambda r: (r.status != "ok", r.val_loss, r.index))
    if leaderboard[0].status != "ok":
        err = TrainingError("every hyperparameter trial diverged")
        err.leaderboard = leaderboard
        raise err
    best = leaderboard[0]
    return best.arch, best.cfg, leaderboard


# --- prediction ----------------------------------------------------------------


def predict_prior(model: MlpWeights, provider: Provider, name: str) -> np.ndarray:
    """Race distribution for a name: embed, then run the network in inference mode.

    Refuses providers whose provenance differs from the one the model was
    trained against, so vectors from one embedding space never feed a model
    fitted in another.
    """
    if model.provenance != provider.provenance:
        raise ConfigError(
            f"provider provenance {provider.provenance!r} does not match "
            f"model provenance {model.provenance!r}"
        )
    return forward(model, get_embedding(provider, name), training=False)


class PriorModel:
    """A weights/provider pair with per-name memoization; safe to share read-only."""

    def __init__(self, model: MlpWeights, provider: Provider):
        if model.provenance != provider.provenance:
            raise ConfigError(
                f"provider provenance {provider.provenance!r} does not match "
                f"model provenance {model.provenance!r}"
            )
        self.model = model
        self.provider = provider
        self._cache: dict[str, np.ndarray] = {}

    def predict(self, name: str) -> np.ndarray:
        key = normalize_name(name)
        hit = self._cache.get(key)
        if hit is None:
            hit = predict_prior(self.model, self.provider, key)
            self._cache[key] = hit
        return hit


# --- dataset builders -----------------------------------------------------------


def dataset_from_name_table(table: NameTable, provider: Provider) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Soft-label rows: each listed name contributes its full race
    distribution, weighted by its population count."""
    return [
        (get_embedding(provider, name), entry.dist, float(entry.count))
        for name, entry in sorted(table.entries.items())
    ]


def dataset_from_voters(voters: Sequence[VoterRecord], provider: Provider) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """One-hot rows with unit weight from labeled voter records (full names)."""
    out = []
    for v in voters:
        if v.race is None:
            raise DataError(f"voter {v.id!r} has no race label; cannot train on it")
        out.append((get_embedding(provider, fullname_string(v)), one_hot(v.race), 1.0))
    return out


# --- persistence -----------------------------------------------------------------
#
# Little-endian layout:
#   magic "EMLP" | version u32
#   | input_dim u32 | n_hidden u32 | widths u32 x n_hidden | dropout f64
#   | activation: u16 length + UTF-8
#   | race order: u16 count, then per label u16 length + UTF-8
#   | provenance: u16 length + UTF-8 | train seed i64
#   | per layer: weight matrix f32 row-major, then bias f32


def _write_str(f, s: str):
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataError("string too long for weights format")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def save_weights(model: MlpWeights, path) -> None:
    arch = model.arch
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", WEIGHTS_VERSION))
        f.write(struct.pack("<II", arch.input_dim, len(arch.hidden_layers)))
        f.write(struct.pack(f"<{len(arch.hidden_layers)}I", *arch.hidden_layers))
        f.write(struct.pack("<d", arch.dropout_rate))
        _write_str(f, ACTIVATION)
        f.write(struct.pack("<H", len(model.race_order)))
        for label in model.race_order:
            _write_str(f, label)
        _write_str(f, model.provenance)
        f.write(struct.pack("<q", model.train_seed))
        for w, b in zip(model.weights, model.biases):
            f.write(w.astype("<f4").tobytes())
            f.write(b.astype("<f4").tobytes())


def load_weights(path) -> MlpWeights:
    """Load a weights file; refuses wrong magic/version/race order and
    reports the byte offset of any truncation."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, "rb") as f:
        cur = Cursor(f, path)
        magic = cur.read(4, "magic")
        if magic != WEIGHTS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
        (version,) = struct.unpack("<I", cur.read(4, "version"))
        if version != WEIGHTS_VERSION:
            raise FormatError(f"{path}: unsupported weights version {version}")
        input_dim, n_hidden = struct.unpack("<II", cur.read(8, "architecture header"))
        widths = struct.unpack(f"<{n_hidden}I", cur.read(4 * n_hidden, "hidden widths"))
        (dropout,) = struct.unpack("<d", cur.read(8, "dropout rate"))
        activation = cur.read_str("activation")
        if activation != ACTIVATION:
            raise FormatError(f"{path}: unsupported activation {activation!r}")
        (n_races,) = struct.unpack("<H", cur.read(2, "race order count"))
        race_order = tuple(cur.read_str(f"race label {i}") for i in range(n_races))
        if race_order != RACES:
            raise FormatError(
                f"{path}: race-order stamp {race_order!r} does not match this "
                f"toolkit's canonical order {RACES!r}"
            )
        provenance = cur.read_str("provenance")
        (train_seed,) = struct.unpack("<q", cur.read(8, "train seed"))
        arch = MlpArchitecture(input_dim=input_dim, hidden_layers=widths, dropout_rate=dropout)
        weights, biases = [], []
        for li, (out_dim, in_dim) in enumerate(arch.layer_dims):
            wbuf = cur.read(4 * out_dim * in_dim, f"layer {li} weights")
            w = np.frombuffer(wbuf, dtype="<f4").reshape(out_dim, in_dim).astype(np.float64)
            bbuf = cur.read(4 * out_dim, f"layer {li} bias")
            b = np.frombuffer(bbuf, dtype="<f4").astype(np.float64)
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise FormatError(f"{path}: layer {li} has non-finite parameters")
            weights.append(w)
            biases.append(b)
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after parameters at offset {cur.offset}")
    return MlpWeights(
        arch=arch,
        weights=weights,
        biases=biases,
        race_order=race_order,
        provenance=provenance,
        train_seed=train_seed,
    )
