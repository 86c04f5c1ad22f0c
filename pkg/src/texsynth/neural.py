"""Action-conditional spectral predictor with explicit backpropagation.

Three fully connected blocks built directly on numpy arrays:

* action encoder  20 -> 64 -> 64 (rectifier between, linear out),
* texture head    128 -> 256 -> 256 in descriptor mode, or a trainable
  per-material embedding table (|materials| x 256) in embedding mode,
* predictor       (64 + 256) -> 256 -> 256 -> 101 with rectifiers between
  layers and a final rectifier so magnitudes stay non-negative.

The ``action_only`` mode drops the texture input entirely (predictor input
is the 64-dim action encoding), giving the per-material ablation variant.

Training runs in two stages: a classification warm-up for the texture head
(cross entropy over material labels) and then regression of the 101
magnitude bins under a per-example Euclidean loss, with the stage-1 head
frozen.  Gradients are hand-derived; Adam is the only optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .dataset import ActionWindow
from .dsp import N_BINS, SpectralFrame
from .errors import (
    DomainError,
    LengthMismatchError,
    ModeMismatchError,
    NonFiniteError,
    UnknownMaterialError,
)
from .texture_repr import CODE_DIM, DESCRIPTOR_DIM, EmbeddingTable, TextureCode

MODES = ("embedding", "descriptor", "action_only")

ACTION_IN = 20
ACTION_HIDDEN = 64
PRED_HIDDEN = 256
CLS_HIDDEN = 128

# raw action units are divided by these before the first layer, keeping
# typical inputs O(1): forces run a few newtons, speeds a few hundred mm/s
FORCE_SCALE = 5.0
SPEED_SCALE = 300.0

EMBED_INIT_STD = 0.01


@dataclass
class TrainConfig:
    """Knobs shared by both training stages."""

    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 20
    seed: int = 0
    max_steps: int | None = None  # hard cap on optimizer steps, if set
    # "cosine" anneals the stage-2 rate to zero over the planned horizon;
    # the per-example loss has unit-norm gradients even near its optimum,
    # so a constant rate orbits the target at a floor proportional to it
    lr_schedule: str = "cosine"


@dataclass
class ModelParams:
    """All weights plus the bookkeeping needed to resolve texture codes."""

    mode: str
    material_ids: list[str]
    tensors: dict[str, np.ndarray]
    version: int = 1
    trained: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModeMismatchError(f"unknown model mode {self.mode!r}")
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NonFiniteError(f"tensor {name!r} contains non-finite values")

    def copy(self) -> "ModelParams":
        return ModelParams(
            mode=self.mode,
            material_ids=list(self.material_ids),
            tensors={k: v.copy() for k, v in self.tensors.items()},
            version=self.version,
            trained=self.trained,
        )

    def material_index(self, material_id: str) -> int:
        try:
            return self.material_ids.index(material_id)
        except ValueError:
            raise UnknownMaterialError(
                f"material {material_id!r} unknown to this model"
            ) from None

    def embedding_table(self) -> EmbeddingTable:
        if self.mode != "embedding":
            raise ModeMismatchError("model has no embedding table in this mode")
        return EmbeddingTable(self.material_ids, self.tensors["tex.table"].copy())

    def encode_descriptor(self, features: np.ndarray) -> np.ndarray:
        if self.mode != "descriptor":
            raise ModeMismatchError("descriptor encoding needs descriptor mode")
        code, _ = _texture_head_forward(self.tensors, np.atleast_2d(features))
        return code[0]


def _dense_init(rng, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    scale = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, scale, (fan_in, fan_out)), np.zeros(fan_out)


def init_model(mode: str, material_ids: list[str] | None = None,
               seed: int = 0) -> ModelParams:
    """Fresh weights for the requested mode; embedding mode needs materials."""
    if mode not in MODES:
        raise ModeMismatchError(f"unknown model mode {mode!r}")
    material_ids = list(material_ids or [])
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}
    t["act.W0"], t["act.b0"] = _dense_init(rng, ACTION_IN, ACTION_HIDDEN)
    t["act.W1"], t["act.b1"] = _dense_init(rng, ACTION_HIDDEN, ACTION_HIDDEN)
    if mode == "descriptor":
        t["tex.W0"], t["tex.b0"] = _dense_init(rng, DESCRIPTOR_DIM, CODE_DIM)
        t["tex.W1"], t["tex.b1"] = _dense_init(rng, CODE_DIM, CODE_DIM)
    elif mode == "embedding":
        if not material_ids:
            raise DomainError("embedding mode needs at least one material id")
        t["tex.table"] = rng.normal(0.0, EMBED_INIT_STD,
                                    (len(material_ids), CODE_DIM))
    pred_in = ACTION_HIDDEN if mode == "action_only" else ACTION_HIDDEN + CODE_DIM
    t["pred.W0"], t["pred.b0"] = _dense_init(rng, pred_in, PRED_HIDDEN)
    t["pred.W1"], t["pred.b1"] = _dense_init(rng, PRED_HIDDEN, PRED_HIDDEN)
    t["pred.W2"], t["pred.b2"] = _dense_init(rng, PRED_HIDDEN, N_BINS)
    return ModelParams(mode=mode, material_ids=material_ids, tensors=t)


# ---------------------------------------------------------------------------
# Forward passes (batched; caches returned for backprop)


def _normalize_actions(actions: np.ndarray) -> np.ndarray:
    x = np.array(actions, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != ACTION_IN:
        raise LengthMismatchError(f"action batch must be (B, {ACTION_IN})")
    x[:, :10] /= FORCE_SCALE
    x[:, 10:] /= SPEED_SCALE
    return x


def _texture_head_forward(t, desc):
    z0 = desc @ t["tex.W0"] + t["tex.b0"]
    h0 = np.maximum(z0, 0.0)
    code = h0 @ t["tex.W1"] + t["tex.b1"]
    return code, (desc, z0, h0)


def _forward_batch(t, mode, actions, codes):
    """actions (B,20) raw units; codes (B,256) or None; returns (out, cache)."""
    x = _normalize_actions(actions)
    za0 = x @ t["act.W0"] + t["act.b0"]
    ha0 = np.maximum(za0, 0.0)
    enc = ha0 @ t["act.W1"] + t["act.b1"]
    if mode == "action_only":
        z = enc
    else:
        if codes is None:
            raise DomainError("this model mode needs texture codes")
        z = np.concatenate([enc, codes], axis=1)
    zp0 = z @ t["pred.W0"] + t["pred.b0"]
    hp0 = np.maximum(zp0, 0.0)
    zp1 = hp0 @ t["pred.W1"] + t["pred.b1"]
    hp1 = np.maximum(zp1, 0.0)
    zp2 = hp1 @ t["pred.W2"] + t["pred.b2"]
    out = np.maximum(zp2, 0.0)
    cache = (x, za0, ha0, z, zp0, hp0, zp1, hp1, zp2)
    return out, cache


def forward(action: ActionWindow, code: TextureCode | None,
            model: ModelParams) -> SpectralFrame:
    """Predict the next-frame magnitude spectrum for one action window."""
    if model.mode == "action_only":
        if code is not None:
            raise ModeMismatchError("action_only models take no texture code")
        codes = None
    else:
        if code is None:
            raise DomainError("this model mode needs a texture code")
        codes = code.code[None, :]
    out, _ = _forward_batch(model.tensors, model.mode,
                            action.as_vector()[None, :], codes)
    return SpectralFrame(out[0])


# ---------------------------------------------------------------------------
# Loss


def loss(pred: SpectralFrame, target: SpectralFrame) -> float:
    """Euclidean distance between two magnitude spectra."""
    return float(np.linalg.norm(pred.mags - target.mags))


def _batch_loss_and_grad(out, targets):
    """Mean per-example Euclidean loss and its gradient w.r.t. ``out``."""
    diff = out - targets
    norms = np.linalg.norm(diff, axis=1)
    mean_loss = float(norms.mean())
    grad = np.zeros_like(diff)
    nz = norms > 0.0  # zero-distance examples contribute zero gradient
    grad[nz] = diff[nz] / (norms[nz, None] * len(norms))
    return mean_loss, grad


# ---------------------------------------------------------------------------
# Backward pass


@dataclass
class Batch:
    """Resolved training batch: raw actions, targets, and the code source."""

    actions: np.ndarray            # (B, 20) raw units
    targets: np.ndarray            # (B, 101)
    material_idx: np.ndarray | None = None  # (B,) rows of the embedding table
    codes: np.ndarray | None = None         # (B, 256) precomputed codes

    def __post_init__(self):
        if self.actions.shape[0] != self.targets.shape[0]:
            raise LengthMismatchError("batch actions/targets counts differ")
        if self.targets.ndim != 2 or self.targets.shape[1] != N_BINS:
            raise LengthMismatchError(f"targets must be (B, {N_BINS})")


def backward(model: ModelParams, batch: Batch,
             frozen: frozenset[str] = frozenset()):
    """Mean loss and exact gradients for every trainable tensor.

    Tensors whose name starts with a ``frozen`` prefix come back as exact
    zeros (and are skipped by the optimizer).  In embedding mode the table
    gradient is dense-shaped with nonzero rows only where the batch touched
    them.
    """
    t = model.tensors
    if model.mode == "embedding":
        if batch.material_idx is None:
            raise DomainError("embedding mode batches need material indices")
        codes = t["tex.table"][batch.material_idx]
    elif model.mode == "descriptor":
        if batch.codes is None:
            raise DomainError("descriptor mode batches need resolved codes")
        codes = batch.codes
    else:
        codes = None

    out, cache = _forward_batch(t, model.mode, batch.actions, codes)
    x, za0, ha0, z, zp0, hp0, zp1, hp1, zp2 = cache
    mean_loss, dout = _batch_loss_and_grad(out, batch.targets)

    g: dict[str, np.ndarray] = {}
    dzp2 = dout * (zp2 > 0.0)
    g["pred.W2"] = hp1.T @ dzp2
    g["pred.b2"] = dzp2.sum(axis=0)
    dhp1 = dzp2 @ t["pred.W2"].T
    dzp1 = dhp1 * (zp1 > 0.0)
    g["pred.W1"] = hp0.T @ dzp1
    g["pred.b1"] = dzp1.sum(axis=0)
    dhp0 = dzp1 @ t["pred.W1"].T
    dzp0 = dhp0 * (zp0 > 0.0)
    g["pred.W0"] = z.T @ dzp0
    g["pred.b0"] = dzp0.sum(axis=0)
    dz = dzp0 @ t["pred.W0"].T

    denc = dz[:, :ACTION_HIDDEN]
    g["act.W1"] = ha0.T @ denc
    g["act.b1"] = denc.sum(axis=0)
    dha0 = denc @ t["act.W1"].T
    dza0 = dha0 * (za0 > 0.0)
    g["act.W0"] = x.T @ dza0
    g["act.b0"] = dza0.sum(axis=0)

    if model.mode == "embedding":
        dcodes = dz[:, ACTION_HIDDEN:]
        table_grad = np.zeros_like(t["tex.table"])
        np.add.at(table_grad, batch.material_idx, dcodes)
        g["tex.table"] = table_grad

    for name in list(g):
        if any(name.startswith(p) for p in frozen):
            g[name] = np.zeros_like(g[name])
    return mean_loss, g


# ---------------------------------------------------------------------------
# Classifier head (stage 1)


def init_classifier(n_classes: int, seed: int = 0) -> dict[str, np.ndarray]:
    if n_classes < 2:
        raise DomainError("classification needs at least 2 classes")
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}
    t["cls.W0"], t["cls.b0"] = _dense_init(rng, CODE_DIM, CODE_DIM)
    t["cls.W1"], t["cls.b1"] = _dense_init(rng, CODE_DIM, CLS_HIDDEN)
    t["cls.W2"], t["cls.b2"] = _dense_init(rng, CLS_HIDDEN, n_classes)
    return t


def _classifier_forward(t, descriptors):
    code, tex_cache = _texture_head_forward(t, descriptors)
    zc0 = code @ t["cls.W0"] + t["cls.b0"]
    hc0 = np.maximum(zc0, 0.0)
    zc1 = hc0 @ t["cls.W1"] + t["cls.b1"]
    hc1 = np.maximum(zc1, 0.0)
    logits = hc1 @ t["cls.W2"] + t["cls.b2"]
    return logits, (tex_cache, code, zc0, hc0, zc1, hc1)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def classifier_backward(tensors, descriptors, labels):
    """Cross-entropy loss and gradients through classifier + texture head."""
    logits, cache = _classifier_forward(tensors, descriptors)
    tex_cache, code, zc0, hc0, zc1, hc1 = cache
    desc, z0, h0 = tex_cache
    n = descriptors.shape[0]
    probs = _softmax(logits)
    picked = probs[np.arange(n), labels]
    mean_loss = float(-np.log(np.maximum(picked, 1e-300)).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    g: dict[str, np.ndarray] = {}
    g["cls.W2"] = hc1.T @ dlogits
    g["cls.b2"] = dlogits.sum(axis=0)
    dhc1 = dlogits @ tensors["cls.W2"].T
    dzc1 = dhc1 * (zc1 > 0.0)
    g["cls.W1"] = hc0.T @ dzc1
    g["cls.b1"] = dzc1.sum(axis=0)
    dhc0 = dzc1 @ tensors["cls.W1"].T
    dzc0 = dhc0 * (zc0 > 0.0)
    g["cls.W0"] = code.T @ dzc0
    g["cls.b0"] = dzc0.sum(axis=0)
    dcode = dzc0 @ tensors["cls.W0"].T
    g["tex.W1"] = h0.T @ dcode
    g["tex.b1"] = dcode.sum(axis=0)
    dh0 = dcode @ tensors["tex.W1"].T
    dz0 = dh0 * (z0 > 0.0)
    g["tex.W0"] = desc.T @ dz0
    g["tex.b0"] = dz0.sum(axis=0)
    return mean_loss, g, logits


# ---------------------------------------------------------------------------
# Adam


class Adam:
    """Plain Adam over a named tensor dict; frozen names are never touched."""

    def __init__(self, names, shapes, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros(s) for n, s in zip(names, shapes)}
        self.v = {n: np.zeros(s) for n, s in zip(names, shapes)}

    def step(self, tensors, grads):
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name in self.m:
            gr = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * gr
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * gr * gr
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            tensors[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Stage 1: classification warm-up of the texture head


def train_stage1(model: ModelParams, descriptors: np.ndarray, labels,
                 config: TrainConfig):
    """Train texture head + classifier on material labels (cross entropy).

    ``labels`` may be ints or strings; classes are their sorted unique
    values.  Returns ``(model, info)`` where info carries the loss history,
    the class list, and the final training accuracy.  The classifier tensors
    stay inside the model (prefixed ``cls.``) so stage 2 can freeze around
    them; they are ignored by the predictor path.
    """
    if model.mode != "descriptor":
        raise ModeMismatchError("stage 1 trains the descriptor-mode head")
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2 or descriptors.shape[1] != DESCRIPTOR_DIM:
        raise LengthMismatchError(f"descriptors must be (N, {DESCRIPTOR_DIM})")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DomainError("stage 1 needs at least 2 classes")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[l] for l in labels], dtype=np.int64)

    model = model.copy()
    model.tensors.update(init_classifier(len(classes), seed=config.seed + 1))
    trainable = [n for n in model.tensors if n.startswith(("tex.", "cls."))]
    opt = Adam(trainable, [model.tensors[n].shape for n in trainable],
               learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    losses = []
    steps = 0
    done = False
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            l, g, _ = classifier_backward(model.tensors, descriptors[idx], y[idx])
            opt.step(model.tensors, {n: g[n] for n in trainable})
            losses.append(l)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                done = True
                break
        if done:
            break

    logits, _ = _classifier_forward(model.tensors, descriptors)
    accuracy = float((logits.argmax(axis=1) == y).mean())
    info = {"losses": losses, "classes": classes, "accuracy": accuracy}
    model.trained = True
    return model, info


def classify(model: ModelParams, descriptors: np.ndarray) -> np.ndarray:
    """Class indices for descriptors under the stage-1 classifier."""
    if "cls.W2" not in model.tensors:
        raise ModeMismatchError("model has no trained classifier head")
    logits, _ = _classifier_forward(model.tensors, np.atleast_2d(descriptors))
    return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# Stage 2: spectral regression


def _resolve_batch(model: ModelParams, examples, codes_source):
    actions = np.stack([ex.action.as_vector() for ex in examples])
    targets = np.stack([ex.target.mags for ex in examples])
    if model.mode == "embedding":
        idx = np.array([model.material_index(ex.material_id) for ex in examples])
        return Batch(actions=actions, targets=targets, material_idx=idx)
    if model.mode == "descriptor":
        if codes_source is None:
            raise DomainError("descriptor mode needs a material -> code mapping")
        codes = np.stack([codes_source[ex.material_id] for ex in examples])
        return Batch(actions=actions, targets=targets, codes=codes)
    return Batch(actions=actions, targets=targets)


def evaluate_loss(model: ModelParams, examples, codes_source=None) -> float:
    """Mean per-example Euclidean loss without touching any weights."""
    batch = _resolve_batch(model, examples, codes_source)
    if model.mode == "embedding":
        codes = model.tensors["tex.table"][batch.material_idx]
    else:
        codes = batch.codes
    out, _ = _forward_batch(model.tensors, model.mode, batch.actions, codes)
    l, _ = _batch_loss_and_grad(out, batch.targets)
    return l


def train_stage2(model: ModelParams, examples, config: TrainConfig,
                 val_examples=None, codes_source=None):
    """Adam regression on the mean Euclidean spectral loss.

    Runs up to ``config.epochs`` passes (or ``config.max_steps`` optimizer
    steps), scoring the validation set after every epoch and keeping the
    best-validation weights; stops early after ``config.patience`` epochs
    without improvement.  In descriptor mode the texture head is frozen and
    ``codes_source`` must map material id -> 256-vector.  Returns
    ``(best_model, history)``.
    """
    if not examples:
        raise DomainError("stage 2 needs a non-empty training set")
    if config.lr_schedule not in ("constant", "cosine"):
        raise DomainError(f"unknown lr schedule {config.lr_schedule!r}")
    model = model.copy()
    frozen = frozenset({"tex.", "cls."}) if model.mode == "descriptor" \
        else frozenset({"cls."})
    trainable = [n for n in model.tensors
                 if not any(n.startswith(p) for p in frozen)]
    opt = Adam(trainable, [model.tensors[n].shape for n in trainable],
               learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    full = _resolve_batch(model, examples, codes_source)
    n = full.actions.shape[0]
    scored = val_examples if val_examples else examples

    steps_per_epoch = -(-n // config.batch_size)
    horizon = config.max_steps if config.max_steps is not None \
        else config.epochs * steps_per_epoch

    history = {"train": [], "val": []}
    best_val = np.inf
    best_tensors = {k: v.copy() for k, v in model.tensors.items()}
    stall = 0
    steps = 0
    done = False
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = Batch(
                actions=full.actions[idx],
                targets=full.targets[idx],
                material_idx=None if full.material_idx is None
                else full.material_idx[idx],
                codes=None if full.codes is None else full.codes[idx],
            )
            if config.lr_schedule == "cosine":
                opt.lr = config.learning_rate * 0.5 * (
                    1.0 + np.cos(np.pi * min(steps, horizon) / max(horizon, 1))
                )
            l, g = backward(model, batch, frozen=frozen)
            opt.step(model.tensors, {name: g[name] for name in trainable})
            epoch_losses.append(l)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                done = True
                break
        history["train"].append(float(np.mean(epoch_losses)))
        val_loss = evaluate_loss(model, scored, codes_source)
        history["val"].append(val_loss)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_tensors = {k: v.copy() for k, v in model.tensors.items()}
            stall = 0
        else:
            stall += 1
        if done or stall > config.patience:
            break
    model.tensors = best_tensors
    model.trained = True
    return model, history


# ---------------------------------------------------------------------------
# Persistence


def save_model(model: ModelParams, path) -> None:
    meta = {
        "mode": model.mode,
        "material_ids": model.material_ids,
        "model_version": model.version,
        "trained": model.trained,
    }
    write_container(path, "model", meta, model.tensors)


def load_model(path, mode: str | None = None) -> ModelParams:
    meta, arrays = read_container(path, "model")
    loaded = ModelParams(
        mode=meta["mode"],
        material_ids=list(meta["material_ids"]),
        tensors=arrays,
        version=int(meta.get("model_version", 1)),
        trained=bool(meta.get("trained", False)),
    )
    if mode is not None and loaded.mode != mode:
        raise ModeMismatchError(
            f"model on disk is {loaded.mode!r}, caller wants {mode!r}"
        )
    return loaded
