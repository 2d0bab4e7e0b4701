"""From-scratch 1D CNN decoder for SSVEP epochs.

Pipeline: conv1d (valid, stride 4) -> batch norm -> ReLU -> maxpool(2) ->
inverted dropout -> dense -> softmax. All tensors are float64 numpy arrays;
backpropagation is hand-derived and checked against finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, ModelError, ParameterError, TrainingError
from .signal import ALL_CLASSES, EPOCH_SAMPLES, N_CHANNELS, EegEpoch, SsvepDataset, StimulusClass

N_CLASSES = 3
BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = momentum*running + (1-momentum)*batch
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_NAMES = ("conv_weights", "conv_bias", "bn_gamma", "bn_beta",
               "dense_weights", "dense_bias")
STATE_NAMES = ("bn_running_mean", "bn_running_var")


@dataclass(frozen=True)
class ScuHyperparams:
    conv_kernel: int = 10
    conv_stride: int = 4
    n_filters: int = 16
    pool_size: int = 2
    dropout_rate: float = 0.5
    l2_scale: float = 0.004
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 50
    rng_seed: int = 0

    def validate(self) -> None:
        if self.conv_kernel < 1 or self.conv_stride < 1 or self.pool_size < 1:
            raise ParameterError("kernel, stride and pool size must be >= 1")
        if self.n_filters < 1:
            raise ParameterError("need at least one filter")
        if not (0 <= self.dropout_rate < 1):
            raise ParameterError("dropout rate must be in [0,1)")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch size and epochs must be >= 1")

    @property
    def conv_out_len(self) -> int:
        return (EPOCH_SAMPLES - self.conv_kernel) // self.conv_stride + 1

    @property
    def pool_out_len(self) -> int:
        return self.conv_out_len // self.pool_size

    @property
    def flattened_len(self) -> int:
        return self.n_filters * self.pool_out_len


@dataclass
class ScuModel:
    conv_weights: np.ndarray  # (F, 9, K)
    conv_bias: np.ndarray     # (F,)
    bn_gamma: np.ndarray      # (F,)
    bn_beta: np.ndarray       # (F,)
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    dense_weights: np.ndarray  # (3, F * pooled)
    dense_bias: np.ndarray     # (3,)
    hyperparams: ScuHyperparams
    trained: bool = False

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def init_model(hp: ScuHyperparams) -> ScuModel:
    hp.validate()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=hp.rng_seed,
                                                       spawn_key=(0xC0,)))
    fan_in = N_CHANNELS * hp.conv_kernel
    conv_w = rng.standard_normal((hp.n_filters, N_CHANNELS, hp.conv_kernel))
    conv_w *= np.sqrt(2.0 / fan_in)
    dense_w = rng.standard_normal((N_CLASSES, hp.flattened_len))
    dense_w *= np.sqrt(2.0 / hp.flattened_len)
    return ScuModel(
        conv_weights=conv_w,
        conv_bias=np.zeros(hp.n_filters),
        bn_gamma=np.ones(hp.n_filters),
        bn_beta=np.zeros(hp.n_filters),
        bn_running_mean=np.zeros(hp.n_filters),
        bn_running_var=np.ones(hp.n_filters),
        dense_weights=dense_w,
        dense_bias=np.zeros(N_CLASSES),
        hyperparams=hp,
    )


def _conv_windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(B, C, T) -> (B, L, C*K) contiguous matrix of conv input windows."""
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)
    windows = windows[:, :, ::stride, :]  # (B, C, L, K)
    b, c, length, k = windows.shape
    return np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(b, length, c * k)


def _forward(model: ScuModel, x: np.ndarray, training: bool,
             dropout_rng: np.random.Generator | None = None) -> tuple:
    """Forward pass over a batch (B, 9, 1500); returns (probs, cache).

    training=True uses batch statistics for batch norm and applies inverted
    dropout when a generator is supplied; training=False uses running stats
    and no dropout (also the mode used for gradient checking).
    """
    hp = model.hyperparams
    if x.ndim != 3 or x.shape[1] != N_CHANNELS or x.shape[2] != EPOCH_SAMPLES:
        raise ModelError(f"expected batch of {N_CHANNELS}x{EPOCH_SAMPLES} epochs, got {x.shape}")
    windows = _conv_windows(x, hp.conv_kernel, hp.conv_stride)
    w_mat = model.conv_weights.reshape(hp.n_filters, -1)
    conv = (windows @ w_mat.T).transpose(0, 2, 1)  # (B, F, L)
    conv = np.ascontiguousarray(conv)
    conv += model.conv_bias[None, :, None]

    if training:
        mean = conv.mean(axis=(0, 2))
        var = conv.var(axis=(0, 2))
    else:
        mean = model.bn_running_mean
        var = model.bn_running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (conv - mean[None, :, None]) * inv_std[None, :, None]
    bn = model.bn_gamma[None, :, None] * xhat + model.bn_beta[None, :, None]

    relu = np.maximum(bn, 0.0)

    usable = hp.pool_out_len * hp.pool_size
    pool_in = relu[:, :, :usable].reshape(x.shape[0], hp.n_filters,
                                          hp.pool_out_len, hp.pool_size)
    pool_arg = pool_in.argmax(axis=3)
    pooled = pool_in.max(axis=3)

    if training and dropout_rng is not None and hp.dropout_rate > 0:
        keep = 1.0 - hp.dropout_rate
        mask = (dropout_rng.random(pooled.shape) < keep) / keep
        dropped = pooled * mask
    else:
        mask = None
        dropped = pooled

    flat = dropped.reshape(x.shape[0], -1)
    logits = flat @ model.dense_weights.T + model.dense_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(shifted)
    probs = expl / expl.sum(axis=1, keepdims=True)

    cache = {
        "windows": windows, "conv": conv, "mean": mean, "var": var,
        "inv_std": inv_std, "xhat": xhat, "bn": bn, "pool_in": pool_in,
        "pool_arg": pool_arg, "mask": mask, "flat": flat, "probs": probs,
        "training": training, "batch": x.shape[0], "usable": usable,
    }
    return probs, cache


def forward(model: ScuModel, epoch: EegEpoch, inference: bool = True) -> np.ndarray:
    """Class probabilities for one epoch."""
    probs, _ = _forward(model, epoch.samples[None], training=not inference)
    return probs[0]


def _labels_to_indices(batch) -> tuple:
    xs = np.stack([ep.samples for ep, _ in batch])
    ys = np.array([cls.class_index for _, cls in batch], dtype=np.int64)
    return xs, ys


def loss_and_gradients(model: ScuModel, batch, training: bool = False,
                       dropout_rng: np.random.Generator | None = None) -> tuple:
    """Mean cross-entropy + L2 penalty and gradients for every parameter.

    The L2 term is l2_scale * sum of squared conv and dense weights (biases
    and batch-norm parameters excluded). With training=False batch norm uses
    the model's running statistics ("frozen stats"), the mode the finite
    difference check runs in.
    """
    if not batch:
        raise ParameterError("batch must be non-empty")
    xs, ys = _labels_to_indices(batch)
    probs, cache = _forward(model, xs, training=training, dropout_rng=dropout_rng)
    return _loss_and_grads_from_cache(model, cache, ys)


def batch_loss(model: ScuModel, batch, training: bool = False) -> float:
    """Loss only (no gradients); the cheap path finite differencing needs."""
    if not batch:
        raise ParameterError("batch must be non-empty")
    xs, ys = _labels_to_indices(batch)
    probs, _ = _forward(model, xs, training=training)
    ce = -np.mean(np.log(probs[np.arange(len(ys)), ys] + 1e-300))
    hp = model.hyperparams
    l2 = hp.l2_scale * (np.sum(model.conv_weights**2) + np.sum(model.dense_weights**2))
    return float(ce + l2)


def _loss_and_grads_from_cache(model: ScuModel, cache: dict, ys: np.ndarray) -> tuple:
    hp = model.hyperparams
    b = cache["batch"]
    probs = cache["probs"]
    ce = -np.mean(np.log(probs[np.arange(b), ys] + 1e-300))
    l2 = hp.l2_scale * (np.sum(model.conv_weights**2) + np.sum(model.dense_weights**2))
    loss = ce + l2

    dlogits = probs.copy()
    dlogits[np.arange(b), ys] -= 1.0
    dlogits /= b

    d_dense_w = dlogits.T @ cache["flat"] + 2.0 * hp.l2_scale * model.dense_weights
    d_dense_b = dlogits.sum(axis=0)
    dflat = dlogits @ model.dense_weights
    ddropped = dflat.reshape(b, hp.n_filters, hp.pool_out_len)

    if cache["mask"] is not None:
        dpooled = ddropped * cache["mask"]
    else:
        dpooled = ddropped

    # unpool: route gradient to the argmax slot of each pool window
    dpool_in = np.zeros_like(cache["pool_in"])
    bi, fi, li = np.indices(dpooled.shape)
    dpool_in[bi, fi, li, cache["pool_arg"]] = dpooled
    drelu = np.zeros_like(cache["bn"])
    drelu[:, :, :cache["usable"]] = dpool_in.reshape(b, hp.n_filters, cache["usable"])

    dbn = drelu * (cache["bn"] > 0)
    d_gamma = np.sum(dbn * cache["xhat"], axis=(0, 2))
    d_beta = np.sum(dbn, axis=(0, 2))
    dxhat = dbn * model.bn_gamma[None, :, None]

    inv_std = cache["inv_std"]
    if cache["training"]:
        # batch statistics depend on the conv output; full batch-norm backprop
        m = b * cache["conv"].shape[2]
        sum_dxhat = dxhat.sum(axis=(0, 2))
        sum_dxhat_xhat = np.sum(dxhat * cache["xhat"], axis=(0, 2))
        dconv = (inv_std[None, :, None] / m) * (
            m * dxhat
            - sum_dxhat[None, :, None]
            - cache["xhat"] * sum_dxhat_xhat[None, :, None]
        )
    else:
        dconv = dxhat * inv_std[None, :, None]

    ck = N_CHANNELS * hp.conv_kernel
    dconv_mat = dconv.transpose(0, 2, 1).reshape(-1, hp.n_filters)  # (B*L, F)
    win_mat = cache["windows"].reshape(-1, ck)  # (B*L, C*K)
    d_conv_w = (dconv_mat.T @ win_mat).reshape(hp.n_filters, N_CHANNELS, hp.conv_kernel)
    d_conv_w += 2.0 * hp.l2_scale * model.conv_weights
    d_conv_b = dconv.sum(axis=(0, 2))

    grads = {
        "conv_weights": d_conv_w, "conv_bias": d_conv_b,
        "bn_gamma": d_gamma, "bn_beta": d_beta,
        "dense_weights": d_dense_w, "dense_bias": d_dense_b,
    }
    return loss, grads


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    train_accuracies: list = field(default_factory=list)
    val_accuracies: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    model: ScuModel | None = None


def _dataset_arrays(dataset: SsvepDataset) -> tuple:
    xs, ys = [], []
    for ep in dataset.epochs:
        if ep.label is None:
            raise TrainingError("training dataset contains unlabeled epochs")
        xs.append(ep.samples)
        ys.append(ep.label.class_index)
    return np.stack(xs), np.array(ys, dtype=np.int64)


def _batch_accuracy(model: ScuModel, xs: np.ndarray, ys: np.ndarray) -> float:
    probs, _ = _forward(model, xs, training=False)
    return float(np.mean(probs.argmax(axis=1) == ys))


def fit(dataset: SsvepDataset, hp: ScuHyperparams,
        val_dataset: SsvepDataset | None = None) -> TrainReport:
    """Train a fresh model with Adam over shuffled mini-batches.

    Deterministic under hp.rng_seed: weight init, shuffling and dropout masks
    all come from seeded generators.
    """
    hp.validate()
    xs, ys = _dataset_arrays(dataset)
    counts = np.bincount(ys, minlength=N_CLASSES)
    if np.count_nonzero(counts) < 2:
        raise TrainingError("dataset holds a single class; nothing to discriminate")
    if counts[counts > 0].min() < 2:
        raise TrainingError("need at least 2 samples per present class")

    model = init_model(hp)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=hp.rng_seed,
                                                       spawn_key=(0xF1,)))
    adam_m = {k: np.zeros_like(v) for k, v in model.params().items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params().items()}
    step = 0
    report = TrainReport()
    val_xy = _dataset_arrays(val_dataset) if val_dataset is not None else None

    for _epoch in range(hp.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(ys))
        losses = []
        n_correct = 0
        for start in range(0, len(order), hp.batch_size):
            idx = order[start:start + hp.batch_size]
            bx, by = xs[idx], ys[idx]
            probs, cache = _forward(model, bx, training=True, dropout_rng=rng)
            loss, grads = _loss_and_grads_from_cache(model, cache, by)
            losses.append(loss)
            n_correct += int(np.sum(probs.argmax(axis=1) == by))
            # running-stat update with momentum, outside the pure gradient path
            model.bn_running_mean = (BN_MOMENTUM * model.bn_running_mean
                                     + (1 - BN_MOMENTUM) * cache["mean"])
            model.bn_running_var = (BN_MOMENTUM * model.bn_running_var
                                    + (1 - BN_MOMENTUM) * cache["var"])
            step += 1
            for name, g in grads.items():
                adam_m[name] = ADAM_BETA1 * adam_m[name] + (1 - ADAM_BETA1) * g
                adam_v[name] = ADAM_BETA2 * adam_v[name] + (1 - ADAM_BETA2) * g * g
                m_hat = adam_m[name] / (1 - ADAM_BETA1**step)
                v_hat = adam_v[name] / (1 - ADAM_BETA2**step)
                param = getattr(model, name)
                param -= hp.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        report.losses.append(float(np.mean(losses)))
        report.train_accuracies.append(n_correct / len(ys))
        if val_xy is not None:
            report.val_accuracies.append(_batch_accuracy(model, *val_xy))
        report.epoch_seconds.append(time.perf_counter() - t0)

    model.trained = True
    report.model = model
    return report


@dataclass
class Prediction:
    stimulus: StimulusClass
    probabilities: np.ndarray
    latency_s: float


def predict(model: ScuModel, epoch: EegEpoch) -> Prediction:
    """Inference-mode argmax decode; ties break to the lowest class index."""
    if not model.trained:
        raise ModelError("model has not been trained; fit or load one first")
    t0 = time.perf_counter()
    probs = forward(model, epoch, inference=True)
    latency = time.perf_counter() - t0
    return Prediction(stimulus=StimulusClass.from_index(int(np.argmax(probs))),
                      probabilities=probs, latency_s=latency)


@dataclass
class CvReport:
    fold_accuracies: list
    mean: float
    std: float


def cross_validate(dataset: SsvepDataset, hp: ScuHyperparams, k: int = 10) -> CvReport:
    """Stratified k-fold cross-validation with a fresh model per fold."""
    hp.validate()
    xs, ys = _dataset_arrays(dataset)
    if k < 2:
        raise ParameterError(f"k must be >= 2, got {k}")
    if k > len(ys):
        raise ParameterError(f"k={k} exceeds dataset size {len(ys)}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=hp.rng_seed,
                                                       spawn_key=(0xCF,)))
    folds = [[] for _ in range(k)]
    for cls_idx in range(N_CLASSES):
        members = np.flatnonzero(ys == cls_idx)
        members = members[rng.permutation(len(members))]
        for i, sample in enumerate(members):
            folds[i % k].append(int(sample))

    if any(not fold for fold in folds):
        raise ParameterError(
            f"k={k} leaves empty folds for {len(ys)} samples; reduce k")
    accuracies = []
    for fold_idx, held_out in enumerate(folds):
        train_idx = np.array(sorted(set(range(len(ys))) - set(held_out)))
        test_idx = np.array(sorted(held_out))
        train_ds = SsvepDataset(epochs=[dataset.epochs[i] for i in train_idx])
        fold_hp = replace(hp, rng_seed=hp.rng_seed + 1000 + fold_idx)
        model = fit(train_ds, fold_hp).model
        accuracies.append(_batch_accuracy(model, xs[test_idx], ys[test_idx]))
    return CvReport(fold_accuracies=accuracies,
                    mean=float(np.mean(accuracies)),
                    std=float(np.std(accuracies)))


def save_model(model: ScuModel, path) -> None:
    """Versioned text format: header, hyperparams, one line per tensor."""
    hp = model.hyperparams
    with open(path, "w") as fh:
        fh.write("SCU v1\n")
        for key in ("conv_kernel", "conv_stride", "n_filters", "pool_size",
                    "dropout_rate", "l2_scale", "learning_rate", "batch_size",
                    "epochs", "rng_seed"):
            fh.write(f"{key}={getattr(hp, key)!r}\n")
        fh.write(f"trained={model.trained}\n")
        for name in PARAM_NAMES + STATE_NAMES:
            arr = getattr(model, name)
            dims = " ".join(str(d) for d in arr.shape)
            # 17 significant digits round-trips IEEE doubles exactly
            values = " ".join(f"{v:.17g}" for v in arr.ravel())
            fh.write(f"tensor {name} {arr.ndim} {dims} {values}\n")


def load_model(path) -> ScuModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "SCU v1":
        raise FormatError(f"unsupported model header: {lines[0] if lines else '<empty>'}")
    hp_kwargs = {}
    trained = False
    tensors = {}
    for line in lines[1:]:
        if line.startswith("tensor "):
            tokens = line.split()
            name = tokens[1]
            ndim = int(tokens[2])
            dims = tuple(int(d) for d in tokens[3:3 + ndim])
            values = np.array([float(v) for v in tokens[3 + ndim:]], dtype=np.float64)
            if values.size != int(np.prod(dims)):
                raise FormatError(f"tensor {name}: {values.size} values for shape {dims}")
            tensors[name] = values.reshape(dims)
        elif line.startswith("trained="):
            trained = line.split("=", 1)[1] == "True"
        elif "=" in line:
            key, raw = line.split("=", 1)
            if key not in ScuHyperparams.__dataclass_fields__:
                raise FormatError(f"unknown hyperparameter {key!r}")
            field_type = type(getattr(ScuHyperparams(), key))
            try:
                hp_kwargs[key] = field_type(raw)
            except ValueError as exc:
                raise FormatError(f"bad value for {key}: {raw!r}") from exc
        else:
            raise FormatError(f"unparseable line: {line!r}")
    hp = ScuHyperparams(**hp_kwargs)
    missing = [n for n in PARAM_NAMES + STATE_NAMES if n not in tensors]
    if missing:
        raise FormatError(f"model file missing tensors: {', '.join(missing)}")
    expected = {
        "conv_weights": (hp.n_filters, N_CHANNELS, hp.conv_kernel),
        "conv_bias": (hp.n_filters,), "bn_gamma": (hp.n_filters,),
        "bn_beta": (hp.n_filters,), "bn_running_mean": (hp.n_filters,),
        "bn_running_var": (hp.n_filters,),
        "dense_weights": (N_CLASSES, hp.flattened_len), "dense_bias": (N_CLASSES,),
    }
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise FormatError(f"tensor {name}: shape {tensors[name].shape}, expected {shape}")
    if np.any(tensors["bn_running_var"] <= 0):
        raise FormatError("bn_running_var must be strictly positive")
    return ScuModel(hyperparams=hp, trained=trained, **tensors)
