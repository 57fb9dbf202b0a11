"""Training and evaluation loops, experiment configuration and persistence."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import streams
from .accountant import training_epsilon
from .baseline import MLP_2D_SIZES, MLP_MNIST_SIZES, MlpModel, mlp_forward_batch, mlp_grads, mlp_init
from .circuits import (
    BlockSpec,
    VqcModel,
    build_2d_model,
    build_mnist_model,
    cross_entropy,
    forward_batch,
    param_shift_grads,
    predict_proba,
)
from .data import (
    GENERATORS,
    Dataset,
    SplitSpec,
    filter_binary_and_pad,
    find_mnist_files,
    load_digits01,
    load_mnist_idx,
    split,
)
from .dp_optim import OptimizerState, PrivacyConfig, dp_minibatch_update

log = logging.getLogger(__name__)

TASKS_2D = ("blobs", "moons", "circles")
TASKS = TASKS_2D + ("mnist01", "digits01")
MODELS = ("vqc", "mlp")
MODEL_FORMAT = "dpqml-model"
MODEL_VERSION = 1
DIGITS_QUBITS = 6
DIGITS_LAYERS = (8, 4)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = "blobs"
    model: str = "vqc"
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.05
    rmsprop_alpha: float = 0.9
    rmsprop_eps: float = 1e-8
    momentum: float = 0.5
    privacy: Optional[PrivacyConfig] = None
    seed: int = 0
    n_samples: int = 200
    mnist_dir: Optional[str] = None
    train_subset: Optional[int] = 1000
    test_subset: Optional[int] = 500
    full_mnist: bool = False

    def __post_init__(self):
        if isinstance(self.privacy, dict):
            object.__setattr__(self, "privacy", PrivacyConfig(**self.privacy))
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.privacy is not None and self.batch_size % self.privacy.microbatch_size:
            raise ConfigError("microbatch size must divide the batch size")
        if self.task == "mnist01" and not self.mnist_dir:
            raise ConfigError("task mnist01 needs mnist_dir (directory with the IDX files)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    epochs: list[int]
    train_loss: list[float]
    train_acc: list[float]
    test_loss: list[float]
    test_acc: list[float]
    init_train_loss: float
    init_test_acc: float
    final_test_acc: float
    epsilon: Optional[float]
    best_order: Optional[float]
    n_train: int
    n_test: int
    seed: int
    config: dict
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not include_timing:
            d.pop("seconds")
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=False) + "\n"

    def metrics_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,test_loss,test_acc"]
        for row in zip(self.epochs, self.train_loss, self.train_acc, self.test_loss, self.test_acc):
            lines.append(",".join(repr(v) for v in row))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model-agnostic helpers
# ---------------------------------------------------------------------------

Model = VqcModel | MlpModel


def predict(model: Model, X) -> np.ndarray:
    """Class probabilities ``(n, 2)``."""
    if isinstance(model, VqcModel):
        return predict_proba(forward_batch(model, X))
    return mlp_forward_batch(model, X)


def per_example_grads(model: Model, params, X, y) -> np.ndarray:
    m = model.with_params(params)
    if isinstance(m, VqcModel):
        return param_shift_grads(m, X, y)
    return mlp_grads(m, X, y)


def evaluate(forward: Callable[[np.ndarray], np.ndarray], dataset: Dataset) -> float:
    """Fraction of examples whose highest-scoring class matches the label."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty set")
    scores = np.asarray(forward(dataset.X))
    return float(np.mean(np.argmax(scores, axis=1) == dataset.y))


def mean_loss(model: Model, dataset: Dataset) -> float:
    return float(np.mean(cross_entropy(predict(model, dataset.X), dataset.y)))


def boundary_grid(forward: Callable[[np.ndarray], np.ndarray], bounds, resolution: int) -> np.ndarray:
    """Rows ``(x1, x2, p_class1)`` over an inclusive ``resolution x resolution`` grid."""
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("bounds must satisfy xmin < xmax and ymin < ymax")
    g1, g2 = np.meshgrid(np.linspace(xmin, xmax, resolution), np.linspace(ymin, ymax, resolution), indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    probs = np.asarray(forward(pts))
    return np.column_stack([pts, probs[:, 1]])


# ---------------------------------------------------------------------------
# data and model construction
# ---------------------------------------------------------------------------

def _sample(ds: Dataset, k: Optional[int], rng: np.random.Generator) -> Dataset:
    if k is None or k >= len(ds):
        return ds
    return ds.subset(np.sort(rng.choice(len(ds), size=k, replace=False)))


def build_data(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """(train, test) for the configured task."""
    if cfg.task in TASKS_2D:
        ds = GENERATORS[cfg.task](cfg.n_samples, streams.stream(cfg.seed, streams.DATA))
        train, _, test = split(ds, SplitSpec((0.6, 0.2, 0.2)), rng=streams.stream(cfg.seed, streams.SPLIT))
        return train, test
    if cfg.task == "digits01":
        train, _, test = split(load_digits01(), SplitSpec((0.6, 0.0, 0.4)), rng=streams.stream(cfg.seed, streams.SPLIT))
        return train, test
    files = find_mnist_files(cfg.mnist_dir)
    train = filter_binary_and_pad(load_mnist_idx(files["train_images"], files["train_labels"]))
    test = filter_binary_and_pad(load_mnist_idx(files["test_images"], files["test_labels"]))
    if not cfg.full_mnist:
        rng = streams.stream(cfg.seed, streams.DATA)
        train = _sample(train, cfg.train_subset, rng)
        test = _sample(test, cfg.test_subset, rng)
    return train, test


def build_model(cfg: TrainConfig) -> Model:
    rng = streams.stream(cfg.seed, streams.INIT)
    if cfg.model == "vqc":
        if cfg.task in TASKS_2D:
            return build_2d_model(rng=rng)
        if cfg.task == "digits01":
            return build_mnist_model(rng=rng, n_qubits=DIGITS_QUBITS, layers=DIGITS_LAYERS)
        return build_mnist_model(rng=rng)
    if cfg.task in TASKS_2D:
        return mlp_init(MLP_2D_SIZES, rng)
    if cfg.task == "digits01":
        return mlp_init((64, 1, 2), rng)
    return mlp_init(MLP_MNIST_SIZES, rng)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(cfg: TrainConfig, data: tuple[Dataset, Dataset] | None = None) -> tuple[TrainReport, Model]:
    """Run mini-batch (optionally private) RMSprop training and report metrics.

    Non-private runs use the DP update with clipping and noise disabled.
    """
    t0 = time.perf_counter()
    train_ds, test_ds = build_data(cfg) if data is None else data
    n_train = len(train_ds)
    if cfg.batch_size > n_train:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds {n_train} training examples")
    if cfg.privacy is not None and cfg.privacy.noise_multiplier > 0 and cfg.privacy.delta > 1.0 / n_train:
        warnings.warn(f"delta={cfg.privacy.delta} exceeds 1/n_train={1.0 / n_train:.3g}", stacklevel=2)

    model = build_model(cfg)
    privacy = cfg.privacy or PrivacyConfig.disabled(cfg.batch_size)
    opt = OptimizerState(lr=cfg.lr, alpha=cfg.rmsprop_alpha, momentum=cfg.momentum, eps=cfg.rmsprop_eps)
    shuffle_rng = streams.stream(cfg.seed, streams.SHUFFLE)
    noise_rng = streams.stream(cfg.seed, streams.NOISE)

    def grad_fn(params, X, y):
        return per_example_grads(model, params, X, y)

    hist = {k: [] for k in ("epochs", "train_loss", "train_acc", "test_loss", "test_acc")}
    init_train_loss = mean_loss(model, train_ds)
    init_test_acc = evaluate(lambda X: predict(model, X), test_ds)
    params = model.params
    steps = n_train // cfg.batch_size
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        for b in range(steps):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            params, opt = dp_minibatch_update(
                params, train_ds.X[idx], train_ds.y[idx], grad_fn, privacy, opt, noise_rng
            )
        model = model.with_params(params)
        hist["epochs"].append(epoch)
        hist["train_loss"].append(mean_loss(model, train_ds))
        hist["train_acc"].append(evaluate(lambda X: predict(model, X), train_ds))
        hist["test_loss"].append(mean_loss(model, test_ds))
        hist["test_acc"].append(evaluate(lambda X: predict(model, X), test_ds))
        log.info("epoch %d train_loss %.4f test_acc %.4f", epoch, hist["train_loss"][-1], hist["test_acc"][-1])

    epsilon = best_order = None
    if cfg.privacy is not None:
        acct = training_epsilon(n_train, cfg.batch_size, cfg.epochs, cfg.privacy.noise_multiplier, cfg.privacy.delta)
        epsilon, best_order = acct.epsilon, acct.best_order

    report = TrainReport(
        **hist,
        init_train_loss=init_train_loss,
        init_test_acc=init_test_acc,
        final_test_acc=evaluate(lambda X: predict(model, X), test_ds),
        epsilon=epsilon,
        best_order=best_order,
        n_train=n_train,
        n_test=len(test_ds),
        seed=cfg.seed,
        config=cfg.to_dict(),
        seconds=time.perf_counter() - t0,
    )
    return report, model


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _floats(values) -> str:
    return "[" + ", ".join(format(float(v), ".17g") for v in values) + "]"


def model_to_json(model: Model, meta: dict | None = None) -> str:
    if isinstance(model, VqcModel):
        arch = {"kind": "vqc", "arch": model.arch, "blocks": [dataclasses.asdict(b) for b in model.blocks]}
    else:
        arch = {"kind": "mlp", "arch": "mlp", "layer_sizes": list(model.layer_sizes)}
    head = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **arch, "meta": meta or {}}
    body = json.dumps(head, indent=2)
    # parameters are written by hand to pin 17 significant digits
    return body[:-2] + f',\n  "params": {_floats(model.params)}\n}}\n'


def model_from_json(text: str) -> Model:
    d = json.loads(text)
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a saved dpqml model")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')}")
    params = np.array(d["params"], dtype=np.float64)
    if d["kind"] == "vqc":
        blocks = tuple(BlockSpec(**b) for b in d["blocks"])
        return VqcModel(blocks, params, d.get("arch", "custom"))
    return mlp_init(d["layer_sizes"], 0).with_params(params)


def save_model(model: Model, path, meta: dict | None = None) -> None:
    Path(path).write_text(model_to_json(model, meta))


def load_model(path) -> tuple[Model, dict]:
    text = Path(path).read_text()
    return model_from_json(text), json.loads(text).get("meta", {})


def write_outputs(out_dir, report: TrainReport, model: Model) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "metrics.csv").write_text(report.metrics_csv())
    save_model(model, out / "model.json", meta={"task": report.config["task"], "seed": report.seed,
                                                  "n_samples": report.config["n_samples"]})


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
