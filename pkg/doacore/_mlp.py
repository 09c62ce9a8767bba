import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from ._exceptions import (
    FeatureShapeError,
    InvalidBatch,
    ModelLoadError,
    NumericError,
    TrainingFailure,
    map_exceptions,
)
from ._features import FeatureVector
from ._trace import Trace

__all__ = [
    "MlpArchitecture",
    "MlpModel",
    "TrainConfig",
    "AdamState",
    "EarlyStopping",
    "LabeledDataset",
    "forward",
    "predict_proba",
    "loss_and_grad",
    "adam_step",
    "train",
    "split_validation",
    "save_model",
    "load_model",
]

logger = logging.getLogger("doacore.mlp")

MODEL_MAGIC = b"DOACMLP\n"
MODEL_VERSION = 1


class MlpArchitecture:
    """
    A fully connected classifier: ReLU hidden layers, each followed by
    dropout, and a linear output layer of `output_size` classes.
    """

    def __init__(
        self,
        input_size: int,
        hidden: Sequence[int] = (1024, 1024, 1024, 1024),
        output_size: int = 72,
        dropout_rate: float = 0.2,
    ) -> None:
        if input_size < 1 or output_size < 2 or any(size < 1 for size in hidden):
            raise ValueError("Layer sizes must be positive, with at least 2 output classes.")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be within [0, 1), but got {dropout_rate}.")
        self.input_size = int(input_size)
        self.hidden = tuple(int(size) for size in hidden)
        self.output_size = int(output_size)
        self.dropout_rate = float(dropout_rate)

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_size, *self.hidden, self.output_size]

    def to_record(self) -> dict:
        return {
            "input_size": self.input_size,
            "hidden": list(self.hidden),
            "output_size": self.output_size,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_record(cls, record: dict) -> "MlpArchitecture":
        return cls(
            input_size=record["input_size"],
            hidden=record["hidden"],
            output_size=record["output_size"],
            dropout_rate=record["dropout_rate"],
        )

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, MlpArchitecture) and self.to_record() == other.to_record()

    def __repr__(self) -> str:
        sizes = "-".join(str(size) for size in self.layer_sizes)
        return f"<{self.__class__.__name__} [{sizes}, dropout={self.dropout_rate:g}]>"


class MlpModel:
    """
    Layer weights of shape `(fan_in, fan_out)` and biases of shape `(fan_out,)`.

    ```python
    model = doacore.MlpModel.initialize(doacore.MlpArchitecture(input_size=20), rng)
    logits, probs = doacore.forward(model, features)
    ```

    `metadata` carries training facts such as the loss curves, the seed and
    the feature kind the model was trained on.
    """

    def __init__(
        self,
        architecture: MlpArchitecture,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        metadata: Optional[dict] = None,
    ) -> None:
        sizes = architecture.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ValueError(f"Expected {len(sizes) - 1} layers for {architecture!r}.")
        for index, (weight, bias) in enumerate(zip(weights, biases)):
            expected = (sizes[index], sizes[index + 1])
            if weight.shape != expected or bias.shape != expected[1:]:
                raise ValueError(
                    f"Layer {index} has shapes {weight.shape}/{bias.shape}, but {expected} is expected."
                )
        self.architecture = architecture
        self.weights = list(weights)
        self.biases = list(biases)
        self.metadata = {} if metadata is None else dict(metadata)

    @classmethod
    def initialize(cls, architecture: MlpArchitecture, rng: np.random.Generator) -> "MlpModel":
        """
        He-uniform weights and zero biases.
        """
        sizes = architecture.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(architecture, weights, biases)

    @property
    def input_size(self) -> int:
        return self.architecture.input_size

    @property
    def params(self) -> List[np.ndarray]:
        """
        All parameters in layer order, weights before biases.
        """
        params = []
        for weight, bias in zip(self.weights, self.biases):
            params += [weight, bias]
        return params

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return MlpModel(self.architecture, params[0::2], params[1::2], self.metadata)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(param)) for param in self.params)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} {self.architecture!r}>"


class TrainConfig:
    def __init__(
        self,
        batch_size: int = 32,
        learning_rate: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        epsilon: float = 1e-8,
        patience: int = 10,
        max_epochs: int = 200,
        validation_fraction: float = 0.1,
        seed: int = 0,
    ) -> None:
        if batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, but got {batch_size}.")
        if patience < 1:
            raise ValueError(f"patience must be at least 1, but got {patience}.")
        if max_epochs < 1:
            raise ValueError(f"max_epochs must be at least 1, but got {max_epochs}.")
        if not 0.0 < validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be within (0, 1), but got {validation_fraction}.")
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.betas = (float(betas[0]), float(betas[1]))
        self.epsilon = float(epsilon)
        self.patience = int(patience)
        self.max_epochs = int(max_epochs)
        self.validation_fraction = float(validation_fraction)
        self.seed = int(seed)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(batch_size={self.batch_size}, learning_rate={self.learning_rate:g}, "
            f"patience={self.patience}, max_epochs={self.max_epochs}, seed={self.seed})"
        )


class AdamState:
    """
    First and second moment estimates, with the number of steps taken so far.
    """

    def __init__(self, params: Sequence[np.ndarray]) -> None:
        self.m = [np.zeros_like(param) for param in params]
        self.v = [np.zeros_like(param) for param in params]
        self.t = 0


class EarlyStopping:
    """
    Tracks the best validation loss. Training should stop once more than
    `patience` epochs have passed without a strict improvement.
    """

    def __init__(self, patience: int = 10) -> None:
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch: Optional[int] = None
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """
        Record the loss of an epoch, returning `True` if it is a new best.
        """
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait > self.patience


class LabeledDataset:
    def __init__(self, features: np.ndarray, labels: np.ndarray) -> None:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise FeatureShapeError(
                f"Expected features (N, D) and labels (N,), but got {features.shape} and {labels.shape}."
            )
        self.features = features
        self.labels = labels

    @property
    def feature_size(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[indices], self.labels[indices])

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{len(self)} samples x {self.feature_size} features]>"


def split_validation(
    dataset: LabeledDataset, fraction: float, rng: np.random.Generator
) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Split off a random `fraction` of the samples for validation.
    """
    if len(dataset) < 2:
        raise InvalidBatch("At least 2 samples are required to split off a validation set.")
    num_validation = min(max(1, int(round(fraction * len(dataset)))), len(dataset) - 1)
    order = rng.permutation(len(dataset))
    return dataset.subset(order[num_validation:]), dataset.subset(order[:num_validation])


def _as_batch(model: MlpModel, x: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    if isinstance(x, FeatureVector):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    batch = x[None, :] if x.ndim == 1 else x
    if batch.ndim != 2 or batch.shape[1] != model.input_size:
        raise FeatureShapeError(
            f"Model expects {model.input_size} input features, but got shape {x.shape}."
        )
    return batch


def _dropout_masks(
    architecture: MlpArchitecture, batch_size: int, rng: np.random.Generator
) -> Optional[List[np.ndarray]]:
    rate = architecture.dropout_rate
    if rate == 0.0:
        return None
    return [
        (rng.random((batch_size, size)) >= rate) / (1.0 - rate)
        for size in architecture.hidden
    ]


def _forward(
    model: MlpModel, batch: np.ndarray, masks: Optional[List[np.ndarray]]
) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    inputs, preactivations = [], []
    activation = batch
    for index, (weight, bias) in enumerate(zip(model.weights[:-1], model.biases[:-1])):
        inputs.append(activation)
        z = activation @ weight + bias
        preactivations.append(z)
        activation = np.maximum(z, 0.0)
        if masks is not None:
            activation = activation * masks[index]
    inputs.append(activation)
    logits = activation @ model.weights[-1] + model.biases[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericError("Non-finite activation in forward pass.")
    return logits, inputs, preactivations


def forward(
    model: MlpModel,
    x: Union[FeatureVector, np.ndarray],
    mode: str = "inference",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Return `(logits, probabilities)` for one feature vector or a batch.

    `mode="train"` applies inverted dropout with masks drawn from `rng`, so
    that inference needs no rescaling.
    """
    if mode not in ("inference", "train"):
        raise ValueError(f"mode must be 'inference' or 'train', but got {mode!r}.")
    batch = _as_batch(model, x)
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("Training mode requires an rng for the dropout masks.")
        masks = _dropout_masks(model.architecture, len(batch), rng)
    logits, _, _ = _forward(model, batch, masks)
    probs = softmax(logits, axis=1)
    if isinstance(x, FeatureVector) or np.ndim(x) == 1:
        return logits[0], probs[0]
    return logits, probs


def predict_proba(model: MlpModel, features: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    features = _as_batch(model, features)
    chunks = [
        forward(model, features[start : start + batch_size])[1]
        for start in range(0, len(features), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def _check_labels(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if len(features) == 0 or labels.size == 0:
        raise InvalidBatch("Cannot compute a loss over an empty batch.")
    if labels.shape != (len(features),) or not np.issubdtype(labels.dtype, np.integer):
        raise InvalidBatch(f"Expected {len(features)} integer labels, but got {labels!r}.")
    if np.any(labels < 0) or np.any(labels >= model.architecture.output_size):
        raise InvalidBatch(f"Labels must be within [0, {model.architecture.output_size}).")
    return labels


def cross_entropy(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """
    Mean cross-entropy over a batch, without dropout.
    """
    batch = _as_batch(model, features)
    labels = _check_labels(model, batch, labels)
    logits, _, _ = _forward(model, batch, None)
    return float(-np.mean(log_softmax(logits, axis=1)[np.arange(len(labels)), labels]))


def loss_and_grad(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, List[np.ndarray]]:
    """
    Mean cross-entropy of a batch and its gradient for every parameter,
    ordered as `model.params`.

    Dropout is applied when an `rng` is given. The same masks are used in
    the forward and backward passes.
    """
    batch = np.asarray(features, dtype=np.float64)
    if batch.ndim == 2 and len(batch) == 0:
        raise InvalidBatch("Cannot compute a loss over an empty batch.")
    batch = _as_batch(model, batch)
    labels = _check_labels(model, batch, labels)
    size = len(batch)

    masks = None if rng is None else _dropout_masks(model.architecture, size, rng)
    logits, inputs, preactivations = _forward(model, batch, masks)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-np.mean(log_probs[np.arange(size), labels]))

    delta = np.exp(log_probs)
    delta[np.arange(size), labels] -= 1.0
    delta /= size

    num_layers = len(model.weights)
    grads: List[np.ndarray] = [None] * (2 * num_layers)
    for layer in reversed(range(num_layers)):
        grads[2 * layer] = inputs[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer == 0:
            break
        delta = delta @ model.weights[layer].T
        if masks is not None:
            delta = delta * masks[layer - 1]
        delta = delta * (preactivations[layer - 1] > 0)
    return loss, grads


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> List[np.ndarray]:
    """
    One bias-corrected Adam update, returning the new parameters.
    """
    beta1, beta2 = config.betas
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    updated = []
    for index, (param, grad) in enumerate(zip(params, grads)):
        state.m[index] = beta1 * state.m[index] + (1.0 - beta1) * grad
        state.v[index] = beta2 * state.v[index] + (1.0 - beta2) * grad ** 2
        m_hat = state.m[index] / correction1
        v_hat = state.v[index] / correction2
        updated.append(param - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon))
    return updated


def _dataset_loss(model: MlpModel, dataset: LabeledDataset, batch_size: int = 1024) -> float:
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        features = dataset.features[start : start + batch_size]
        labels = dataset.labels[start : start + batch_size]
        total += cross_entropy(model, features, labels) * len(labels)
    return total / len(dataset)


def train(
    training: LabeledDataset,
    validation: LabeledDataset,
    config: Optional[TrainConfig] = None,
    architecture: Optional[MlpArchitecture] = None,
    extensions: Optional[dict] = None,
) -> MlpModel:
    """
    Train with mini-batch Adam and early stopping on the validation loss.

    Returns the parameters of the epoch with the lowest validation loss.
    The loss curves, best epoch and seed are recorded in `model.metadata`.
    """
    config = TrainConfig() if config is None else config
    if len(training) == 0 or len(validation) == 0:
        raise InvalidBatch("Training requires non-empty training and validation sets.")
    if architecture is None:
        architecture = MlpArchitecture(input_size=training.feature_size)
    if training.feature_size != architecture.input_size or validation.feature_size != architecture.input_size:
        raise FeatureShapeError(
            f"Dataset has {training.feature_size} features, but the architecture expects {architecture.input_size}."
        )

    kwargs = {"samples": len(training), "validation": len(validation), "config": config}
    with Trace("mlp.train", extensions, kwargs) as trace:
        rng = np.random.default_rng(config.seed)
        model = MlpModel.initialize(architecture, rng)
        params = model.params
        state = AdamState(params)
        stopping = EarlyStopping(config.patience)
        best_params = params
        train_losses: List[float] = []
        validation_losses: List[float] = []

        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(training))
            epoch_loss = 0.0
            for start in range(0, len(order), config.batch_size):
                indices = order[start : start + config.batch_size]
                try:
                    loss, grads = loss_and_grad(
                        model.with_params(params),
                        training.features[indices],
                        training.labels[indices],
                        rng=rng,
                    )
                except NumericError as exc:
                    raise TrainingFailure(
                        f"Training activations diverged in epoch {epoch}.",
                        diagnostics={"epoch": epoch, "batch_start": start, "train_losses": train_losses},
                    ) from exc
                if not math.isfinite(loss):
                    raise TrainingFailure(
                        f"Training loss diverged in epoch {epoch}.",
                        diagnostics={"epoch": epoch, "batch_start": start, "train_losses": train_losses},
                    )
                params = adam_step(params, grads, state, config)
                epoch_loss += loss * len(indices)

            try:
                validation_loss = _dataset_loss(model.with_params(params), validation)
            except NumericError as exc:
                raise TrainingFailure(
                    f"Validation loss diverged in epoch {epoch}.",
                    diagnostics={"epoch": epoch, "train_losses": train_losses},
                ) from exc
            if not math.isfinite(validation_loss):
                raise TrainingFailure(
                    f"Validation loss diverged in epoch {epoch}.",
                    diagnostics={"epoch": epoch, "validation_losses": validation_losses},
                )
            train_losses.append(epoch_loss / len(training))
            validation_losses.append(validation_loss)
            logger.info(
                "Epoch %d: train loss %.4f, validation loss %.4f",
                epoch,
                train_losses[-1],
                validation_loss,
            )

            if stopping.update(epoch, validation_loss):
                best_params = [param.copy() for param in params]
            if stopping.should_stop:
                break

        metadata = {
            "epochs": len(validation_losses),
            "best_epoch": stopping.best_epoch,
            "train_losses": train_losses,
            "validation_losses": validation_losses,
            "seed": config.seed,
        }
        best = MlpModel(architecture, best_params[0::2], best_params[1::2], metadata)
        trace.return_value = best
    return best


def save_model(model: MlpModel, path: Union[str, Path]) -> None:
    """
    Write a model file: magic bytes, format version, a JSON header with the
    architecture and metadata, then little-endian float64 parameters in layer
    order, each weight matrix row-major followed by its bias.
    """
    header = json.dumps(
        {"architecture": model.architecture.to_record(), "metadata": model.metadata},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as stream:
        stream.write(MODEL_MAGIC)
        stream.write(struct.pack("<HI", MODEL_VERSION, len(header)))
        stream.write(header)
        for param in model.params:
            stream.write(np.ascontiguousarray(param, dtype="<f8").tobytes())


def load_model(path: Union[str, Path]) -> MlpModel:
    path = Path(path)
    if not path.is_file():
        raise ModelLoadError(f"Model file not found: {path}")
    data = path.read_bytes()
    if not data.startswith(MODEL_MAGIC):
        raise ModelLoadError(f"{path} is not a doacore model file.")
    offset = len(MODEL_MAGIC)

    with map_exceptions({struct.error: ModelLoadError}):
        version, header_size = struct.unpack_from("<HI", data, offset)
    if version != MODEL_VERSION:
        raise ModelLoadError(f"{path} has format version {version}, but {MODEL_VERSION} is supported.")
    offset += struct.calcsize("<HI")

    with map_exceptions({ValueError: ModelLoadError, KeyError: ModelLoadError, TypeError: ModelLoadError}):
        header = json.loads(data[offset : offset + header_size].decode("utf-8"))
        architecture = MlpArchitecture.from_record(header["architecture"])
        metadata = header["metadata"]
    offset += header_size

    sizes = architecture.layer_sizes
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    expected = sum(int(np.prod(shape)) for shape in shapes) * 8
    if len(data) - offset != expected:
        raise ModelLoadError(
            f"{path} holds {len(data) - offset} parameter bytes, but {expected} are expected."
        )

    params = []
    for shape in shapes:
        count = int(np.prod(shape))
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        params.append(values.astype(np.float64).reshape(shape))
        offset += count * 8

    model = MlpModel(architecture, params[0::2], params[1::2], metadata)
    if not model.is_finite():
        raise ModelLoadError(f"{path} contains non-finite parameters.")
    return model
