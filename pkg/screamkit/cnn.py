"""
Convolutional classifier on FS5 log-mel input.

Three conv stages (3x3 conv, ReLU, 2x2 max-pool) widen to 256, 512 and 1024
channels; the flattened map passes through ReLU dense layers of 256, 64 and
16 units and a linear output layer. Training is mini-batch Adam on softmax
cross-entropy with early stopping on validation loss.
"""

###########
# IMPORTS #
###########

import copy
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import torch
from torch import nn

from screamkit.dsp_features import LogMelSpectrogram
from screamkit.svm import ShapeMismatchError

logger = logging.getLogger(__name__)

##########
# ERRORS #
##########


class TrainingDivergedError(RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"Training diverged at epoch {epoch}, batch {batch}: loss = {loss}. "
            "Lower the learning rate or check the input features."
        )


#########
# TYPES #
#########


@dataclass(frozen=True)
class CnnArchitecture:
    n_classes: int
    n_mels: int = 128
    n_frames: int = 87
    conv_channels: tuple[int, ...] = (256, 512, 1024)
    dense_units: tuple[int, ...] = (256, 64, 16)
    kernel_size: int = 3
    pool_size: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "dense_units", tuple(self.dense_units))
        if min(self.n_classes, self.n_mels, self.n_frames, self.kernel_size, self.pool_size) < 1:
            raise ValueError(f"Architecture dimensions must be positive: {self}")
        if not self.conv_channels:
            raise ValueError("At least one conv stage is required.")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"Kernel size must be odd for same padding: {self.kernel_size}")
        height, width = self.pooled_shape
        if height < 1 or width < 1:
            raise ValueError(
                f"Input {self.n_mels}x{self.n_frames} is too small for "
                f"{len(self.conv_channels)} pooling stages of size {self.pool_size}"
            )

    @property
    def pooled_shape(self) -> tuple[int, int]:
        height, width = self.n_mels, self.n_frames
        for _ in self.conv_channels:
            height, width = height // self.pool_size, width // self.pool_size
        return height, width

    @property
    def flat_features(self) -> int:
        height, width = self.pooled_shape
        return self.conv_channels[-1] * height * width

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["conv_channels"] = list(self.conv_channels)
        data["dense_units"] = list(self.dense_units)
        return data


@dataclass(frozen=True)
class CnnTrainConfig:
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    seed: int = 0


class VocalCnn(nn.Module):
    """The network described by a CnnArchitecture."""

    def __init__(self, arch: CnnArchitecture) -> None:
        super().__init__()
        stages: list[nn.Module] = []
        in_channels = 1
        for channels in arch.conv_channels:
            stages += [
                nn.Conv2d(in_channels, channels, arch.kernel_size, padding=arch.kernel_size // 2),
                nn.ReLU(),
                nn.MaxPool2d(arch.pool_size),
            ]
            in_channels = channels
        self.features = nn.Sequential(*stages)
        dense: list[nn.Module] = [nn.Flatten()]
        width = arch.flat_features
        for units in arch.dense_units:
            dense += [nn.Linear(width, units), nn.ReLU()]
            width = units
        dense.append(nn.Linear(width, arch.n_classes))
        self.classifier = nn.Sequential(*dense)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))  # type: ignore[no-any-return]


@dataclass(eq=False)
class CnnModel:
    architecture: CnnArchitecture
    network: VocalCnn
    classes: tuple[str, ...] = ()
    train_config: CnnTrainConfig = field(default_factory=CnnTrainConfig)

    def __post_init__(self) -> None:
        if not self.classes:
            self.classes = tuple(str(i) for i in range(self.architecture.n_classes))
        if len(self.classes) != self.architecture.n_classes:
            raise ValueError(
                f"{len(self.classes)} class names for {self.architecture.n_classes} outputs"
            )


##################
# INITIALISATION #
##################


def init_weights(network: nn.Module, seed: int) -> None:
    """He-uniform weights and zero biases, drawn from a seeded generator."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in network.modules():
            if isinstance(module, nn.Conv2d | nn.Linear):
                nn.init.kaiming_uniform_(module.weight, nonlinearity="relu", generator=generator)
                nn.init.zeros_(module.bias)


def cnn_init(
    n_classes: int,
    n_mels: int = 128,
    n_frames: int = 87,
    seed: int = 0,
    architecture: CnnArchitecture | None = None,
    classes: Sequence[str] = (),
) -> CnnModel:
    """Build a freshly initialised model; the same seed gives identical weights."""
    arch = architecture or CnnArchitecture(n_classes=n_classes, n_mels=n_mels, n_frames=n_frames)
    if (arch.n_classes, arch.n_mels, arch.n_frames) != (n_classes, n_mels, n_frames):
        raise ValueError(
            f"Architecture {arch.n_classes} classes / {arch.n_mels}x{arch.n_frames} "
            f"disagrees with requested {n_classes} / {n_mels}x{n_frames}"
        )
    network = VocalCnn(arch)
    init_weights(network, seed)
    logger.debug(f"Initialised CNN with {parameter_count(network):,} parameters (seed {seed})")
    return CnnModel(architecture=arch, network=network, classes=tuple(classes))


def parameter_count(model: CnnModel | nn.Module) -> int:
    network = model.network if isinstance(model, CnnModel) else model
    return sum(p.numel() for p in network.parameters())


###########
# FORWARD #
###########


def _as_batch(model: CnnModel, inputs: LogMelSpectrogram | np.ndarray) -> torch.Tensor:
    """(n, 1, n_mels, n_frames) float tensor matching the network's dtype."""
    values = inputs.values if isinstance(inputs, LogMelSpectrogram) else np.asarray(inputs)
    if values.ndim == 2:
        values = values[np.newaxis]
    arch = model.architecture
    if values.ndim != 3 or values.shape[1:] != (arch.n_mels, arch.n_frames):
        raise ShapeMismatchError(
            f"Model expects input of shape ({arch.n_mels}, {arch.n_frames}); "
            f"got {values.shape}"
        )
    dtype = next(model.network.parameters()).dtype
    return torch.as_tensor(values, dtype=dtype).unsqueeze(1)


def softmax(logits: torch.Tensor) -> np.ndarray:
    """Row-wise softmax computed in float64."""
    return torch.softmax(logits.detach().to(torch.float64), dim=1).numpy()


def cnn_forward(model: CnnModel, inputs: LogMelSpectrogram | np.ndarray) -> np.ndarray:
    """Class probabilities, shape (n_classes,) for one input or (n, n_classes) for a batch."""
    single = (
        isinstance(inputs, LogMelSpectrogram) or np.asarray(inputs).ndim == 2
    )
    batch = _as_batch(model, inputs)
    model.network.eval()
    with torch.no_grad():
        probabilities = softmax(model.network(batch))
    return probabilities[0] if single else probabilities


def cnn_predict(
    model: CnnModel, inputs: np.ndarray, batch_size: int = 64
) -> tuple[list[str], np.ndarray]:
    """Predicted labels and (n, n_classes) probabilities for a stack of inputs."""
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        return [], np.zeros((0, model.architecture.n_classes))
    chunks = [
        np.atleast_2d(cnn_forward(model, inputs[start : start + batch_size]))
        for start in range(0, len(inputs), batch_size)
    ]
    probabilities = np.concatenate(chunks)
    labels = [model.classes[k] for k in np.argmax(probabilities, axis=1)]
    return labels, probabilities


############
# TRAINING #
############


def _evaluate(
    network: nn.Module, X: torch.Tensor, y: torch.Tensor, batch_size: int
) -> tuple[float, float]:
    """Mean cross-entropy and accuracy without gradient tracking."""
    if len(X) == 0:
        return float("nan"), float("nan")
    network.eval()
    loss_fn = nn.CrossEntropyLoss(reduction="sum")
    total_loss, correct = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(X), batch_size):
            logits = network(X[start : start + batch_size])
            total_loss += float(loss_fn(logits, y[start : start + batch_size]))
            correct += int((logits.argmax(dim=1) == y[start : start + batch_size]).sum())
    return total_loss / len(X), correct / len(X)


def cnn_train(
    model: CnnModel,
    train: tuple[np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray],
    config: CnnTrainConfig | None = None,
) -> tuple[CnnModel, list[dict[str, float]]]:
    """
    Train a copy of model and return it with the best validation-loss weights.
    Args:
        model: Initialised (or previously trained) model; left untouched.
        train: (inputs of shape (n, n_mels, n_frames), integer labels).
        val: Validation pair of the same form; may be empty, in which case
            the training loss drives early stopping.
        config: Optimiser and schedule settings.
    Returns:
        Tuple of (trained model, per-epoch history with train/val loss and accuracy).
    Raises:
        ValueError: on an empty training set or labels outside the class range.
        TrainingDivergedError: if a batch loss is non-finite.
    """
    config = config or CnnTrainConfig()
    X_train, y_train = train
    if len(X_train) == 0:
        raise ValueError("Cannot train on an empty training set.")
    n_classes = model.architecture.n_classes
    for name, labels in (("train", y_train), ("validation", val[1])):
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"{name} labels must lie in [0, {n_classes}); got {np.unique(labels)}")
    torch.use_deterministic_algorithms(True, warn_only=True)
    torch.manual_seed(config.seed)
    trained = copy.deepcopy(model)
    trained.train_config = config
    network = trained.network
    Xt = _as_batch(trained, X_train)
    yt = torch.as_tensor(np.asarray(y_train), dtype=torch.long)
    Xv = _as_batch(trained, val[0]) if len(val[0]) else Xt[:0]
    yv = torch.as_tensor(np.asarray(val[1]), dtype=torch.long)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate, betas=config.betas)
    loss_fn = nn.CrossEntropyLoss()
    generator = torch.Generator().manual_seed(config.seed)
    history: list[dict[str, float]] = []
    best_loss = float("inf")
    best_state = copy.deepcopy(network.state_dict())
    stale = 0
    for epoch in range(1, config.epochs + 1):
        network.train()
        order = torch.randperm(len(Xt), generator=generator)
        for batch, start in enumerate(range(0, len(Xt), config.batch_size)):
            index = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(network(Xt[index]), yt[index])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, float(loss))
            loss.backward()
            optimizer.step()
        train_loss, train_acc = _evaluate(network, Xt, yt, config.batch_size)
        val_loss, val_acc = _evaluate(network, Xv, yv, config.batch_size)
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "train_acc": train_acc,
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        monitored = val_loss if len(Xv) else train_loss
        logger.info(
            f"Epoch {epoch}/{config.epochs}: train loss {train_loss:.4f} acc {train_acc:.3f}, "
            f"val loss {val_loss:.4f} acc {val_acc:.3f}"
        )
        if monitored < best_loss:
            best_loss = monitored
            best_state = copy.deepcopy(network.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Early stop after epoch {epoch}; best monitored loss {best_loss:.4f}")
                break
    network.load_state_dict(best_state)
    return trained, history


#####################
# GRADIENT CHECKING #
#####################


def check_gradients(
    model: CnnModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    eps: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-7,
) -> bool:
    """
    Compare autograd gradients of the cross-entropy loss against central
    finite differences for every parameter, in float64.
    Returns:
        True when every gradient agrees within rtol (plus atol).
    Raises:
        torch.autograd.gradcheck.GradcheckError: on the first disagreement.
    """
    network = copy.deepcopy(model.network).double()
    names = [name for name, _ in network.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for p in network.parameters())
    x = torch.as_tensor(np.asarray(inputs), dtype=torch.float64).unsqueeze(1)
    y = torch.as_tensor(np.asarray(targets), dtype=torch.long)

    def loss_of(*weights: torch.Tensor) -> torch.Tensor:
        state = dict(zip(names, weights, strict=True))
        logits = torch.func.functional_call(network, state, (x,))
        return nn.functional.cross_entropy(logits, y)

    return bool(torch.autograd.gradcheck(loss_of, params, eps=eps, atol=atol, rtol=rtol))
