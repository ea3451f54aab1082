"""Scikit-learn style wrappers so the pipeline composes with the wider ecosystem.

``ScanUnfoldProjector`` is a stateless transformer turning point clouds into
range images; ``DepthAwareSegmenter`` wraps the toy model behind the usual
fit/predict/score surface.  Both expose their constructor arguments through
``get_params``/``set_params`` and validate inputs up front.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .io import PointCloud, RangeImage
from .metrics import ConfusionMatrix
from .projection import normalize_intensity, project_cloud
from .synthetic import NUM_CLASSES
from .training import TrainConfig, train
from .validation import check_image_stack, check_label_stack
from .blocks import ToyModel
from .autodiff import Tensor
from .errors import ValidationError


class ScanUnfoldProjector(BaseEstimator, TransformerMixin):
    """Project point clouds onto H x W range images by azimuth column and ring row."""

    def __init__(self, height: int = 64, width: int = 2048, normalize: bool = False):
        self.height = height
        self.width = width
        self.normalize = normalize

    def fit(self, X, y=None):
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"image size must be positive, got {self.height}x{self.width}")
        return self

    def transform(self, X) -> list[RangeImage]:
        self.fit(X)
        clouds = [X] if isinstance(X, PointCloud) else list(X)
        images = []
        for cloud in clouds:
            if not isinstance(cloud, PointCloud):
                raise ValidationError(f"expected PointCloud inputs, got {type(cloud).__name__}")
            if self.normalize:
                cloud = normalize_intensity(cloud)
            images.append(project_cloud(cloud, self.height, self.width))
        return images


class DepthAwareSegmenter(BaseEstimator):
    """Per-pixel classifier over 5-channel range images, trained by seeded SGD.

    X is (n, 5, H, W) with the metric channels already scaled the way
    ``SyntheticScene.model_input`` scales them; y is (n, H, W) integer labels.
    """

    def __init__(
        self,
        use_gap: bool = True,
        use_spe: bool = True,
        steps: int = 300,
        lr: float = 0.05,
        momentum: float = 0.9,
        stage_channels: tuple[int, ...] = (8, 16),
        depths: tuple[int, ...] = (2, 2),
        placement: str = "last_one",
        num_classes: int = NUM_CLASSES,
        seed: int = 0,
    ):
        self.use_gap = use_gap
        self.use_spe = use_spe
        self.steps = steps
        self.lr = lr
        self.momentum = momentum
        self.stage_channels = stage_channels
        self.depths = depths
        self.placement = placement
        self.num_classes = num_classes
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            use_gap=self.use_gap,
            use_spe=self.use_spe,
            steps=self.steps,
            lr=self.lr,
            momentum=self.momentum,
            seed=self.seed,
            stage_channels=tuple(self.stage_channels),
            depths=tuple(self.depths),
            placement=self.placement,
        )

    def fit(self, X, y):
        X = check_image_stack(X, channels=5)
        y = check_label_stack(y, X.shape)
        if y.max() >= self.num_classes or y.min() < 0:
            raise ValidationError(f"labels outside [0, {self.num_classes})")
        pairs = _ArrayScenes(X, y)
        result = train(self._config(), pairs)  # type: ignore[arg-type]
        self.model_ = result.model
        self.losses_ = result.losses
        self.classes_ = np.arange(self.num_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self) -> ToyModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("call fit before predict/score")
        return model

    def predict(self, X) -> np.ndarray:
        model = self._check_fitted()
        X = check_image_stack(X, channels=5)
        out = np.empty((X.shape[0], X.shape[2], X.shape[3]), dtype=np.int64)
        for i, image in enumerate(X):
            logits = model.forward(Tensor(image))
            out[i] = np.argmax(logits.data, axis=0)
        return out

    def score(self, X, y) -> float:
        """Mean IoU over the classes present in y or the predictions."""
        X = check_image_stack(X, channels=5)
        y = check_label_stack(y, X.shape)
        pred = self.predict(X)
        cm = ConfusionMatrix(self.num_classes)
        cm.accumulate(y.reshape(-1), pred.reshape(-1))
        return cm.miou()


class _ArrayScenes:
    """Adapts (X, y) arrays to the (model_input, labels) scene protocol."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self._items = [_ArrayScene(x, labels) for x, labels in zip(X, y)]

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __bool__(self):
        return bool(self._items)


class _ArrayScene:
    def __init__(self, x: np.ndarray, labels: np.ndarray):
        self._x = x
        self.labels = labels

    def model_input(self) -> np.ndarray:
        return self._x
