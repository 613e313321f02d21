"""Joint visual-textual embedding models trained with a cosine margin.

Two twin towers (fully connected + tanh + l2-normalization) project image
features and tf-idf text vectors into one D-dimensional space. Matching
pairs are pulled to cosine 1; mismatched pairs are pushed below a margin.
The metadata-augmented variant adds a linear classifier on each projected
view, mixed into the objective with weight alpha.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import numeric
from .errors import DegenerateInputError
from .evaluation import median_rank, rank_queries, score_all
from .validation import check_matrix, check_paired


@dataclass
class ProjectionHead:
    """Linear + tanh + l2-norm map into the joint space. W is (out, in)."""

    W: np.ndarray
    b: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


def project(head: ProjectionHead, x: np.ndarray) -> np.ndarray:
    """Unit-norm projection of a single vector (or batch of rows).

    Raises DegenerateInputError when the tanh activation is exactly the
    zero vector (only possible for Wx + b = 0).
    """
    activated = numeric.tanh(numeric.linear(x, head.W, head.b))
    return numeric.l2_normalize(activated)


def cml_loss(p_vis: np.ndarray, p_text: np.ndarray, positive: bool, m: float) -> float:
    """Cosine-margin pair loss: 1 - cos for matches, hinge cos - m otherwise."""
    c = numeric.cosine(p_vis, p_text)
    if positive:
        return 1.0 - c
    return max(0.0, c - m)


def amd_loss(
    p_text: np.ndarray,
    p_vis: np.ndarray,
    text_logits: np.ndarray,
    vis_logits: np.ndarray,
    label_text: int,
    label_vis: int,
    positive: bool,
    m: float,
    alpha: float,
) -> float:
    """Metadata-augmented pair loss.

    The cosine-margin part is weighted by (1 - 2*alpha); each classifier
    cross-entropy contributes with weight alpha. Classifier terms apply to
    positive pairs only (negative pairs carry the weighted margin loss).
    """
    base = (1.0 - 2.0 * alpha) * cml_loss(p_vis, p_text, positive, m)
    if not positive:
        return base
    return (
        base
        + alpha * numeric.cross_entropy(text_logits, label_text)
        + alpha * numeric.cross_entropy(vis_logits, label_vis)
    )


@dataclass
class TrainConfig:
    """Mini-batch training knobs.

    model_selection picks which epoch's parameters are returned:
    "val_mr" keeps the epoch with the lowest summed validation median rank
    (ties go to the later epoch); "last_epoch" keeps the final parameters.
    patience=None disables early stopping.
    """

    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 100
    seed: int = 0
    negatives_per_positive: int = 1
    model_selection: str = "val_mr"
    patience: int | None = 20

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (negatives need company)")
        if self.model_selection not in ("val_mr", "last_epoch"):
            raise ValueError(f"unknown model_selection {self.model_selection!r}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_mr_t2i: float
    val_mr_i2t: float


def _init_head(rng: np.random.Generator, out_dim: int, in_dim: int) -> tuple[np.ndarray, np.ndarray]:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    W = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    # A small nonzero bias keeps all-zero input rows (empty encodings) off
    # the exact-zero activation that l2 normalization cannot handle.
    return W, np.full(out_dim, 0.01)


def _head_forward(params: dict, prefix: str, X: np.ndarray, strict: bool = True):
    """FC + tanh + rowwise l2-norm. Returns (P, cache)."""
    A = numeric.tanh(numeric.linear(X, params[f"{prefix}.W"], params[f"{prefix}.b"]))
    norms = np.linalg.norm(A, axis=-1, keepdims=True)
    if np.any(norms <= numeric.NORM_EPS):
        if strict:
            raise DegenerateInputError(
                f"projection head {prefix!r} produced an exactly-zero activation; "
                "check for empty (all-OOV) input rows"
            )
        norms = np.where(norms <= numeric.NORM_EPS, 1.0, norms)
    P = A / norms
    return P, (X, A)


def _head_backward(params: dict, prefix: str, cache, grad_P: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate parameter grads for one head; returns grad wrt its input."""
    X, A = cache
    grad_A = numeric.l2_normalize_backward(A, grad_P)
    grad_Z = numeric.tanh_backward(A, grad_A)
    grad_X, grad_W, grad_b = numeric.linear_backward(X, params[f"{prefix}.W"], grad_Z)
    grads[f"{prefix}.W"] = grads.get(f"{prefix}.W", 0.0) + grad_W
    grads[f"{prefix}.b"] = grads.get(f"{prefix}.b", 0.0) + grad_b
    return grad_X


class _BowTextTower:
    """Single head straight over the joint tf-idf vector."""

    def __init__(self, dim: int, text_dim: int):
        self.dim = dim
        self.text_dim = text_dim

    def init_params(self, rng, params: dict) -> None:
        params["text.W"], params["text.b"] = _init_head(rng, self.dim, self.text_dim)

    def forward(self, params, Y, strict=True):
        return _head_forward(params, "text", Y, strict)

    def backward(self, params, cache, grad_P, grads) -> None:
        _head_backward(params, "text", cache, grad_P, grads)


class _MlpTextTower:
    """Trainable comment/title encoders (FC + tanh + l2-norm each), whose
    concatenated outputs feed the final text head."""

    def __init__(self, dim: int, comment_dim: int, title_dim: int,
                 mlp_comment_dim: int, mlp_title_dim: int):
        self.dim = dim
        self.comment_dim = comment_dim
        self.title_dim = title_dim
        self.mlp_comment_dim = mlp_comment_dim
        self.mlp_title_dim = mlp_title_dim

    def init_params(self, rng, params: dict) -> None:
        params["mlp_c.W"], params["mlp_c.b"] = _init_head(rng, self.mlp_comment_dim, self.comment_dim)
        params["mlp_a.W"], params["mlp_a.b"] = _init_head(rng, self.mlp_title_dim, self.title_dim)
        params["text.W"], params["text.b"] = _init_head(
            rng, self.dim, self.mlp_comment_dim + self.mlp_title_dim
        )

    def forward(self, params, Y, strict=True):
        C = Y[:, : self.comment_dim]
        T = Y[:, self.comment_dim :]
        Hc, cache_c = _head_forward(params, "mlp_c", C, strict)
        Ht, cache_t = _head_forward(params, "mlp_a", T, strict)
        M = np.concatenate([Hc, Ht], axis=1)
        P, cache_p = _head_forward(params, "text", M, strict)
        return P, (cache_c, cache_t, cache_p)

    def backward(self, params, cache, grad_P, grads) -> None:
        cache_c, cache_t, cache_p = cache
        grad_M = _head_backward(params, "text", cache_p, grad_P, grads)
        _head_backward(params, "mlp_c", cache_c, grad_M[:, : self.mlp_comment_dim], grads)
        _head_backward(params, "mlp_a", cache_t, grad_M[:, self.mlp_comment_dim :], grads)


def batch_objective(
    params: dict,
    vis_prefix: str,
    text_tower,
    X: np.ndarray,
    Y: np.ndarray,
    negatives: list[tuple[int, int]],
    margin: float,
    alpha: float = 0.0,
    labels: np.ndarray | None = None,
) -> tuple[float, dict]:
    """Mean loss over all pair terms of one batch, with gradients.

    Pair terms are the B positives (k, k) plus, for every (k, j) in
    `negatives`, the two directions (text_k, vis_j) and (text_j, vis_k).
    With labels given, each positive also carries the two classifier
    cross-entropies weighted by alpha.
    """
    B = X.shape[0]
    P_vis, cache_v = _head_forward(params, vis_prefix, X)
    P_text, cache_t = text_tower.forward(params, Y)

    n_terms = B + 2 * len(negatives)
    cml_w = (1.0 - 2.0 * alpha) / n_terms
    grad_vis = np.zeros_like(P_vis)
    grad_text = np.zeros_like(P_text)
    grads: dict[str, np.ndarray] = {}
    total = 0.0

    for k in range(B):
        c = float(P_vis[k] @ P_text[k])
        total += cml_w * (1.0 - c)
        grad_vis[k] -= cml_w * P_text[k]
        grad_text[k] -= cml_w * P_vis[k]

    for k, j in negatives:
        for ti, vi in ((k, j), (j, k)):
            c = float(P_text[ti] @ P_vis[vi])
            if c > margin:
                total += cml_w * (c - margin)
                grad_text[ti] += cml_w * P_vis[vi]
                grad_vis[vi] += cml_w * P_text[ti]

    if labels is not None and alpha != 0.0:
        ce_w = alpha / n_terms
        for side, P, grad_P in (
            ("cls_text", P_text, grad_text),
            ("cls_vis", P_vis, grad_vis),
        ):
            W, b = params[f"{side}.W"], params[f"{side}.b"]
            logits = P @ W.T + b
            for k in range(B):
                total += ce_w * numeric.cross_entropy(logits[k], int(labels[k]))
            delta = numeric.softmax(logits)
            delta[np.arange(B), labels] -= 1.0
            delta *= ce_w
            grads[f"{side}.W"] = delta.T @ P
            grads[f"{side}.b"] = delta.sum(axis=0)
            grad_P += delta @ W

    _head_backward(params, vis_prefix, cache_v, grad_vis, grads)
    text_tower.backward(params, cache_t, grad_text, grads)
    return total, grads


def _sample_negatives(rng: np.random.Generator, batch_size: int, per_positive: int) -> list[tuple[int, int]]:
    pairs = []
    for k in range(batch_size):
        for _ in range(per_positive):
            j = int(rng.integers(batch_size - 1))
            if j >= k:
                j += 1
            pairs.append((k, j))
    return pairs


def _val_median_ranks(params, text_tower, Xv, Yv) -> tuple[float, float]:
    p_vis, _ = _head_forward(params, "vis", Xv)
    p_text, _ = text_tower.forward(params, Yv)
    scores = score_all(p_text, p_vis)
    return (
        median_rank(rank_queries(scores, "t2i")),
        median_rank(rank_queries(scores, "i2t")),
    )


class CmlModel(BaseEstimator):
    """Twin-tower embedding model trained with the cosine margin loss.

    Parameters
    ----------
    dim : joint space dimension.
    margin : hinge margin for mismatched pairs.
    arch : "bow" projects the joint tf-idf vector directly; "mlp" first
        passes comments and titles through their own trainable encoders
        (requires comment_dim to locate the comment/title boundary).
    """

    def __init__(
        self,
        dim: int = 128,
        margin: float = 0.1,
        lr: float = 1e-4,
        batch_size: int = 32,
        epochs: int = 100,
        seed: int = 0,
        negatives_per_positive: int = 1,
        arch: str = "bow",
        comment_dim: int | None = None,
        mlp_comment_dim: int = 512,
        mlp_title_dim: int = 128,
        model_selection: str = "val_mr",
        patience: int | None = 20,
    ):
        self.dim = dim
        self.margin = margin
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.negatives_per_positive = negatives_per_positive
        self.arch = arch
        self.comment_dim = comment_dim
        self.mlp_comment_dim = mlp_comment_dim
        self.mlp_title_dim = mlp_title_dim
        self.model_selection = model_selection
        self.patience = patience

    # -- configuration ---------------------------------------------------

    def _config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            negatives_per_positive=self.negatives_per_positive,
            model_selection=self.model_selection,
            patience=self.patience,
        )

    def _make_text_tower(self, text_dim: int):
        if self.arch == "bow":
            return _BowTextTower(self.dim, text_dim)
        if self.arch == "mlp":
            if self.comment_dim is None:
                raise ValueError("arch='mlp' requires comment_dim")
            return _MlpTextTower(
                self.dim,
                self.comment_dim,
                text_dim - self.comment_dim,
                self.mlp_comment_dim,
                self.mlp_title_dim,
            )
        raise ValueError(f"unknown arch {self.arch!r}")

    def _init_params(self, text_tower, vis_dim: int) -> dict:
        rng = np.random.default_rng([self.seed, 0])
        params: dict[str, np.ndarray] = {}
        params["vis.W"], params["vis.b"] = _init_head(rng, self.dim, vis_dim)
        text_tower.init_params(rng, params)
        self._init_extra_params(params)
        return params

    def _init_extra_params(self, params: dict) -> None:
        pass  # AmdModel adds its classifiers here

    # -- training --------------------------------------------------------

    def fit(self, X, Y, labels=None, validation=None):
        """Train on paired rows: X visual features, Y joint text encodings.

        validation is an optional (X_val, Y_val) pair used for per-epoch
        median-rank tracking and model selection; without it, selection
        falls back to the final epoch.
        """
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_paired(X, Y)
        if X.shape[0] < 2:
            raise ValueError("training needs at least 2 pairs")
        if not 0.0 <= self.margin < 1.0:
            raise ValueError(f"margin must lie in [0, 1), got {self.margin}")
        cfg = self._config()
        self._check_labels(labels, X.shape[0])

        text_tower = self._make_text_tower(Y.shape[1])
        params = self._init_params(text_tower, X.shape[1])
        state = numeric.AdamState(lr=cfg.lr)
        rng = np.random.default_rng([cfg.seed, 1])

        if validation is not None:
            Xv = check_matrix(validation[0], "X_val")
            Yv = check_matrix(validation[1], "Y_val")
            check_paired(Xv, Yv, "X_val", "Y_val")
        else:
            Xv = Yv = None

        n = X.shape[0]
        history: list[EpochStats] = []
        best_val = np.inf
        best_params = None
        best_epoch = -1
        stale = 0

        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            epoch_loss = 0.0
            n_batches = 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                if idx.size < 2:
                    continue  # a lone sample has no in-batch negatives
                negatives = _sample_negatives(rng, idx.size, cfg.negatives_per_positive)
                loss, grads = batch_objective(
                    params,
                    "vis",
                    text_tower,
                    X[idx],
                    Y[idx],
                    negatives,
                    self.margin,
                    alpha=self._alpha(),
                    labels=None if labels is None else labels[idx],
                )
                numeric.adam_step(params, grads, state)
                epoch_loss += loss
                n_batches += 1

            if Xv is not None:
                mr_t2i, mr_i2t = _val_median_ranks(params, text_tower, Xv, Yv)
            else:
                mr_t2i = mr_i2t = float("nan")
            history.append(
                EpochStats(epoch, epoch_loss / max(n_batches, 1), mr_t2i, mr_i2t)
            )

            if Xv is not None:
                val_sum = mr_t2i + mr_i2t
                if cfg.model_selection == "val_mr" and val_sum <= best_val:
                    best_params = copy.deepcopy(params)
                    best_epoch = epoch
                if val_sum < best_val:
                    best_val = val_sum
                    stale = 0
                else:
                    stale += 1
                    if cfg.patience is not None and stale >= cfg.patience:
                        break

        if cfg.model_selection == "val_mr" and best_params is not None:
            params = best_params
            self.best_epoch_ = best_epoch
        else:
            self.best_epoch_ = history[-1].epoch if history else 0

        self.params_ = params
        self.text_tower_ = text_tower
        self.history_ = history
        self.vis_dim_ = X.shape[1]
        self.text_dim_ = Y.shape[1]
        return self

    def _alpha(self) -> float:
        return 0.0

    def _check_labels(self, labels, n: int) -> None:
        if labels is not None:
            raise TypeError("CmlModel does not take labels; use AmdModel")

    # -- inference -------------------------------------------------------

    def project_images(self, X, strict: bool = True) -> np.ndarray:
        self._check_fitted()
        X = check_matrix(X, "X")
        return _head_forward(self.params_, "vis", X, strict)[0]

    def project_texts(self, Y, strict: bool = True) -> np.ndarray:
        self._check_fitted()
        Y = check_matrix(Y, "Y")
        return self.text_tower_.forward(self.params_, Y, strict)[0]

    def transform(self, X=None, Y=None):
        out = []
        if X is not None:
            out.append(self.project_images(X))
        if Y is not None:
            out.append(self.project_texts(Y))
        if not out:
            raise ValueError("transform needs X, Y, or both")
        return out[0] if len(out) == 1 else tuple(out)

    @property
    def vis_head_(self) -> ProjectionHead:
        self._check_fitted()
        return ProjectionHead(self.params_["vis.W"], self.params_["vis.b"])

    @property
    def text_head_(self) -> ProjectionHead:
        self._check_fitted()
        return ProjectionHead(self.params_["text.W"], self.params_["text.b"])

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} must be fitted first")


class AmdModel(CmlModel):
    """CmlModel plus a linear attribute classifier on each projected view.

    n_classes may be left None to infer from the labels passed to fit.
    """

    def __init__(
        self,
        dim: int = 128,
        margin: float = 0.1,
        alpha: float = 0.01,
        n_classes: int | None = None,
        lr: float = 1e-4,
        batch_size: int = 32,
        epochs: int = 100,
        seed: int = 0,
        negatives_per_positive: int = 1,
        arch: str = "bow",
        comment_dim: int | None = None,
        mlp_comment_dim: int = 512,
        mlp_title_dim: int = 128,
        model_selection: str = "val_mr",
        patience: int | None = 20,
    ):
        super().__init__(
            dim=dim,
            margin=margin,
            lr=lr,
            batch_size=batch_size,
            epochs=epochs,
            seed=seed,
            negatives_per_positive=negatives_per_positive,
            arch=arch,
            comment_dim=comment_dim,
            mlp_comment_dim=mlp_comment_dim,
            mlp_title_dim=mlp_title_dim,
            model_selection=model_selection,
            patience=patience,
        )
        self.alpha = alpha
        self.n_classes = n_classes

    def fit(self, X, Y, labels=None, validation=None):
        if labels is None:
            raise ValueError("AmdModel.fit requires integer attribute labels")
        labels = np.asarray(labels, dtype=np.int64)
        if self.n_classes is None:
            self._n_classes_fit = int(labels.max()) + 1
        else:
            self._n_classes_fit = self.n_classes
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")
        return super().fit(X, Y, labels=labels, validation=validation)

    def _alpha(self) -> float:
        return self.alpha

    def _check_labels(self, labels, n: int) -> None:
        if labels is None:
            raise ValueError("AmdModel requires labels")
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
        if labels.min() < 0 or labels.max() >= self._n_classes_fit:
            raise ValueError("label index out of range")

    def _init_extra_params(self, params: dict) -> None:
        rng = np.random.default_rng([self.seed, 2])
        c = self._n_classes_fit
        d = self.dim
        limit = np.sqrt(6.0 / (d + c))
        for side in ("cls_text", "cls_vis"):
            params[f"{side}.W"] = rng.uniform(-limit, limit, size=(c, d))
            params[f"{side}.b"] = np.zeros(c)

    def classify_texts(self, Y) -> np.ndarray:
        P = self.project_texts(Y)
        return np.argmax(P @ self.params_["cls_text.W"].T + self.params_["cls_text.b"], axis=1)

    def classify_images(self, X) -> np.ndarray:
        P = self.project_images(X)
        return np.argmax(P @ self.params_["cls_vis.W"].T + self.params_["cls_vis.b"], axis=1)


def train_cml(
    train: tuple[np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray] | None,
    cfg: TrainConfig,
    arch: str = "bow",
    dim: int = 128,
    margin: float = 0.1,
    comment_dim: int | None = None,
) -> CmlModel:
    """Functional entry point: train a CmlModel on (X_vis, Y_text) pairs."""
    model = CmlModel(
        dim=dim,
        margin=margin,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        negatives_per_positive=cfg.negatives_per_positive,
        arch=arch,
        comment_dim=comment_dim,
        model_selection=cfg.model_selection,
        patience=cfg.patience,
    )
    return model.fit(train[0], train[1], validation=val)


def train_amd(
    train: tuple[np.ndarray, np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray] | None,
    cfg: TrainConfig,
    alpha: float = 0.01,
    arch: str = "bow",
    dim: int = 128,
    margin: float = 0.1,
    comment_dim: int | None = None,
) -> AmdModel:
    """Functional entry point: train an AmdModel on (X_vis, Y_text, labels)."""
    model = AmdModel(
        dim=dim,
        margin=margin,
        alpha=alpha,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        negatives_per_positive=cfg.negatives_per_positive,
        arch=arch,
        comment_dim=comment_dim,
        model_selection=cfg.model_selection,
        patience=cfg.patience,
    )
    return model.fit(train[0], train[1], labels=train[2], validation=val)
