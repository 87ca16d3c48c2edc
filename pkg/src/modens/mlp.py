"""Ensembles of small feedforward conditional-outcome predictors.

Fully connected nets with sigmoid hidden activations and a linear output
layer, trained by full-batch maximum likelihood with per-parameter adaptive
steps (Adam) on bootstrap resamples.  Outcome heads emit (location,
log-scale) for a Gaussian or Cauchy predictive; the propensity head emits a
logit.  The treatment enters outcome nets as one appended input scalar.

Backpropagation is hand-rolled for this fixed architecture so the gradient
check against finite differences stays meaningful.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .dist import ComponentDistribution, Family

SCALE_FLOOR = 1e-6
SCHEMA_VERSION = 1
_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


class TrainingDivergedError(RuntimeError):
    """Raised when the training NLL becomes non-finite."""


class ModelFileError(ValueError):
    """Malformed model file; message carries parse context."""


class Head(enum.Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"
    PROPENSITY = "propensity"

    @property
    def out_dim(self) -> int:
        return 1 if self is Head.PROPENSITY else 2


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64, 64)
    epochs: int = 2000
    step: float = 1e-2
    head: Head = Head.GAUSSIAN
    # None = head default: standardize outcomes for Gaussian, not for Cauchy
    standardize: bool | None = None
    # Gaussian-on-ranks warm-up epochs before Cauchy fine-tuning; None = epochs // 2
    warmup_epochs: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.step <= 0.0 or any(h < 1 for h in self.hidden):
            raise ValueError("invalid training configuration")

    def resolved_standardize(self) -> bool:
        if self.standardize is not None:
            return self.standardize
        return self.head is Head.GAUSSIAN


@dataclass
class MlpParams:
    """Dense-layer parameters: weights[l] has shape (fan_in, fan_out),
    biases[l] shape (fan_out,).  Hidden activations are sigmoid, the output
    layer is linear."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: Head

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output layers")
        if sizes[-1] != self.head.out_dim:
            raise ValueError(f"head {self.head.value} needs {self.head.out_dim} outputs")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count mismatch")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} parameter shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l} parameters must be finite")
        self.layer_sizes = sizes

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.head)


@dataclass(frozen=True)
class EnsembleModel:
    """m i.i.d.-trained members sharing architecture and head; the training
    seed is kept for provenance."""

    members: tuple[MlpParams, ...]
    seed: int

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("ensemble needs at least one member")
        head = self.members[0].head
        sizes = self.members[0].layer_sizes
        for p in self.members:
            if p.head is not head or p.layer_sizes != sizes:
                raise ValueError("all members must share layer sizes and head")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def head(self) -> Head:
        return self.members[0].head


def init_params(layer_sizes, head: Head, rng: np.random.Generator) -> MlpParams:
    # uniform +-sqrt(6 / (fan_in + fan_out)), the usual choice for
    # saturating activations
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases, head)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _net_forward(params: MlpParams, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (output (n, out_dim), hidden activations incl. input)."""
    acts = [X]
    a = X
    n_layers = len(params.weights)
    for l in range(n_layers - 1):
        a = _sigmoid(a @ params.weights[l] + params.biases[l])
        acts.append(a)
    out = a @ params.weights[-1] + params.biases[-1]
    return out, acts


def _head_loss_grad(head: Head, out: np.ndarray, target: np.ndarray
                    ) -> tuple[float, np.ndarray]:
    """Mean NLL and its gradient wrt the raw network outputs."""
    n = out.shape[0]
    dout = np.empty_like(out)
    if head is Head.PROPENSITY:
        z = out[:, 0]
        loss = float(np.mean(np.logaddexp(0.0, z) - target * z))
        dout[:, 0] = (_sigmoid(z) - target) / n
        return loss, dout
    mu = out[:, 0]
    ls = out[:, 1]
    el = np.exp(np.minimum(ls, 300.0))
    s = np.maximum(el, SCALE_FLOOR)
    live = el > SCALE_FLOOR   # below the floor d(scale)/d(log-scale) = 0
    r = target - mu
    z2 = (r / s) ** 2
    if head is Head.GAUSSIAN:
        loss = float(np.mean(0.5 * z2 + np.log(s) + 0.5 * math.log(2.0 * math.pi)))
        dout[:, 0] = (-r / s ** 2) / n
        dout[:, 1] = np.where(live, 1.0 - z2, 0.0) / n
    elif head is Head.CAUCHY:
        loss = float(np.mean(np.log(math.pi * s) + np.log1p(z2)))
        dout[:, 0] = (-2.0 * r / (s ** 2 + r ** 2)) / n
        dout[:, 1] = np.where(live, (s ** 2 - r ** 2) / (s ** 2 + r ** 2), 0.0) / n
    else:  # pragma: no cover
        raise ValueError(f"unknown head {head}")
    return loss, dout


def nll_and_grads(params: MlpParams, X: np.ndarray, target: np.ndarray
                  ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Full-batch mean NLL and gradients via backprop."""
    out, acts = _net_forward(params, X)
    loss, delta = _head_loss_grad(params.head, out, target)
    grads_w = [np.empty(0)] * len(params.weights)
    grads_b = [np.empty(0)] * len(params.biases)
    for l in range(len(params.weights) - 1, -1, -1):
        grads_w[l] = acts[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            a = acts[l]
            delta = (delta @ params.weights[l].T) * a * (1.0 - a)
    return loss, grads_w, grads_b


def nll(params: MlpParams, X: np.ndarray, target: np.ndarray) -> float:
    out, _ = _net_forward(params, X)
    loss, _ = _head_loss_grad(params.head, out, target)
    return loss


def _adam_fit(params: MlpParams, X: np.ndarray, target: np.ndarray,
              epochs: int, step: float) -> MlpParams:
    """Full-batch Adam keeping the best-NLL parameter snapshot, so the
    returned NLL never exceeds the initial one."""
    mw = [np.zeros_like(w) for w in params.weights]
    vw = [np.zeros_like(w) for w in params.weights]
    mb = [np.zeros_like(b) for b in params.biases]
    vb = [np.zeros_like(b) for b in params.biases]
    best = params.copy()
    best_loss = nll(params, X, target)
    if not math.isfinite(best_loss):
        raise TrainingDivergedError(
            f"initial NLL is non-finite for head {params.head.value}")
    for epoch in range(1, epochs + 1):
        loss, gw, gb = nll_and_grads(params, X, target)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"NLL became non-finite at epoch {epoch} (head {params.head.value})")
        if loss < best_loss:
            best_loss = loss
            best = params.copy()
        c1 = 1.0 - _ADAM_B1 ** epoch
        c2 = 1.0 - _ADAM_B2 ** epoch
        for l in range(len(params.weights)):
            mw[l] = _ADAM_B1 * mw[l] + (1 - _ADAM_B1) * gw[l]
            vw[l] = _ADAM_B2 * vw[l] + (1 - _ADAM_B2) * gw[l] ** 2
            params.weights[l] -= step * (mw[l] / c1) / (np.sqrt(vw[l] / c2) + _ADAM_EPS)
            mb[l] = _ADAM_B1 * mb[l] + (1 - _ADAM_B1) * gb[l]
            vb[l] = _ADAM_B2 * vb[l] + (1 - _ADAM_B2) * gb[l] ** 2
            params.biases[l] -= step * (mb[l] / c1) / (np.sqrt(vb[l] / c2) + _ADAM_EPS)
    final_loss = nll(params, X, target)
    if math.isfinite(final_loss) and final_loss < best_loss:
        return params
    return best


def _rank_unit(y: np.ndarray) -> np.ndarray:
    # rank k (stable ties) -> k/n, a Uniform[0,1) grid
    n = y.shape[0]
    order = np.argsort(y, kind="stable")
    out = np.empty(n)
    out[order] = np.arange(n) / n
    return out


def _outcome_design(data: Dataset) -> np.ndarray:
    return np.column_stack([data.covariates, data.treatments.astype(np.float64)])


def _fold_affine(params: MlpParams, scale: float, shift: float) -> None:
    """Fold an affine output transform y = scale * y~ + shift into the linear
    output layer, exactly: the location column is rescaled and the log-scale
    bias shifted by log(scale)."""
    params.weights[-1][:, 0] *= scale
    params.biases[-1][0] = params.biases[-1][0] * scale + shift
    params.biases[-1][1] += math.log(scale)


def train_member(data: Dataset, config: TrainConfig, seed: int) -> MlpParams:
    """One ensemble member: seeded bootstrap resample, seeded init, Adam MLE.

    Cauchy heads train in two phases: a Gaussian warm-up on rank-normalized
    outcomes to place the body away from the heavy tails, then an affine
    re-map of the location head to outcome units (quartile-matched) and
    Cauchy fine-tuning.
    """
    if data.n < 2:
        raise ValueError("need at least 2 training rows")
    if config.head is Head.PROPENSITY:
        raise ValueError("use fit_propensity for the propensity head")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, data.n, size=data.n)
    X = _outcome_design(data)[idx]
    y = data.outcomes[idx]
    sizes = (X.shape[1], *config.hidden, 2)

    if config.head is Head.GAUSSIAN:
        params = init_params(sizes, Head.GAUSSIAN, rng)
        if config.resolved_standardize():
            mu_y = float(np.mean(data.outcomes))
            sd_y = max(float(np.std(data.outcomes)), 1e-12)
            params = _adam_fit(params, X, (y - mu_y) / sd_y, config.epochs, config.step)
            _fold_affine(params, sd_y, mu_y)
        else:
            params = _adam_fit(params, X, y, config.epochs, config.step)
        return params

    # Cauchy head
    warmup = config.warmup_epochs if config.warmup_epochs is not None \
        else max(config.epochs // 2, 1)
    params = init_params(sizes, Head.GAUSSIAN, rng)
    ranks = _rank_unit(y)
    params = _adam_fit(params, X, ranks, warmup, config.step)
    # quartile-matched affine map from predicted rank space to outcome units
    out, _ = _net_forward(params, X)
    r_hat = out[:, 0]
    q25, q50, q75 = np.percentile(y, [25.0, 50.0, 75.0])
    r25, r50, r75 = np.percentile(r_hat, [25.0, 50.0, 75.0])
    slope = (q75 - q25) / max(r75 - r25, 0.05)
    slope = max(slope, 1e-6)
    params.weights[-1][:, 0] *= slope
    params.biases[-1][0] = params.biases[-1][0] * slope + (q50 - slope * r50)
    params.weights[-1][:, 1] = 0.0
    params.biases[-1][1] = math.log(max((q75 - q25) / 2.0, 1e-3))
    params.head = Head.CAUCHY
    if config.resolved_standardize():
        # rarely useful for Cauchy data (moments may not exist) but honored
        mu_y = float(np.median(data.outcomes))
        _fold_affine(params, 1.0, -mu_y)
        params = _adam_fit(params, X, y - mu_y, config.epochs, config.step)
        _fold_affine(params, 1.0, mu_y)
    else:
        params = _adam_fit(params, X, y, config.epochs, config.step)
    return params


def train_ensemble(data: Dataset, config: TrainConfig, seed: int,
                   m: int = 16) -> EnsembleModel:
    """m independent members with derived seeds seed+1 .. seed+m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    members = [train_member(data, config, seed + j) for j in range(1, m + 1)]
    return EnsembleModel(members=tuple(members), seed=seed)


def fit_propensity(data: Dataset, config: TrainConfig, seed: int) -> MlpParams:
    """Binary cross-entropy MLE of e_1(x) = P(T=1 | X=x) on the covariates
    alone; e_0(x) is reported as its complement."""
    if data.n < 2:
        raise ValueError("need at least 2 training rows")
    rng = np.random.default_rng(seed)
    sizes = (data.d, *config.hidden, 1)
    params = init_params(sizes, Head.PROPENSITY, rng)
    return _adam_fit(params, data.covariates, data.treatments.astype(np.float64),
                     config.epochs, config.step)


def forward(params: MlpParams, x: np.ndarray, t: int | None = None):
    """Per-member prediction at one query point: a ComponentDistribution for
    outcome heads (treatment appended to the input), a probability in (0, 1)
    for the propensity head."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if params.head is Head.PROPENSITY:
        if x.shape[0] != params.input_dim:
            raise ValueError(f"expected {params.input_dim} inputs, got {x.shape[0]}")
        out, _ = _net_forward(params, x[None, :])
        return float(_sigmoid(out[:, 0])[0])
    if t is None:
        raise ValueError("outcome heads require the treatment input t")
    if x.shape[0] + 1 != params.input_dim:
        raise ValueError(
            f"expected {params.input_dim - 1} covariates + treatment, got {x.shape[0]}")
    row = np.concatenate([x, [float(t)]])
    out, _ = _net_forward(params, row[None, :])
    family = Family.GAUSSIAN if params.head is Head.GAUSSIAN else Family.CAUCHY
    scale = max(float(np.exp(min(out[0, 1], 300.0))), SCALE_FLOOR)
    return ComponentDistribution(family=family, location=float(out[0, 0]), scale=scale)


def predict_components(model: EnsembleModel, x: np.ndarray, t: int
                       ) -> list[ComponentDistribution]:
    """All m member predictive laws at one (x, t), member order preserved."""
    if model.head is Head.PROPENSITY:
        raise ValueError("model is propensity-headed")
    return [forward(p, x, t) for p in model.members]


def predict_components_batch(model: EnsembleModel, X: np.ndarray, t: np.ndarray
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Member locations and scales for n query rows: arrays of shape (n, m)."""
    if model.head is Head.PROPENSITY:
        raise ValueError("model is propensity-headed")
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).ravel()
    rows = np.column_stack([X, t])
    n = rows.shape[0]
    locs = np.empty((n, model.m))
    scales = np.empty((n, model.m))
    for j, p in enumerate(model.members):
        out, _ = _net_forward(p, rows)
        locs[:, j] = out[:, 0]
        scales[:, j] = np.maximum(np.exp(np.minimum(out[:, 1], 300.0)), SCALE_FLOOR)
    return locs, scales


def predict_propensity(params: MlpParams, x: np.ndarray) -> float:
    return forward(params, x)


def predict_propensity_batch(params: MlpParams, X: np.ndarray) -> np.ndarray:
    if params.head is not Head.PROPENSITY:
        raise ValueError("model is not propensity-headed")
    X = np.asarray(X, dtype=np.float64)
    out, _ = _net_forward(params, X)
    return _sigmoid(out[:, 0])


def _params_to_json(params: MlpParams) -> dict:
    return {"weights": [w.tolist() for w in params.weights],
            "biases": [b.tolist() for b in params.biases]}


def _params_from_json(obj: dict, sizes: tuple[int, ...], head: Head,
                      context: str) -> MlpParams:
    try:
        weights = [np.asarray(w, dtype=np.float64) for w in obj["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in obj["biases"]]
        return MlpParams(sizes, weights, biases, head)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{context}: {exc}") from None


def save_model(model: EnsembleModel, path: str | Path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "head": model.head.value,
        "layer_sizes": list(model.members[0].layer_sizes),
        "seed": int(model.seed),
        "members": [_params_to_json(p) for p in model.members],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> EnsembleModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ModelFileError(f"{path}: unsupported or missing schema_version")
    try:
        head = Head(doc["head"])
        sizes = tuple(int(s) for s in doc["layer_sizes"])
        seed = int(doc["seed"])
        raw_members = doc["members"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    members = [_params_from_json(obj, sizes, head, f"{path}: member {i}")
               for i, obj in enumerate(raw_members)]
    return EnsembleModel(members=tuple(members), seed=seed)


def save_propensity(params: MlpParams, path: str | Path, seed: int = 0) -> None:
    save_model(EnsembleModel(members=(params,), seed=seed), path)


def load_propensity(path: str | Path) -> MlpParams:
    model = load_model(path)
    if model.head is not Head.PROPENSITY:
        raise ModelFileError(f"{path}: expected a propensity model, got {model.head.value}")
    return model.members[0]
