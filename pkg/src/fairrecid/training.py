"""Joint training of the recidivism predictor and its fairness adversary.

The predictor is an ordinary logit-output MLP trained on binary
cross-entropy. In the adversarial modes a second network consumes the
predictor's raw logit (plus the true label, for the equalized-odds variant)
and tries to recover the race group; each batch alternates one Adam step
for the adversary on its own loss with one Adam step for the predictor on

    predictor_loss - alpha * adversary_loss

where the subtracted term reaches the predictor's parameters through the
adversary's gradient w.r.t. the logit it was fed, with the adversary's own
parameters held fixed. Driving the adversary's loss up is what pushes the
logit toward carrying no group information.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset
from .errors import (
    ConfigError,
    EmptyInputError,
    NoAdversaryError,
    SchemaMismatchError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from .metrics import GroupedPredictions, auc, error_rate_gaps, high_risk_gap

MODES = ("baseline", "parity", "eq_odds")


@dataclass
class TrainConfig:
    mode: str = "baseline"
    alpha: float = 1.0
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    predictor_hidden: tuple[int, ...] = (256, 256)
    adversary_hidden: tuple[int, ...] = (100,)
    selection_gap_limit: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        self.predictor_hidden = tuple(int(h) for h in self.predictor_hidden)
        self.adversary_hidden = tuple(int(h) for h in self.adversary_hidden)

    @property
    def adversarial(self) -> bool:
        return self.mode != "baseline"

    def to_jsonable(self) -> dict:
        return {
            "mode": self.mode,
            "alpha": self.alpha,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "predictor_hidden": list(self.predictor_hidden),
            "adversary_hidden": list(self.adversary_hidden),
            "selection_gap_limit": self.selection_gap_limit,
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        data["predictor_hidden"] = tuple(data.get("predictor_hidden", (256, 256)))
        data["adversary_hidden"] = tuple(data.get("adversary_hidden", (100,)))
        return cls(**data)


@dataclass
class EpochRecord:
    epoch: int
    predictor_loss: float
    adversary_loss: float | None
    val_auc: float
    val_high_risk_gap: float
    val_fp_gap: float
    val_fn_gap: float
    val_high_risk_rate: float = float("nan")

    def to_jsonable(self) -> dict:
        def _num(x):
            if x is None:
                return None
            return None if not math.isfinite(x) else round(x, 6)
        return {
            "epoch": self.epoch,
            "predictor_loss": _num(self.predictor_loss),
            "adversary_loss": _num(self.adversary_loss),
            "val_auc": _num(self.val_auc),
            "val_high_risk_gap": _num(self.val_high_risk_gap),
            "val_fp_gap": _num(self.val_fp_gap),
            "val_fn_gap": _num(self.val_fn_gap),
            "val_high_risk_rate": _num(self.val_high_risk_rate),
        }


@dataclass
class TrainedPair:
    """Selected predictor/adversary checkpoints plus the full epoch history."""

    predictor: nn.DenseNet
    adversary: nn.DenseNet | None
    history: list[EpochRecord]
    config: TrainConfig
    selected_epoch: int


def adversary_input(mode: str, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Assemble the adversary's input matrix from predictor logits.

    parity feeds the logit alone; eq_odds appends the true label so the
    adversary conditions on actual recidivism.
    """
    if mode == "baseline":
        raise NoAdversaryError("baseline mode has no adversary")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise ShapeMismatchError("logits and labels must have equal lengths")
    if mode == "parity":
        return logits[:, None].copy()
    return np.column_stack([logits, labels])


def coupled_loss(l_y: float, l_d: float, alpha: float) -> float:
    """The predictor's training objective: its own loss minus alpha times
    the adversary's."""
    return l_y - alpha * l_d


def _adversary_width(mode: str) -> int:
    return 1 if mode == "parity" else 2


def _child_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def _validation_metrics(probs: np.ndarray, valid: Dataset) -> tuple[float, float, float, float]:
    """(auc, high_risk_gap, fp_gap, fn_gap) on the validation set.

    Degenerate validation sets (a group missing a class) yield NaNs rather
    than aborting training; the selection rule treats NaN as worst-possible.
    """
    gp = GroupedPredictions(score=probs, y_true=valid.Y, group=valid.D)
    try:
        val_auc = auc(gp)
    except Exception:
        val_auc = float("nan")
    try:
        hrg = high_risk_gap(gp)
    except Exception:
        hrg = float("nan")
    try:
        fp_gap, fn_gap = error_rate_gaps(gp)
    except Exception:
        fp_gap, fn_gap = float("nan"), float("nan")
    return val_auc, hrg, fp_gap, fn_gap


def _selection_gap(record: EpochRecord, mode: str) -> float:
    if mode == "eq_odds":
        return max(record.val_fp_gap, record.val_fn_gap)
    return record.val_high_risk_gap


def select_epoch(history: list[EpochRecord], cfg: TrainConfig) -> int:
    """Pick the checkpoint epoch the run should ship.

    Adversarial runs (alpha > 0): among non-degenerate epochs whose
    validation gap is within the configured limit, take the one with the
    best AUC; if none qualify, take the smallest gap. Degenerate means the
    classifier labels (almost) everyone the same way at the 0.5 cut - such
    epochs satisfy any parity gap trivially and are useless checkpoints.
    Baseline runs (and alpha == 0, which is baseline training in disguise):
    best validation AUC. Ties resolve to the earliest epoch; an all-NaN
    history falls back to the last epoch.
    """
    def _auc_key(r: EpochRecord) -> float:
        return r.val_auc if math.isfinite(r.val_auc) else -math.inf

    def _gap_key(r: EpochRecord) -> float:
        g = _selection_gap(r, cfg.mode)
        return g if math.isfinite(g) else math.inf

    def _healthy(r: EpochRecord) -> bool:
        return math.isfinite(r.val_high_risk_rate) and 0.1 <= r.val_high_risk_rate <= 0.9

    if not cfg.adversarial or cfg.alpha == 0.0:
        best = max(history, key=_auc_key)
        return best.epoch if math.isfinite(best.val_auc) else history[-1].epoch
    qualifying = [r for r in history
                  if _healthy(r) and _gap_key(r) <= cfg.selection_gap_limit]
    if qualifying:
        return max(qualifying, key=_auc_key).epoch
    candidates = [r for r in history if _healthy(r)] or history
    best = min(candidates, key=_gap_key)
    return best.epoch if math.isfinite(_gap_key(best)) else history[-1].epoch


def train(train_ds: Dataset, valid_ds: Dataset, cfg: TrainConfig) -> TrainedPair:
    """Run the full training loop and return the selected checkpoint pair.

    Deterministic per cfg.seed: initialization, batch order, and updates all
    derive from it, and the adversary draws from its own seed stream so its
    presence never perturbs the predictor's (this is what makes an alpha=0
    adversarial run reproduce the baseline bit for bit).
    """
    if train_ds.n_rows == 0 or valid_ds.n_rows == 0:
        raise EmptyInputError("train and validation sets must be non-empty")
    if train_ds.schema != valid_ds.schema:
        raise SchemaMismatchError("train and validation schemas differ")

    root = np.random.SeedSequence(cfg.seed)
    predictor_seq, adversary_seq, shuffle_seq = root.spawn(3)
    n_features = train_ds.schema.n_features
    predictor = nn.init_network([n_features, *cfg.predictor_hidden, 1],
                                _child_seed(predictor_seq))
    predictor_state = nn.AdamState.for_net(predictor)
    adversary = None
    adversary_state = None
    if cfg.adversarial:
        adversary = nn.init_network(
            [_adversary_width(cfg.mode), *cfg.adversary_hidden, 1],
            _child_seed(adversary_seq))
        adversary_state = nn.AdamState.for_net(adversary)

    shuffle_rng = np.random.default_rng(_child_seed(shuffle_seq))
    n = train_ds.n_rows
    X, Y, D = train_ds.X, train_ds.Y.astype(np.float64), train_ds.D.astype(np.float64)

    history: list[EpochRecord] = []
    snapshots: dict[int, tuple[nn.DenseNet, nn.DenseNet | None]] = {}

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb, db = X[idx], Y[idx], D[idx]
            nb = len(idx)

            logits, cache = nn.forward(predictor, xb)
            if not np.isfinite(logits).all():
                raise TrainingDivergedError(epoch, batch_no, "non-finite predictor logits")
            probs = nn.sigmoid(logits)

            if cfg.adversarial:
                adv_x = adversary_input(cfg.mode, logits, yb)

                # adversary step: minimize its own loss; only its parameters move
                a_logits, a_cache = nn.forward(adversary, adv_x)
                if not np.isfinite(a_logits).all():
                    raise TrainingDivergedError(epoch, batch_no, "non-finite adversary logits")
                a_probs = nn.sigmoid(a_logits)
                a_grads, _ = nn.backward(adversary, a_cache, (a_probs - db) / nb)
                nn.adam_step(adversary, a_grads, adversary_state, cfg.lr)

                # predictor step: coupled loss, adversary frozen at its new values
                a_logits2, a_cache2 = nn.forward(adversary, adv_x)
                a_probs2 = nn.sigmoid(a_logits2)
                _, dladv_dinput = nn.backward(adversary, a_cache2, (a_probs2 - db) / nb)
                dloss_dlogit = (probs - yb) / nb - cfg.alpha * dladv_dinput[:, 0]
            else:
                dloss_dlogit = (probs - yb) / nb

            p_grads, _ = nn.backward(predictor, cache, dloss_dlogit)
            nn.adam_step(predictor, p_grads, predictor_state, cfg.lr)

        record = _end_of_epoch(epoch, predictor, adversary, cfg, train_ds, valid_ds)
        if not math.isfinite(record.predictor_loss):
            raise TrainingDivergedError(epoch, -1, "non-finite training loss")
        history.append(record)
        snapshots[epoch] = (
            predictor.copy(),
            adversary.copy() if adversary is not None else None,
        )
        selected_so_far = select_epoch(history, cfg)
        snapshots = {e: s for e, s in snapshots.items() if e in (selected_so_far, epoch)}

    selected = select_epoch(history, cfg)
    sel_predictor, sel_adversary = snapshots[selected]
    return TrainedPair(
        predictor=sel_predictor,
        adversary=sel_adversary,
        history=history,
        config=cfg,
        selected_epoch=selected,
    )


def _end_of_epoch(epoch: int, predictor: nn.DenseNet, adversary: nn.DenseNet | None,
                  cfg: TrainConfig, train_ds: Dataset, valid_ds: Dataset) -> EpochRecord:
    logits, _ = nn.forward(predictor, train_ds.X)
    probs = nn.sigmoid(logits)
    l_y = nn.bce_loss(probs, train_ds.Y.astype(np.float64))
    l_d = None
    if adversary is not None:
        adv_x = adversary_input(cfg.mode, logits, train_ds.Y.astype(np.float64))
        a_logits, _ = nn.forward(adversary, adv_x)
        l_d = nn.bce_loss(nn.sigmoid(a_logits), train_ds.D.astype(np.float64))
    val_logits, _ = nn.forward(predictor, valid_ds.X)
    val_probs = nn.sigmoid(val_logits)
    val_auc, hrg, fp_gap, fn_gap = _validation_metrics(val_probs, valid_ds)
    return EpochRecord(
        epoch=epoch,
        predictor_loss=l_y,
        adversary_loss=l_d,
        val_auc=val_auc,
        val_high_risk_gap=hrg,
        val_fp_gap=fp_gap,
        val_fn_gap=fn_gap,
    )


def predict(pair: TrainedPair, X: np.ndarray) -> np.ndarray:
    """Recidivism probabilities, one per row of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != pair.predictor.dims[0]:
        raise SchemaMismatchError(
            f"expected {pair.predictor.dims[0]} feature columns, got {X.shape}"
        )
    logits, _ = nn.forward(pair.predictor, X)
    return nn.sigmoid(logits)


# -------------------------------------------------------------- persistence


def save_trained_pair(directory: str | Path, pair: TrainedPair) -> dict:
    """Write checkpoints + history JSON; returns {artifact: path} strings."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"config": pair.config.to_jsonable(), "selected_epoch": pair.selected_epoch}
    paths = {}
    nn.save_checkpoint(pair.predictor, d / "predictor.json", meta={**meta, "role": "predictor"})
    paths["predictor"] = str(d / "predictor.json")
    if pair.adversary is not None:
        nn.save_checkpoint(pair.adversary, d / "adversary.json", meta={**meta, "role": "adversary"})
        paths["adversary"] = str(d / "adversary.json")
    history = {
        "config": pair.config.to_jsonable(),
        "selected_epoch": pair.selected_epoch,
        "epochs": [r.to_jsonable() for r in pair.history],
    }
    (d / "history.json").write_text(json.dumps(history, sort_keys=True, indent=2) + "\n")
    paths["history"] = str(d / "history.json")
    return paths


def load_trained_pair(directory: str | Path) -> TrainedPair:
    """Rehydrate a TrainedPair from a directory written by save_trained_pair."""
    d = Path(directory)
    predictor, meta = nn.load_checkpoint(d / "predictor.json")
    cfg = TrainConfig.from_jsonable(meta["config"])
    adversary = None
    if (d / "adversary.json").exists():
        adversary, _ = nn.load_checkpoint(d / "adversary.json")
    history_payload = json.loads((d / "history.json").read_text())
    history = [
        EpochRecord(
            epoch=e["epoch"],
            predictor_loss=_nan_if_none(e["predictor_loss"]),
            adversary_loss=e["adversary_loss"],
            val_auc=_nan_if_none(e["val_auc"]),
            val_high_risk_gap=_nan_if_none(e["val_high_risk_gap"]),
            val_fp_gap=_nan_if_none(e["val_fp_gap"]),
            val_fn_gap=_nan_if_none(e["val_fn_gap"]),
        )
        for e in history_payload["epochs"]
    ]
    return TrainedPair(
        predictor=predictor,
        adversary=adversary,
        history=history,
        config=cfg,
        selected_epoch=history_payload["selected_epoch"],
    )


def _nan_if_none(x) -> float:
    return float("nan") if x is None else float(x)
