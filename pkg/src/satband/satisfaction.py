"""User satisfaction model: delay, image quality, survey data and learned f1."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

DEFAULT_DELTA_HALF = 3.0
DEFAULT_GAMMA = 2.0
DEFAULT_DELAY_MAX = 30.0
DEFAULT_BITS_PER_DOT = 24


def delay(file_bits: float, bandwidth: float) -> float:
    """Transmission delay in seconds."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if file_bits < 0:
        raise ValueError("file size must be non-negative")
    return file_bits / bandwidth


@dataclass(frozen=True)
class QualityInputs:
    s_orig: float
    r_orig: float
    s_sent: float
    r_sent: float
    scm: float = 1.0
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be three non-negative numbers")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        if not (0 < self.s_sent <= self.s_orig and 0 < self.r_sent <= self.r_orig):
            raise ValueError("sent size/resolution must be positive and not exceed the original")
        if not 0 < self.scm <= 1:
            raise ValueError("SCM must lie in (0, 1]")


def image_quality(qi: QualityInputs) -> float:
    """Weighted sum of normalised size, normalised resolution and SCM, in (0, 1].

    Ratios are transmitted over original so compression lowers quality.
    """
    w1, w2, w3 = qi.weights
    return w1 * (qi.s_sent / qi.s_orig) + w2 * (qi.r_sent / qi.r_orig) + w3 * qi.scm


def analytic_file_bits(s_sent: float, r_sent: float, bits_per_dot: float = DEFAULT_BITS_PER_DOT) -> float:
    """File size from printed size and resolution: ``S * R * bits_per_dot``."""
    return s_sent * r_sent * bits_per_dot


def _check_inputs(iq, delay_s) -> None:
    if np.any(iq < 0) or np.any(iq > 1):
        raise ValueError("image quality must lie in [0, 1]")
    if np.any(delay_s < 0):
        raise ValueError("delay must be non-negative")


class ParametricSatisfaction(BaseEstimator, RegressorMixin):
    """``US = iq / (1 + (delay / delta_half) ** gamma)``, clamped to [0, 1].

    Non-decreasing in quality, non-increasing in delay. ``fit`` only
    validates parameters; the model has nothing to learn.
    """

    kind = "parametric"
    monotone = True

    def __init__(self, delta_half=DEFAULT_DELTA_HALF, gamma=DEFAULT_GAMMA):
        self.delta_half = delta_half
        self.gamma = gamma

    def fit(self, X=None, y=None):
        if self.delta_half <= 0 or self.gamma <= 0:
            raise ValueError("delta_half and gamma must be positive")
        self.is_fitted_ = True
        return self

    def _predict(self, iq, delay_s):
        return np.clip(iq / (1.0 + (delay_s / self.delta_half) ** self.gamma), 0.0, 1.0)

    def _predict_one(self, iq: float, delay_s: float) -> float:
        return min(1.0, max(0.0, iq / (1.0 + (delay_s / self.delta_half) ** self.gamma)))

    def predict(self, X):
        """``X`` columns are ``(iq, delay_s)``."""
        X = check_array(X, ensure_min_samples=1)
        _check_inputs(X[:, 0], X[:, 1])
        return self._predict(X[:, 0], X[:, 1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta_half": self.delta_half, "gamma": self.gamma}


class KNNSatisfaction(BaseEstimator, RegressorMixin):
    """Inverse-distance-weighted k-nearest-neighbour regression on standardised inputs.

    Queries that coincide with training rows return the mean satisfaction
    of those rows; neighbour ties resolve by row order.
    """

    kind = "knn"
    monotone = False

    def __init__(self, k=5):
        self.k = k

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=1)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.shape[1] != 2 or len(y) != len(X):
            raise ValueError("expected (iq, delay_s) rows with one target each")
        if not 1 <= self.k <= len(X):
            raise ValueError(f"k must lie in 1..{len(X)}")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        self.X_ = (X - self.mean_) / self.scale_
        self.train_X_ = X
        self.y_ = y
        return self

    def _predict(self, iq, delay_s):
        q = (np.column_stack([iq, delay_s]) - self.mean_) / self.scale_
        d2 = ((q[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=-1)
        k = self.k
        if k < d2.shape[1]:
            # stable sort keeps lower row indices first among equal distances
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        else:
            nn = np.broadcast_to(np.arange(d2.shape[1]), d2.shape)
        dist = np.sqrt(np.take_along_axis(d2, nn, axis=1))
        ys = self.y_[nn]
        exact = dist == 0
        with np.errstate(divide="ignore"):
            w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dist)
        mixed = (w * ys).sum(axis=1) / w.sum(axis=1)
        # neighbours that agree give their value exactly, without weighting round-off
        agree = ys.min(axis=1) == ys.max(axis=1)
        return np.clip(np.where(agree, ys[:, 0], mixed), 0.0, 1.0)

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, ensure_min_samples=1)
        _check_inputs(X[:, 0], X[:, 1])
        return self._predict(X[:, 0], X[:, 1])

    def to_dict(self) -> dict:
        check_is_fitted(self, "X_")
        return {
            "kind": self.kind,
            "k": self.k,
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "rows": [[float(a), float(b), float(c)] for (a, b), c in zip(self.train_X_, self.y_)],
        }


def model_from_dict(data: dict):
    if not isinstance(data, dict):
        raise ValueError("model description must be a JSON object")
    kind = data.get("kind")
    if kind == "parametric":
        return ParametricSatisfaction(data.get("delta_half", DEFAULT_DELTA_HALF),
                                      data.get("gamma", DEFAULT_GAMMA)).fit()
    if kind == "knn":
        try:
            rows = np.asarray(data["rows"], dtype=np.float64)
            k = int(data["k"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed knn model: {exc}") from None
        if rows.ndim != 2 or rows.shape[1] != 3:
            raise ValueError("knn model rows must be (iq, delay_s, us) triples")
        return KNNSatisfaction(k).fit(rows[:, :2], rows[:, 2])
    raise ValueError(f"unknown model kind {kind!r}")


def predict_satisfaction(model, iq: float, delay_s: float) -> float:
    return float(model.predict([[iq, delay_s]])[0])


@dataclass
class SurveyTable:
    iq: np.ndarray
    delay: np.ndarray
    us: np.ndarray

    def __post_init__(self):
        self.iq = np.asarray(self.iq, dtype=np.float64)
        self.delay = np.asarray(self.delay, dtype=np.float64)
        self.us = np.asarray(self.us, dtype=np.float64)
        if not (self.iq.shape == self.delay.shape == self.us.shape) or self.iq.ndim != 1:
            raise ValueError("survey columns must be equal-length vectors")
        _check_inputs(self.iq, self.delay)
        if np.any(self.us < 0) or np.any(self.us > 1):
            raise ValueError("satisfaction must lie in [0, 1]")

    def __len__(self):
        return len(self.iq)

    @property
    def X(self) -> np.ndarray:
        return np.column_stack([self.iq, self.delay])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iq", "delay_s", "us"])
        for row in zip(self.iq, self.delay, self.us):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SurveyTable:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or set(reader.fieldnames) != {"iq", "delay_s", "us"}:
            raise ValueError("survey CSV header must be iq,delay_s,us")
        rows = [(float(r["iq"]), float(r["delay_s"]), float(r["us"])) for r in reader]
        if not rows:
            raise ValueError("survey table is empty")
        iq, d, us = map(np.array, zip(*rows))
        return cls(iq, d, us)


def synthesize_survey(n_rows: int, delta_half: float = DEFAULT_DELTA_HALF, gamma: float = DEFAULT_GAMMA,
                      noise_sd: float = 0.0, seed: int = 0, delay_max: float = DEFAULT_DELAY_MAX) -> SurveyTable:
    """Stand-in questionnaire data drawn from the parametric model.

    ``(iq, delay)`` points come from a scrambled Halton sequence over
    ``[0, 1] x [0, delay_max]``; satisfaction gets Gaussian noise and is
    clamped to [0, 1].
    """
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    pts = qmc.Halton(d=2, scramble=True, seed=seed).random(n_rows)
    iq, d = pts[:, 0], pts[:, 1] * delay_max
    us = ParametricSatisfaction(delta_half, gamma).fit()._predict(iq, d)
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        us = np.clip(us + rng.normal(0.0, noise_sd, n_rows), 0.0, 1.0)
    return SurveyTable(iq, d, us)


def train_satisfaction(table: SurveyTable, k: int = 5) -> KNNSatisfaction:
    if len(table) == 0:
        raise ValueError("survey table is empty")
    return KNNSatisfaction(k).fit(table.X, table.us)


def required_bandwidth(iq: float, file_bits: float, tau: float, model, a_max: float,
                       rel_tol: float = 1e-6, eps: float = 1e-12) -> float | None:
    """Smallest bandwidth in ``[eps * a_max, a_max]`` whose satisfaction reaches ``tau``.

    Bisection; returns ``None`` when even ``a_max`` falls short. Only
    models monotone in delay are accepted.
    """
    if not getattr(model, "monotone", False):
        raise ValueError("required bandwidth needs a model monotone in delay")
    if a_max <= 0:
        raise ValueError("a_max must be positive")

    def us(a):
        return float(model._predict(np.array([iq]), np.array([file_bits / a]))[0])

    lo = eps * a_max
    if us(lo) >= tau:
        return lo
    hi = a_max
    if us(hi) < tau:
        return None
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if us(mid) >= tau:
            hi = mid
        else:
            lo = mid
    return hi
