"""Temperature fitting, calibration metrics, and threshold registration."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .losses import loss_calibrated_ce
from .sponge import hash_bytes
from .windows import ParameterError

ECE_BINS_DEFAULT = 15
UTILITY_LAMBDA_DEFAULT = 0.5


@dataclass(frozen=True)
class CalibrationProfile:
    """Frozen operating point; any change produces a new digest."""

    temperature: float
    tau_reg: float
    lam: float = UTILITY_LAMBDA_DEFAULT
    ece_bins: int = ECE_BINS_DEFAULT
    dataset_checksum: str = ""
    model_hash: str = ""

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError("temperature must be positive")
        if not 0.0 <= self.tau_reg <= 1.0:
            raise ParameterError("tau_reg must be in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "temperature": self.temperature,
                "tau_reg": self.tau_reg,
                "lam": self.lam,
                "ece_bins": self.ece_bins,
                "dataset_checksum": self.dataset_checksum,
                "model_hash": self.model_hash,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def digest(self) -> int:
        return hash_bytes(self.to_json().encode())

    def with_tau(self, tau: float) -> "CalibrationProfile":
        return replace(self, tau_reg=tau)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationProfile":
        d = json.loads(text)
        return cls(
            temperature=d["temperature"],
            tau_reg=d["tau_reg"],
            lam=d["lam"],
            ece_bins=d["ece_bins"],
            dataset_checksum=d["dataset_checksum"],
            model_hash=d["model_hash"],
        )


def fit_temperature(logits: np.ndarray, labels: np.ndarray, tol: float = 1e-6) -> float:
    """Golden-section search for the NLL-minimizing temperature.

    Searched over log T in [-3, 3]; the NLL is unimodal in T for any
    fixed logits, so golden section converges to the global optimum.
    """
    labels = np.asarray(labels, dtype=int)
    if len(np.unique(labels)) < 2:
        raise ParameterError("need at least 2 classes present to fit temperature")

    def nll(log_t: float) -> float:
        return loss_calibrated_ce(logits, labels, float(np.exp(log_t)))[0]

    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = -3.0, 3.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = nll(c), nll(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = nll(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = nll(d)
    t_fit = float(np.exp((a + b) / 2))
    # never do worse than the identity temperature
    if loss_calibrated_ce(logits, labels, 1.0)[0] < loss_calibrated_ce(logits, labels, t_fit)[0]:
        return 1.0
    return t_fit


def ece(confidences: np.ndarray, correctness: np.ndarray, bins: int = ECE_BINS_DEFAULT) -> float:
    """Expected calibration error over equal-width bins on [0, 1]."""
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correctness, dtype=bool)
    if conf.size == 0:
        raise ParameterError("empty input")
    if conf.min() < 0 or conf.max() > 1:
        raise ParameterError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.digitize(conf, edges[1:-1]), 0, bins - 1)
    total = conf.size
    out = 0.0
    for b in range(bins):
        sel = idx == b
        n_b = int(sel.sum())
        if n_b == 0:
            continue
        out += (n_b / total) * abs(corr[sel].mean() - conf[sel].mean())
    return float(out)


def coverage_risk(confidences: np.ndarray, correctness: np.ndarray, tau: float) -> tuple[float, float]:
    """Coverage and selective risk at threshold tau; risk is 0 at zero coverage."""
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correctness, dtype=bool)
    accepted = conf >= tau
    n_acc = int(accepted.sum())
    c = n_acc / conf.size if conf.size else 0.0
    r = float((~corr[accepted]).mean()) if n_acc else 0.0
    return float(c), r


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    return float((predictions == labels).mean())


def macro_f1(predictions: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Macro-averaged F1; classes absent from both sides contribute 0."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    f1s = []
    for k in range(n_classes):
        tp = int(((predictions == k) & (labels == k)).sum())
        fp = int(((predictions == k) & (labels != k)).sum())
        fn = int(((predictions != k) & (labels == k)).sum())
        if tp == 0:
            f1s.append(0.0)
        else:
            prec = tp / (tp + fp)
            rec = tp / (tp + fn)
            f1s.append(2 * prec * rec / (prec + rec))
    return float(np.mean(f1s))


@dataclass(frozen=True)
class CoverageRiskCurve:
    taus: np.ndarray
    coverage: np.ndarray
    risk: np.ndarray
    f1: np.ndarray

    def rows(self):
        return zip(self.taus, self.coverage, self.risk, self.f1)


def _f1_on_accepted(conf, preds, labels, n_classes, tau):
    accepted = conf >= tau
    if not accepted.any():
        return 0.0
    return macro_f1(preds[accepted], labels[accepted], n_classes)


def select_threshold(
    confidences: np.ndarray,
    predictions: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    lam: float = UTILITY_LAMBDA_DEFAULT,
) -> tuple[float, CoverageRiskCurve]:
    """Maximize U(tau) = F1(tau) - lam * R(tau) over observed confidences.

    U is piecewise constant between observed confidence values, so scanning
    the distinct values (plus 0) is an exact maximization.  Ties take the
    smallest tau.  At zero coverage U is defined as 0.
    """
    if lam < 0:
        raise ParameterError("lam must be >= 0")
    conf = np.asarray(confidences, dtype=np.float64)
    preds = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    corr = preds == labels
    candidates = np.unique(np.concatenate([[0.0], conf]))
    best_tau, best_u = 0.0, -np.inf
    cov_list, risk_list, f1_list = [], [], []
    for tau in candidates:
        c, r = coverage_risk(conf, corr, tau)
        f1 = _f1_on_accepted(conf, preds, labels, n_classes, tau)
        u = f1 - lam * r if c > 0 else 0.0
        cov_list.append(c)
        risk_list.append(r)
        f1_list.append(f1)
        if u > best_u + 1e-15:
            best_u, best_tau = u, float(tau)
    curve = CoverageRiskCurve(
        taus=candidates,
        coverage=np.array(cov_list),
        risk=np.array(risk_list),
        f1=np.array(f1_list),
    )
    return best_tau, curve


def energy_score(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Negative free energy, an alternative confidence signal."""
    z = np.asarray(logits, dtype=np.float64) / temperature
    m = z.max(axis=1, keepdims=True)
    return (m[:, 0] + np.log(np.exp(z - m).sum(axis=1))) * temperature


def max_softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / temperature
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return (ez / ez.sum(axis=1, keepdims=True)).max(axis=1)
