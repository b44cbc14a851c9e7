"""Ideal data generators, scenario presets and contamination schemes."""
import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rand
from ._util import floor_count

CONTAM_SCHEMES = ("case_y", "cell_x")
TASKS = ("regression", "classification")


@dataclass(frozen=True)
class CVScheme:
    """Resampling scheme: ``randomized`` with B batches or ``kfold`` with K folds."""

    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in ("randomized", "kfold"):
            raise ValueError(f"unknown cv kind {self.kind!r}")
        if self.size < 1:
            raise ValueError(f"cv size must be positive, got {self.size}")

    @property
    def label(self):
        return f"randomized-B{self.size}" if self.kind == "randomized" else f"kfold-K{self.size}"

    @classmethod
    def parse(cls, text):
        text = text.strip()
        for prefix, kind in (("randomized-B", "randomized"), ("kfold-K", "kfold")):
            if text.startswith(prefix):
                return cls(kind, int(text[len(prefix):]))
        raise ValueError(f"cannot parse cv scheme {text!r} (expected randomized-B<int> or kfold-K<int>)")


@dataclass(frozen=True)
class ScenarioConfig:
    p: int
    n: int
    n_test: int
    n_sub: int
    s0: int
    mu: float
    snr: float | None = 5.0
    r: float = 0.0
    r_val: float = 0.0
    contam_scheme: str = "case_y"
    task: str = "regression"
    V: int = 50
    cv: CVScheme = field(default_factory=lambda: CVScheme("randomized", 10))
    gross_value: float = 50.0
    name: str = "custom"

    def __post_init__(self):
        if self.s0 > self.p:
            raise ValueError(f"s0={self.s0} exceeds p={self.p}")
        if self.n_sub > self.n:
            raise ValueError(f"n_sub={self.n_sub} exceeds n={self.n}")
        for key in ("r", "r_val"):
            val = getattr(self, key)
            if not 0.0 <= val < 1.0:
                raise ValueError(f"{key} must lie in [0, 1), got {val}")
        if self.contam_scheme not in CONTAM_SCHEMES:
            raise ValueError(f"contam_scheme must be one of {CONTAM_SCHEMES}, got {self.contam_scheme!r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.task == "regression" and self.snr is not None and not self.snr > 0:
            raise ValueError(f"snr must be > 0, got {self.snr}")

    @property
    def scenario_id(self):
        return self.name

    @property
    def snr_or_mu(self):
        if self.task == "regression":
            return math.inf if self.snr is None else float(self.snr)
        return float(self.mu)

    def with_(self, **changes):
        return replace(self, **changes)


# Table rows from the simulation study. Grids list the values each row is run at.
R_GRID = (0.05, 0.15, 0.25, 0.5)
R_GRID_CONTAM_TEST = (0.1, 0.25, 0.5)
SNR_GRID = (0.5, 2.0, 5.0)
MU_GRID_CLASSIFICATION = (0.5, 3.0, 8.0)

_PRESET_ROWS = {
    "reg-p20": dict(p=20, n=250, n_test=100, n_sub=125, s0=20, mu=2.0, snr=5.0, task="regression"),
    "reg-p250": dict(p=250, n=100, n_test=50, n_sub=50, s0=15, mu=2.0, snr=5.0, task="regression"),
    "reg-p500": dict(p=500, n=100, n_test=50, n_sub=50, s0=15, mu=2.0, snr=5.0, task="regression"),
    "cls-p20": dict(p=20, n=250, n_test=100, n_sub=125, s0=20, mu=3.0, snr=None, task="classification",
                    contam_scheme="cell_x"),
    "cls-p250": dict(p=250, n=100, n_test=50, n_sub=50, s0=15, mu=3.0, snr=None, task="classification",
                     contam_scheme="cell_x"),
    "cls-p500": dict(p=500, n=100, n_test=50, n_sub=50, s0=15, mu=3.0, snr=None, task="classification",
                     contam_scheme="cell_x"),
}

PRESET_GRIDS = {
    name: {"r": R_GRID, ("snr" if row["task"] == "regression" else "mu"):
           (SNR_GRID if row["task"] == "regression" else MU_GRID_CLASSIFICATION)}
    for name, row in _PRESET_ROWS.items()
}


def preset(key, /, **overrides):
    """ScenarioConfig for a table row, with optional field overrides."""
    try:
        row = dict(_PRESET_ROWS[key])
    except KeyError:
        raise KeyError(f"unknown preset {key!r}; available: {', '.join(sorted(_PRESET_ROWS))}") from None
    row["name"] = key
    if row["p"] == 500:
        row["V"] = 20  # runtime guard for the widest designs
    row.update(overrides)
    return ScenarioConfig(**row)


def preset_names():
    return sorted(_PRESET_ROWS)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    contaminated: np.ndarray
    beta_true: np.ndarray | None
    sigma: float = math.nan

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], y=self.y[idx], contaminated=self.contaminated[idx])


def draw_beta(cfg, rng):
    """s0 non-zero N(1, 1) coefficients at uniformly chosen positions."""
    beta = np.zeros(cfg.p)
    support = rand.sample_subset(rng, cfg.p, cfg.s0)
    beta[support] = rand.sample_normal(rng, 1.0, 1.0, size=cfg.s0)
    return beta


def _design(cfg, rng, size):
    return rand.sample_normal(rng, cfg.mu, 1.0, size=(size, cfg.p))


def gen_regression(cfg, rng, size, beta=None):
    """X ~ N_p(mu 1, I), y = X beta + eps with sigma^2 = |beta|^2 / snr.

    ``snr=None`` or ``inf`` gives noiseless responses.
    """
    if cfg.task != "regression":
        raise ValueError("gen_regression needs a regression scenario")
    if cfg.snr is not None and not cfg.snr > 0:
        raise ValueError(f"snr must be > 0, got {cfg.snr}")
    if size <= 0:
        raise ValueError(f"size must be positive, got {size}")
    if beta is None:
        beta = draw_beta(cfg, rng)
    X = _design(cfg, rng, size)
    if cfg.snr is None or math.isinf(cfg.snr):
        sigma = 0.0
    else:
        sigma = math.sqrt(float(beta @ beta) / cfg.snr)
    eps = rand.sample_normal(rng, 0.0, sigma, size=size)
    return Dataset(X, X @ beta + eps, np.zeros(size, dtype=bool), beta.copy(), sigma)


def gen_classification(cfg, rng, size, beta=None):
    """Bernoulli responses with logits X beta centred by their sample mean."""
    if cfg.task != "classification":
        raise ValueError("gen_classification needs a classification scenario")
    if size <= 0:
        raise ValueError(f"size must be positive, got {size}")
    if beta is None:
        beta = draw_beta(cfg, rng)
    X = _design(cfg, rng, size)
    eta = X @ beta
    eta = eta - eta.mean()
    prob = 1.0 / (1.0 + np.exp(-eta))
    y = (rng.uniform(size) < prob).astype(float)
    return Dataset(X, y, np.zeros(size, dtype=bool), beta.copy(), math.nan)


def generate(cfg, rng, size, beta=None):
    if cfg.task == "regression":
        return gen_regression(cfg, rng, size, beta)
    return gen_classification(cfg, rng, size, beta)


def inject_contamination(data, scheme, r, gross_value, rng):
    """Return a contaminated copy of ``data``; the input is left untouched.

    case_y: Binomial(n, r) responses set to ``gross_value``.
    cell_x: floor(r n) rows, floor(0.1 p) cells each set to ``gross_value``.
    """
    if not 0.0 <= r < 1.0:
        raise ValueError(f"r must lie in [0, 1), got {r}")
    if scheme not in CONTAM_SCHEMES:
        raise ValueError(f"unknown contamination scheme {scheme!r}")
    n, p = data.X.shape
    if scheme == "cell_x" and r > 0 and floor_count(0.1 * p) == 0:
        raise ValueError(f"cell_x contamination with p={p} would change no cells (floor(0.1 p) = 0)")
    X = data.X.copy()
    y = data.y.copy()
    flags = data.contaminated.copy()
    if r == 0:
        return replace(data, X=X, y=y, contaminated=flags)
    if scheme == "case_y":
        m = rand.sample_binomial(rng, n, r)
        rows = rand.sample_subset(rng, n, m)
        y[rows] = gross_value
    else:
        m = floor_count(r * n)
        rows = rand.sample_subset(rng, n, m)
        n_cells = floor_count(0.1 * p)
        for i in rows:
            X[i, rand.sample_subset(rng, p, n_cells)] = gross_value
    flags[rows] = True
    return replace(data, X=X, y=y, contaminated=flags)


def gen_cauchy_mixture_regression(n, p, mix, rng, beta=None, mu=2.0):
    """Linear model whose errors are standard Cauchy with probability ``mix``
    and N(0, 1) otherwise; Cauchy-error instances are flagged."""
    if not 0.0 <= mix <= 1.0:
        raise ValueError(f"mix must lie in [0, 1], got {mix}")
    if beta is None:
        beta = np.zeros(p)
        beta[:] = rand.sample_normal(rng, 1.0, 1.0, size=p)
    X = rand.sample_normal(rng, mu, 1.0, size=(n, p))
    heavy = rng.uniform(n) < mix
    eps = rand.sample_normal(rng, 0.0, 1.0, size=n)
    eps[heavy] = rand.sample_cauchy(rng, 0.0, 1.0, size=int(heavy.sum()))
    return Dataset(X, X @ beta + eps, heavy, np.asarray(beta, dtype=float).copy(), 1.0)


def dataset_csv_text(data):
    """CSV with header x1..xp,y,contaminated and 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j + 1}" for j in range(data.p)] + ["y", "contaminated"])
    for row, yi, flag in zip(data.X, data.y, data.contaminated):
        writer.writerow([format(v, ".17g") for v in row] + [format(yi, ".17g"), int(flag)])
    return buf.getvalue()


def write_dataset_csv(data, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(dataset_csv_text(data))


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["y", "contaminated"] or not all(h == f"x{j + 1}" for j, h in enumerate(header[:-2])):
            raise ValueError(f"{path}: header must be x1..xp,y,contaminated")
        rows = [r for r in reader if r]
    p = len(header) - 2
    arr = np.array([[float(v) for v in r[:p + 1]] for r in rows], dtype=float).reshape(len(rows), p + 1)
    flags = np.array([r[p + 1].strip() in ("1", "true", "True") for r in rows], dtype=bool)
    return Dataset(arr[:, :p].copy(), arr[:, p].copy(), flags, None)
