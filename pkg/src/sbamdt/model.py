"""Fit, predict and persist the additive gated-tree model.

The response is rescaled to [-0.5, 0.5] before sampling and every reported
quantity is mapped back to the original scale. A fitted model is a stack of
posterior snapshots (tree structures, decisions, leaf weights, variances)
plus the knot system needed to evaluate them at new points.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .priors import Hyperparams, calibrate_lambda, multivariate_split_prob
from .sampler import ABLATIONS, VARIANTS, MoveStats, Sampler, run_chain
from .spectral import KnotSystem
from .trees import DecisionTree

SEED_STRIDE = 0x9E3779B97F4A7C15
KNOT_SALT = 0xD1B54A32D192ED03
PREDICT_SALT = 0x8BB84B93962EACC9
MASK64 = (1 << 64) - 1

HEADER_NAME = "header.json"
SNAPSHOT_NAME = "snapshots.ndjson"


def chain_seed(seed: int, chain: int) -> int:
    return (seed ^ (chain * SEED_STRIDE)) & MASK64


@dataclass
class FitConfig:
    variant: str = "sk"
    ablation: str = "full"
    n_iter: int = 3000
    burn_in: int = 1500
    thin: int = 1
    n_chains: int = 1
    seed: int = 0
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.n_iter < 1 or not (0 <= self.burn_in < self.n_iter):
            raise ValueError("need n_iter >= 1 and 0 <= burn_in < n_iter")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")
        if not (0 <= self.seed <= MASK64):
            raise ValueError("seed must fit in 64 bits")


@dataclass
class FittedModel:
    config: FitConfig
    hyper: Hyperparams          # resolved (no None fields)
    y_min: float
    y_max: float
    system: KnotSystem
    knot_indices: np.ndarray
    states: list[dict]          # posterior snapshots, chain-major order
    stats: list[MoveStats]
    d_m: int
    p: int

    @property
    def y_range(self) -> float:
        return self.y_max - self.y_min

    @property
    def n_states(self) -> int:
        return len(self.states)

    def scale_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_min) / self.y_range - 0.5

    def unscale_f(self, f_scaled):
        return (np.asarray(f_scaled, dtype=float) + 0.5) * self.y_range + self.y_min

    def external_sigma2(self, state) -> float:
        """Noise variance on the original response scale."""
        return state["sigma2"] * self.y_range ** 2


def resolve_hyper(hyper: Hyperparams, y_scaled: np.ndarray, d_m: int, p: int,
                  ablation: str, variant: str = "sk") -> Hyperparams:
    """Fill data-dependent hyperparameter defaults on the scaled response."""
    out = Hyperparams(**asdict(hyper))
    var = float(np.var(y_scaled, ddof=1))
    if var <= 0:
        raise ValueError("response is constant; nothing to fit")
    if out.beta_mu is None:
        out.beta_mu = 0.5 * var / out.n_trees
    if out.lambda_ is None:
        out.lambda_ = calibrate_lambda(var, out.v)
    if ablation == "no_multivariate":
        out.p_m = 0.0
    elif out.p_m is None:
        out.p_m = multivariate_split_prob(d_m, p)
    if out.psi is None:
        k = 1 if variant == "s2" else out.k_levels
        out.psi = tuple([1.0] * (k + 1))
    return out


def fit(dataset: Dataset, config: FitConfig) -> FittedModel:
    """Run the backfitting sampler and return the posterior snapshot stack."""
    config.validate()
    if dataset.y is None:
        raise ValueError("dataset has no response column")
    if not np.all(np.isfinite(dataset.y)):
        raise ValueError("response contains non-finite values")
    y_min, y_max = float(dataset.y.min()), float(dataset.y.max())
    if y_max <= y_min:
        raise ValueError("response is constant; nothing to fit")
    y_scaled = (dataset.y - y_min) / (y_max - y_min) - 0.5

    hyper = resolve_hyper(config.hyper, y_scaled, dataset.d_m, dataset.p,
                          config.ablation, config.variant)

    knot_rng = np.random.default_rng((config.seed ^ KNOT_SALT) & MASK64)
    t = min(hyper.n_knots, dataset.n)
    if t < 2:
        raise ValueError("need at least two knots (and two training rows)")
    knot_indices = np.sort(knot_rng.choice(dataset.n, size=t, replace=False))
    system = KnotSystem.from_training(dataset.structured, dataset.unstructured,
                                      knot_indices,
                                      embedding_dim=hyper.embedding_dim,
                                      zero_tol=hyper.zero_tol)
    s_std = system.standardize(dataset.structured)

    def one_chain(i: int):
        rng = np.random.default_rng(chain_seed(config.seed, i))
        sampler = Sampler(y_scaled, s_std, dataset.unstructured, system, hyper,
                          variant=config.variant, ablation=config.ablation, rng=rng)
        states = run_chain(sampler, config.n_iter, config.burn_in, config.thin)
        for st in states:
            st["chain"] = i
        return states, sampler.stats

    n_workers = _thread_cap(config.n_chains)
    if n_workers > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one_chain, range(config.n_chains)))
    else:
        results = [one_chain(i) for i in range(config.n_chains)]

    states = [st for chain_states, _ in results for st in chain_states]
    stats = [s for _, s in results]
    return FittedModel(config=config, hyper=hyper, y_min=y_min, y_max=y_max,
                       system=system, knot_indices=knot_indices, states=states,
                       stats=stats, d_m=dataset.d_m, p=dataset.p)


def _thread_cap(n_chains: int) -> int:
    raw = os.environ.get("SBAMDT_THREADS", "1")
    try:
        cap = max(1, int(raw))
    except ValueError:
        cap = 1
    return min(cap, n_chains)


@dataclass
class PredictiveDraws:
    """Per-snapshot function and response draws on the original scale."""

    f: np.ndarray        # (n_states, n_points)
    y: np.ndarray        # f plus per-snapshot Gaussian noise
    sigma2: np.ndarray   # external-scale noise variance per snapshot

    def summarize(self) -> dict:
        return {
            "mean": self.f.mean(axis=0),
            "sd": self.f.std(axis=0, ddof=1) if self.f.shape[0] > 1
                  else np.zeros(self.f.shape[1]),
            "q05": np.quantile(self.y, 0.05, axis=0),
            "q95": np.quantile(self.y, 0.95, axis=0),
        }


def state_trees(state: dict, system: KnotSystem) -> list[DecisionTree]:
    alphas = state.get("alpha")
    out = []
    for h, nodes in enumerate(state["trees"]):
        alpha = alphas[h] if alphas is not None else None
        out.append(DecisionTree.from_snapshot(nodes, system, alpha=alpha))
    return out


def _state_levels(model: FittedModel, tree: DecisionTree) -> np.ndarray:
    if model.config.variant == "s2":
        return np.array([model.hyper.q * tree.alpha])
    return model.hyper.q * np.asarray(model.hyper.soft_levels, dtype=float)


def predict(model: FittedModel, dataset: Dataset,
            include_noise: bool = True) -> PredictiveDraws:
    """Evaluate every posterior snapshot at the given points."""
    if model.n_states == 0:
        raise ValueError("model holds no posterior snapshots")
    if dataset.p != model.p:
        raise ValueError(f"expected {model.p} unstructured features, got {dataset.p}")
    if dataset.d_m != model.d_m:
        raise ValueError(f"expected {model.d_m} structured coordinates, got {dataset.d_m}")
    s_std = model.system.standardize(dataset.structured)
    x = dataset.unstructured
    n_pts = dataset.n
    memo: dict = {}
    f_scaled = np.zeros((model.n_states, n_pts))
    sigma2 = np.zeros(model.n_states)
    for si, state in enumerate(model.states):
        total = np.zeros(n_pts)
        for tree in state_trees(state, model.system):
            levels = _state_levels(model, tree)
            total += tree.predict_points(s_std, x, levels, memo=memo)
        f_scaled[si] = total
        sigma2[si] = state["sigma2"]
    f = model.unscale_f(f_scaled)
    rng = np.random.default_rng((model.config.seed ^ PREDICT_SALT) & MASK64)
    noise = rng.standard_normal(f.shape) if include_noise else np.zeros_like(f)
    y = f + noise * (np.sqrt(sigma2)[:, None] * model.y_range)
    return PredictiveDraws(f=f, y=y, sigma2=sigma2 * model.y_range ** 2)


def feature_importance(model: FittedModel) -> dict[str, float]:
    """Average split counts per posterior draw: structured block then x_j."""
    labels = ["structured"] + [f"x_{j + 1}" for j in range(model.p)]
    totals = np.zeros(1 + model.p)
    for state in model.states:
        for nodes in state["trees"]:
            for entry in nodes:
                if entry["is_leaf"]:
                    continue
                rule = entry["rule"]
                if rule["kind"] == "multivariate":
                    totals[0] += 1
                else:
                    totals[1 + int(rule["feature"])] += 1
    totals /= max(model.n_states, 1)
    return dict(zip(labels, totals.tolist()))


# ---- persistence -----------------------------------------------------------


def save(model: FittedModel, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hyper = asdict(model.hyper)
    hyper["soft_levels"] = list(hyper["soft_levels"])
    hyper["psi"] = list(hyper["psi"]) if hyper["psi"] is not None else None
    hyper["move_probs"] = list(hyper["move_probs"])
    header = {
        "format": "sbamdt-model/1",
        "variant": model.config.variant,
        "ablation": model.config.ablation,
        "n_iter": model.config.n_iter,
        "burn_in": model.config.burn_in,
        "thin": model.config.thin,
        "n_chains": model.config.n_chains,
        "seed": model.config.seed,
        "hyper": hyper,
        "y_min": model.y_min,
        "y_max": model.y_max,
        "d_m": model.d_m,
        "p": model.p,
        "structured_mean": model.system.mean.tolist(),
        "structured_std": model.system.std.tolist(),
        "knot_indices": [int(i) for i in model.knot_indices],
        "knot_coords": model.system.coords.tolist(),
        "knot_x": model.system.xvals.tolist(),
        "move_stats": [s.as_dict() for s in model.stats],
    }
    with open(out / HEADER_NAME, "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(out / SNAPSHOT_NAME, "w") as fh:
        for state in model.states:
            fh.write(json.dumps(state, sort_keys=True))
            fh.write("\n")


def load(model_dir) -> FittedModel:
    path = Path(model_dir)
    header_path = path / HEADER_NAME
    if not header_path.exists():
        raise ValueError(f"{model_dir} does not contain {HEADER_NAME}")
    with open(header_path) as fh:
        header = json.load(fh)
    if header.get("format") != "sbamdt-model/1":
        raise ValueError("unrecognized model format")
    hyper_kwargs = dict(header["hyper"])
    hyper_kwargs["soft_levels"] = tuple(hyper_kwargs["soft_levels"])
    if hyper_kwargs["psi"] is not None:
        hyper_kwargs["psi"] = tuple(hyper_kwargs["psi"])
    hyper_kwargs["move_probs"] = tuple(hyper_kwargs["move_probs"])
    hyper = Hyperparams(**hyper_kwargs)
    config = FitConfig(variant=header["variant"], ablation=header["ablation"],
                       n_iter=header["n_iter"], burn_in=header["burn_in"],
                       thin=header["thin"], n_chains=header["n_chains"],
                       seed=header["seed"], hyper=hyper)
    system = KnotSystem.from_standardized(
        np.asarray(header["knot_coords"], dtype=float),
        np.asarray(header["knot_x"], dtype=float),
        np.asarray(header["structured_mean"], dtype=float),
        np.asarray(header["structured_std"], dtype=float),
        embedding_dim=hyper.embedding_dim, zero_tol=hyper.zero_tol)
    states = []
    with open(path / SNAPSHOT_NAME) as fh:
        for line in fh:
            line = line.strip()
            if line:
                states.append(json.loads(line))
    stats = [MoveStats(**d) for d in header.get("move_stats", [])]
    return FittedModel(config=config, hyper=hyper, y_min=header["y_min"],
                       y_max=header["y_max"], system=system,
                       knot_indices=np.asarray(header["knot_indices"], dtype=int),
                       states=states, stats=stats,
                       d_m=header["d_m"], p=header["p"])
