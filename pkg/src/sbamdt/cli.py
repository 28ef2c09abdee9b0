"""Command-line entry point.

Subcommands: simulate, fit, predict, report, diag. Options come from three
layers, later layers overriding earlier ones: built-in defaults, a --config
file of KEY=value lines (# starts a comment), then KEY=value pairs on the
command line. --seed and --out are shorthands for the keys of the same name.
Unknown keys are rejected.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Set SBAMDT_THREADS to run that many chains concurrently during fit.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import gp_diag, metrics, plots, synthdata
from .data import Dataset
from .model import (KNOT_SALT, MASK64, FitConfig, feature_importance,
                    fit, load, predict, resolve_hyper, save)
from .priors import Hyperparams, SplitContext, sample_tree_from_prior
from .sampler import MoveStats
from .spectral import KnotSystem


class ConfigError(ValueError):
    pass


# ---- option schema ---------------------------------------------------------

# key -> (type tag, default); type tags: int, float, str, bool, floats, ints
_HYPER = {
    "n_trees": ("int", None), "gamma": ("float", None), "delta": ("float", None),
    "p_m": ("float", None), "q": ("float", None), "soft_levels": ("floats", None),
    "psi": ("floats", None), "s_a": ("float", None), "s_b": ("float", None),
    "alpha_g": ("float", None), "beta_g": ("float", None), "mh_d": ("float", None),
    "alpha_mu": ("float", None), "beta_mu": ("float", None), "v": ("float", None),
    "lambda": ("float", None), "n_knots": ("int", None),
    "embedding_dim": ("int", None), "zero_tol": ("float", None),
    "cutoff_grid_size": ("int", None), "move_probs": ("floats", None),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "simulate": {
        "scenario": ("str", "ushape"), "n_train": ("int", 300),
        "n_test": ("int", 150), "noise_sd": ("float", 0.1),
        "n_features": ("int", 10), "length_scale": ("float", 0.5),
        "variance": ("float", 1.0), "seed": ("int", 0), "out": ("str", "data"),
    },
    "fit": {
        "train_csv": ("str", None), "variant": ("str", "sk"),
        "ablation": ("str", "full"), "n_iter": ("int", 3000),
        "burn_in": ("int", 1500), "thin": ("int", 1), "n_chains": ("int", 1),
        "seed": ("int", 0), "out": ("str", "model"), **_HYPER,
    },
    "predict": {
        "model_dir": ("str", None), "data_csv": ("str", None),
        "include_noise": ("bool", True), "out": ("str", "predictions"),
        "seed": ("int", 0),
    },
    "report": {
        "model_dir": ("str", None), "test_csv": ("str", None),
        "out": ("str", "report"), "seed": ("int", 0),
    },
    "diag": {
        "train_csv": ("str", None), "variant": ("str", "sk"),
        "n_diag_trees": ("int", 2), "n_diag_points": ("int", 4),
        "n_draws": ("int", 20000), "max_depth": ("int", 2),
        "seed": ("int", 0), "out": ("str", "diag"),
    },
}


def _parse_value(key: str, raw: str, tag: str):
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if tag == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def read_config_file(path) -> dict[str, str]:
    """Flat KEY=value lines; blank lines and # comments are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected KEY=value, got {line!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve_options(sub: str, config_path, overrides: list[str],
                    seed: int | None, out: str | None) -> dict:
    schema = SCHEMAS[sub]
    values = {k: default for k, (_, default) in schema.items()}
    pairs: list[tuple[str, str]] = []
    if config_path is not None:
        pairs.extend(read_config_file(config_path).items())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"expected KEY=value, got {item!r}")
        key, _, value = item.partition("=")
        pairs.append((key.strip(), value.strip()))
    for key, raw in pairs:
        if key not in schema:
            raise ConfigError(f"unknown option {key!r} for {sub}")
        values[key] = _parse_value(key, raw, schema[key][0])
    if seed is not None:
        values["seed"] = seed
    if out is not None:
        values["out"] = out
    return values


def _require(cfg: dict, key: str) -> str:
    if cfg.get(key) in (None, ""):
        raise ConfigError(f"option {key} is required")
    return cfg[key]


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hyper_from(cfg: dict) -> Hyperparams:
    kwargs = {}
    for key in _HYPER:
        if cfg.get(key) is None:
            continue
        field = "lambda_" if key == "lambda" else key
        kwargs[field] = cfg[key]
    return Hyperparams(**kwargs)


def _write_predictions(summary: dict, path: Path) -> None:
    import pandas as pd

    n = len(summary["mean"])
    frame = pd.DataFrame({
        "id": np.arange(n),
        "mean": summary["mean"],
        "sd": summary["sd"],
        "q05": summary["q05"],
        "q95": summary["q95"],
    })
    frame.to_csv(path, index=False)


# ---- subcommands -----------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    if cfg["scenario"] not in synthdata.SCENARIOS:
        raise ConfigError(f"scenario must be one of {synthdata.SCENARIOS}")
    out = _out_dir(cfg)
    train, test = synthdata.simulate(
        cfg["scenario"], cfg["n_train"], cfg["n_test"], cfg["seed"],
        noise_sd=cfg["noise_sd"], n_features=cfg["n_features"],
        length_scale=cfg["length_scale"], variance=cfg["variance"])
    train.to_csv(out / "train.csv")
    test.to_csv(out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({train.n} rows)")
    print(f"wrote {out / 'test.csv'} ({test.n} rows)")
    return 0


def _print_move_summary(stats: list[MoveStats]) -> None:
    agg = MoveStats()
    for s in stats:
        for key, val in asdict(s).items():
            setattr(agg, key, getattr(agg, key) + val)
    for move in ("grow", "prune", "change", "alpha"):
        prop = getattr(agg, f"{move}_proposed")
        acc = getattr(agg, f"{move}_accepted")
        if prop:
            print(f"{move}: {acc}/{prop} accepted ({acc / prop:.1%})")


def cmd_fit(cfg: dict) -> int:
    train = Dataset.from_csv(_require(cfg, "train_csv"))
    config = FitConfig(variant=cfg["variant"], ablation=cfg["ablation"],
                       n_iter=cfg["n_iter"], burn_in=cfg["burn_in"],
                       thin=cfg["thin"], n_chains=cfg["n_chains"],
                       seed=cfg["seed"], hyper=_hyper_from(cfg))
    model = fit(train, config)
    out = _out_dir(cfg)
    save(model, out)
    print(f"fit {config.variant}/{config.ablation}: {model.n_states} snapshots "
          f"from {config.n_chains} chain(s), {train.n} rows")
    _print_move_summary(model.stats)
    print(f"wrote {out / 'header.json'} and {out / 'snapshots.ndjson'}")
    return 0


def cmd_predict(cfg: dict) -> int:
    model = load(_require(cfg, "model_dir"))
    data = Dataset.from_csv(_require(cfg, "data_csv"), require_y=False)
    draws = predict(model, data, include_noise=cfg["include_noise"])
    out = _out_dir(cfg)
    _write_predictions(draws.summarize(), out / "predictions.csv")
    print(f"wrote {out / 'predictions.csv'} ({data.n} rows, "
          f"{model.n_states} posterior draws)")
    return 0


def cmd_report(cfg: dict) -> int:
    model = load(_require(cfg, "model_dir"))
    test = Dataset.from_csv(_require(cfg, "test_csv"))
    draws = predict(model, test, include_noise=True)
    summary = draws.summarize()
    if test.f_true is not None:
        truth, ensemble, target = test.f_true, draws.f, "f_true"
    else:
        truth, ensemble, target = test.y, draws.y, "y"
    report = metrics.metric_report(summary["mean"], ensemble, truth)
    report.update({"target": target, "n_test": test.n,
                   "n_states": model.n_states})

    out = _out_dir(cfg)
    (out / "metrics.json").write_text(json.dumps(report, indent=1,
                                                 sort_keys=True) + "\n")
    import pandas as pd

    pd.DataFrame([report]).to_csv(out / "metrics.csv", index=False)
    _write_predictions(summary, out / "predictions.csv")
    importance = feature_importance(model)
    pd.DataFrame({"feature": list(importance),
                  "share": list(importance.values())}
                 ).to_csv(out / "importance.csv", index=False)
    figures = [
        plots.pred_vs_truth(truth, summary["mean"], summary["sd"],
                            out / "pred_vs_truth.png"),
        plots.importance_bars(importance, out / "importance.png"),
        plots.residual_hist(truth, summary["mean"], out / "residuals.png"),
    ]
    print(f"target={target} rmspe={report['rmspe']:.6g} "
          f"mape={report['mape']:.6g} crps={report['crps']:.6g}")
    print(f"wrote metrics.json, metrics.csv, predictions.csv, importance.csv "
          f"and {len(figures)} figures under {out}")
    return 0


def cmd_diag(cfg: dict) -> int:
    train = Dataset.from_csv(_require(cfg, "train_csv"))
    variant = cfg["variant"]
    if variant not in ("sk", "s2"):
        raise ConfigError("variant must be sk or s2")
    if cfg["n_diag_points"] < 2 or cfg["n_diag_points"] > train.n:
        raise ConfigError("n_diag_points must be in [2, n_train]")
    y = train.y
    y_scaled = (y - y.min()) / (y.max() - y.min()) - 0.5
    hyper = resolve_hyper(Hyperparams(), y_scaled, train.d_m, train.p,
                          "full", variant)
    knot_rng = np.random.default_rng((cfg["seed"] ^ KNOT_SALT) & MASK64)
    t = min(hyper.n_knots, train.n)
    idx = np.sort(knot_rng.choice(train.n, size=t, replace=False))
    system = KnotSystem.from_training(train.structured, train.unstructured, idx,
                                      embedding_dim=hyper.embedding_dim,
                                      zero_tol=hyper.zero_tol)
    s_std = system.standardize(train.structured)
    grids = [np.linspace(train.unstructured[:, j].min(),
                         train.unstructured[:, j].max(),
                         hyper.cutoff_grid_size) for j in range(train.p)]
    ctx = SplitContext(system, grids, hyper.p_m)
    if variant == "s2":
        masses = np.array([hyper.s_a, hyper.s_b])
        masses = masses / masses.sum()
        alpha = hyper.alpha_g / hyper.beta_g
    else:
        masses = np.asarray(hyper.psi, dtype=float)
        masses = masses / masses.sum()
        alpha = None
    sigma_mu2 = hyper.beta_mu / (hyper.alpha_mu - 1.0)

    rng = np.random.default_rng(cfg["seed"])
    trees = []
    for _ in range(200):
        trees = [sample_tree_from_prior(system, ctx, s_std, train.unstructured,
                                        hyper.gamma, hyper.delta, masses,
                                        sigma_mu2, rng,
                                        max_depth=cfg["max_depth"], alpha=alpha)
                 for _ in range(cfg["n_diag_trees"])]
        if any(tree.internal_nodes() for tree in trees):
            break

    npts = cfg["n_diag_points"]
    s_pts = train.structured[:npts]
    x_pts = train.unstructured[:npts]
    rep_ta = gp_diag.mc_prior_ta(trees, s_pts, x_pts, hyper, cfg["n_draws"], rng)
    rep_t = gp_diag.mc_prior_t(trees, s_pts, x_pts, hyper, masses,
                               cfg["n_draws"], rng)
    out = _out_dir(cfg)
    payload = {}
    for name, rep in (("prior_given_structure_and_codes", rep_ta),
                      ("prior_given_structure", rep_t)):
        ok = rep.within(3.0)
        payload[name] = {**rep.as_dict(), "within_3se": ok}
        print(f"{name}: max |analytic - mc| = {rep.max_abs_dev:.3e} "
              f"psd={rep.psd} within 3 SE: {'yes' if ok else 'NO'}")
    (out / "diag.json").write_text(json.dumps(payload, indent=1,
                                              sort_keys=True) + "\n")
    print(f"wrote {out / 'diag.json'}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "report": cmd_report,
    "diag": cmd_diag,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; keep those in the
    # validation category instead
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbamdt", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subs.add_parser(name, help=f"{name} options: "
                              + ", ".join(sorted(SCHEMAS[name])))
        sub.add_argument("--config", default=None,
                         help="file of KEY=value lines, # comments allowed")
        sub.add_argument("--seed", type=int, default=None,
                         help="override the seed option")
        sub.add_argument("--out", default=None,
                         help="override the output directory option")
        sub.add_argument("overrides", nargs="*", metavar="KEY=value",
                         help="direct option overrides")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_options(args.command, args.config, args.overrides,
                              args.seed, args.out)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
