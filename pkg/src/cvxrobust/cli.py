"""Command-line entry point: reproducible train / certify / attack runs.

Every run resolves its configuration (defaults <- config file <- flags, flags
win), writes the frozen result as ``config.json`` next to its outputs, and
derives all randomness from one root seed.  Exit codes: 0 success, 1 numerical
failure, 2 usage error.
"""

import argparse
import csv
import json
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import data as data_mod
from . import polynet, polytrain, relutrain
from .conic.solver import SolverSettings
from .errors import DomainError, NumericalError, ParseError

_EPS_UNIT_NOTE = "epsilon is applied in standardized feature units"


def _seed_for(root_seed, component):
    """Deterministic per-component seed split from the root seed."""
    return (int(root_seed) * 2654435761 + zlib.crc32(component.encode())) % (2**31)


_DEFAULTS = {
    "train-poly": {
        "dataset": None, "label_column": None, "positive_label": None,
        "test_fraction": 0.0, "seed": 0, "standardize": True,
        "beta": 0.01, "r": 0.0, "tol": 1e-5, "max_iters": 50000,
        "output_dir": "run-train-poly",
    },
    "train-relu": {
        "dataset": None, "label_column": None, "positive_label": None,
        "test_fraction": 0.0, "seed": 0, "standardize": True,
        "beta": 0.01, "r": 0.0, "p": 1.0, "patterns": 500,
        "rho": 100.0, "max_epochs": 2000, "feas_tol": 1e-4,
        "output_dir": "run-train-relu",
    },
    "certify": {
        "dataset": None, "label_column": None, "positive_label": None,
        "test_fraction": 0.0, "seed": 0, "standardize": True,
        "model": None, "tol": 1e-6,
        "output_dir": "run-certify",
    },
    "attack": {
        "dataset": None, "label_column": None, "positive_label": None,
        "test_fraction": 0.0, "seed": 0, "standardize": True,
        "model": None, "eps_grid": [0.0, 0.5, 1.0, 1.5, 2.0],
        "output_dir": "run-attack",
    },
    "fit-activation": {
        "interval": [-5.0, 5.0], "grid_points": 10001, "seed": 0,
        "output_dir": "run-fit-activation",
    },
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cvxrobust",
        description="Convex adversarial training and certification for two-layer networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_data=True):
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        if with_data:
            p.add_argument("--dataset", help="CSV or .npz dataset path")
            p.add_argument("--label-column", dest="label_column")
            p.add_argument("--positive-label", dest="positive_label")
            p.add_argument("--test-fraction", dest="test_fraction", type=float)
            p.add_argument("--no-standardize", dest="standardize", action="store_false", default=None)

    p = sub.add_parser("train-poly", help="SDP training of a polynomial-activation network")
    add_common(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--r", type=float, help="robust radius; 0 selects standard training")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)

    p = sub.add_parser("train-relu", help="convex gated-linear ReLU training")
    add_common(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--p", help="robust-ball norm order: 1, 2, or inf")
    p.add_argument("--patterns", type=int, help="sign patterns to sample")
    p.add_argument("--rho", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int,
                   help="L-BFGS iteration cap per smoothing stage")
    p.add_argument("--feas-tol", dest="feas_tol", type=float)

    p = sub.add_parser("certify", help="decision-boundary distances for a trained model")
    add_common(p)
    p.add_argument("--model", help="quadratic classifier JSON")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("attack", help="FGSM robust-accuracy sweep")
    add_common(p)
    p.add_argument("--model", help="model JSON (classifier, network, or gated model)")
    p.add_argument("--eps-grid", dest="eps_grid", help="comma-separated attack magnitudes")

    p = sub.add_parser("fit-activation", help="least-squares polynomial fit of ReLU")
    add_common(p, with_data=False)
    p.add_argument("--interval", help="comma-separated lo,hi")
    p.add_argument("--grid-points", dest="grid_points", type=int)
    return parser


def _resolve_config(command, args):
    cfg = dict(_DEFAULTS[command])
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise DomainError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if isinstance(cfg.get("eps_grid"), str):
        cfg["eps_grid"] = [float(t) for t in cfg["eps_grid"].split(",") if t.strip()]
    if isinstance(cfg.get("interval"), str):
        parts = [float(t) for t in cfg["interval"].split(",")]
        if len(parts) != 2:
            raise DomainError("interval must be lo,hi")
        cfg["interval"] = parts
    if isinstance(cfg.get("p"), str):
        cfg["p"] = float("inf") if cfg["p"] == "inf" else float(cfg["p"])
    env_out = os.environ.get("CVXROBUST_OUTPUT_DIR")
    if env_out:
        cfg["output_dir"] = env_out
    return cfg


def _freeze(cfg, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    dump = {k: ("inf" if v == float("inf") else v) for k, v in cfg.items()}
    with open(outdir / "config.json", "w") as fh:
        json.dump(dump, fh, indent=2, sort_keys=True)


def _load_dataset(cfg):
    path = cfg.get("dataset")
    if not path:
        raise DomainError("a dataset path is required")
    if str(path).endswith(".npz"):
        ds = data_mod.Dataset.load(path)
    else:
        if cfg.get("label_column") is None or cfg.get("positive_label") is None:
            raise DomainError("CSV datasets need --label-column and --positive-label")
        ds = data_mod.load_csv(path, cfg["label_column"], cfg["positive_label"])
    frac = cfg.get("test_fraction", 0.0)
    if frac and frac > 0:
        tr, te = data_mod.split(ds, frac, seed=_seed_for(cfg["seed"], "split"))
    else:
        tr, te = ds, ds
    if cfg.get("standardize", True):
        tr, te, _ = data_mod.standardize(tr, te)
    return tr, te


def _load_model(path):
    with open(path) as fh:
        obj = json.load(fh)
    kind = obj.get("kind")
    if kind == "quadratic_classifier":
        return polynet.QuadraticClassifier.from_json_dict(obj)
    if kind == "two_layer_network":
        return polynet.TwoLayerNetwork.from_json_dict(obj)
    if kind == "gated_linear_model":
        return relutrain.recover_weights(relutrain.GatedLinearModel.from_json_dict(obj))
    raise DomainError(f"unrecognized model kind {kind!r} in {path}")


def cmd_train_poly(cfg, outdir):
    tr, te = _load_dataset(cfg)
    settings = SolverSettings(tol=cfg["tol"], max_iters=cfg["max_iters"])
    config = polytrain.TrainConfig(beta=cfg["beta"], r=cfg["r"], solver=settings)
    result = polytrain.train(tr, config)
    clf = result["classifier"]
    clf.save(outdir / "classifier.json")
    net = polynet.neural_decomposition(result["blocks"].Z)
    net_neg = polynet.neural_decomposition(result["blocks"].Zp)
    polynet.classifier_from_neurons(net, net_neg, clf.coeffs, dim=clf.dim)  # consistency check
    full = polynet.TwoLayerNetwork(
        [(u, a) for u, a in net] + [(u, -a) for u, a in net_neg], clf.coeffs
    )
    full.save(outdir / "network.json")
    report = dict(result["report"])
    report["train_accuracy"] = float((np.sign(polynet.evaluate(clf, tr.X)) == tr.y).mean())
    if te is not tr:
        report["test_accuracy"] = float((np.sign(polynet.evaluate(clf, te.X)) == te.y).mean())
    cert = result["certificate"]
    if cert is not None:
        report["per_example"] = {
            "lam": cert.lam.tolist(),
            "delta": cert.delta.tolist(),
        }
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return 0


def cmd_train_relu(cfg, outdir):
    tr, _ = _load_dataset(cfg)
    pats = relutrain.sample_sign_patterns(
        tr.X, cfg["patterns"], seed=_seed_for(cfg["seed"], "patterns")
    )
    pcfg = relutrain.PenaltyConfig(
        rho=cfg["rho"],
        max_epochs=cfg["max_epochs"],
        feas_tol=cfg["feas_tol"],
    )
    model = relutrain.train_convex_relu(
        tr.X, tr.y, pats, beta=cfg["beta"], r=cfg["r"], p=cfg["p"], cfg=pcfg
    )
    model.save(outdir / "model.json")
    relutrain.recover_weights(model).save(outdir / "network.json")
    with open(outdir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective", "hinge", "regularizer", "max_violation"])
        for rec in model.objective_trace:
            w.writerow([rec["epoch"], repr(rec["objective"]), repr(rec["hinge"]),
                        repr(rec["regularizer"]), repr(rec["max_violation"])])
    with open(outdir / "report.json", "w") as fh:
        json.dump({"residual": model.residual, "feasible": model.feasible,
                   "final_objective": model.objective_trace[-1]["objective"]}, fh, indent=2)
    if not model.feasible:
        print(f"constraint residual {model.residual:.3e} above tolerance", file=sys.stderr)
        return 1
    return 0


def cmd_certify(cfg, outdir):
    if not cfg.get("model"):
        raise DomainError("certify needs --model")
    clf = _load_model(cfg["model"])
    if not isinstance(clf, polynet.QuadraticClassifier):
        raise DomainError("certify requires a quadratic classifier model")
    _, te = _load_dataset(cfg)
    if te.d != clf.dim:
        raise DomainError(f"model dimension {clf.dim} != dataset dimension {te.d}")
    settings = SolverSettings(tol=cfg["tol"])
    dists, correct = polytrain.decision_distances(clf, te.X, te.y, settings=settings)
    with open(outdir / "distances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "correct", "distance"])
        for k in range(te.n):
            ok = bool(correct[k])
            w.writerow([k, int(te.y[k]), int(ok), repr(float(dists[k])) if ok else ""])
    certified = dists[correct]
    finite = certified[np.isfinite(certified)]
    summary = {
        "n": int(te.n),
        "n_certified": int(certified.size),
        "mean_distance": float(finite.mean()) if finite.size else None,
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def cmd_attack(cfg, outdir):
    if not cfg.get("model"):
        raise DomainError("attack needs --model")
    grid = cfg["eps_grid"]
    if any(e < 0 for e in grid):
        raise DomainError("eps grid values must be nonnegative")
    model = _load_model(cfg["model"])
    _, te = _load_dataset(cfg)
    report = attack_mod.robust_accuracy(
        model, te, grid,
        model_id=str(cfg["model"]),
        metadata={"note": _EPS_UNIT_NOTE, "seed": cfg["seed"]},
    )
    report.save_csv(outdir / "attack.csv")
    report.save_json(outdir / "attack.json")
    return 0


def cmd_fit_activation(cfg, outdir):
    lo, hi = cfg["interval"]
    coeffs = polynet.fit_relu_poly(interval=(lo, hi), grid_points=cfg["grid_points"])
    with open(outdir / "coeffs.json", "w") as fh:
        json.dump({"a": coeffs.a, "b": coeffs.b, "c": coeffs.c,
                   "interval": [lo, hi], "grid_points": cfg["grid_points"]}, fh, indent=2)
    return 0


_COMMANDS = {
    "train-poly": cmd_train_poly,
    "train-relu": cmd_train_relu,
    "certify": cmd_certify,
    "attack": cmd_attack,
    "fit-activation": cmd_fit_activation,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args.command, args)
        outdir = Path(cfg["output_dir"])
        _freeze(cfg, outdir)
        return _COMMANDS[args.command](cfg, outdir)
    except (DomainError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        try:
            with open(Path(cfg.get("output_dir", ".")) / "diagnostics.json", "w") as fh:
                json.dump({"error": str(exc)}, fh, indent=2)
        except OSError:
            pass
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
