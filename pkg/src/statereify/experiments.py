"""Batch experiment runner: declarative specs, seeded replications,
matched-comparison statistics, and flat CSV emission.

Each experiment is a named grid of conditions; every condition is run for
``replications`` seeds, and model variants within a replication share the
same datasets and the same shared-parameter initialization so that
comparisons are paired. Outputs per run directory:

* ``raw.csv``      one metric value per row
* ``summary.csv``  per-condition mean / SEM / n
* ``meta.json``    the spec plus every effective (including defaulted)
                   hyperparameter
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import zlib
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import __version__
from . import adversarial as adv
from . import attractor as att
from . import ndcore as nd
from . import tasks
from .dae import DenoisingAutoencoder, score_estimate
from .rnn import (
    AttractorReifier,
    SdrnnModel,
    hidden_state_entropy,
    sdrnn_forward,
    trace_states,
)
from .training import (
    TrainSchedule,
    accuracy_from_predictions,
    train_attractor_standalone,
    train_sdrnn,
)

WORKERS_ENV = "REIFY_WORKERS"
MODEL_VARIANTS = ("rnn", "rnn_plus", "sdrnn")


# -- seeding ---------------------------------------------------------------------


def _entropy_component(value):
    if isinstance(value, (int, np.integer)):
        return int(value) & 0xFFFFFFFF
    return zlib.crc32(str(value).encode("utf-8"))


def derive_seed(*components):
    """A stable 32-bit seed from a mixed tuple of ints and strings."""
    ss = np.random.SeedSequence([_entropy_component(c) for c in components])
    return int(ss.generate_state(1)[0])


# -- result schema ---------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    condition: tuple  # ((key, value-string), ...)
    replication: int
    metric: str
    value: float

    def condition_str(self):
        return ";".join(f"{k}={v}" for k, v in self.condition)


def _format_condition_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def make_condition(keys, values):
    return tuple(
        (k, _format_condition_value(v)) for k, v in zip(keys, values)
    )


def condition_lookup(condition, key, cast=str):
    for k, v in condition:
        if k == key:
            return cast(v)
    raise KeyError(key)


# -- statistics ------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    condition: str
    metric: str
    mean: float
    sem: float
    n: int


def sem_stats(rows, correction="plain", variant_key="model"):
    """Per-condition mean and standard error.

    ``plain`` treats replications of each condition independently.
    ``matched`` first subtracts, within every replication, the mean of
    that replication across the variants of ``variant_key`` (all other
    condition fields held fixed), then takes the SEM of the adjusted
    scores; a constant per-replication offset shared by all variants thus
    contributes nothing.
    """
    if correction not in ("plain", "matched"):
        raise ValueError(f"unknown correction {correction!r}")
    values = {}
    for row in rows:
        if row.metric == "failed":
            continue
        values.setdefault((row.condition, row.metric), {})[
            row.replication
        ] = row.value

    out = []
    if correction == "plain":
        for (condition, metric), by_rep in sorted(values.items()):
            vals = np.array([by_rep[r] for r in sorted(by_rep)])
            if len(vals) < 2:
                raise ValueError(
                    "need at least 2 replications to compute an SEM"
                )
            out.append(
                SummaryRow(
                    ";".join(f"{k}={v}" for k, v in condition),
                    metric,
                    float(np.mean(vals)),
                    float(np.std(vals, ddof=1) / np.sqrt(len(vals))),
                    len(vals),
                )
            )
        return out

    # matched: group conditions that differ only in variant_key
    groups = {}
    for (condition, metric), by_rep in values.items():
        rest = tuple((k, v) for k, v in condition if k != variant_key)
        try:
            variant = condition_lookup(condition, variant_key)
        except KeyError:
            raise ValueError(
                f"matched correction requires a {variant_key!r} condition axis"
            )
        groups.setdefault((rest, metric), {})[variant] = (condition, by_rep)

    for (rest, metric), by_variant in sorted(groups.items()):
        reps = None
        for _, by_rep in by_variant.values():
            keys = set(by_rep)
            reps = keys if reps is None else (reps & keys)
        reps = sorted(reps)
        if len(reps) < 2:
            raise ValueError("need at least 2 replications to compute an SEM")
        matrix = np.array(
            [
                [by_variant[v][1][r] for r in reps]
                for v in sorted(by_variant)
            ]
        )  # variants x reps
        adjusted = matrix - matrix.mean(axis=0, keepdims=True)
        for i, variant in enumerate(sorted(by_variant)):
            condition, _ = by_variant[variant]
            out.append(
                SummaryRow(
                    ";".join(f"{k}={v}" for k, v in condition),
                    metric,
                    float(matrix[i].mean()),
                    float(np.std(adjusted[i], ddof=1) / np.sqrt(len(reps))),
                    len(reps),
                )
            )
    return sorted(out, key=lambda r: (r.condition, r.metric))


def paired_gap(rows, metric, variant_key, variant_a, variant_b, where=()):
    """Mean of the per-replication difference (a - b) and its SEM."""
    picked = {}
    for row in rows:
        if row.metric != metric:
            continue
        cond = dict(row.condition)
        if any(cond.get(k) != v for k, v in where):
            continue
        variant = cond.get(variant_key)
        if variant in (variant_a, variant_b):
            picked.setdefault(row.replication, {})[variant] = row.value
    diffs = np.array(
        [
            by_variant[variant_a] - by_variant[variant_b]
            for _, by_variant in sorted(picked.items())
            if variant_a in by_variant and variant_b in by_variant
        ]
    )
    if len(diffs) < 2:
        raise ValueError("need at least 2 paired replications")
    return float(diffs.mean()), float(np.std(diffs, ddof=1) / np.sqrt(len(diffs)))


# -- model construction shared by sequence tasks -----------------------------------


def build_sequence_model(kind, input_dim, params, rep_seed):
    """SDRNN-family model with matched initialization across variants.

    The cell and readout draws depend only on the replication, never on
    the variant; the reifier draw is shared by the two variants that have
    one.
    """
    if kind not in MODEL_VARIANTS:
        raise ValueError(f"unknown model variant {kind!r}")
    cell_seed = derive_seed(rep_seed, "cell")
    reifier = None
    if kind in ("rnn_plus", "sdrnn"):
        reifier = AttractorReifier.init(
            params["hidden_dim"],
            params["attractor_dim"],
            params["sigma"],
            params["iterations"],
            seed=derive_seed(rep_seed, "reifier"),
        )
    return SdrnnModel.init(
        input_dim,
        params["hidden_dim"],
        cell_kind=params["cell"],
        reifier=reifier,
        seed=cell_seed,
    )


def _sequence_schedule(kind, params, learning_rate):
    return TrainSchedule(
        learning_rate=learning_rate,
        max_epochs=params["max_epochs"],
        denoise_start_epoch=params["denoise_start_epoch"],
        loss_routing=params["loss_routing"],
        train_denoise=(kind == "sdrnn"),
        stop_on_perfect_train=params["stop_on_perfect_train"],
    )


def _evaluate_sequence_model(model, datasets, with_entropy):
    metrics = {}
    for name, ds in datasets.items():
        with nd.no_grad():
            pred, trace = sdrnn_forward(model, ds.inputs)
        metrics[f"accuracy_{name}"] = accuracy_from_predictions(
            pred.data, ds.targets
        )
        if with_entropy and name == "novel":
            nats, bits = hidden_state_entropy(trace_states(trace, "hidden"))
            metrics["entropy_nats"] = nats
            metrics["entropy_bits"] = bits
    return metrics


def _train_and_eval_sequence(kind, params, rep_seed, train_ds, test_sets, lr):
    model = build_sequence_model(
        kind, train_ds.inputs.shape[2], params, rep_seed
    )
    schedule = _sequence_schedule(kind, params, lr)
    checkpoint, history = train_sdrnn(
        model, train_ds, schedule, seed=derive_seed(rep_seed, "train", kind)
    )
    checkpoint.restore(model)
    metrics = _evaluate_sequence_model(model, test_sets, params["entropy"])
    metrics["train_accuracy_best"] = checkpoint.train_accuracy
    metrics["best_epoch"] = float(checkpoint.epoch)
    metrics["epochs_run"] = float(len(history))
    return metrics


# -- experiment runners ------------------------------------------------------------


def _run_parity(condition, params, rep_seed):
    kind = condition_lookup(condition, "model")
    train_ds, novel, noisy = tasks.gen_parity(seed=derive_seed(rep_seed, "data"))
    return _train_and_eval_sequence(
        kind,
        params,
        rep_seed,
        train_ds,
        {"novel": novel, "noisy": noisy},
        params["learning_rate"],
    )


def _run_majority(condition, params, rep_seed):
    kind = condition_lookup(condition, "model")
    length = condition_lookup(condition, "length", int)
    train_ds, novel, noisy = tasks.gen_majority(
        length,
        seed=derive_seed(rep_seed, "data", length),
        n_train=params["n_train"],
    )
    return _train_and_eval_sequence(
        kind,
        params,
        rep_seed,
        train_ds,
        {"novel": novel, "noisy": noisy},
        params["learning_rate"],
    )


def _run_reber(condition, params, rep_seed):
    kind = condition_lookup(condition, "model")
    n_train = condition_lookup(condition, "n_train", int)
    train_ds, test_ds = tasks.gen_reber(
        n_train,
        n_test=params["n_test"],
        seed=derive_seed(rep_seed, "data", n_train),
    )
    return _train_and_eval_sequence(
        kind,
        params,
        rep_seed,
        train_ds,
        {"test": test_ds},
        params["learning_rate"],
    )


def _run_symmetry(condition, params, rep_seed):
    kind = condition_lookup(condition, "model")
    filler = condition_lookup(condition, "f", int)
    train_ds, test_ds = tasks.gen_symmetry(
        s=params["s"],
        f=filler,
        n_train=params["n_train"],
        n_test=params["n_test"],
        seed=derive_seed(rep_seed, "data", filler),
    )
    lr = params["learning_rate"]
    if lr == "auto":
        lr = 0.002 if filler >= 10 else 0.003
    metrics = _train_and_eval_sequence(
        kind, params, rep_seed, train_ds, {"test": test_ds}, lr
    )
    metrics["error_test"] = 1.0 - metrics["accuracy_test"]
    return metrics


def _run_capacity(condition, params, rep_seed):
    n_targets = condition_lookup(condition, "n_targets", int)
    n_hidden = condition_lookup(condition, "n_hidden", int)
    sigma_train = condition_lookup(condition, "sigma_train", float)
    targets = tasks.gen_attractor_targets(
        n_targets,
        dim=params["dim"],
        samples_per_target=params["samples_per_target"],
        seed=derive_seed(rep_seed, "targets", n_targets),
    )
    config = att.AttractorConfig(
        variant="shifted",
        run_mode="converge",
        delta=params["delta"],
        max_iter=params["max_iter"],
        sigma=sigma_train,
    )
    net, suppression = train_attractor_standalone(
        targets,
        config,
        n_hidden=n_hidden,
        seed=derive_seed(rep_seed, "train", n_targets, n_hidden, repr(sigma_train)),
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        sigma_test=params["sigma_test"],
    )
    noisy, _ = att.make_denoising_batch(
        targets, params["sigma_test"], seed=derive_seed(rep_seed, "cues", n_targets)
    )
    with nd.no_grad():
        _, info = att.run_dynamics(
            net,
            att.cue_from_encoded(net, nd.Tensor(noisy)),
            config,
            track_per_example=True,
        )
    iters = info.per_example_iterations
    return {
        "suppression": suppression,
        "frac_under_5": float(np.mean(iters < 5)),
        "frac_under_10": float(np.mean(iters < 10)),
        "mean_iterations": float(np.mean(iters)),
        "frac_converged": float(np.mean(info.per_example_converged)),
    }


def _run_adversarial(condition, params, rep_seed):
    defense = condition_lookup(condition, "defense")
    train_ds, test_ds = tasks.gen_blobs(
        params["n_per_class"],
        params["separation"],
        seed=derive_seed(rep_seed, "data"),
    )
    reified = defense == "reified"
    model = adv.ReifiedMlp.init(
        2,
        hidden=(params["width"], params["width"]),
        reified_layers=(0, 1) if reified else (),
        dae_bottleneck=params["dae_bottleneck"],
        dae_sigma=params["dae_sigma"],
        lambda_rec=params["lambda_rec"],
        seed=derive_seed(rep_seed, "init"),
    )
    config = adv.AttackConfig(epsilon=params["epsilon"], steps=params["steps"])
    adv.adv_train(
        model,
        train_ds,
        config,
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        seed=derive_seed(rep_seed, "train", defense),
    )
    eval_seed = derive_seed(rep_seed, "eval")
    metrics = {
        "accuracy_clean": adv.clean_accuracy(model, test_ds, seed=eval_seed),
        "accuracy_pgd_full": adv.robust_accuracy(
            model, test_ds, config, seed=eval_seed
        ),
    }
    if reified:
        for variant in ("bpda", "noiseless"):
            cfg = adv.AttackConfig(
                epsilon=params["epsilon"], steps=params["steps"], variant=variant
            )
            metrics[f"accuracy_pgd_{variant}"] = adv.robust_accuracy(
                model, test_ds, cfg, seed=eval_seed
            )
    # max-norm ball compliance over a small traced attack
    sample = test_ds.inputs[:32]
    sample_y = test_ds.targets[:32]
    rng = np.random.default_rng(eval_seed)

    def loss_fn(x):
        pred, _ = model.forward(x, noise_rng=rng)
        return nd.mse(pred, nd.Tensor(sample_y))

    _, trace = adv.pgd_attack(loss_fn, sample, config, return_trace=True)
    worst = max(float(np.max(np.abs(it - sample))) for it in trace)
    metrics["ball_violation"] = max(0.0, worst - params["epsilon"])
    return metrics


def _run_score_check(condition, params, rep_seed):
    rng = np.random.default_rng(derive_seed(rep_seed, "data"))
    samples = rng.normal(0.0, 1.0, size=(params["n_samples"], 1))
    est = DenoisingAutoencoder(
        bottleneck=params["bottleneck"],
        sigma=params["sigma"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        decoder_refit=params["decoder_refit"],
        seed=derive_seed(rep_seed, "fit"),
    ).fit(samples)
    grid = np.linspace(-2.0, 2.0, 201).reshape(-1, 1)
    scores = score_estimate(est.dae_, grid).ravel()
    analytic = -grid.ravel()
    corr = float(np.corrcoef(scores, analytic)[0, 1])
    return {"score_correlation": corr}


# -- registry -------------------------------------------------------------------


EXPERIMENTS = {
    "capacity": {
        "runner": _run_capacity,
        "grid": {
            "n_targets": [25, 50, 100, 150, 200, 250],
            "n_hidden": [50, 100, 150, 200],
            "sigma_train": [0.125, 0.25, 0.5],
        },
        "replications": 10,
        "params": {
            "dim": 50,
            "samples_per_target": 50,
            "sigma_test": 0.25,
            "delta": 0.01,
            "max_iter": 50,
            "epochs": 60,
            "batch_size": 64,
            "learning_rate": 0.01,
        },
    },
    "parity": {
        "runner": _run_parity,
        "grid": {"model": list(MODEL_VARIANTS)},
        "replications": 25,
        "params": {
            "cell": "tanh",
            "hidden_dim": 10,
            "attractor_dim": 20,
            "sigma": 0.5,
            "iterations": 15,
            "learning_rate": 0.008,
            "max_epochs": 5000,
            "denoise_start_epoch": 0,
            "loss_routing": "attractor_only",
            "stop_on_perfect_train": True,
            "entropy": True,
        },
    },
    "majority": {
        "runner": _run_majority,
        "grid": {"model": list(MODEL_VARIANTS), "length": [11, 17, 23, 29, 35]},
        "replications": 25,
        "params": {
            "cell": "tanh",
            "hidden_dim": 10,
            "attractor_dim": 20,
            "sigma": 0.25,
            "iterations": 5,
            "learning_rate": 0.008,  # unstated upstream; parity's value
            "max_epochs": 2500,
            "denoise_start_epoch": 0,
            "loss_routing": "joint",
            "stop_on_perfect_train": True,
            "entropy": False,
            "n_train": 100,
        },
    },
    "reber": {
        "runner": _run_reber,
        "grid": {"model": list(MODEL_VARIANTS), "n_train": [50, 100, 200, 400, 800]},
        "replications": 10,
        "params": {
            "cell": "tanh",
            "hidden_dim": 20,
            "attractor_dim": 40,
            "sigma": 0.25,
            "iterations": 5,
            "learning_rate": 0.008,  # unstated upstream; parity's value
            "max_epochs": 2500,
            "denoise_start_epoch": 100,
            "loss_routing": "joint",
            "stop_on_perfect_train": True,
            "entropy": False,
            "n_test": 2000,
        },
    },
    "symmetry": {
        "runner": _run_symmetry,
        "grid": {"model": list(MODEL_VARIANTS), "f": [1, 10]},
        "replications": 10,
        "params": {
            "cell": "tanh",
            "hidden_dim": 10,
            "attractor_dim": 20,
            "sigma": 0.25,
            "iterations": 5,
            "learning_rate": "auto",  # 0.002 for f=10, 0.003 for f=1
            "max_epochs": 2500,
            "denoise_start_epoch": 0,
            "loss_routing": "joint",
            "stop_on_perfect_train": True,
            "entropy": False,
            "s": 5,
            "n_train": 1000,  # desk-scale training set
            "n_test": 2000,
        },
    },
    "adversarial": {
        "runner": _run_adversarial,
        "grid": {"defense": ["undefended", "reified"]},
        "replications": 10,
        "params": {
            "n_per_class": 250,
            "separation": 3.3,
            "width": 32,
            "dae_bottleneck": 8,
            "dae_sigma": 0.25,
            "lambda_rec": 1.0,
            "epsilon": 0.3,
            "steps": 7,
            "epochs": 40,
            "batch_size": 64,
            "learning_rate": 0.005,
        },
    },
    "score_check": {
        "runner": _run_score_check,
        "grid": {},
        "replications": 1,
        "params": {
            "n_samples": 4000,
            "bottleneck": 8,
            "sigma": 0.1,
            "epochs": 120,
            "batch_size": 256,
            "learning_rate": 0.005,
            "decoder_refit": 10,
        },
    },
}


@dataclass
class ExperimentSpec:
    experiment: str
    grid: dict = None
    replications: int = None
    base_seed: int = 0
    out_dir: str = "results"
    params: dict = field(default_factory=dict)

    def resolve(self):
        """Fill unset fields from the registry defaults."""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; "
                f"choose from {sorted(EXPERIMENTS)}"
            )
        entry = EXPERIMENTS[self.experiment]
        grid = {k: list(v) for k, v in (self.grid or entry["grid"]).items()}
        replications = (
            entry["replications"] if self.replications is None else self.replications
        )
        if replications < 1:
            raise ValueError("replications must be >= 1")
        params = dict(entry["params"])
        for key, value in self.params.items():
            if key not in params:
                raise ValueError(
                    f"experiment {self.experiment!r} has no parameter {key!r}; "
                    f"known: {sorted(params)}"
                )
            params[key] = value
        for key in grid:
            if key not in entry["grid"]:
                raise ValueError(
                    f"experiment {self.experiment!r} has no grid axis {key!r}"
                )
        return grid, replications, params


def _conditions(grid):
    if not grid:
        return [()]
    keys = list(grid)
    return [
        make_condition(keys, combo)
        for combo in itertools.product(*(grid[k] for k in keys))
    ]


def _run_cell(payload):
    experiment, condition, params, rep, rep_seed = payload
    runner = EXPERIMENTS[experiment]["runner"]
    try:
        metrics = runner(condition, params, rep_seed)
        return [
            ResultRow(experiment, condition, rep, metric, float(value))
            for metric, value in sorted(metrics.items())
        ]
    except Exception as exc:  # noqa: BLE001 - worker isolation
        sys.stderr.write(
            f"[reify] condition {dict(condition)} replication {rep} "
            f"failed: {exc}\n"
        )
        return [ResultRow(experiment, condition, rep, "failed", 1.0)]


def run(spec):
    """Execute a spec; returns (rows, summary_rows) and writes the output
    files when ``spec.out_dir`` is set."""
    grid, replications, params = spec.resolve()
    conditions = _conditions(grid)
    payloads = [
        (
            spec.experiment,
            condition,
            params,
            rep,
            derive_seed(spec.base_seed + rep, spec.experiment),
        )
        for condition in conditions
        for rep in range(replications)
    ]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(payloads) > 1:
        with Pool(workers) as pool:
            chunks = pool.map(_run_cell, payloads)
    else:
        chunks = [_run_cell(p) for p in payloads]
    rows = [row for chunk in chunks for row in chunk]

    summary = []
    if replications >= 2:
        summary = sem_stats(rows, "plain")
    if spec.out_dir:
        emit(rows, summary, spec, grid, replications, params)
    return rows, summary


# -- emission -------------------------------------------------------------------


RAW_HEADER = "experiment,condition,replication,metric,value"


def emit(rows, summary, spec, grid, replications, params):
    os.makedirs(spec.out_dir, exist_ok=True)
    raw_path = os.path.join(spec.out_dir, "raw.csv")
    with open(raw_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RAW_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row.experiment},{row.condition_str()},{row.replication},"
                f"{row.metric},{row.value!r}\n"
            )
    with open(
        os.path.join(spec.out_dir, "summary.csv"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        fh.write("condition,metric,mean,sem,n\n")
        for s in summary:
            fh.write(f"{s.condition},{s.metric},{s.mean!r},{s.sem!r},{s.n}\n")
    manifest = {
        "experiment": spec.experiment,
        "grid": grid,
        "replications": replications,
        "base_seed": spec.base_seed,
        "params": params,
        "package_version": __version__,
        "seed_scheme": "per-replication seed = derive_seed(base_seed + index, experiment)",
    }
    with open(
        os.path.join(spec.out_dir, "meta.json"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return raw_path


def parse_raw(path):
    """Inverse of the raw.csv writer."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RAW_HEADER:
            raise ValueError(f"unexpected raw.csv header: {header!r}")
        for line in fh:
            experiment, condition, replication, metric, value = line.rstrip(
                "\n"
            ).split(",")
            cond = (
                tuple(tuple(pair.split("=", 1)) for pair in condition.split(";"))
                if condition
                else ()
            )
            rows.append(
                ResultRow(experiment, cond, int(replication), metric, float(value))
            )
    return rows


# -- CLI ------------------------------------------------------------------------


def load_spec_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "experiment" not in payload:
        raise ValueError("spec file must name an 'experiment'")
    return ExperimentSpec(
        experiment=payload["experiment"],
        grid=payload.get("grid"),
        replications=payload.get("replications"),
        base_seed=payload.get("base_seed", 0),
        out_dir=payload.get("out_dir", "results"),
        params=payload.get("params", {}),
    )


def _parse_set_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text in ("true", "True"):
        return True
    if text in ("false", "False"):
        return False
    return text


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="reify",
        description="Run the packaged experiments and emit CSV results.",
    )
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("list", help="list available experiments")

    validate = sub.add_parser("validate", help="check a spec file")
    validate.add_argument("spec_file")

    runp = sub.add_parser("run", help="run an experiment or spec file")
    runp.add_argument("experiment", help="experiment name or path to a spec file")
    runp.add_argument("--replications", type=int, default=None)
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--out", default=None)
    runp.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override an experiment parameter",
    )
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    # allow `reify parity ...` as shorthand for `reify run parity ...`
    if argv and argv[0] not in ("list", "validate", "run", "-h", "--help"):
        argv = ["run"] + argv
    args = _build_parser().parse_args(argv)

    if args.command == "list":
        for name in sorted(EXPERIMENTS):
            entry = EXPERIMENTS[name]
            axes = ", ".join(
                f"{k}({len(v)})" for k, v in entry["grid"].items()
            ) or "single condition"
            print(f"{name}: {axes}; default replications {entry['replications']}")
        return 0

    if args.command == "validate":
        try:
            spec = load_spec_file(args.spec_file)
            spec.resolve()
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            print(f"invalid spec: {exc}", file=sys.stderr)
            return 1
        print(f"ok: {spec.experiment}")
        return 0

    if args.command == "run":
        if os.path.exists(args.experiment):
            spec = load_spec_file(args.experiment)
        else:
            spec = ExperimentSpec(experiment=args.experiment)
        if args.replications is not None:
            spec.replications = args.replications
        if args.seed is not None:
            spec.base_seed = args.seed
        if args.out is not None:
            spec.out_dir = args.out
        for item in args.overrides:
            if "=" not in item:
                print(f"--set expects KEY=VALUE, got {item!r}", file=sys.stderr)
                return 1
            key, value = item.split("=", 1)
            spec.params[key] = _parse_set_value(value)
        try:
            rows, _ = run(spec)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        failed = sum(1 for r in rows if r.metric == "failed")
        print(
            f"{spec.experiment}: {len(rows)} result rows -> {spec.out_dir}"
            + (f" ({failed} cells failed)" if failed else "")
        )
        return 0

    _build_parser().print_help()
    return 0


if __name__ == "__main__":
    sys.exit(main())
