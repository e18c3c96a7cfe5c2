"""End-to-end simulation pipeline behind the ``defend-sim`` command.

A single JSON config describes dataset generation, an optional poisoning
attack, the victim model/schedule, the defense, and diagnostics. Every
random choice derives from the one top-level seed via fixed, documented
draws (data, test data, surrogate init, victim init, defense), so a
config plus seed pins the whole run.
"""

from __future__ import annotations

import time

import numpy as np

from .attacks import AttackSpec, craft
from .convergence import (
    PLCertificate,
    certify_pl_empirical,
    check_decay_bound,
    measure_drop_perturbation,
)
from .data import DatasetState, make_blobs, plant_outliers
from .defense import DefenseConfig, cluster_histogram, cosine_alignment_trace
from .errors import ConfigError
from .models import LrSchedule, ToyModel, accuracy
from .report import SCHEMA_VERSION
from .rng import Rng, SplitMix64
from .training import BatchMode, Instrumentation, run_defense, train

_SCHEMA = {
    "seed": int,
    "epochs": int,
    "dataset": {
        "per_class": int,
        "classes": int,
        "dim": int,
        "center_distance": float,
        "noise": float,
        "test_per_class": int,
        "outliers": {
            "depths": list,
            "source_class": int,
            "toward_class": int,
        },
    },
    "model": {"architecture": str, "hidden_width": int},
    "schedule": {"base_lr": float, "decay_epochs": list, "decay_factor": float},
    "batch": {"mode": str, "size": int},
    "defense": {
        "enabled": bool,
        "warmup_epochs": int,
        "interval_epochs": int,
        "medoid_fraction": float,
        "greedy_mode": str,
        "proxy_mode": str,
        "min_class_size_guard": int,
        "compare_undefended": bool,
    },
    "attack": {
        "objective": str,
        "num_poisons": int,
        "epsilon": float,
        "steps": int,
        "step_size": float,
        "target_class": int,
        "adversarial_class": int,
        "target_margin_quantile": float,
        "surrogate_epochs": int,
    },
    "diagnostics": {
        "record_gradients": bool,
        "record_cosine_trace": bool,
        "decay_bound": bool,
    },
}

_DEFAULTS = {
    "dataset": {
        "classes": 2,
        "dim": 2,
        "center_distance": 3.0,
        "noise": 1.0,
        "test_per_class": 0,
        "outliers": None,
    },
    "model": {"architecture": "linear", "hidden_width": 16},
    "schedule": {"decay_epochs": [], "decay_factor": 10.0},
    "batch": {"mode": "full", "size": 0},
    "defense": {
        "enabled": True,
        "warmup_epochs": 10,
        "interval_epochs": 2,
        "medoid_fraction": 0.1,
        "greedy_mode": "lazy",
        "proxy_mode": "class_residual",
        "min_class_size_guard": 10,
        "compare_undefended": False,
    },
    "attack": {
        "objective": "gradient_match",
        "steps": 250,
        "step_size": None,
        "target_margin_quantile": 0.0,
        "surrogate_epochs": 120,
    },
    "diagnostics": {
        "record_gradients": False,
        "record_cosine_trace": False,
        "decay_bound": False,
    },
}

_REQUIRED = {
    "": ("seed", "epochs", "dataset", "schedule"),
    "dataset": ("per_class",),
    "dataset.outliers": ("depths", "source_class", "toward_class"),
    "schedule": ("base_lr",),
    "attack": ("num_poisons", "epsilon", "target_class", "adversarial_class"),
}


def _type_ok(value, expected) -> bool:
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _validate_section(section: dict, schema: dict, path: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{path or 'config'} must be an object", key=path)
    out = {}
    for key, value in section.items():
        full = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key {full!r}", key=full)
        expected = schema[key]
        if isinstance(expected, dict):
            if value is None:
                out[key] = None
            else:
                out[key] = _validate_section(value, expected, full)
        else:
            if value is None and key == "step_size":
                out[key] = None
            elif not _type_ok(value, expected):
                raise ConfigError(
                    f"config key {full!r} must be {expected.__name__}", key=full
                )
            else:
                out[key] = value
    for key in _REQUIRED.get(path, ()):
        if key not in out:
            full = f"{path}.{key}" if path else key
            raise ConfigError(f"missing required config key {full!r}", key=full)
    if path in _DEFAULTS:
        for key, value in _DEFAULTS[path].items():
            out.setdefault(key, value)
    return out


def validate_config(config: dict) -> dict:
    """Check keys/types against the schema and fill defaults."""
    out = _validate_section(config, _SCHEMA, "")
    out.setdefault("batch", dict(_DEFAULTS["batch"]))
    out.setdefault("model", dict(_DEFAULTS["model"]))
    out.setdefault("defense", dict(_DEFAULTS["defense"]))
    out.setdefault("diagnostics", dict(_DEFAULTS["diagnostics"]))
    out.setdefault("attack", None)
    for section in ("model", "batch", "defense", "diagnostics"):
        merged = dict(_DEFAULTS[section])
        merged.update(out[section])
        out[section] = merged
    if out["attack"] is not None:
        merged = dict(_DEFAULTS["attack"])
        merged.update(out["attack"])
        out["attack"] = merged
        if out["dataset"].get("test_per_class", 0) < 1:
            raise ConfigError(
                "attack needs dataset.test_per_class >= 1 to pick a target",
                key="dataset.test_per_class",
            )
    return out


def _select_target(
    surrogate: ToyModel, test: DatasetState, target_class: int, margin_quantile: float
) -> int:
    """Attackable test point of the target class.

    Among test points the clean surrogate classifies correctly, picks the
    one at the given quantile of the margin distribution (0 = smallest
    positive margin). Degenerate near-zero-margin points flip under any
    perturbation, so a small positive quantile gives a target that is
    attackable yet stably classified; falls back to the overall smallest
    margin if nothing is classified correctly.
    """
    mask = test.labels == target_class
    candidates = np.nonzero(mask)[0]
    if candidates.size == 0:
        raise ConfigError("no test examples of the target class", key="attack.target_class")
    logits = surrogate.logits(test.features[candidates])
    true = logits[:, target_class].copy()
    logits[:, target_class] = -np.inf
    margins = true - logits.max(axis=1)
    positive = np.nonzero(margins > 0)[0]
    if positive.size == 0:
        return int(candidates[int(np.argmin(margins))])
    order = positive[np.argsort(margins[positive], kind="stable")]
    pick = order[min(int(margin_quantile * order.size), order.size - 1)]
    return int(candidates[pick])


def _select_bases(dataset: DatasetState, adv_class: int, count: int, seed: int):
    """Seeded uniform draw of base examples from the adversarial class."""
    mask = dataset.labels == adv_class
    candidates = np.nonzero(mask)[0]
    if candidates.size < count:
        raise ConfigError(
            f"only {candidates.size} candidates of class {adv_class} for "
            f"{count} poisons",
            key="attack.num_poisons",
        )
    rng = Rng(seed)
    picks = rng.sample_indices(candidates.size, count)
    return tuple(sorted(int(candidates[p]) for p in picks))


def run_experiment(config: dict) -> dict:
    """Execute a validated (or raw) defend-sim config; returns the report."""
    cfg = validate_config(config)
    t_start = time.perf_counter()
    sm = SplitMix64(cfg["seed"])
    seed_data = sm.next_u64()
    seed_test = sm.next_u64()
    seed_surrogate = sm.next_u64()
    seed_victim = sm.next_u64()
    seed_defense = sm.next_u64()
    seed_bases = sm.next_u64()

    ds_cfg = cfg["dataset"]
    dataset = make_blobs(
        ds_cfg["per_class"],
        ds_cfg["classes"],
        ds_cfg["dim"],
        ds_cfg["center_distance"],
        ds_cfg["noise"],
        seed=seed_data,
    )
    if ds_cfg["outliers"] is not None:
        o = ds_cfg["outliers"]
        dataset = plant_outliers(
            dataset,
            [float(t) for t in o["depths"]],
            o["source_class"],
            o["toward_class"],
            ds_cfg["center_distance"],
        )
    test = None
    if ds_cfg["test_per_class"] > 0:
        test = make_blobs(
            ds_cfg["test_per_class"],
            ds_cfg["classes"],
            ds_cfg["dim"],
            ds_cfg["center_distance"],
            ds_cfg["noise"],
            seed=seed_test,
        )

    schedule = LrSchedule(
        cfg["schedule"]["base_lr"],
        tuple(cfg["schedule"]["decay_epochs"]),
        cfg["schedule"]["decay_factor"],
    )
    batch = (
        BatchMode("full")
        if cfg["batch"]["mode"] == "full"
        else BatchMode("minibatch", cfg["batch"]["size"], seed=seed_victim)
    )
    arch = cfg["model"]["architecture"]
    hidden = cfg["model"]["hidden_width"]

    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "dataset_summary": {
            "train_size": dataset.size,
            "class_counts": dataset.class_counts().tolist(),
            "poison_indices": (
                [] if dataset.poison_mask is None
                else np.nonzero(dataset.poison_mask)[0].tolist()
            ),
        },
        "runs": {},
    }

    attack_info = None
    target_features = None
    adv_label = None
    if cfg["attack"] is not None:
        a = cfg["attack"]
        surrogate = ToyModel.initialize(
            arch, ds_cfg["dim"], ds_cfg["classes"], hidden, seed=seed_surrogate
        )
        surrogate, _ = train(
            surrogate, dataset.clone(), schedule, a["surrogate_epochs"], batch
        )
        target_index = _select_target(
            surrogate, test, a["target_class"], a["target_margin_quantile"]
        )
        target_features = test.features[target_index]
        adv_label = a["adversarial_class"]
        bases = _select_bases(dataset, adv_label, a["num_poisons"], seed_bases)
        spec = AttackSpec(
            base_indices=bases,
            target_features=target_features,
            adversarial_label=adv_label,
            epsilon=a["epsilon"],
            steps=a["steps"],
            step_size=a["step_size"],
            objective=a["objective"],
        )
        result = craft(spec, surrogate, dataset)
        mask = np.zeros(dataset.size, dtype=bool)
        mask[list(bases)] = True
        dataset = DatasetState(
            dataset.features + result.delta, dataset.labels, dataset.num_classes, mask
        )
        attack_info = {
            "objective": a["objective"],
            "target_index": target_index,
            "target_features": target_features.tolist(),
            "adversarial_class": adv_label,
            "base_indices": list(bases),
            "epsilon": a["epsilon"],
            "alignment_initial": result.alignment_initial,
            "alignment_final": result.alignment_final,
            "objective_value": result.objective_value,
        }
        report["dataset_summary"]["poison_indices"] = list(bases)

    def fresh_model():
        return ToyModel.initialize(
            arch, ds_cfg["dim"], ds_cfg["classes"], hidden, seed=seed_victim
        )

    def finish_run(model, trace, run_dataset):
        entry = trace.to_jsonable()
        if test is not None:
            entry["test_accuracy"] = accuracy(model, test.features, test.labels)
        if target_features is not None:
            pred = int(model.logits(target_features[None, :]).argmax(axis=1)[0])
            entry["target_prediction"] = pred
        entry["final_active_count"] = int(run_dataset.active.shape[0])
        return entry

    defense_cfg = None
    if cfg["defense"]["enabled"]:
        d = cfg["defense"]
        defense_cfg = DefenseConfig(
            warmup_epochs=d["warmup_epochs"],
            interval_epochs=d["interval_epochs"],
            medoid_fraction=d["medoid_fraction"],
            greedy_mode=d["greedy_mode"],
            proxy_mode=d["proxy_mode"],
            seed=seed_defense,
            min_class_size_guard=d["min_class_size_guard"],
        )

    diag = cfg["diagnostics"]
    instrument = None
    need_instrument = diag["record_gradients"] or diag["decay_bound"] or (
        diag["record_cosine_trace"] and dataset.poison_mask is not None
    )
    if need_instrument:
        instrument = Instrumentation(
            record_full_gradients=diag["record_gradients"] or diag["decay_bound"],
        )
        if diag["record_cosine_trace"] and dataset.poison_mask is not None:
            instrument.poison_indices = np.nonzero(dataset.poison_mask)[0]
            if target_features is not None:
                instrument.target_features = target_features
                instrument.target_label = adv_label
            else:
                # outlier scenarios: trace alignment against the class
                # center the outliers point toward
                o = ds_cfg["outliers"]
                from .data import blob_centers

                centers = blob_centers(
                    ds_cfg["classes"], ds_cfg["dim"], ds_cfg["center_distance"]
                )
                instrument.target_features = centers[o["toward_class"]]
                instrument.target_label = o["toward_class"]

    if defense_cfg is not None:
        defended_data = dataset.clone()
        model, trace = run_defense(
            fresh_model(), defended_data, defense_cfg, schedule,
            cfg["epochs"], batch, instrument,
        )
        report["runs"]["defended"] = finish_run(model, trace, defended_data)
        hists = []
        for r, rnd in enumerate(trace.rounds):
            hists.append(
                {
                    "epoch": rnd.epoch,
                    "histogram": {
                        str(size): counts
                        for size, counts in cluster_histogram(
                            rnd, dataset.poison_mask
                        ).items()
                    },
                }
            )
        report["cluster_histograms"] = hists
        if cfg["defense"]["compare_undefended"]:
            u_data = dataset.clone()
            u_model, u_trace = train(fresh_model(), u_data, schedule, cfg["epochs"], batch)
            report["runs"]["undefended"] = finish_run(u_model, u_trace, u_data)
    else:
        u_data = dataset.clone()
        model, trace = train(
            fresh_model(), u_data, schedule, cfg["epochs"], batch, instrument
        )
        report["runs"]["undefended"] = finish_run(model, trace, u_data)

    if attack_info is not None:
        if "defended" in report["runs"]:
            attack_info["success_defended"] = (
                report["runs"]["defended"]["target_prediction"] == adv_label
            )
        if "undefended" in report["runs"]:
            attack_info["success_undefended"] = (
                report["runs"]["undefended"]["target_prediction"] == adv_label
            )
        report["attack"] = attack_info

    if instrument is not None and instrument.poison_proxies:
        trace_cos = cosine_alignment_trace(
            instrument.poison_proxies, instrument.target_proxies
        )
        report["cosine_trace"] = trace_cos.to_jsonable()

    if diag["decay_bound"] and defense_cfg is not None and instrument is not None:
        start = defense_cfg.warmup_epochs
        report["decay_bound"] = decay_bound_section(instrument, schedule, start)

    report["timings"] = {"total_seconds": time.perf_counter() - t_start}
    return report


def decay_bound_section(instrument: Instrumentation, schedule: LrSchedule, start: int) -> dict:
    """Measure mu/rho/grad_max on the post-warmup segment and verify the
    decay bound there (t = 0 at the segment start).

    All quantities live on the summed training objective, so the
    effective step size is the trainer's mean-loss learning rate divided
    by the pool size.
    """
    losses = instrument.full_losses[start:]
    full = instrument.full_grads[start:]
    subset = instrument.subset_grads[start:]
    if not losses:
        return {"skipped": "no post-warmup epochs recorded"}
    lrs = {schedule.lr_at(e) for e in range(start, start + len(losses))}
    if len(lrs) != 1:
        return {"skipped": "learning rate varies over the post-warmup segment"}
    eta = instrument.effective_lr(lrs.pop())
    grad_norms = [float(np.linalg.norm(g)) for g in full]
    cert = certify_pl_empirical(losses, grad_norms)
    if not isinstance(cert, PLCertificate):
        return {
            "skipped": "PL condition violated on the segment",
            "violation_index": cert.index,
        }
    pert = measure_drop_perturbation(full, subset)
    check = check_decay_bound(losses, cert.mu, pert.rho, pert.grad_max, eta)
    out = check.to_jsonable()
    out["losses"] = list(losses)
    out["segment_start_epoch"] = start
    return out
