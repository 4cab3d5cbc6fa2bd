"""Two-phase experiment protocol and artifact emission.

Phase 1 (bootstrap): warm-up markets where every agent bids uniformly
at random build each consumer's auction history.  Consumers that need
utility estimates fit theta on their won records; closed-form consumers
additionally calibrate their win model and solve the budget multiplier.

Phase 2 (market): the competitive market runs once over the pool, then
each consumer trains a FedAvg model on the owners it won.

Artifacts: a market CSV (one row per auction), a summary CSV (one row
per agent), a calibration report and optional bar charts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import estimator, fltrain, winmodel
from .config import AgentSpec, RunConfig
from .estimator import EstimatorParams, HistoryRecord
from .market import (
    ConfigurationError,
    ConsumerAgent,
    MarketResult,
    MetricsReport,
    compute_metrics,
    generate_do_pool,
    run_market,
)
from .strategies import LambdaSolution, Strategy, StrategyParams, solve_lambda
from .winmodel import WinningFunctionModel, calibrate_c, empirical_win_curve

MARKET_CSV_SCHEMA_VERSION = 1
SUMMARY_CSV_SCHEMA_VERSION = 1

_NEEDS_THETA = (Strategy.BMUB, Strategy.LIN, Strategy.FBS, Strategy.FBC)
_CLOSED_FORM = (Strategy.FBS, Strategy.FBC)


@dataclass
class AgentCalibration:
    theta: Optional[np.ndarray] = None
    estimator_loss: Optional[float] = None
    estimator_lr: Optional[float] = None
    win_model: Optional[WinningFunctionModel] = None
    lambda_solution: Optional[LambdaSolution] = None
    history: list = None  # type: ignore[assignment]


@dataclass
class RunArtifacts:
    config: RunConfig
    result: MarketResult
    metrics: MetricsReport
    calibration: dict  # agent name -> AgentCalibration
    market_csv: Path
    summary_csv: Path
    calibration_report: Path
    accuracy: dict  # agent name -> float | None


def _strategy_params(cfg: RunConfig) -> StrategyParams:
    return StrategyParams(
        const_bid=cfg.const_bid, rand_max=cfg.rand_max, lin_coef=cfg.lin_coef
    )


def bootstrap_history(cfg: RunConfig, pool, rng: np.random.Generator) -> dict:
    """Warm-up markets with all-random bidding, then per-agent calibration.

    Bootstrap budgets are unconstrained: the warm-up exists to explore
    the bid range, not to spend real money.
    """
    needy = [a for a in cfg.agents if a.strategy in _NEEDS_THETA]
    if cfg.bootstrap_rounds == 0 and needy:
        raise ConfigurationError(
            "bootstrap_rounds is 0 but these agents need history: "
            + ", ".join(a.name for a in needy)
        )
    params = _strategy_params(cfg)
    histories = {a.name: [] for a in cfg.agents}
    owners = {o.id: o for o in pool}
    for _ in range(cfg.bootstrap_rounds):
        boot_agents = [
            ConsumerAgent(
                name=a.name, strategy=Strategy.RAND, budget=math.inf, params=params
            )
            for a in cfg.agents
        ]
        result = run_market(boot_agents, pool, rng.spawn(1)[0])
        for outcome in result.outcomes:
            owner = owners[outcome.request.owner_id]
            for name, bid in outcome.bids.items():
                won = outcome.winner == name
                histories[name].append(
                    HistoryRecord(
                        features=outcome.request.features,
                        bid=bid,
                        won=won,
                        clearing_price=outcome.clearing_price if won else 0.0,
                        realized_utility=estimator.true_utility(owner) if won else None,
                    )
                )

    calibration = {}
    est_params = EstimatorParams(cfg.estimator_lr, cfg.estimator_epochs, cfg.clamp_eps)
    for spec in cfg.agents:
        cal = AgentCalibration(history=histories[spec.name])
        if spec.strategy in _NEEDS_THETA:
            won = [r for r in cal.history if r.won]
            if not won:
                raise ConfigurationError(
                    f"agent {spec.name} won no bootstrap auctions; "
                    "increase bootstrap_rounds or rand_max"
                )
            cal.theta, used = estimator.fit_with_backoff(won, est_params)
            cal.estimator_loss = estimator.loss(cal.theta, won, cfg.clamp_eps)
            cal.estimator_lr = used.learning_rate
        if spec.strategy in _CLOSED_FORM:
            curve = empirical_win_curve(cal.history, cfg.num_buckets)
            c = calibrate_c(curve, spec.form)
            cal.win_model = WinningFunctionModel(spec.form, c)
            samples = [
                estimator.predict(cal.theta, r.features, cfg.clamp_eps)
                for r in cal.history
            ]
            cal.lambda_solution = solve_lambda(
                samples, cal.win_model, cfg.scaled_budget(spec), cfg.pool_size
            )
        calibration[spec.name] = cal
    return calibration


def build_market_agents(cfg: RunConfig, calibration: dict) -> list:
    params = _strategy_params(cfg)
    agents = []
    for spec in cfg.agents:
        cal = calibration[spec.name]
        agents.append(
            ConsumerAgent(
                name=spec.name,
                strategy=spec.strategy,
                budget=cfg.scaled_budget(spec),
                params=params,
                theta=cal.theta,
                win_model=cal.win_model,
                lam=cal.lambda_solution.lam if cal.lambda_solution else 0.0,
            )
        )
    return agents


def train_federated(cfg: RunConfig, pool, result: MarketResult, rng: np.random.Generator) -> dict:
    """Per-agent FedAvg over won owners; returns agent -> test accuracy."""
    centers_rng, shard_rng, test_rng = rng.spawn(3)
    centers = fltrain.make_class_centers(centers_rng)
    K = centers.shape[0]
    mode, shards = fltrain.partition_mode(cfg.partition, cfg.shards_per_owner, K)
    class_support = {}
    for owner in pool:
        if mode == "niid":
            class_support[owner.id] = np.sort(shard_rng.choice(K, shards, replace=False))
        else:
            class_support[owner.id] = None
    test_labels = test_rng.integers(0, K, 2000)
    test_X = centers[test_labels] + test_rng.standard_normal((2000, centers.shape[1]))

    owners = {o.id: o for o in pool}
    accuracy = {}
    for name in result.agent_names:
        won_ids = sorted(o.request.owner_id for o in result.wins[name])
        if not won_ids:
            accuracy[name] = None
            continue
        updates = []
        for oid in won_ids:
            owner = owners[oid]
            data = fltrain.synth_dataset(
                owner,
                centers,
                cfg.noise_rate_blurred,
                np.random.default_rng(owner.local_seed),
                classes=class_support[oid],
            )
            w = fltrain.local_train(
                fltrain.zero_model(K, centers.shape[1]),
                data,
                local_epochs=cfg.local_epochs,
                lr=cfg.fl_lr,
            )
            updates.append((w, owner.num_samples))
        accuracy[name] = fltrain.evaluate(fltrain.fedavg(updates), test_X, test_labels)
    return accuracy


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def market_csv_header(agent_names) -> list:
    return (
        ["auction_index", "owner_id", "num_samples"]
        + [f"bid_{n}" for n in agent_names]
        + ["winner", "clearing_price"]
    )


def summary_csv_header(partition: str) -> list:
    return [
        "agent",
        "strategy",
        "budget",
        "total_samples",
        "unit_price",
        "spend",
        f"accuracy_{partition}",
    ]


def write_market_csv(path, cfg: RunConfig, pool, result: MarketResult):
    owners = {o.id: o for o in pool}
    names = result.agent_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(market_csv_header(names))
        for i, outcome in enumerate(result.outcomes):
            oid = outcome.request.owner_id
            row = [i, oid, owners[oid].num_samples]
            row += [_fmt(outcome.bids.get(n)) for n in names]
            row += [_fmt(outcome.winner), _fmt(outcome.clearing_price)]
            w.writerow(row)


def write_summary_csv(path, cfg: RunConfig, metrics: MetricsReport, accuracy: dict):
    specs = {a.name: a for a in cfg.agents}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_csv_header(cfg.partition))
        for name, m in metrics.per_agent.items():
            spec = specs[name]
            w.writerow(
                [
                    name,
                    spec.strategy.value,
                    _fmt(cfg.scaled_budget(spec)),
                    m.total_samples,
                    _fmt(m.unit_price_per_1000),
                    _fmt(m.spend),
                    _fmt(accuracy.get(name)),
                ]
            )


def write_calibration_report(path, cfg: RunConfig, calibration: dict):
    report = {
        "schema_version": 1,
        "budget_scale": cfg.budget_scale,
        "agents": {},
    }
    for name, cal in calibration.items():
        entry = {}
        if cal.theta is not None:
            entry["theta"] = [float(t) for t in cal.theta]
            entry["estimator_final_loss"] = cal.estimator_loss
            entry["estimator_lr_used"] = cal.estimator_lr
        if cal.win_model is not None:
            entry["win_form"] = cal.win_model.form.value
            entry["c"] = cal.win_model.c
        if cal.lambda_solution is not None:
            sol = cal.lambda_solution
            entry["lambda"] = sol.lam
            entry["expected_spend_per_request"] = sol.expected_spend_per_request
            entry["spend_target"] = sol.target
        report["agents"][name] = entry
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: RunConfig, train_fl: Optional[bool] = None) -> RunArtifacts:
    """Bootstrap, competitive market, FedAvg evaluation, artifact emission."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.master_seed)
    pool_rng, boot_rng, market_rng, fl_rng = [
        np.random.default_rng(s) for s in root.spawn(4)
    ]
    pool = generate_do_pool(cfg.pool_size, cfg.sample_range, pool_rng)
    calibration = bootstrap_history(cfg, pool, boot_rng)
    agents = build_market_agents(cfg, calibration)
    result = run_market(agents, pool, market_rng, seed=cfg.master_seed)
    metrics = compute_metrics(result)
    do_fl = cfg.train_fl if train_fl is None else train_fl
    accuracy = (
        train_federated(cfg, pool, result, fl_rng)
        if do_fl
        else {n: None for n in result.agent_names}
    )
    for name, m in metrics.per_agent.items():
        m.fl_accuracy = accuracy[name]

    tag = f"seed{cfg.master_seed}"
    market_csv = out / f"market_{tag}.csv"
    summary_csv = out / f"summary_{tag}.csv"
    calibration_report = out / f"calibration_{tag}.json"
    write_market_csv(market_csv, cfg, pool, result)
    write_summary_csv(summary_csv, cfg, metrics, accuracy)
    write_calibration_report(calibration_report, cfg, calibration)
    from .config import echo_config

    (out / f"config_echo_{tag}.json").write_text(
        json.dumps(echo_config(cfg), indent=2, sort_keys=True) + "\n"
    )
    return RunArtifacts(
        config=cfg,
        result=result,
        metrics=metrics,
        calibration=calibration,
        market_csv=market_csv,
        summary_csv=summary_csv,
        calibration_report=calibration_report,
        accuracy=accuracy,
    )


def emit_plots(artifacts_dir, out_dir=None) -> list:
    """Bar charts of total samples and unit price from summary CSVs.

    One chart per metric per budget value found across the summaries.
    Skipped with a notice if the plotting backend is unavailable.
    """
    artifacts_dir = Path(artifacts_dir)
    out_dir = Path(out_dir) if out_dir else artifacts_dir
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception:
        print("plotting backend unavailable; skipping charts")
        return []

    rows = []
    for path in sorted(artifacts_dir.glob("summary_seed*.csv")):
        seed = path.stem.replace("summary_", "")
        with open(path) as fh:
            for rec in csv.DictReader(fh):
                rec["_seed"] = seed
                rows.append(rec)
    if not rows:
        print("no summary rows found; no charts emitted")
        return []

    written = []
    by_key = {}
    for rec in rows:
        by_key.setdefault((rec["_seed"], rec["budget"]), []).append(rec)
    for (seed, budget), group in sorted(by_key.items()):
        agents = [r["agent"] for r in group]
        for metric, column in (("total_samples", "total_samples"), ("unit_price", "unit_price")):
            values = [float(r[column]) if r[column] else 0.0 for r in group]
            fig, ax = plt.subplots(figsize=(6, 3.5))
            ax.bar(agents, values)
            ax.set_ylabel(metric)
            ax.set_title(f"{metric} at budget {budget} ({seed})")
            fig.tight_layout()
            path = out_dir / f"{metric}_budget{budget}_{seed}.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            written.append(path)
    return written
