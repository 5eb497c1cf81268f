"""Operator CLI: ingest, stats, make-corpus, train-sup, train-matrix,
tournament, report, serve.

One structured YAML config drives the pipeline; every command takes
--config/--seed/--out overrides and is idempotent for a fixed config+seed.
Exit codes: 0 ok, 2 config error, 3 data error, 4 training error,
5 integrity error.
"""

from __future__ import annotations

import hashlib
import json
import pathlib
import sys

import click
import numpy as np
import yaml

from .corpus import (
    corpus_stats,
    extraction_coverage,
    merge_perspectives,
    parse_dataset,
    record_to_line,
    training_examples,
)
from .env import PoolStats
from .errors import BargainError, ConfigError, DataError, IntegrityError, TrainingError
from .policy import ArchSpec, Policy, SupervisedHParams, supervised_train
from .rewards import resolve_reward_config
from .selfplay import TrainerConfig, build_matrix, load_agent, load_manifest
from .synth import DEFAULT_CORPUS_SEED, DEFAULT_CORPUS_SIZE, generate_corpus, write_corpus_files
from .tournament import (
    TournamentConfig,
    compare_proportions,
    heatmaps,
    load_grid,
    metrics_table,
    run_grid,
    save_grid,
    scenario_list,
)

EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING, EXIT_INTEGRITY = 2, 3, 4, 5

DEFAULT_CONFIG = {
    "seed": 0,
    "paths": {
        "corpus_dir": "data/corpus",
        "checkpoints": "out/checkpoints",
        "reports": "out/reports",
        "arena_db": "out/arena.db",
    },
    "corpus": {"splits": ["train.txt", "val.txt", "test.txt"]},
    "supervised": {
        "epochs": 30,
        "batch_size": 16,
        "lr": 1.0,
        "grad_clip": 0.5,
        "hidden": 64,
        "max_count": 10,
    },
    "selfplay": {
        "episodes": 16000,
        "lr": 0.1,
        "gamma": 0.95,
        "cutoff": 20,
        "baseline_window": 100,
        "grad_clip": 0.5,
        "batch_size": 1,
    },
    "tournament": {
        "n_scenarios": 194,
        "symmetrize": True,
        "temperature": 0.0,
        "include_supervised": False,  # the six personalities; S opt-in
    },
    "arena": {"temperature": 0.5, "include_supervised": False},
}


def _merged(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merged(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, seed: int | None, out: str | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        p = pathlib.Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config is not valid YAML: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config root must be a mapping")
        cfg = _merged(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["paths"] = dict(cfg["paths"])
        for key in ("checkpoints", "reports"):
            cfg["paths"][key] = str(pathlib.Path(out) / key)
        cfg["paths"]["arena_db"] = str(pathlib.Path(out) / "arena.db")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _stamp(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"]}


def _read_corpus(cfg: dict):
    corpus_dir = pathlib.Path(cfg["paths"]["corpus_dir"])
    splits = cfg["corpus"]["splits"]
    missing = [s for s in splits if not (corpus_dir / s).exists()]
    if missing:
        raise DataError(
            f"corpus files missing under {corpus_dir}: {missing}; "
            "run `bargain make-corpus` or point paths.corpus_dir at the dataset"
        )
    from .corpus import ParseReport

    records = []
    report = ParseReport()
    for split in splits:
        with open(corpus_dir / split) as fh:
            recs, report = parse_dataset(fh, report)
            records.extend(recs)
    return records, report


def _write_json(path: pathlib.Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("--config", "config_path", type=str, default=None, help="YAML config file")
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--out", type=str, default=None, help="override output root directory")
@click.pass_context
def main(ctx, config_path, seed, out):
    """Mixed-motive bargaining agents: pipeline and arena."""
    try:
        ctx.obj = load_config(config_path, seed, out)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)


def _run(ctx, fn):
    try:
        fn(ctx.obj)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except DataError as e:
        click.echo(f"data error: {e}", err=True)
        sys.exit(EXIT_DATA)
    except TrainingError as e:
        click.echo(f"training error: {e}", err=True)
        sys.exit(EXIT_TRAINING)
    except IntegrityError as e:
        click.echo(f"integrity error: {e}", err=True)
        sys.exit(EXIT_INTEGRITY)
    except BargainError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("make-corpus")
@click.option("--dialogues", type=int, default=DEFAULT_CORPUS_SIZE, show_default=True)
@click.option("--corpus-seed", type=int, default=DEFAULT_CORPUS_SEED, show_default=True)
@click.pass_context
def make_corpus(ctx, dialogues, corpus_seed):
    """Generate the synthetic corpus fixture in the corpus line format."""

    def go(cfg):
        out_dir = cfg["paths"]["corpus_dir"]
        records = generate_corpus(dialogues, seed=corpus_seed)
        sizes = write_corpus_files(records, out_dir, seed=corpus_seed)
        click.echo(f"wrote {sizes} to {out_dir}")

    _run(ctx, go)


@main.command()
@click.pass_context
def ingest(ctx):
    """Parse the corpus; write normalized records, stats, and a coverage report."""

    def go(cfg):
        records, report = _read_corpus(cfg)
        reports_dir = pathlib.Path(cfg["paths"]["reports"])
        reports_dir.mkdir(parents=True, exist_ok=True)
        dialogues = merge_perspectives(records)
        with open(reports_dir / "normalized.jsonl", "w") as fh:
            for rec in dialogues:
                fh.write(json.dumps({"v": 1, "line": record_to_line(rec)}, sort_keys=True) + "\n")
        coverage = extraction_coverage(records)
        _write_json(
            reports_dir / "ingest.json",
            {
                **_stamp(cfg),
                "lines": report.n_lines,
                "records": report.n_records,
                "dialogues": len(dialogues),
                "parse_errors": [[no, msg] for no, msg in report.errors[:200]],
                "n_parse_errors": len(report.errors),
                "extraction": coverage,
            },
        )
        click.echo(
            f"{report.n_records} records ({len(dialogues)} dialogues), "
            f"{len(report.errors)} parse errors, "
            f"turn coverage {coverage['turn_coverage']:.3f}"
        )

    _run(ctx, go)


@main.command()
@click.pass_context
def stats(ctx):
    """Validation statistics over the ingested corpus."""

    def go(cfg):
        records, _ = _read_corpus(cfg)
        if not records:
            raise DataError("corpus parsed to zero records")
        st = corpus_stats(records)
        payload = {
            **_stamp(cfg),
            "dialogues": st.dialogue_count,
            "unique_scenarios": st.unique_scenarios,
            "agreement_rate": st.agreement_rate,
            "avg_turns": st.avg_turns,
            "avg_words_per_turn": st.avg_words_per_turn,
        }
        _write_json(pathlib.Path(cfg["paths"]["reports"]) / "stats.json", payload)
        click.echo(
            f"dialogues: {st.dialogue_count}\n"
            f"unique scenarios: {st.unique_scenarios}\n"
            f"agreement rate: {st.agreement_rate:.3f}\n"
            f"avg turns/dialogue: {st.avg_turns:.2f}\n"
            f"avg words/turn: {st.avg_words_per_turn:.2f}"
        )

    _run(ctx, go)


@main.command("train-sup")
@click.pass_context
def train_sup(ctx):
    """Stage 1: supervised imitation of the corpus (model S)."""

    def go(cfg):
        records, _ = _read_corpus(cfg)
        examples = training_examples(records)
        sp = cfg["supervised"]
        arch = ArchSpec(hidden=sp["hidden"], max_count=sp["max_count"])
        policy = Policy.init(arch, seed=cfg["seed"])
        hp = SupervisedHParams(
            epochs=sp["epochs"],
            batch_size=sp["batch_size"],
            lr=sp["lr"],
            grad_clip=sp["grad_clip"],
            seed=cfg["seed"],
        )
        trained, curve = supervised_train(policy, examples, hp)
        ckpt_dir = pathlib.Path(cfg["paths"]["checkpoints"])
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        trained.meta.update(stage=1, name="S", **_stamp(cfg))
        trained.save(ckpt_dir / "S.npz")
        with open(ckpt_dir / "S_curve.jsonl", "w") as fh:
            for row in curve:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        click.echo(
            f"S trained: {len(curve)} epochs, final val loss "
            f"{curve[-1]['val_loss']:.4f}, hash {trained.hash()[:12]}"
        )

    _run(ctx, go)


def _scenario_pool(cfg) -> PoolStats:
    records, _ = _read_corpus(cfg)
    return PoolStats.from_scenarios([r.scenario for r in merge_perspectives(records)])


@main.command("train-matrix")
@click.pass_context
def train_matrix(ctx):
    """Stages 2 and 3: the six personality agents from Fig-style 2x3 design."""

    def go(cfg):
        ckpt_dir = pathlib.Path(cfg["paths"]["checkpoints"])
        s_path = ckpt_dir / "S.npz"
        if not s_path.exists():
            raise ConfigError(f"supervised checkpoint missing: {s_path}; run train-sup first")
        S = Policy.load(s_path)
        sp = cfg["selfplay"]
        base = TrainerConfig(
            lr=sp["lr"],
            gamma=sp["gamma"],
            episodes=sp["episodes"],
            cutoff=sp["cutoff"],
            baseline_window=sp["baseline_window"],
            grad_clip=sp["grad_clip"],
            batch_size=sp["batch_size"],
            seed=cfg["seed"],
        )
        pool = _scenario_pool(cfg)
        rewards = {
            name: resolve_reward_config(spec)
            for name, spec in cfg.get("rewards", {"fair": "fair", "selfish": "selfish"}).items()
        }
        curve_path = ckpt_dir / "matrix_curves.jsonl"
        with open(curve_path, "w") as fh:

            def sink(row):
                fh.write(json.dumps(row, sort_keys=True) + "\n")

            manifest = build_matrix(S, base, ckpt_dir, pool, log_sink=sink, rewards=rewards)
        manifest["config_hash"] = config_hash(cfg)
        _write_json(ckpt_dir / "manifest.json", manifest)
        click.echo(f"trained {len(manifest['agents'])} agents -> {ckpt_dir / 'manifest.json'}")

    _run(ctx, go)


@main.command()
@click.pass_context
def tournament(ctx):
    """Round-robin over the trained pool; persists every episode."""

    def go(cfg):
        ckpt_dir = pathlib.Path(cfg["paths"]["checkpoints"])
        manifest = load_manifest(ckpt_dir / "manifest.json")
        agents = {a["name"]: load_agent(manifest, a["name"]) for a in manifest["agents"]}
        if cfg["tournament"].get("include_supervised", False):
            agents["S"] = load_agent(manifest, "S")
        tp = cfg["tournament"]
        tcfg = TournamentConfig(
            n_scenarios=tp["n_scenarios"],
            symmetrize=tp["symmetrize"],
            temperature=tp["temperature"],
            cutoff=cfg["selfplay"]["cutoff"],
            seed=cfg["seed"],
        )
        pool = _scenario_pool(cfg)
        scenarios = scenario_list(tcfg, pool)
        grid = run_grid(agents, scenarios, tcfg)
        out = pathlib.Path(cfg["paths"]["reports"]) / "grid"
        save_grid(grid, out)
        _write_json(out / "run.json", {**_stamp(cfg), "agents": grid.names, "n_per_cell": tcfg.episodes_per_pair})
        click.echo(f"grid of {len(grid.names)} agents saved to {out}")

    _run(ctx, go)


@main.command()
@click.pass_context
def report(ctx):
    """Metrics table and heatmaps from persisted tournament results."""

    def go(cfg):
        out = pathlib.Path(cfg["paths"]["reports"])
        grid_dir = out / "grid"
        if not (grid_dir / "grid.json").exists():
            raise DataError(f"no persisted grid under {grid_dir}; run tournament first")
        grid = load_grid(grid_dir)
        table = metrics_table(grid)
        table.update(_stamp(cfg))
        _write_json(out / "metrics.json", table)
        for metric in ("own_points", "joint_points", "walkaway_pct"):
            hm = heatmaps(grid, metric)
            hm.update(_stamp(cfg))
            _write_json(out / f"heatmap_{metric}.json", hm)
            _render_heatmap(hm, out / f"heatmap_{metric}.png")
        _render_table(table, out / "metrics.txt")
        click.echo(f"reports written under {out}")

    _run(ctx, go)


def _render_heatmap(hm: dict, path: pathlib.Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.array([[v if v is not None else np.nan for v in row] for row in hm["matrix"]])
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(data, cmap="viridis")
    ax.set_xticks(range(len(hm["agents"])), hm["agents"], rotation=45, ha="right")
    ax.set_yticks(range(len(hm["agents"])), hm["agents"])
    ax.set_xlabel("column agent (opponent)")
    ax.set_ylabel("row agent")
    ax.set_title(hm["metric"])
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            if np.isfinite(data[i, j]):
                ax.text(j, i, f"{data[i, j]:.1f}", ha="center", va="center", color="w", fontsize=8)
    fig.colorbar(im)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Date": None})  # no embedded timestamp
    plt.close(fig)


def _render_table(table: dict, path: pathlib.Path) -> None:
    lines = [
        f"{'agent':<24} {'pts incl':>9} {'partner':>9} {'joint':>7} "
        f"{'pts excl':>9} {'partner':>9} {'joint':>7} {'walk%':>6}"
    ]
    for row in table["rows"]:
        inc, exc = row["including"], row["excluding"]

        def f(x):
            return f"{x:.2f}" if x is not None else "--"

        lines.append(
            f"{row['agent']:<24} {f(inc['agent_points']):>9} {f(inc['partner_points']):>9} "
            f"{f(inc['joint_points']):>7} {f(exc['agent_points']):>9} "
            f"{f(exc['partner_points']):>9} {f(exc['joint_points']):>7} "
            f"{inc['walkaway_pct']:>6.2f}"
        )
    path.write_text("\n".join(lines) + "\n")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--frontend", "frontend_dir", default=None, help="serve a built UI from this directory")
@click.pass_context
def serve(ctx, host, port, frontend_dir):
    """Run the live arena service over the trained manifest."""

    def go(cfg):
        import uvicorn

        from .arena.service import Arena, create_app

        ckpt_dir = pathlib.Path(cfg["paths"]["checkpoints"])
        pool = None
        try:
            pool = _scenario_pool(cfg)
        except DataError:
            pass  # fall back to default sampling constraints
        arena = Arena.from_manifest(
            ckpt_dir / "manifest.json",
            include_supervised=cfg["arena"].get("include_supervised", False),
            db_path=cfg["paths"]["arena_db"],
            cutoff=cfg["selfplay"]["cutoff"],
            temperature=cfg["arena"]["temperature"],
            scenario_pool=pool,
            seed=cfg["seed"],
        )
        app = create_app(arena)
        if frontend_dir:
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
        uvicorn.run(app, host=host, port=port)

    _run(ctx, go)


@main.command("compare-walkaways")
@click.argument("k1", type=int)
@click.argument("n1", type=int)
@click.argument("k2", type=int)
@click.argument("n2", type=int)
@click.pass_context
def compare_walkaways(ctx, k1, n1, k2, n2):
    """Chi-square + bootstrap CI for two walkaway proportions."""

    def go(cfg):
        res = compare_proportions(k1, n1, k2, n2, seed=cfg["seed"])
        click.echo(json.dumps(res, indent=2, sort_keys=True))

    _run(ctx, go)


if __name__ == "__main__":
    main()
