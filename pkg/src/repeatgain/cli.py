"""Command-line surface: synth, scan, train, plan, eval.

Every command resolves its configuration by layering flag > environment
(`REPEATGAIN_*`) > config file (INI section per command) > built-in default,
prints the effective configuration with per-field provenance as JSON, and
persists it next to the artifacts it writes. Exit codes: 0 success, 1
usage/config, 2 data error, 3 oracle/transport, 4 internal invariant.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import aoi, oracles, planner, trainer
from .errors import (
    ConfigError,
    InternalError,
    OracleError,
    RepeatGainError,
    SampleLoadError,
    CheckpointError,
    ManifestError,
)
from .losses import LossConfig
from .scorer import ScorerConfig, forward, init_params, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

ENV_PREFIX = "REPEATGAIN_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3
EXIT_INTERNAL = 4


class UsageError(RepeatGainError):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route through our codes
        raise UsageError(message)


@dataclasses.dataclass(frozen=True)
class Field:
    name: str
    type: type
    default: object
    help: str
    choices: tuple | None = None


_ORACLE_FIELDS = [
    Field("oracle", str, "synthetic", "oracle kind", ("synthetic", "replay", "remote")),
    Field("endpoint", str, "", "remote oracle base URL"),
    Field("auth_token", str, "", "bearer token for the remote oracle"),
    Field("records_dir", str, "", "records directory for the replay oracle"),
    Field("in_flight", int, 4, "max concurrent oracle requests"),
    Field("timeout", float, 30.0, "remote request timeout in seconds"),
    Field("retries", int, 3, "remote retry attempts for logprob calls"),
]

_SCORER_FIELDS = [
    Field("heads", int, 8, "attention heads"),
    Field("ffn_hidden", int, 0, "FFN hidden width (0: same as dim)"),
    Field("prior_weight", float, 5.0, "similarity prior weight"),
]

SCHEMAS: dict[str, list[Field]] = {
    "synth": [
        Field("out", str, "", "output dataset directory"),
        Field("n_samples", int, 100, "number of samples to generate"),
        Field("frames", int, 32, "frames per sample"),
        Field("dim", int, 32, "embedding width"),
        Field("tokens", int, 8, "question tokens per sample"),
        Field("key_frames", int, 13, "planted key frames per sample"),
        Field("gain_scale", float, 0.29, "planted gain scale"),
        Field("noise_scale", float, 0.004, "gain noise sigma"),
        Field("key_alignment", float, 1.0, "key frame signal-to-noise"),
        Field("token_noise", float, 0.1, "token perturbation scale"),
        Field("prior_alignment", float, 0.0, "similarity-alignment of hidden gains"),
        Field("qmap_rank", int, 4, "rank of the hidden question map (0: full)"),
        Field("n_options", int, 4, "answer options per question"),
        Field("start_index", int, 0, "first sample index within the world"),
        Field("seed", int, 0, "world seed"),
    ],
    "scan": [
        Field("dataset", str, "", "dataset directory"),
        Field("out", str, "", "records output directory"),
        Field("all_frames", bool, True, "scan every frame of each sample"),
        Field("k_candidates", int, 0, "candidate half-width (0 with all_frames)"),
        Field("checkpoint", str, "", "checkpoint for score-based candidates"),
        Field("seed", int, 0, "candidate sampling seed"),
        *_ORACLE_FIELDS,
    ],
    "train": [
        Field("dataset", str, "", "dataset directory"),
        Field("out", str, "", "run output directory"),
        Field("lr", float, 1e-4, "learning rate"),
        Field("epochs", int, 1, "training epochs"),
        Field("accumulation", int, 4, "gradient accumulation steps"),
        Field("k_candidates", int, 16, "candidate half-width K"),
        Field("reg_weight", float, 1.0, "regression loss weight"),
        Field("rank_weight", float, 0.1, "ranking loss weight"),
        Field("margin", float, 0.2, "ranking margin"),
        Field("extra_negatives", int, 16, "non-candidate negatives per sample"),
        Field("seed", int, 0, "training + init seed"),
        Field("cache_dir", str, "", "scan record cache directory"),
        Field("checkpoint_every", int, 0, "also checkpoint every N steps (0: end only)"),
        *_SCORER_FIELDS,
        *_ORACLE_FIELDS,
    ],
    "plan": [
        Field("dataset", str, "", "dataset directory"),
        Field("checkpoint", str, "", "trained scorer checkpoint"),
        Field("out", str, "", "output directory for plans.json"),
        Field("k", int, 0, "frames to repeat (0: n/16 scaled default)"),
    ],
    "eval": [
        Field("dataset", str, "", "dataset directory (needs truth sidecars)"),
        Field("checkpoint", str, "", "trained scorer checkpoint"),
        Field("out", str, "", "output directory for metrics.json"),
        Field("k", int, 8, "plan size for recall and gain metrics"),
        Field("seed", int, 0, "random-k baseline seed"),
    ],
}


@dataclasses.dataclass
class RunConfig:
    command: str
    values: dict
    provenance: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def document(self) -> dict:
        return {
            "command": self.command,
            "config": self.values,
            "provenance": self.provenance,
        }

    def emit(self, out_dir: Path | None) -> None:
        doc = json.dumps(self.document(), indent=2)
        print(doc)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "run_config.json").write_text(doc + "\n")


def _parse_value(field: Field, raw: str):
    if field.type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: cannot parse boolean from {raw!r}")
    try:
        return field.type(raw)
    except ValueError as exc:
        raise ConfigError(f"{field.name}: {exc}") from exc


def resolve_config(command: str, args: argparse.Namespace) -> RunConfig:
    """Layer defaults < config file < environment < flags, keeping provenance."""
    schema = SCHEMAS[command]
    values, provenance = {}, {}
    file_section = {}
    if args.config:
        parser = configparser.ConfigParser()
        read = parser.read(args.config)
        if not read:
            raise ConfigError(f"config file not found: {args.config}")
        if parser.has_section(command):
            file_section = dict(parser.items(command))
    for field in schema:
        values[field.name] = field.default
        provenance[field.name] = "default"
        if field.name in file_section:
            values[field.name] = _parse_value(field, file_section[field.name])
            provenance[field.name] = "file"
        env_key = ENV_PREFIX + field.name.upper()
        if env_key in os.environ:
            values[field.name] = _parse_value(field, os.environ[env_key])
            provenance[field.name] = "env"
        flag_value = getattr(args, field.name, None)
        if flag_value is not None:
            values[field.name] = flag_value
            provenance[field.name] = "flag"
        if field.choices and values[field.name] not in field.choices:
            raise ConfigError(
                f"{field.name} must be one of {field.choices}, got {values[field.name]!r}"
            )
    return RunConfig(command=command, values=values, provenance=provenance)


def build_parser() -> _Parser:
    parser = _Parser(prog="repeatgain", description=__doc__)
    parser.add_argument("--config", default="", help="INI config file (section per command)")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in SCHEMAS.items():
        p = sub.add_parser(command, help=f"{command} stage")
        for field in schema:
            flag = "--" + field.name.replace("_", "-")
            if field.type is bool:
                group = p.add_mutually_exclusive_group()
                group.add_argument(
                    flag, dest=field.name, action="store_const", const=True,
                    default=None, help=field.help,
                )
                group.add_argument(
                    "--no-" + field.name.replace("_", "-"), dest=field.name,
                    action="store_const", const=False, default=None,
                    help=f"negate {flag}",
                )
            else:
                p.add_argument(
                    flag, dest=field.name, type=field.type, default=None,
                    help=f"{field.help} (default {field.default!r})",
                )
    return parser


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if cfg.values[name] in ("", 0) and name in ("out", "dataset", "checkpoint"):
            raise UsageError(f"--{name.replace('_', '-')} is required for {cfg.command}")


def _spec_from_config(cfg: RunConfig) -> oracles.SyntheticOracleSpec:
    return oracles.SyntheticOracleSpec(
        seed=cfg.seed,
        n_frames=cfg.frames,
        dim=cfg.dim,
        n_key_frames=cfg.key_frames,
        gain_scale=cfg.gain_scale,
        noise_scale=cfg.noise_scale,
        key_alignment=cfg.key_alignment,
        n_tokens=cfg.tokens,
        token_noise=cfg.token_noise,
        prior_alignment=cfg.prior_alignment,
        qmap_rank=cfg.qmap_rank or None,
        n_options=cfg.n_options,
    )


def _resolve_oracle(cfg: RunConfig, dataset_dir: Path):
    kind = cfg.oracle
    if kind == "synthetic":
        return oracles.SyntheticDataset.load(dataset_dir).oracle()
    if kind == "replay":
        if not cfg.records_dir:
            raise UsageError("--records-dir is required with --oracle replay")
        return oracles.ReplayOracle.from_dir(cfg.records_dir)
    if not cfg.endpoint:
        raise UsageError("--endpoint is required with --oracle remote")
    return oracles.RemoteOracle(
        cfg.endpoint,
        auth_token=cfg.auth_token or None,
        in_flight_budget=cfg.in_flight,
        timeout=cfg.timeout,
        retries=cfg.retries,
    )


def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "out")
    out_dir = Path(cfg.out)
    cfg.emit(out_dir)
    dataset = oracles.generate_synthetic_dataset(
        _spec_from_config(cfg), cfg.n_samples, start_index=cfg.start_index
    )
    dataset.save(out_dir)
    log.info("wrote %d samples to %s", cfg.n_samples, out_dir)
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "out")
    out_dir = Path(cfg.out)
    cfg.emit(out_dir)
    dataset_dir = Path(cfg.dataset)
    samples = oracles.load_samples(dataset_dir)
    oracle = _resolve_oracle(cfg, dataset_dir)

    scorer_state = None
    if not cfg.all_frames:
        if cfg.k_candidates < 1:
            raise UsageError("--k-candidates must be >= 1 when not scanning all frames")
        if cfg.checkpoint:
            scorer_state = load_checkpoint(cfg.checkpoint)

    scanned = skipped = 0
    for index, sample in enumerate(samples):
        record_path = out_dir / f"{sample.sample_id}.json"
        if record_path.is_file():
            existing = aoi.RepeatGainRecord.load(record_path)
            if existing.complete and existing.oracle_id == oracle.oracle_id:
                skipped += 1
                continue
        if cfg.all_frames:
            candidates = list(range(sample.n_frames))
        else:
            if scorer_state is not None:
                params, scorer_config = scorer_state
                scores = forward(sample, params, scorer_config)
            else:
                scores = np.zeros(sample.n_frames)
            candidates = aoi.select_candidates(
                scores, min(cfg.k_candidates, sample.n_frames), seed=[cfg.seed, index]
            )
        record = aoi.scan_repeat_gains(sample, candidates, oracle, cfg.in_flight)
        record.save(record_path)
        scanned += 1
    log.info("scanned %d samples (%d already complete)", scanned, skipped)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "out")
    out_dir = Path(cfg.out)
    cfg.emit(out_dir)
    dataset_dir = Path(cfg.dataset)
    samples = oracles.load_samples(dataset_dir)
    if not samples:
        raise ManifestError(f"no samples in {dataset_dir}")
    oracle = _resolve_oracle(cfg, dataset_dir)

    dim = samples[0].dim
    scorer_config = ScorerConfig(
        dim=dim,
        n_heads=cfg.heads,
        ffn_hidden=cfg.ffn_hidden or dim,
        prior_weight=cfg.prior_weight,
        seed=cfg.seed,
    )
    params = init_params(scorer_config)
    loss_config = LossConfig(
        reg_weight=cfg.reg_weight,
        rank_weight=cfg.rank_weight,
        margin=cfg.margin,
        n_extra_negatives=cfg.extra_negatives,
    )
    train_config = trainer.TrainConfig(
        learning_rate=cfg.lr,
        epochs=cfg.epochs,
        grad_accumulation=cfg.accumulation,
        k_candidates=cfg.k_candidates,
        loss=loss_config,
        seed=cfg.seed,
        cache_dir=Path(cfg.cache_dir) if cfg.cache_dir else None,
        max_in_flight=cfg.in_flight,
    )

    checkpoint_path = out_dir / "checkpoint.rgc"
    on_step = None
    if cfg.checkpoint_every:
        def on_step(step, step_params, _every=cfg.checkpoint_every):
            if step % _every == 0:
                save_checkpoint(step_params, scorer_config, checkpoint_path)

    trained, train_log = trainer.train(
        samples, oracle, params, scorer_config, train_config, on_step=on_step
    )
    save_checkpoint(trained, scorer_config, checkpoint_path)
    train_log.save_ndjson(out_dir / "trainlog.ndjson")
    log.info(
        "trained %d steps, %d oracle calls, %d skipped; checkpoint at %s",
        len(train_log.steps),
        train_log.total_oracle_calls,
        train_log.skipped_samples,
        checkpoint_path,
    )
    return EXIT_OK


def cmd_plan(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "checkpoint", "out")
    out_dir = Path(cfg.out)
    cfg.emit(out_dir)
    if cfg.provenance["k"] != "default" and cfg.k < 1:
        raise UsageError("--k must be >= 1")
    params, scorer_config = load_checkpoint(cfg.checkpoint)
    samples = oracles.load_samples(Path(cfg.dataset))
    plans = []
    for sample in samples:
        k = cfg.k or None  # 0 sentinel: scaled default max(1, n/16)
        plan = planner.plan(sample, params, scorer_config, k)
        plan.validate()
        plans.append(json.loads(plan.to_json()))
    doc = json.dumps(plans, indent=2) + "\n"
    (out_dir / "plans.json").write_text(doc)
    print(json.dumps({"plans_written": len(plans), "out": str(out_dir / "plans.json")}))
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "checkpoint", "out")
    out_dir = Path(cfg.out)
    cfg.emit(out_dir)
    params, scorer_config = load_checkpoint(cfg.checkpoint)
    dataset = oracles.SyntheticDataset.load(Path(cfg.dataset))
    ranking = trainer.evaluate_ranking(
        params, scorer_config, dataset.samples, dataset.truth, k=cfg.k
    )
    strategies = trainer.evaluate_plan_strategies(
        params, scorer_config, dataset.samples, dataset.truth, k=cfg.k, seed=cfg.seed
    )
    metrics = {"ranking": ranking, "strategies": strategies}
    doc = json.dumps(metrics, indent=2) + "\n"
    (out_dir / "metrics.json").write_text(doc)
    print(doc, end="")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "scan": cmd_scan,
    "train": cmd_train,
    "plan": cmd_plan,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("REPEATGAIN_LOGLEVEL", "INFO"),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SampleLoadError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (InternalError, RepeatGainError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
