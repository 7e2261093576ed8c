"""Subcommand wiring: parse flags, build the effective config, run one use case."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from src.application.dtos.config_dto import RunConfig
from src.application.use_cases.check_gradients import CheckGradientsUseCase
from src.application.use_cases.convert_dataset import ConvertDatasetUseCase
from src.application.use_cases.evaluate_model import PROTOCOLS, EvaluateModelUseCase
from src.application.use_cases.generate_synthetic import GenerateSyntheticUseCase
from src.application.use_cases.infer_image import InferImageUseCase
from src.application.use_cases.run_ablation import (
    DEFAULT_GAMMAS,
    AblationData,
    RunAblationUseCase,
)
from src.application.use_cases.train_model import TrainModelUseCase
from src.application.use_cases.validate_taxonomy import ValidateTaxonomyUseCase
from src.infrastructure.cli import dependencies as deps
from src.infrastructure.config.run_config import (
    config_document,
    config_hash,
    config_keys,
    default_log_level,
    default_out_dir,
    load_config,
)
from src.infrastructure.storage.dataset_storage import PRESETS
from src.infrastructure.storage.run_storage import RunStorage, dumps_stable

logger = logging.getLogger(__name__)


def _keys_epilog() -> str:
    lines = ["configuration keys (--set KEY=VALUE):"]
    lines += [f"  {key} = {default}" for key, default in config_keys()]
    return "\n".join(lines)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML config file with dotted keys")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one dotted key (repeatable)",
    )
    parser.add_argument(
        "--out", type=Path, default=None, help="Output directory (default: $PARTSEG_OUT or runs/)"
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed of sampling and synthesis")
    parser.add_argument(
        "--log-level", default=default_log_level(), help="Logging level (default: INFO)"
    )


def _sub(subparsers, name: str, help_text: str) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        name,
        help=help_text,
        description=help_text,
        epilog=_keys_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _common(parser)
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partseg", description="Open-vocabulary part segmentation at desk scale"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    taxonomy = commands.add_parser("taxonomy", help="Category taxonomy tools")
    taxonomy_cmds = taxonomy.add_subparsers(dest="action", required=True)
    p = _sub(taxonomy_cmds, "validate", "Validate a taxonomy JSON, dataset dir or preset")
    p.add_argument("source", help=f"Path or preset name ({', '.join(PRESETS)})")
    p.set_defaults(handler=cmd_taxonomy_validate)

    synth = commands.add_parser("synth", help="Synthetic dataset tools")
    synth_cmds = synth.add_subparsers(dest="action", required=True)
    p = _sub(synth_cmds, "generate", "Write the synthetic train/val benchmark")
    p.set_defaults(handler=cmd_synth_generate)

    p = _sub(commands, "convert", "Convert index-mask datasets into the portable layout")
    p.add_argument("--source", type=Path, required=True, help="Dir with images/ and labels/")
    p.add_argument(
        "--categories", type=Path, required=True, help="Taxonomy JSON listing the categories"
    )
    p.set_defaults(handler=cmd_convert)

    p = _sub(commands, "train", "Train on the seen categories of a dataset")
    p.add_argument("--data", type=Path, required=True, help="Dataset root with train/ and val/")
    p.add_argument("--resume", type=Path, help="Checkpoint to continue from")
    p.add_argument(
        "--allow-config-mismatch",
        action="store_true",
        help="Resume even if the checkpoint was written with another config",
    )
    p.set_defaults(handler=cmd_train)

    p = _sub(commands, "eval", "Evaluate a checkpoint under one or both protocols")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="Dataset root")
    p.add_argument("--split", default="val", help="Split directory name (default: val)")
    p.add_argument("--protocol", choices=[*PROTOCOLS, "both"], default="both")
    p.add_argument("--taxonomy", help="Evaluate with another category vocabulary")
    p.set_defaults(handler=cmd_eval)

    p = _sub(commands, "infer", "Segment one image with the Pred-All protocol")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--taxonomy", required=True, help="Taxonomy JSON, dataset dir or preset")
    p.add_argument("--category", help="Category whose attention map is plotted")
    p.set_defaults(handler=cmd_infer)

    p = _sub(commands, "losscheck", "Finite-difference check of every gradient")
    p.add_argument("--instances", type=int, default=50, help="Random instances per function")
    p.set_defaults(handler=cmd_losscheck)

    ablate = commands.add_parser("ablate", help="Ablation tables")
    ablate_cmds = ablate.add_subparsers(dest="action", required=True)
    p = _sub(ablate_cmds, "gamma", "Sweep the binarization threshold")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--gammas", type=_float_list, default=list(DEFAULT_GAMMAS))
    p.add_argument("--seeds", type=_int_list, default=None, help="Comma-separated seeds")
    p.add_argument("--checkpoint", type=Path, help="Evaluate fixed weights instead of training")
    p.set_defaults(handler=cmd_ablate_gamma)
    p = _sub(ablate_cmds, "lambda", "Toggle object/part guidance and attention losses")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--grid", choices=["guidance", "attention"], default="guidance")
    p.add_argument("--seeds", type=_int_list, default=None, help="Comma-separated seeds")
    p.set_defaults(handler=cmd_ablate_lambda)
    return parser


# --------- context ---------
class RunContext:
    """Effective config, its hash and the output directory of one invocation."""

    def __init__(self, args: argparse.Namespace) -> None:
        extra: dict[str, Any] = {}
        if args.seed is not None:
            extra = {"train.seed": args.seed, "synth.seed": args.seed}
        self.config: RunConfig = load_config(args.config, args.overrides, extra)
        self.config_hash = config_hash(self.config)
        self.runs: RunStorage = deps.get_run_storage(args.out or default_out_dir())
        self.runs.write_config(config_document(self.config), self.config_hash)
        self.checkpoints = deps.get_checkpoint_storage()
        logger.debug("Effective config %s", self.config_hash[:12])


def _print(payload: Any) -> None:
    sys.stdout.write(dumps_stable(payload))


# --------- handlers ---------
def cmd_taxonomy_validate(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    summary = ValidateTaxonomyUseCase(deps.get_dataset_storage(".")).execute(args.source)
    ctx.runs.write_json("taxonomy_report.json", summary)
    _print(summary)
    return 0


def cmd_synth_generate(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    summary = GenerateSyntheticUseCase(ctx.runs.out_dir).execute(ctx.config.synth)
    _print(summary)
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    doc = json.loads(args.categories.read_text(encoding="utf-8"))
    use_case = ConvertDatasetUseCase(args.source, deps.get_dataset_storage(ctx.runs.out_dir))
    _print(use_case.execute(doc["categories"], doc.get("unseen_objects", [])))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    train, taxonomy = deps.get_train_split(args.data)
    val = val_taxonomy = None
    if ctx.config.train.eval_every:
        val, val_taxonomy = deps.get_eval_split(args.data)
    result = TrainModelUseCase(ctx.runs, ctx.checkpoints).execute(
        ctx.config,
        ctx.config_hash,
        train,
        taxonomy,
        val,
        val_taxonomy,
        resume=args.resume,
        allow_config_mismatch=args.allow_config_mismatch,
    )
    last = result.reports[-1] if result.reports else None
    _print(
        {
            "steps": result.steps,
            "last_checkpoint": str(result.last_checkpoint),
            "best_checkpoint": str(result.best_checkpoint) if result.best_checkpoint else None,
            "final_L_all": last.l_all if last else None,
            "frozen_unchanged": result.frozen_checksum_before == result.frozen_checksum_after,
        }
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    split, taxonomy = deps.get_eval_split(args.data, args.split, args.taxonomy)
    model = deps.get_model_from_checkpoint(args.checkpoint, ctx.config, ctx.checkpoints)
    evaluator = EvaluateModelUseCase(ctx.config.eval, ctx.config.train.attn)
    protocols = PROTOCOLS if args.protocol == "both" else (args.protocol,)
    for protocol in protocols:
        report = evaluator.execute(model, split, taxonomy, protocol, ctx.config_hash)
        ctx.runs.write_report(report, f"eval_{protocol}")
        sys.stdout.write(RunStorage.metric_table(report))
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    taxonomy = deps.get_dataset_storage(".").load_taxonomy(args.taxonomy)
    model = deps.get_model_from_checkpoint(args.checkpoint, ctx.config, ctx.checkpoints)
    use_case = InferImageUseCase(ctx.runs, ctx.config.train.attn)
    _print(use_case.execute(model, args.image, taxonomy, args.category))
    return 0


def cmd_losscheck(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    seed = args.seed if args.seed is not None else 0
    results, table = CheckGradientsUseCase(ctx.runs).execute(args.instances, seed)
    sys.stdout.write(table)
    return 0 if all(r.ok for r in results) else 1


def _ablation_data(ctx: RunContext, data_dir: Path) -> AblationData:
    train, train_taxonomy = deps.get_train_split(data_dir)
    val, val_taxonomy = deps.get_eval_split(data_dir)
    small = ctx.config.synth.parts[-1]
    return AblationData(
        train, train_taxonomy, val, val_taxonomy, small if small in val_taxonomy.parts else None
    )


def cmd_ablate_gamma(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    use_case = RunAblationUseCase(ctx.runs, ctx.checkpoints)
    seeds = args.seeds or [ctx.config.train.seed]
    table = use_case.gamma(
        ctx.config, _ablation_data(ctx, args.data), args.gammas, seeds, args.checkpoint
    )
    ctx.runs.write_ablation(table, "ablation_gamma")
    sys.stdout.write(RunStorage.ablation_table(table))
    return 0


def cmd_ablate_lambda(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    use_case = RunAblationUseCase(ctx.runs, ctx.checkpoints)
    seeds = args.seeds or [ctx.config.train.seed]
    table = use_case.lambdas(ctx.config, _ablation_data(ctx, args.data), args.grid, seeds)
    ctx.runs.write_ablation(table, f"ablation_lambda_{args.grid}")
    sys.stdout.write(RunStorage.ablation_table(table))
    return 0
