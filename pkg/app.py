import os
import sys
import csv
import time
import logging
import argparse
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar

import numpy as np
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from models.dataset import SyntheticSpaceSpec
from models.encoding import EncodingScheme, SchemeKind
from models.graph import OpVocabulary
from models.predictor import ModelKind, TrainConfig
from models.report import RunManifest
from models.search import GaConfig, SearchSpaceDef
from utils.dependencies import Services, get_services
from utils.errors import ConfigError, EmptyTrainError, GiaugError
from utils.io import dump_json, iter_jsonl, read_json, sidecar_path, write_json_atomic, write_jsonl
from utils.settings import configure_logging, get_settings

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

ConfigModel = TypeVar("ConfigModel", bound=BaseModel)


def load_config(path: str, model: Type[ConfigModel]) -> ConfigModel:
    """Read a JSON config file into a pydantic model"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        return model.model_validate(read_json(path))
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid {model.__name__} in {path}: {str(e)}")


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_seeds(text: str) -> List[int]:
    """'3' means seeds 0,1,2; '4,7,9' lists seeds explicitly"""
    values = parse_int_list(text)
    if len(values) == 1 and "," not in text:
        return list(range(values[0]))
    return values


def write_manifest(out: str, command: str, config: Dict[str, Any], seeds: Sequence[int],
                   inputs: Dict[str, str], outputs: Dict[str, str], started: float) -> None:
    manifest = RunManifest(
        command=command,
        config=config,
        seeds=list(seeds),
        inputs=inputs,
        outputs=outputs,
        tool_version=TOOL_VERSION,
        wall_time_seconds=round(time.monotonic() - started, 3),
    )
    write_json_atomic(sidecar_path(out, "manifest"), manifest.model_dump(mode="json"))


def resolve_scheme(value: str, max_vertices: int, vocab: OpVocabulary) -> EncodingScheme:
    """A scheme kind name builds a scheme from the dataset; anything else is a descriptor file"""
    if value in {k.value for k in SchemeKind}:
        return EncodingScheme(kind=SchemeKind(value), max_vertices=max_vertices, vocab=vocab)
    if not os.path.exists(value):
        raise FileNotFoundError(f"Scheme descriptor not found: {value}")
    try:
        scheme = EncodingScheme.from_descriptor(read_json(value))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"Invalid scheme descriptor {value}: {str(e)}")
    if scheme.max_vertices < max_vertices:
        raise ConfigError(f"Scheme holds {scheme.max_vertices} vertices but the dataset needs {max_vertices}")
    return scheme


def load_space(path: str) -> SearchSpaceDef:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Search space file not found: {path}")
    obj = read_json(path)
    try:
        vocab = OpVocabulary.from_ops(obj.pop("vocab"))
        return SearchSpaceDef.model_validate({**obj, "vocab": vocab})
    except (KeyError, PydanticValidationError) as e:
        raise ConfigError(f"Invalid search space in {path}: {str(e)}")


# -- commands -----------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    spec = load_config(args.spec, SyntheticSpaceSpec)
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    dataset = services.dataset.generate_synthetic(spec, args.count)
    services.dataset.save_dataset(dataset, args.out)
    write_manifest(args.out, "synth", {"spec": spec.model_dump(), "count": args.count}, [spec.seed],
                   {"spec": args.spec}, {"dataset": args.out}, started)
    print(f"records={len(dataset)}")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    if not os.path.exists(args.input):
        raise FileNotFoundError(f"Input file not found: {args.input}")
    count = write_jsonl(args.out, services.dataset.convert_nasbench(iter_jsonl(args.input), args.format))
    write_manifest(args.out, "convert", {"format": args.format}, [], {"input": args.input}, {"dataset": args.out}, started)
    print(f"records={count}")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    dataset = services.dataset.load_dataset(args.dataset)
    scheme = resolve_scheme(args.scheme, dataset.max_vertices, dataset.vocab)
    conflicts_path = f"{args.out}.conflicts.log"
    with open(args.out, "w", encoding="utf-8") as out, open(conflicts_path, "w", encoding="utf-8") as conflicts:
        stats = services.augmentation.augment_to_file(dataset, scheme, out, conflicts, cap=args.cap, seed=args.seed)
    services.dataset.save_scheme(scheme, args.out)
    write_manifest(
        args.out, "augment",
        {"scheme": scheme.to_descriptor(), "cap": args.cap, "stats": stats.model_dump(exclude={"per_source_candidates", "per_source_unique"})},
        [args.seed], {"dataset": args.dataset}, {"augmented": args.out, "conflicts": conflicts_path}, started,
    )
    print(f"candidates={stats.candidates} unique={stats.unique} conflicts={stats.conflicts}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    config = load_config(args.config, TrainConfig) if args.config else TrainConfig()
    overrides: Dict[str, Any] = {}
    if args.model is not None:
        overrides["model_kind"] = ModelKind(args.model)
    if args.trees is not None:
        overrides["rf_trees"] = args.trees
    if args.k is not None:
        overrides["knn_k"] = args.k
    if args.max_depth is not None:
        overrides["dt_max_depth"] = args.max_depth
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        config = TrainConfig.model_validate({**config.model_dump(), **overrides})
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid training configuration: {str(e)}")

    augmented = services.dataset.load_augmented(args.dataset)
    predictor = services.predictor.fit(augmented, augmented.scheme, config)
    services.predictor.save(predictor, args.out)
    write_manifest(args.out, "train", config.model_dump(mode="json"), [config.seed],
                   {"dataset": args.dataset}, {"model": args.out}, started)
    print(f"model={config.model_kind.value} samples={len(augmented)}")
    return EXIT_OK


def _is_augmented_file(path: str) -> bool:
    for _, obj in iter_jsonl(path):
        return "encoding" in obj
    return False


def cmd_eval(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    if not os.path.exists(args.dataset):
        raise FileNotFoundError(f"Dataset file not found: {args.dataset}")
    predictor = services.predictor.load(args.model)

    if _is_augmented_file(args.dataset):
        augmented = services.dataset.load_augmented(args.dataset)
        if augmented.scheme.fingerprint() != predictor.scheme_fingerprint:
            raise ConfigError(f"{args.dataset} was encoded with a different scheme than {args.model}")
        predicted = services.predictor.predict(predictor, augmented.features())
        actual = augmented.targets()
    else:
        dataset = services.dataset.load_dataset(args.dataset, vocab=predictor.scheme.vocab)
        predicted = np.array([
            services.predictor.predict_architecture(predictor, r.graph, mode=args.mode, cap=args.cap, seed=args.seed)
            for r in dataset.records
        ])
        actual = np.array([r.performance for r in dataset.records])

    report = services.metrics.metrics_report(predicted, actual, args.ks)
    write_json_atomic(args.out, report.model_dump(mode="json"))
    write_manifest(args.out, "eval", {"ks": args.ks, "mode": args.mode, "cap": args.cap}, [args.seed],
                   {"model": args.model, "dataset": args.dataset}, {"report": args.out}, started)
    print(dump_json(report.model_dump(mode="json")))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    dataset = services.dataset.load_dataset(args.dataset)
    config = TrainConfig(model_kind=ModelKind(args.model))
    if args.trees is not None:
        config = config.model_copy(update={"rf_trees": args.trees})
    if args.k is not None:
        config = config.model_copy(update={"knn_k": args.k})
    rows = services.ablation.run(dataset, args.fraction, args.seeds, config, cap=args.cap, ks=args.ks)

    table = [row.model_dump(mode="json") for row in rows]
    write_json_atomic(args.out, {"model": args.model, "fraction": args.fraction, "rows": table})
    write_manifest(args.out, "ablate", {"train": config.model_dump(mode="json"), "fraction": args.fraction, "cap": args.cap},
                   args.seeds, {"dataset": args.dataset}, {"table": args.out}, started)
    for row in rows:
        print(f"case={row.case} encoding={row.encoding} augmented={row.augmented} "
              f"tau={row.tau_mean:.4f}+-{row.tau_std:.4f} n_at_k={row.n_at_k_mean}")
    return EXIT_OK


def cmd_search(args: argparse.Namespace, services: Services) -> int:
    started = time.monotonic()
    space = load_space(args.space)
    config = load_config(args.ga, GaConfig) if args.ga else GaConfig(fitness_cap=get_settings().fitness_cap)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})

    predictor = None
    fitness = None
    inputs = {"space": args.space}
    if args.oracle:
        spec = load_config(args.oracle, SyntheticSpaceSpec)

        def fitness(graph):
            return services.dataset.score_graph(graph, spec)

        inputs["oracle"] = args.oracle
    elif args.model:
        predictor = services.predictor.load(args.model)
        inputs["model"] = args.model
    else:
        raise ConfigError("search needs --model or --oracle")

    result = services.search.run_search(space, predictor, config, fitness=fitness)
    report = {
        "best_graph": result.best_graph.to_json(),
        "predicted_score": result.predicted_score,
        "evaluations": result.evaluations,
        "history": [h.model_dump() for h in result.history],
    }
    write_json_atomic(args.out, report)
    outputs = {"report": args.out}
    if args.history_csv:
        with open(args.history_csv, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["generation", "best", "mean", "best_ever"])
            for h in result.history:
                writer.writerow([h.generation, h.best, h.mean, h.best_ever])
        outputs["history_csv"] = args.history_csv
    write_manifest(args.out, "search", config.model_dump(mode="json"), [config.seed], inputs, outputs, started)
    print(f"best={result.predicted_score:.6f} generations={len(result.history) - 1} evaluations={result.evaluations}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giaug", description="Isomorphic augmentation toolkit for architecture performance predictors")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: GIAUG_THREADS or 1)")
    # accepted after the sub-command too; SUPPRESS keeps a top-level value when omitted there
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: GIAUG_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("convert", parents=[common], help="convert pre-extracted NAS-Bench rows into dataset JSONL")
    p.add_argument("--format", choices=["nb101", "nb201"], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("augment", parents=[common], help="augment and encode a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", default=SchemeKind.GIAUG_OON.value, help="scheme kind or descriptor JSON path")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="fit a predictor on an augmented file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--model", choices=[k.value for k in ModelKind], default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a predictor on a dataset or augmented file")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--ks", type=parse_int_list, default=[5, 10])
    p.add_argument("--mode", choices=["single", "aug_mean"], default="single")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="run the four encoding/augmentation cases")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seeds", type=parse_seeds, default=[0])
    p.add_argument("--model", choices=[k.value for k in ModelKind], default=ModelKind.RF.value)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--ks", type=parse_int_list, default=[5, 10])
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("search", parents=[common], help="genetic search with a predictor or ground-truth fitness")
    p.add_argument("--space", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--oracle", default=None, help="synthetic spec whose noise-free score is the fitness")
    p.add_argument("--ga", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--history-csv", dest="history_csv", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_search)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        settings = get_settings()
        configure_logging(settings.log_level)
        services = get_services(settings, threads=args.threads)
        return args.handler(args, services)
    except (ConfigError, EmptyTrainError, FileNotFoundError, PydanticValidationError) as e:
        logger.error(f"{args.command}: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_USAGE
    except GiaugError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unhandled exception in {args.command}: {str(e)}", exc_info=True)
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
