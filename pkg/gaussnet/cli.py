"""Command line: ``gaussnet [--config FILE] [--log-level LEVEL] <command> [flags]``.

Every command prints one JSON document to stdout and logs to stderr.
Settings come from the flags, then ``GAUSSNET_*`` variables, then the
``--config`` file, then the defaults in :mod:`gaussnet.config`.

Exit codes: 0 success, 1 usage or settings error, 2 data, format or
computation error, 3 verification failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type

from gaussnet.attacks import (
    Classifier,
    GaussClassifier,
    SoftmaxClassifier,
    evaluate,
    fgsm_sweep,
    repeated_campaign,
    value_range,
)
from gaussnet.base import GaussNetError
from gaussnet.config import (
    HEAD_CHOICES,
    AppConfig,
    AttackMethod,
    CampaignConfig,
    HeadKind,
    RankConfig,
    TailorConfig,
    TrainConfig,
)
from gaussnet.container import read_head, read_model, save_head, save_model
from gaussnet.data import LabeledDataset, resolve_dataset
from gaussnet.geometry import EQUIDISTANCE_TOL, verify_equivalence
from gaussnet.network import NetworkModel, forward_penultimate
from gaussnet.reporting import (
    dump_json,
    equivalence_document,
    prediction_document,
    ranking_document,
    report_document,
    runs_document,
    sweep_document,
    write_records,
    write_scatter,
    write_sweep,
)
from gaussnet.settings import (
    BaseConfig,
    ConfigError,
    ConfigTypeError,
    ConfigValueNotFoundError,
    Env,
    from_file,
)
from gaussnet.tailoring import rank_samples, reachability_gaps, tailor_network
from gaussnet.training import accuracy, init_model, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _storages(args: argparse.Namespace, alias: str, flags: Dict[str, Any]) -> List[Any]:
    storages: List[Any] = [{alias: flags} if alias else flags, Env()]
    if args.config is not None:
        storages.append(from_file(args.config))
    return storages


def settings(
    cls: Type[BaseConfig], args: argparse.Namespace, alias: str, **flags: Any
) -> Any:
    return cls(*_storages(args, alias, flags), alias=alias)


def load_data(
    args: argparse.Namespace, app: AppConfig
) -> Tuple[LabeledDataset, LabeledDataset]:
    source = args.data if args.data is not None else app.data_dir
    return resolve_dataset(source, app.split_seed, app.split_fraction)


def classifiers(
    selection: str, model: NetworkModel, head_file: Optional[Path]
) -> List[Classifier]:
    kinds = list(HeadKind) if selection == "both" else [HeadKind(selection)]
    result: List[Classifier] = []
    for kind in kinds:
        if kind is HeadKind.SOFTMAX:
            result.append(SoftmaxClassifier(model))
        elif head_file is None:
            raise ConfigValueNotFoundError("--head-file is required for the gauss head")
        else:
            result.append(GaussClassifier(model, read_head(head_file)))
    return result


def cmd_train(args: argparse.Namespace, app: AppConfig) -> int:
    config = settings(
        TrainConfig,
        args,
        "train",
        arch=args.arch,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        momentum=args.momentum,
        seed=args.seed,
    )
    if config.arch is None:
        raise ConfigValueNotFoundError("train.arch")
    train_set, test_set = load_data(args, app)
    arch = config.arch
    if len(arch) < 2 or arch[0] != train_set.dim or arch[-1] != train_set.classes:
        raise ConfigTypeError(
            f"architecture {arch} must start at input width {train_set.dim} "
            f"and end at class count {train_set.classes}"
        )
    model = train(init_model(arch, config.seed), train_set, config)
    save_model(args.out, model)
    dump_json(
        {
            "model": str(args.out),
            "epochs": config.epochs,
            "train_accuracy": accuracy(model, train_set),
            "test_accuracy": accuracy(model, test_set),
        },
        sys.stdout,
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, app: AppConfig) -> int:
    model = read_model(args.model)
    _, test_set = load_data(args, app)
    report = verify_equivalence(model, test_set.features, args.tie_tol)
    passed = report.passed and report.norm_spread <= EQUIDISTANCE_TOL
    document = equivalence_document(report)
    document["passed"] = passed
    dump_json(document, sys.stdout)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_tailor(args: argparse.Namespace, app: AppConfig) -> int:
    config = settings(
        TailorConfig,
        args,
        "tailor",
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        centroid_refresh=args.refresh,
        seed=args.seed,
        max_backtracks=args.max_backtracks,
    )
    model = read_model(args.model)
    train_set, test_set = load_data(args, app)
    result = tailor_network(model, train_set, config)
    head_out = args.head_out or Path(args.out).with_suffix(".head")
    save_model(args.out, result.model)
    save_head(head_out, result.head)
    fp = forward_penultimate(result.model, train_set.features)
    gaps = reachability_gaps(result.head, fp, train_set.labels)
    dump_json(
        {
            "model": str(args.out),
            "head": str(head_out),
            "softmax": prediction_document(
                evaluate(SoftmaxClassifier(model), test_set)
            ),
            "gauss": prediction_document(
                evaluate(GaussClassifier(result.model, result.head), test_set)
            ),
            "final_loss": result.final_loss,
            "refresh_losses": result.refresh_losses,
            "epoch_losses": result.epoch_losses,
            "backtracks": result.backtracks,
            "reachability_gaps": gaps.gaps.tolist(),
            "class_radii": gaps.radii.tolist(),
        },
        sys.stdout,
    )
    return EXIT_OK


def cmd_attack(args: argparse.Namespace, app: AppConfig) -> int:
    config = settings(
        CampaignConfig,
        args,
        "attack",
        heads=args.head,
        method=args.method,
        epsilons=args.eps_grid,
        sample_size=args.sample,
        seed=args.seed,
        strategy=args.strategy,
        values=args.values,
        population=args.population,
        iterations=args.iterations,
        bin_width=args.bin_width,
        runs=args.runs,
    )
    model = read_model(args.model)
    _, test_set = load_data(args, app)
    heads = classifiers(config.heads, model, args.head_file)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    document: Dict[str, Any] = {}
    status = EXIT_OK

    if config.method is AttackMethod.FGSM:
        bounds = value_range(test_set)
        for classifier in heads:
            rows = fgsm_sweep(classifier, test_set, config.epsilons, bounds)
            write_sweep(out / f"fgsm_{classifier.kind.value}.csv", rows)
            document[classifier.kind.value] = {
                "prediction": prediction_document(evaluate(classifier, test_set)),
                "sweep": sweep_document(rows),
            }
    else:
        campaigns = repeated_campaign(heads, test_set, config)
        campaign = campaigns[0]
        write_records(out / "attacks.csv", campaign.reports.values())
        for classifier in heads:
            kind = classifier.kind
            write_scatter(out / f"scatter_{kind.value}.csv", campaign.scatter[kind])
            entry = report_document(campaign.reports[kind], campaign.bound_checks[kind])
            entry["prediction"] = prediction_document(evaluate(classifier, test_set))
            runs = runs_document(
                [run.reports[kind] for run in campaigns],
                [run.bound_checks[kind] for run in campaigns],
            )
            if config.runs > 1:
                entry["runs"] = runs
            document[kind.value] = entry
            if runs["bound_violations"]:
                status = EXIT_VERIFY
    dump_json(document, sys.stdout)
    return status


def cmd_rank(args: argparse.Namespace, app: AppConfig) -> int:
    config = settings(RankConfig, args, "rank", k=args.k, per_class=args.per_class)
    model = read_model(args.model)
    head = read_head(args.head_file)
    _, test_set = load_data(args, app)
    ranking = rank_samples(
        head, forward_penultimate(model, test_set.features), config.k, config.per_class
    )
    document = ranking_document(ranking)
    document["outlier_threshold"] = head.outlier_threshold
    dump_json(document, sys.stdout)
    return EXIT_OK


def _data_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data",
        help=(
            "MNIST IDX directory or "
            "blobs[:classes=..,per_class=..,dim=..,separation=..,seed=..]"
        ),
    )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="gaussnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON, TOML or YAML settings file")
    parser.add_argument("--log-level")
    commands = parser.add_subparsers(dest="command", required=True)

    train_cmd = commands.add_parser(
        "train", help="train a ReLU network with a softmax head"
    )
    _data_flag(train_cmd)
    train_cmd.add_argument("--arch", help="layer widths, e.g. 784,128,10")
    train_cmd.add_argument("--epochs", type=int)
    train_cmd.add_argument("--lr", type=float)
    train_cmd.add_argument("--batch", type=int)
    train_cmd.add_argument("--momentum", type=float)
    train_cmd.add_argument("--seed", type=int)
    train_cmd.add_argument("--out", type=Path, required=True)
    train_cmd.set_defaults(handler=cmd_train)

    verify_cmd = commands.add_parser(
        "verify", help="check softmax against centroid assignment"
    )
    verify_cmd.add_argument("--model", type=Path, required=True)
    _data_flag(verify_cmd)
    verify_cmd.add_argument("--tie-tol", type=float, default=EQUIDISTANCE_TOL)
    verify_cmd.set_defaults(handler=cmd_verify)

    tailor_cmd = commands.add_parser(
        "tailor", help="refine a network into a Gauss network"
    )
    tailor_cmd.add_argument("--model", type=Path, required=True)
    _data_flag(tailor_cmd)
    tailor_cmd.add_argument("--epochs", type=int)
    tailor_cmd.add_argument("--lr", type=float)
    tailor_cmd.add_argument("--batch", type=int)
    tailor_cmd.add_argument("--refresh", choices=["once", "epoch"])
    tailor_cmd.add_argument("--seed", type=int)
    tailor_cmd.add_argument("--max-backtracks", type=int)
    tailor_cmd.add_argument("--out", type=Path, required=True)
    tailor_cmd.add_argument("--head-out", type=Path)
    tailor_cmd.set_defaults(handler=cmd_tailor)

    attack_cmd = commands.add_parser("attack", help="FGSM sweep or one-pixel campaign")
    attack_cmd.add_argument("--model", type=Path, required=True)
    attack_cmd.add_argument("--head-file", type=Path)
    _data_flag(attack_cmd)
    attack_cmd.add_argument("--head", choices=HEAD_CHOICES)
    attack_cmd.add_argument(
        "--method", choices=[method.value for method in AttackMethod]
    )
    attack_cmd.add_argument("--eps-grid", help="step sizes, e.g. 0,0.05,0.1")
    attack_cmd.add_argument("--sample", type=int)
    attack_cmd.add_argument("--seed", type=int)
    attack_cmd.add_argument("--strategy", choices=["exhaustive", "evolution"])
    attack_cmd.add_argument("--values", type=int)
    attack_cmd.add_argument("--population", type=int)
    attack_cmd.add_argument("--iterations", type=int)
    attack_cmd.add_argument("--bin-width", type=float)
    attack_cmd.add_argument(
        "--runs", type=int, help="one-pixel campaigns on successive seeds"
    )
    attack_cmd.add_argument("--out", type=Path, required=True, help="output directory")
    attack_cmd.set_defaults(handler=cmd_attack)

    rank_cmd = commands.add_parser(
        "rank", help="prototypes and outliers by Gauss confidence"
    )
    rank_cmd.add_argument("--model", type=Path, required=True)
    rank_cmd.add_argument("--head-file", type=Path, required=True)
    _data_flag(rank_cmd)
    rank_cmd.add_argument("--k", type=int)
    rank_cmd.add_argument("--per-class", action="store_const", const=True)
    rank_cmd.set_defaults(handler=cmd_rank)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace, AppConfig], int] = args.handler
    try:
        app = settings(AppConfig, args, "", log_level=args.log_level)
        logging.basicConfig(level=app.log_level, stream=sys.stderr, format=LOG_FORMAT)
        return handler(args, app)
    except ConfigError as exc:
        print(f"gaussnet: settings error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GaussNetError, OSError, ValueError) as exc:
        print(f"gaussnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
