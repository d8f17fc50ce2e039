import logging
import os
import sys
import time

import markdown
import numpy as np
from colorama import Fore, Style
from pyfiglet import Figlet

from config import RunConfig
from datasets.clouds import gen_synthetic_clouds
from datasets.cora import load_cora_dir
from datasets.splits import make_split
from interface import build_parser, flag_overrides, resolve_config
from samgc.errors import ConfigurationError, SamgcError
from samgc.features import neighbor_bundle
from samgc.gradcheck import run_suite
from samgc.models import NodeClassifier, PointCloudClassifier
from training import (
    NodeTask,
    cloud_model_from_config,
    evaluate,
    fit_cloud,
    fit_node,
    node_model_from_config,
    optimizer_from_config,
    run_ablation,
)
from utils import (
    load_checkpoint,
    read_checkpoint,
    run_dir,
    save_checkpoint,
    write_feature_dump,
    write_file,
    write_metrics_csv,
)

logging.getLogger("MARKDOWN").setLevel(logging.WARNING)

logger = logging.getLogger(__name__)

# offset between the training and test cloud generator seeds
TEST_SEED_OFFSET = 10_000


def configure_logging(verbosity):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def header(text):
    print(Fore.CYAN + f"\033[1m\n*****{text}*****\n\033[0m" + Style.RESET_ALL)


def report(label, metrics):
    print(
        Fore.GREEN
        + f"{label}: OA {metrics.oa:.4f}  mAcc {metrics.macc:.4f}  loss {metrics.loss:.4f}"
        + Style.RESET_ALL
    )


def _start_run(config, command):
    path = run_dir(config.out_dir, command)
    write_file(os.path.join(path, "config.cfg"), config.to_text())
    logger.info("run directory %s", path)
    return path


def _checkpoint_config(checkpoint, args):
    """Saved config echo, with this invocation's flags on top."""
    return RunConfig.from_dict(checkpoint.config).update(flag_overrides(args)).validate()


def _node_task(config, seed=None):
    dataset = load_cora_dir(config.data_dir, row_normalize=config.row_normalize)
    split = make_split(
        dataset,
        config.split,
        config.seed if seed is None else seed,
        train_frac=config.train_frac,
        val_frac=config.val_frac,
    )
    return NodeTask.build(dataset, split, config.hops)


### COMMANDS ###


def train_node(args):
    config = resolve_config(args)
    path = _start_run(config, "train-node")
    task = _node_task(config)
    header("DATA")
    print(f"{task.dataset!r}")
    print(f"{task.split!r}")

    model = node_model_from_config(task.dataset, config)
    header(f"TRAINING {config.variant.upper()}")
    result = fit_node(
        model,
        task,
        optimizer_from_config(config),
        epochs=config.epochs,
        patience=config.patience,
        rng=np.random.default_rng(config.seed),
    )
    write_metrics_csv(
        os.path.join(path, "metrics.csv"), result.history, config.precision
    )
    checkpoint = args.checkpoint or os.path.join(path, "model.ckpt")
    save_checkpoint(model, checkpoint, config.as_dict())

    print(f"best epoch {result.best_epoch}, val acc {result.best_val:.4f}")
    report("test", result.test)
    print(Fore.WHITE + f"results in {path}" + Style.RESET_ALL)
    return 0


def eval_node(args):
    checkpoint = read_checkpoint(args.checkpoint)
    if not isinstance(checkpoint.model, NodeClassifier):
        raise ConfigurationError(f"{args.checkpoint} does not hold a node classifier")
    config = _checkpoint_config(checkpoint, args)
    task = _node_task(config)
    header("EVALUATION")
    rows = []
    for name in ("train", "val", "test"):
        mask = getattr(task.split, name)
        if len(mask):
            metrics = evaluate(checkpoint.model, task, mask)
            rows.append((0, name, metrics))
            report(name, metrics)
    path = _start_run(config, "eval-node")
    write_metrics_csv(os.path.join(path, "metrics.csv"), rows, config.precision)
    return 0


def _cloud_sets(config):
    train_set = gen_synthetic_clouds(
        per_class=config.pc_per_class,
        n_pts=config.pc_points,
        noise_sigma=config.pc_noise,
        seed=config.seed,
    )
    test_set = gen_synthetic_clouds(
        per_class=config.pc_test_per_class,
        n_pts=config.pc_points,
        noise_sigma=config.pc_noise,
        seed=config.seed + TEST_SEED_OFFSET,
    )
    return train_set, test_set


def train_pc(args):
    config = resolve_config(args)
    path = _start_run(config, "train-pc")
    train_set, test_set = _cloud_sets(config)
    model = cloud_model_from_config(config, train_set.num_classes)
    header("TRAINING POINT CLOUDS")
    print(f"{len(train_set)} training clouds, {len(test_set)} test clouds")
    result = fit_cloud(
        model,
        train_set,
        test_set,
        optimizer_from_config(config, cloud=True),
        epochs=config.pc_epochs,
        rng=np.random.default_rng(config.seed),
        batch_size=config.batch_size,
    )
    write_metrics_csv(
        os.path.join(path, "metrics.csv"), result.history, config.precision
    )
    save_checkpoint(
        model, args.checkpoint or os.path.join(path, "model.ckpt"), config.as_dict()
    )
    report("test", result.test)
    print(Fore.WHITE + f"results in {path}" + Style.RESET_ALL)
    return 0


def eval_pc(args):
    checkpoint = read_checkpoint(args.checkpoint)
    if not isinstance(checkpoint.model, PointCloudClassifier):
        raise ConfigurationError(f"{args.checkpoint} does not hold a point-cloud model")
    config = _checkpoint_config(checkpoint, args)
    _, test_set = _cloud_sets(config)
    header("EVALUATION")
    metrics = evaluate(checkpoint.model, test_set)
    report("test", metrics)
    path = _start_run(config, "eval-pc")
    write_metrics_csv(
        os.path.join(path, "metrics.csv"), [(0, "test", metrics)], config.precision
    )
    return 0


def ablation_markdown(rows, config):
    lines = [
        f"# Variant ablation ({config.split} split, {len(rows[0].accuracies)} seeds)",
        "",
        "| variant | mean acc | std | runs |",
        "| --- | --- | --- | --- |",
    ]
    for row in rows:
        runs = ", ".join(f"{acc:.4f}" for acc in row.accuracies)
        lines.append(f"| {row.variant} | {row.mean:.4f} | {row.std:.4f} | {runs} |")
    return "\n".join(lines) + "\n"


def ablation(args):
    config = resolve_config(args)
    path = _start_run(config, "ablation")
    dataset = load_cora_dir(config.data_dir, row_normalize=config.row_normalize)
    header("ABLATION")
    rows = run_ablation(dataset, config, config.seeds)

    csv_lines = ["variant,mean,std," + ",".join(f"seed{i}" for i in range(config.seeds))]
    for row in rows:
        values = [row.mean, row.std] + row.accuracies
        csv_lines.append(
            row.variant + "," + ",".join(f"{v:.{config.precision}f}" for v in values)
        )
    write_file(os.path.join(path, "ablation.csv"), "\n".join(csv_lines) + "\n")
    text = ablation_markdown(rows, config)
    write_file(os.path.join(path, "ablation.md"), text)
    write_file(
        os.path.join(path, "ablation.html"),
        markdown.markdown(text, extensions=["tables"]),
    )

    for row in rows:
        print(f"{row.variant:<10} {row.mean:.4f} ± {row.std:.4f}")
    print(Fore.WHITE + f"results in {path}" + Style.RESET_ALL)
    return 0


def gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    header("GRADIENT CHECK")
    result = run_suite(seed)
    for name, error in sorted(result.errors.items()):
        logger.info("%-28s %.3e", name, error)
    print(f"max relative error {result.max_error:.3e}")
    if not result.passed():
        print(Fore.RED + "gradient check failed" + Style.RESET_ALL)
        worst = max(result.errors, key=result.errors.get)
        print(
            f"error: gradcheck: {worst} relative error {result.errors[worst]:.3e}",
            file=sys.stderr,
        )
        return 1
    print(Fore.GREEN + "gradient check passed" + Style.RESET_ALL)
    return 0


def dump_features(args):
    config = resolve_config(args)
    dataset = load_cora_dir(config.data_dir, row_normalize=config.row_normalize)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        if not isinstance(model, NodeClassifier):
            raise ConfigurationError(f"{args.checkpoint} does not hold a node classifier")
    else:
        model = node_model_from_config(dataset, config)
    structural = model.layers[0].structural
    if structural is None:
        raise ConfigurationError("the graphsage variant has no structural features")
    bundle = neighbor_bundle(dataset.features, dataset.graph, structural)
    path = _start_run(config, "dump-features")
    write_feature_dump(os.path.join(path, "features.csv"), bundle, config.precision)
    print(Fore.WHITE + f"{len(bundle.rows)} edge rows in {path}" + Style.RESET_ALL)
    return 0


HANDLERS = {
    "train-node": train_node,
    "eval-node": eval_node,
    "train-pc": train_pc,
    "eval-pc": eval_pc,
    "ablation": ablation,
    "gradcheck": gradcheck,
    "dump-features": dump_features,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    if not args.quiet:
        fig = Figlet(font="slant")
        title_art = fig.renderText("SAMGC")
        print(Fore.LIGHTMAGENTA_EX + f"\033[1m{title_art}\033[0m" + Style.RESET_ALL)

    start_time = time.time()
    try:
        code = HANDLERS[args.command](args)
    except SamgcError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: file: {e}", file=sys.stderr)
        return 1
    logger.info("%s finished in %.2f seconds", args.command, time.time() - start_time)
    return code


def dispatch(argv):
    """Exit code of one command line; usage errors give argparse's code 2."""
    try:
        return main(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1


if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))
